import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fusionop import pod


def test_two_column_antisymmetric_snapshots():
    v = np.array([0.6, -0.8, 0.0])
    b = pod.compute_pod(np.column_stack([v, -v]), 1)
    np.testing.assert_allclose(b.mean_mode, 0.0, atol=1e-15)
    assert b.singular_values[0] == pytest.approx(np.sqrt(2.0), rel=1e-12)
    np.testing.assert_allclose(b.modes[:, 0], -v, atol=1e-12)  # -v has its largest entry (+0.8) positive
    assert b.modes[np.argmax(np.abs(b.modes[:, 0])), 0] > 0


def test_identical_columns():
    col = np.array([1.0, 2.0, -3.0, 0.5])
    b = pod.compute_pod(np.tile(col[:, None], (1, 3)), 2)
    np.testing.assert_allclose(b.mean_mode, col)
    np.testing.assert_allclose(b.singular_values, 0.0, atol=1e-14)
    assert b.numerical_rank == 0 and b.rank_deficient


def test_full_rank_reconstructs_all_snapshots():
    rng = np.random.default_rng(0)
    Y = rng.standard_normal((6, 5))
    b = pod.compute_pod(Y, 5)
    for col in Y.T:
        assert np.linalg.norm(pod.reconstruct(b, pod.project(b, col)) - col) < 1e-10


def test_r_out_of_range():
    Y = np.ones((4, 3))
    with pytest.raises(ValueError):
        pod.compute_pod(Y, 4)
    with pytest.raises(ValueError):
        pod.compute_pod(Y, -1)


def test_project_examples():
    rng = np.random.default_rng(1)
    b = pod.compute_pod(rng.standard_normal((8, 6)), 3)
    np.testing.assert_allclose(pod.project(b, b.mean_mode), 0.0, atol=1e-14)
    f = b.mean_mode + b.singular_values[0] * b.modes[:, 0]
    np.testing.assert_allclose(pod.project(b, f), [b.singular_values[0], 0.0, 0.0], atol=1e-12)
    with pytest.raises(ValueError):
        pod.project(b, np.ones(7))


def test_projection_residual_orthogonal_to_modes():
    rng = np.random.default_rng(2)
    b = pod.compute_pod(rng.standard_normal((10, 7)), 4)
    f = rng.standard_normal(10)
    resid = f - pod.reconstruct(b, pod.project(b, f))
    np.testing.assert_allclose(b.modes.T @ resid, 0.0, atol=1e-12)
    # least-squares oracle: best affine fit in the mode span
    c, *_ = np.linalg.lstsq(b.modes, f - b.mean_mode, rcond=None)
    np.testing.assert_allclose(pod.project(b, f), c, atol=1e-12)


def test_reconstruct_examples():
    rng = np.random.default_rng(3)
    b = pod.compute_pod(rng.standard_normal((5, 5)), 3)
    np.testing.assert_array_equal(pod.reconstruct(b, np.zeros(3)), b.mean_mode)
    np.testing.assert_allclose(pod.reconstruct(b, [0.0, 1.0, 0.0]), b.mean_mode + b.modes[:, 1])
    f = b.mean_mode + b.modes @ np.array([0.3, -2.0, 1.1])
    np.testing.assert_allclose(pod.reconstruct(b, pod.project(b, f)), f, atol=1e-10)
    with pytest.raises(ValueError):
        pod.reconstruct(b, np.zeros(2))


def test_energy_fraction_examples():
    rng = np.random.default_rng(4)
    Y = rng.standard_normal((6, 4))
    E = pod.total_energy(Y)
    assert pod.energy_fraction(pod.compute_pod(Y, 4), E) == pytest.approx(1.0, abs=1e-12)
    assert pod.energy_fraction(pod.compute_pod(Y, 0), E) == 0.0
    rank1 = np.outer(rng.standard_normal(6), rng.standard_normal(4))
    rank1 -= rank1.mean(axis=1, keepdims=True)
    assert pod.energy_fraction(pod.compute_pod(rank1, 1), pod.total_energy(rank1)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        pod.energy_fraction(pod.compute_pod(Y, 1), 0.0)


def test_lift_matches_direct_pod():
    rng = np.random.default_rng(5)
    Q = np.linalg.qr(rng.standard_normal((20, 6)))[0]
    Y = Q @ rng.standard_normal((6, 9))
    direct = pod.compute_pod(Y, 4)
    lifted = pod.lift(pod.compute_pod(Q.T @ Y, 4), Q)
    np.testing.assert_allclose(lifted.mean_mode, direct.mean_mode, atol=1e-12)
    np.testing.assert_allclose(lifted.modes, direct.modes, atol=1e-10)
    np.testing.assert_allclose(lifted.singular_values, direct.singular_values, rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(p=st.integers(2, 8), N=st.integers(2, 8), data=st.data())
def test_property_eckart_young(p, N, data):
    seed = data.draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((p, N))
    r = data.draw(st.integers(0, min(p, N)))
    b = pod.compute_pod(Y, r)
    Yc = Y - Y.mean(axis=1, keepdims=True)
    approx = b.modes @ (b.modes.T @ Yc)
    s = np.linalg.svd(Yc, compute_uv=False)  # independent brute-force oracle
    assert np.sum((Yc - approx) ** 2) == pytest.approx(np.sum(s[r:] ** 2), abs=1e-9)
    np.testing.assert_allclose(b.modes.T @ b.modes, np.eye(r), atol=1e-10)
    assert np.all(np.diff(b.singular_values) <= 1e-12) and np.all(b.singular_values >= 0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_property_deterministic_signs(seed):
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((7, 5))
    a, b = pod.compute_pod(Y, 3), pod.compute_pod(Y.copy(), 3)
    np.testing.assert_array_equal(a.modes, b.modes)
    idx = np.argmax(np.abs(a.modes), axis=0)
    assert np.all(a.modes[idx, np.arange(3)] > 0)

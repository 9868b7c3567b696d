import numpy as np

from fusionop.config import ExperimentConfig
from fusionop.experiments import source_comparison, transfer_comparison

SMALL = ExperimentConfig(resolution=8, n_source=40, n_target=40, n_test=10, n_subspaces=2, modes_per_subspace=3,
                         branch_hidden=[8], trunk_hidden=[8], epochs=3, transfer_epochs=2, batch_size=8,
                         sample_sizes=[5, 20])


def test_source_comparison_shapes_and_determinism():
    models = ["ff-pod-deeponet", "pod-deeponet", "deeponet"]
    a = source_comparison(SMALL, models, [0, 1], keep_models=True)
    b = source_comparison(SMALL, models, [0, 1])
    assert a.mses == b.mses
    assert all(len(a.mses[m]) == 2 and np.all(np.isfinite(a.mses[m])) for m in models)
    assert a.median("deeponet") == np.median(a.mses["deeponet"])
    assert set(a.models) == {(m, s) for m in models for s in (0, 1)} and not b.models
    # normalized source training outputs
    assert abs(a.source_train.outputs.mean()) < 1e-12


def test_transfer_comparison_tables():
    src = source_comparison(SMALL, ["ff-pod-deeponet"], [0], keep_models=True)
    ft, scratch = transfer_comparison(SMALL, src.models[("ff-pod-deeponet", 0)], src.scaler, src.source_train,
                                      [0, 1], scratch_sizes=[5])
    assert ft.sample_sizes() == [5, 20] and len(ft.rows) == 4 and ft.strategy == "fine-tune"
    assert scratch.sample_sizes() == [5] and len(scratch.rows) == 2
    ft2, none = transfer_comparison(SMALL, src.models[("ff-pod-deeponet", 0)], src.scaler, src.source_train, [0, 1])
    assert none is None and ft2.to_json() == ft.to_json()

"""Viscous Burgers ``u_t + (u^2/2)_x = nu u_xx`` on the unit torus.

Fourier pseudo-spectral in space, integrating-factor RK4 in time. The flux
derivative is evaluated in the skew-symmetric split
``(u^2/2)_x = ((u^2)_x + u u_x) / 3``, which equals the flux form for
smooth fields and makes the discrete advection term exactly energy neutral.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CFL_LIMIT = 0.25


class CFLError(ValueError):
    pass


@dataclass(frozen=True)
class BurgersSolution:
    times: np.ndarray  # (T,)
    values: np.ndarray  # (T, ..., n)


def min_steps(u0, t_final: float) -> int:
    """Smallest step count satisfying ``dt <= 0.25 dx / max|u0|``."""
    u0 = np.asarray(u0, dtype=np.float64)
    umax = float(np.max(np.abs(u0))) if u0.size else 0.0
    n = u0.shape[-1]
    if umax == 0.0:
        return 1
    return int(np.ceil(t_final * umax * n / CFL_LIMIT))


def solve_burgers(u0, nu: float, t_final: float = 1.0, n_steps: int | None = None, save_times=None) -> BurgersSolution:
    """Integrate a batch of periodic initial conditions ``u0`` of shape ``(..., n)``.

    Snapshots are returned at ``save_times`` (default: ``[t_final]``), each
    rounded to the nearest time step. ``max|u|`` cannot grow for viscous
    Burgers, so the CFL bound is checked once against ``u0``.
    """
    if not nu > 0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    u = np.array(u0, dtype=np.float64)
    n = u.shape[-1]
    if n_steps is None:
        n_steps = max(min_steps(u, t_final), 1)
    dt = t_final / n_steps
    umax = float(np.max(np.abs(u))) if u.size else 0.0
    if umax * dt > CFL_LIMIT / n:
        raise CFLError(f"dt={dt:.3e} violates CFL (max|u|={umax:.3g}, dx={1 / n:.3e}); "
                       f"use n_steps >= {min_steps(u, t_final)}")
    if save_times is None:
        save_times = [t_final]
    save_steps = {int(round(t / dt)): t for t in save_times}

    k = 2.0 * np.pi * np.fft.rfftfreq(n, d=1.0 / n)
    ik = 1j * k
    if n % 2 == 0:
        ik[-1] = 0.0  # Nyquist derivative must vanish to keep the operator real
    E = np.exp(-nu * k**2 * dt / 2.0)
    E2 = E * E

    def nonlinear(uh):
        v = np.fft.irfft(uh, n=n)
        dv = np.fft.irfft(ik * uh, n=n)
        return -(ik * np.fft.rfft(v * v) + np.fft.rfft(v * dv)) / 3.0

    uh = np.fft.rfft(u)
    snaps, times = [], []
    if 0 in save_steps:
        snaps.append(u.copy())
        times.append(0.0)
    for step in range(1, n_steps + 1):
        a = dt * nonlinear(uh)
        b = dt * nonlinear(E * (uh + a / 2.0))
        c = dt * nonlinear(E * uh + b / 2.0)
        d = dt * nonlinear(E2 * uh + E * c)
        uh = E2 * uh + (E2 * a + 2.0 * E * (b + c) + d) / 6.0
        if step in save_steps:
            snaps.append(np.fft.irfft(uh, n=n))
            times.append(step * dt)
    return BurgersSolution(np.array(times), np.array(snaps))

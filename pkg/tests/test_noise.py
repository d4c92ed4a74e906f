"""Noise increment statistics and the stochastic convolution.

Variance oracles are the per-mode law E|W_k|^2 = phi_k^2 t, checked by
Monte Carlo with tolerances several standard errors wide.
"""

import numpy as np
import pytest

from kdv2.equations import kdv2_full, nl1
from kdv2.noise import (
    NoiseModel,
    NoisePath,
    hs_norm,
    sample_increment,
    stochastic_convolution,
)
from kdv2.spectral import Grid, GridField, to_physical

GRID = Grid(64, 2.0 * np.pi)


def test_phi_profile():
    model = NoiseModel(amp=0.7, decay=2.0, include_mean_mode=True)
    phi = model.phi(GRID)
    assert abs(phi[0] - 0.7) < 1e-15
    assert abs(phi[3] - 0.7 / (1.0 + 9.0)) < 1e-15
    # mean mode dropped by default
    assert NoiseModel(amp=0.7, decay=2.0).phi(GRID)[0] == 0.0
    with pytest.raises(ValueError):
        NoiseModel(amp=-1.0)


def test_hs_norm_two_mode_profile():
    # amplitude 1 on k = +/-1 only, sigma = 1: sum is 2 (1 + k1^2)
    model = NoiseModel(profile=lambda k: (np.abs(k - 1.0) < 1e-9).astype(float))
    k1 = 2.0 * np.pi / GRID.length
    assert abs(hs_norm(model, 1.0, GRID) - 2.0 * (1.0 + k1**2)) < 1e-12
    assert hs_norm(NoiseModel(amp=0.0), 1.0, GRID) == 0.0


def test_hs_norm_matches_direct_sum_and_refinement():
    model = NoiseModel(amp=0.5, decay=4.0)
    phi = model.phi(GRID)
    direct = np.sum((1.0 + GRID.k**2) ** 1.0 * phi**2)
    assert abs(hs_norm(model, 1.0, GRID) - direct) < 1e-12
    # decay = 4, sigma = 1: convergent tail, stable under N doubling
    a = hs_norm(model, 1.0, Grid(256, 64.0 * np.pi))
    b = hs_norm(model, 1.0, Grid(512, 64.0 * np.pi))
    assert abs(b - a) <= 0.05 * a


def test_increment_hermitian_and_real():
    model = NoiseModel(amp=1.0, decay=1.0, seed=4)
    inc = sample_increment(model, GRID, 0.01, step_index=7)
    assert inc.rep == "spectral"
    idx = (-np.arange(64)) % 64
    assert np.max(np.abs(inc.data - np.conj(inc.data[idx]))) == 0.0
    assert inc.data[0].imag == 0.0 and inc.data[32].imag == 0.0
    assert np.all(np.isfinite(to_physical(inc).data))


def test_increment_deterministic_replay():
    model = NoiseModel(amp=0.3, decay=2.0, seed=11)
    a = model.increment(GRID, 0.05, step_index=3)
    b = model.increment(GRID, 0.05, step_index=3)
    assert np.array_equal(a, b)
    c = model.increment(GRID, 0.05, step_index=4)
    assert not np.array_equal(a, c)
    d = NoiseModel(amp=0.3, decay=2.0, seed=12).increment(GRID, 0.05, 3)
    assert not np.array_equal(a, d)


def test_increment_zero_when_inactive():
    inc = NoiseModel(amp=0.0, seed=9).increment(GRID, 0.1, 0)
    assert np.array_equal(inc, np.zeros(64, complex))


def test_amp_scaling_is_exact_per_path():
    base = NoiseModel(amp=0.4, decay=1.5, seed=6)
    double = NoiseModel(amp=0.8, decay=1.5, seed=6)
    a = base.increment(GRID, 0.02, 1)
    b = double.increment(GRID, 0.02, 1)
    assert np.allclose(b, 2.0 * a, rtol=0.0, atol=0.0)


def test_low_modes_shared_across_resolutions():
    # mode j consumes the same two stream slots on every grid size
    model = NoiseModel(amp=1.0, decay=1.0, seed=21)
    coarse = Grid(64, 2.0 * np.pi)
    fine = Grid(256, 2.0 * np.pi)
    a = model.increment(coarse, 0.02, step_index=5)
    b = model.increment(fine, 0.02, step_index=5)
    for j in range(1, 32):  # common non-Nyquist modes
        assert a[j] == b[j]
        assert a[-j % 64] == b[-j % 256]


def test_increment_moments_monte_carlo():
    # mean within 4 standard errors, variance within 5%, 1e5 draws
    model = NoiseModel(amp=0.8, decay=1.0, seed=33, include_mean_mode=True)
    dt, paths = 0.04, 100000
    small = Grid(16, 2.0 * np.pi)
    acc = np.zeros((paths, 16), dtype=complex)
    for p in range(paths):
        acc[p] = model.increment(small, dt, step_index=p)
    phi = model.phi(small)
    for j in (0, 1, 3, 7, 8):
        se = phi[j] * np.sqrt(dt) / np.sqrt(paths)
        mean = np.mean(acc[:, j])
        assert abs(mean.real) < 4.0 * se and abs(mean.imag) < 4.0 * se
        var = np.mean(np.abs(acc[:, j]) ** 2)
        expect = phi[j] ** 2 * dt
        assert abs(var - expect) < 0.05 * expect
    # real/imag split on an interior mode
    j = 3
    half_var = 0.5 * phi[j] ** 2 * dt
    assert abs(np.var(acc[:, j].real) - half_var) < 0.05 * half_var
    assert abs(np.var(acc[:, j].imag) - half_var) < 0.05 * half_var


def test_mean_mode_conservation_flag():
    on = NoiseModel(amp=1.0, decay=0.5, include_mean_mode=True, seed=2)
    off = NoiseModel(amp=1.0, decay=0.5, include_mean_mode=False, seed=2)
    assert abs(on.increment(GRID, 0.1, 0)[0]) > 0.0
    assert off.increment(GRID, 0.1, 0)[0] == 0.0


# ------------------------------------------------------------------ NoisePath


def test_path_generation_matches_increments():
    model = NoiseModel(amp=0.5, decay=1.5, seed=8)
    path = NoisePath.generate(model, GRID, 0.01, 6)
    assert path.n_steps == 6 and path.dt == 0.01
    for step in range(6):
        assert np.array_equal(path.increments[step], model.increment(GRID, 0.01, step))


def test_path_coarsening_sums_pairs():
    model = NoiseModel(amp=0.5, decay=1.5, seed=8)
    fine = NoisePath.generate(model, GRID, 0.01, 8)
    coarse = fine.coarsened()
    assert coarse.dt == 0.02 and coarse.n_steps == 4
    assert np.array_equal(coarse.increments[1], fine.increments[2] + fine.increments[3])
    with pytest.raises(ValueError):
        NoisePath.generate(model, GRID, 0.01, 5).coarsened()


# -------------------------------------------------------------- convolution


def test_convolution_zero_noise():
    path = NoisePath.generate(NoiseModel(amp=0.0), GRID, 0.01, 10)
    traj = stochastic_convolution(path)
    assert np.max(np.abs(traj.states)) == 0.0
    assert traj.times[0] == 0.0 and len(traj) == 11


def test_convolution_matches_manual_recursion():
    model = NoiseModel(amp=0.5, decay=1.5, seed=8)
    coeffs = nl1()
    dt, n = 0.01, 12
    path = NoisePath.generate(model, GRID, dt, n)
    traj = stochastic_convolution(path, coeffs)
    from kdv2.equations import linear_symbol

    phase = np.exp(linear_symbol(coeffs, GRID) * dt)
    w = np.zeros(64, complex)
    for step in range(n):
        w = phase * (w + model.increment(GRID, dt, step))
    expect = to_physical(GridField(GRID, w, "spectral")).data
    assert np.array_equal(traj.states[n], expect)
    # honors a non-default linear symbol too
    other = stochastic_convolution(path, kdv2_full(0.3, 0.4))
    assert not np.array_equal(other.states[n], traj.states[n])


def test_convolution_isometry_per_mode_and_total():
    # Var W(k, T) = phi_k^2 T for any step count; total coefficient power
    # sums the per-mode law
    T, paths, n_steps = 0.5, 4000, 5
    dt = T / n_steps
    small = Grid(32, 2.0 * np.pi)
    mode_acc = np.zeros((paths, 2))
    total_acc = np.zeros(paths)
    for p in range(paths):
        model = NoiseModel(amp=1.0, decay=1.0, seed=5000 + p)
        path = NoisePath.generate(model, small, dt, n_steps)
        w = path.increments[0] * 0.0
        from kdv2.equations import linear_symbol

        phase = np.exp(linear_symbol(nl1(), small) * dt)
        for s in range(n_steps):
            w = phase * (w + path.increments[s])
        mode_acc[p] = np.abs(w[4]) ** 2, np.abs(w[1]) ** 2
        total_acc[p] = np.sum(np.abs(w) ** 2)
    phi = NoiseModel(amp=1.0, decay=1.0).phi(small)
    for col, j in ((0, 4), (1, 1)):
        expect = phi[j] ** 2 * T
        assert abs(np.mean(mode_acc[:, col]) - expect) < 0.08 * expect
    expect_total = T * np.sum(phi**2)
    assert abs(np.mean(total_acc) - expect_total) < 0.05 * expect_total


def test_convolution_isometry_invariant_under_dt():
    T, paths = 0.5, 3000
    small = Grid(32, 2.0 * np.pi)
    var = {}
    for n_steps in (5, 20):
        dt = T / n_steps
        acc = np.zeros(paths)
        for p in range(paths):
            model = NoiseModel(amp=1.0, decay=1.0, seed=1000 + p)
            path = NoisePath.generate(model, small, dt, n_steps)
            traj = stochastic_convolution(path)
            w = np.fft.fft(traj.states[-1]) / small.n
            acc[p] = np.abs(w[4]) ** 2
        var[n_steps] = np.mean(acc)
    phi4 = NoiseModel(amp=1.0, decay=1.0).phi(small)[4]
    expect = phi4**2 * T
    assert abs(var[5] - expect) < 0.1 * expect
    assert abs(var[20] - expect) < 0.1 * expect


def test_mass_brownian_motion_when_mean_mode_on():
    # mass = L * W(0, t), so Var[mass] = L^2 phi_0^2 t
    T, paths, n_steps = 0.25, 4000, 5
    dt = T / n_steps
    small = Grid(16, 2.0 * np.pi)
    masses = np.zeros(paths)
    for p in range(paths):
        model = NoiseModel(amp=0.9, decay=2.0, include_mean_mode=True, seed=7000 + p)
        path = NoisePath.generate(model, small, dt, n_steps)
        traj = stochastic_convolution(path)
        masses[p] = traj.diagnostics["mass"][-1]
    expect = small.length**2 * 0.9**2 * T
    assert abs(np.var(masses) - expect) < 0.1 * expect
    # and with the default flag the mass never moves at all
    model = NoiseModel(amp=0.9, decay=2.0, seed=3)
    path = NoisePath.generate(model, small, dt, n_steps)
    traj = stochastic_convolution(path)
    assert np.max(np.abs(traj.diagnostics["mass"])) < 1e-14

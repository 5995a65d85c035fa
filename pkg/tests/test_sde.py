import cmath

import numpy as np
import pytest

from bhchain import _kernels
from bhchain.analytic import analytic_input, populations
from bhchain.model import ChainConfig, PhasePoint, validate
from bhchain.oracle import exact_record
from bhchain.estimators import finalize
from bhchain.sde import (
    BLOCK_SIZE,
    SCHEMES,
    DivergenceError,
    drift,
    noise_amplitudes,
    run_ensemble,
    step,
)


def cfg(**kw):
    return validate(ChainConfig(**kw))


def random_point(rng, wells, n=None):
    shape = (wells,) if n is None else (wells, n)
    z = rng.standard_normal((4,) + shape)
    return PhasePoint(z[0] + 1j * z[1], z[2] + 1j * z[3])


def test_drift_hopping_example():
    st = PhasePoint(np.array([1, 0], dtype=complex), np.array([1, 0], dtype=complex))
    da, dap = drift(st, cfg(wells=2, coupling=1.0, nonlinearity=0.0))
    np.testing.assert_allclose(da, [0, -1j])
    np.testing.assert_allclose(dap, [0, 1j])


def test_drift_nonlinear_example():
    st = PhasePoint(np.array([1, 0], dtype=complex), np.array([1, 0], dtype=complex))
    da, dap = drift(st, cfg(wells=2, coupling=0.0, nonlinearity=1e-3))
    np.testing.assert_allclose(da, [-2e-3j, 0])
    np.testing.assert_allclose(dap, [2e-3j, 0])


def test_drift_chain_ends_have_one_neighbour():
    st = PhasePoint(np.ones(4, dtype=complex), np.ones(4, dtype=complex))
    da, _ = drift(st, cfg(wells=4, coupling=1.0))
    np.testing.assert_allclose(da, [-1j, -2j, -2j, -1j])


@pytest.mark.parametrize("wells", [2, 3, 5])
def test_drift_conserves_number(wells):
    rng = np.random.default_rng(wells)
    st = random_point(rng, wells, 50)
    da, dap = drift(st, cfg(wells=wells, coupling=0.7, nonlinearity=0.3))
    rate = np.sum(st.alpha_plus * da + st.alpha * dap, axis=0)
    scale = np.sum(np.abs(st.alpha_plus * da) + np.abs(st.alpha * dap), axis=0)
    assert np.all(np.abs(rate) <= 1e-12 * scale)


def test_vacuum_is_fixed_point():
    st = PhasePoint(np.zeros(3, dtype=complex), np.zeros(3, dtype=complex))
    c = cfg(wells=3, nonlinearity=0.1)
    da, dap = drift(st, c)
    assert not np.any(da) and not np.any(dap)
    for scheme in SCHEMES:
        out = step(st, c, 1e-3, np.random.default_rng(0), scheme=scheme)
        assert not np.any(out.alpha) and not np.any(out.alpha_plus)


def test_noise_amplitudes():
    st = PhasePoint(np.array([1, 0], dtype=complex), np.array([1, 0], dtype=complex))
    ba, bap = noise_amplitudes(st, cfg(wells=2, nonlinearity=1e-3))
    assert ba[0] == pytest.approx(np.sqrt(2e-3) * cmath.exp(-1j * np.pi / 4))
    assert bap[0] == pytest.approx(np.sqrt(2e-3) * cmath.exp(1j * np.pi / 4))
    ba, bap = noise_amplitudes(st, cfg(wells=2, nonlinearity=0.0))
    assert not np.any(ba) and not np.any(bap)


def test_step_draws_fixed_count():
    c = cfg(wells=3, nonlinearity=0.1)
    rng = np.random.default_rng(1)
    twin = np.random.default_rng(1)
    st = random_point(np.random.default_rng(2), 3, 8)
    for scheme in SCHEMES:
        step(st, c, 1e-3, rng, scheme=scheme)
        twin.standard_normal((6, 8))
        assert rng.bit_generator.state == twin.bit_generator.state


def test_step_rejects_bad_input():
    st = random_point(np.random.default_rng(0), 2)
    with pytest.raises(ValueError):
        step(st, cfg(), 0.0, np.random.default_rng())
    with pytest.raises(ValueError):
        step(st, cfg(), 1e-3, np.random.default_rng(), scheme="rk4")


def test_step_marks_nonfinite():
    st = PhasePoint(np.array([np.inf, 0], dtype=complex), np.array([1, 0], dtype=complex))
    out = step(st, cfg(), 1e-3, np.random.default_rng(0))
    assert out.diverged


@pytest.mark.parametrize("scheme", sorted(SCHEMES))
def test_kernel_matches_reference_step(scheme):
    c = cfg(wells=3, coupling=0.8, nonlinearity=0.05)
    rng = np.random.default_rng(7)
    st = random_point(rng, 3, 16)
    n_steps = 25
    noise = rng.standard_normal((n_steps, 6, 16))
    ref = st
    for s in range(n_steps):
        ref = step(ref, c, c.dt, scheme=scheme, eta=noise[s])
    a = st.alpha.copy()
    ap = st.alpha_plus.copy()
    alive = np.ones(16, dtype=bool)
    _kernels.advance_block(a, ap, alive, c.coupling, c.nonlinearity, c.dt, noise, n_steps, 1e300,
                           SCHEMES[scheme], 3)
    np.testing.assert_allclose(a, ref.alpha, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(ap, ref.alpha_plus, rtol=1e-12, atol=1e-12)


def test_kernel_guard_kills_and_zeroes():
    a = np.array([[1e4 + 0j, 1.0]])
    a = np.vstack([a, np.zeros((1, 2))]).astype(complex)
    ap = a.copy()
    alive = np.ones(2, dtype=bool)
    noise = np.empty((0, 4, 2))
    _kernels.advance_block(a, ap, alive, 1.0, 0.0, 1e-3, noise, 1, 100.0, _kernels.EM, 3)
    assert alive.tolist() == [False, True]
    assert not np.any(a[:, 0]) and not np.any(ap[:, 0])


def test_kernel_guard_catches_nan():
    a = np.array([[np.nan + 0j], [0j]])
    ap = np.array([[1 + 0j], [0j]])
    alive = np.ones(1, dtype=bool)
    _kernels.advance_block(a, ap, alive, 1.0, 0.0, 1e-3, np.empty((0, 4, 1)), 1, 1e300, _kernels.EM, 3)
    assert not alive[0]


def _single_path(scheme):
    c = cfg(wells=2, atoms=200, initial_state="coherent", t_max=np.pi / 2, sample_every=1)
    s = run_ensemble(c.replace(n_traj=1), scheme=scheme).series()
    exact = populations(analytic_input(2, 1.0, c.sample_times(), 200, fock=False))
    return s, exact


def test_single_coherent_path_is_deterministic():
    s, exact = _single_path("midpoint")
    np.testing.assert_allclose(s.variances, exact, rtol=1e-4, atol=1e-6)
    # a single trajectory has no batch spread
    assert np.all(s.populations_err == 0)


def test_midpoint_linear_accuracy():
    s, exact = _single_path("midpoint")
    rel = np.abs(s.populations - exact) / 200
    assert rel.max() < 1e-4


def test_euler_norm_growth_matches_theory():
    # Euler-Maruyama multiplies alpha^+ alpha by (1 + (J dt)^2) per step for two wells
    s, _ = _single_path("em")
    n = np.arange(len(s.jt))
    np.testing.assert_allclose(s.populations.sum(axis=0), 200 * (1 + 1e-6) ** n, rtol=1e-10)


def test_determinism_and_worker_independence():
    c = cfg(wells=3, atoms=50, nonlinearity=0.01, t_max=0.2, n_traj=2 * BLOCK_SIZE + 17, seed=11)
    r1 = run_ensemble(c)
    r2 = run_ensemble(c)
    r3 = run_ensemble(c, workers=2)
    assert np.array_equal(r1.moments.sums, r2.moments.sums)
    assert np.array_equal(r1.moments.sums, r3.moments.sums)
    assert np.array_equal(r1.moments.batch_sums, r3.moments.batch_sums)


def test_trajectory_independent_of_ensemble_size():
    c = cfg(wells=2, atoms=10, nonlinearity=0.01, t_max=0.1, seed=3)
    # with 300 batches, batch g holds exactly trajectory g in both runs
    small = run_ensemble(c.replace(n_traj=100), n_batches=300)
    big = run_ensemble(c.replace(n_traj=300), n_batches=300)
    assert np.array_equal(small.moments.batch_sums[:, :100], big.moments.batch_sums[:, :100])


def test_noise_sign_flip_is_unobservable():
    # flipping every noise amplitude equals flipping every eta, which has the same law
    c = cfg(wells=2, atoms=4, nonlinearity=0.1, t_max=0.5, sample_every=50, initial_state="coherent")
    rng = np.random.default_rng(0)
    st0 = PhasePoint(np.full((2, 4000), 0j), np.full((2, 4000), 0j))
    st0.alpha[0] = st0.alpha_plus[0] = 2.0
    plus, minus = st0, st0
    for _ in range(c.n_steps):
        eta = rng.standard_normal((4, 4000))
        plus = step(plus, c, c.dt, eta=eta)
        minus = step(minus, c, c.dt, eta=-eta)
    # paired paths differ, but their ensemble means agree within error
    assert not np.allclose(plus.alpha, minus.alpha)
    for x, y in [(plus.alpha[0], minus.alpha[0]), (plus.alpha_plus[0] * plus.alpha[1], minus.alpha_plus[0] * minus.alpha[1])]:
        d = (x - y).real
        assert abs(d.mean()) < 4 * d.std(ddof=1) / np.sqrt(len(d))


def test_schemes_agree_at_half_step():
    base = cfg(wells=3, atoms=3, nonlinearity=0.05, t_max=1.0, sample_every=100, n_traj=20_000, seed=5)
    runs = []
    for scheme, dt, every in [("em", 1e-3, 100), ("midpoint", 1e-3, 100), ("midpoint", 5e-4, 200)]:
        c = base.replace(dt=dt, sample_every=every)
        runs.append(run_ensemble(c, scheme=scheme).series())
    ref = runs[1]
    for other in (runs[0], runs[2]):
        for name in ("populations", "xi"):
            a, ea = getattr(ref, name), getattr(ref, name + "_err")
            b, eb = getattr(other, name), getattr(other, name + "_err")
            # same noise realisation is not shared across dt, so errors combine
            z = np.abs(a - b)[:, 1:] / np.hypot(ea, eb)[:, 1:]
            assert z.max() < 4


def test_interacting_small_chain_matches_exact():
    c = cfg(wells=3, atoms=3, nonlinearity=0.05, t_max=1.0, sample_every=100, n_traj=20_000, seed=9)
    s = run_ensemble(c).series()
    rec, _ = exact_record(3, 3, 1.0, 0.05, c.sample_times(), c.pairs())
    e = finalize(rec, c.sample_times())
    z = np.abs(s.populations - e.populations)[:, 1:] / s.populations_err[:, 1:]
    assert z.max() < 4


def test_divergence_failure_carries_result():
    c = cfg(wells=2, atoms=4, nonlinearity=0.1, t_max=0.05, n_traj=200, divergence_threshold=4.0)
    with pytest.raises(DivergenceError) as info:
        run_ensemble(c)
    res = info.value.result
    assert res.n_diverged > 0
    assert res.n_diverged + res.n_traj_effective == 200


def test_diverged_trajectories_are_excluded():
    c = cfg(wells=2, atoms=4, nonlinearity=0.1, t_max=0.05, n_traj=200, divergence_threshold=8.0)
    res = run_ensemble(c, max_diverged_fraction=1.0)
    counts = res.moments.counts
    assert counts[0] == 200
    assert np.all(np.diff(counts) <= 0)
    assert counts[-1] == res.n_traj_effective


def test_unknown_scheme():
    with pytest.raises(ValueError):
        run_ensemble(cfg(n_traj=1, t_max=0.01), scheme="heun")

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jumpcbo import harness, objective
from jumpcbo.consensus import NonFiniteStateError, consensus_point
from jumpcbo.dynamics import (VARIANT_TAGS, ModelVariant, RunConfig, coefficients, decay_exponent,
                              euler_step, initial_ensemble, integrate)
from jumpcbo.schedules import Constant, ScheduleSet, preset
from jumpcbo.stochastic import derive_seed, uniform_symmetric


def _sched(beta=1.0, sigma=0.7, gamma=0.5, lam=2.0, alpha=10.0):
    return ScheduleSet(beta=Constant(beta), sigma=Constant(sigma), gamma=Constant(gamma),
                       lambda_=Constant(lam), alpha=alpha)


def _cfg(tag="jump_cbo", n=12, d=3, horizon=1.0, f=None, **kw):
    f = f or objective.rastrigin(d)
    return RunConfig(ModelVariant(tag), kw.pop("schedules", _sched()), f, n, horizon, 0.01,
                     init_box=(-3.0, 3.0), snapshot_stride=kw.pop("snapshot_stride", 10), **kw)


def _zero(n, d):
    return np.zeros((n, d)), np.zeros((n, d))


def test_variant_validation():
    with pytest.raises(ValueError):
        ModelVariant("pso")
    with pytest.raises(ValueError):
        ModelVariant("heaviside_cbo", heaviside_epsilon=0.0)
    assert ModelVariant("jump_cbo").label == "JumpCBO"
    assert ModelVariant.from_dict(ModelVariant("heaviside_cbo", 0.01, False).to_dict()) == \
        ModelVariant("heaviside_cbo", 0.01, False)


def test_config_validation_and_snapping():
    with pytest.raises(ValueError):
        _cfg(n=0)
    with pytest.raises(ValueError):
        RunConfig(ModelVariant(), _sched(), objective.rastrigin(2), 5, 1.0, 0.0)
    with pytest.raises(ValueError):
        RunConfig(ModelVariant(), _sched(), objective.rastrigin(2), 5, 1.0, 0.01, init_box=(1.0, 1.0))
    with pytest.warns(UserWarning):
        cfg = RunConfig(ModelVariant(), _sched(), objective.rastrigin(2), 5, 1.004, 0.01)
    assert cfg.n_steps == 100 and cfg.horizon == pytest.approx(1.0)


def test_pure_drift_step():
    cfg = _cfg("anisotropic_cbo", n=3, d=2, schedules=_sched(sigma=0.0, lam=0.0))
    x = np.array([[1.0, 2.0], [-1.0, 0.5], [0.0, 3.0]])
    v = np.array([0.2, -0.4])
    new = euler_step(x, 0.0, cfg, _zero(3, 2), pinned_consensus=v)
    np.testing.assert_allclose(new, x - 0.01 * (x - v), rtol=0, atol=1e-15)


def test_pure_drift_step_uses_consensus():
    cfg = _cfg("anisotropic_cbo", n=4, d=2, schedules=_sched(sigma=0.0, lam=0.0))
    x = np.random.default_rng(0).normal(size=(4, 2))
    c = consensus_point(x, cfg.objective, cfg.schedules.alpha)
    np.testing.assert_allclose(euler_step(x, 0.0, cfg, _zero(4, 2)), x - 0.01 * (x - c), atol=1e-15)


@pytest.mark.parametrize("tag", VARIANT_TAGS)
def test_single_particle_fixed_point(tag):
    cfg = _cfg(tag, n=1, d=3, horizon=0.5)
    traj = integrate(cfg, 4)
    np.testing.assert_array_equal(traj.final_positions, traj.snapshots[0])
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 3))
    dW, S = rng.normal(size=(1, 3)), rng.normal(size=(1, 3))
    np.testing.assert_array_equal(euler_step(x, 0.0, cfg, (dW, S)), x)


def test_zero_horizon():
    cfg = _cfg(horizon=0.0)
    traj = integrate(cfg, 2)
    x0 = initial_ensemble(cfg, derive_seed(cfg.master_seed, 2))
    assert len(traj.times) == 1
    np.testing.assert_array_equal(traj.final_positions, x0)
    np.testing.assert_allclose(traj.final_consensus, consensus_point(x0, cfg.objective, cfg.schedules.alpha))


def test_trajectory_shapes_and_final_time():
    cfg = _cfg(horizon=1.0, snapshot_stride=30)
    traj = integrate(cfg, 0)
    assert traj.times[-1] == pytest.approx(1.0)
    assert list(np.round(traj.times, 8)) == [0.0, 0.3, 0.6, 0.9, 1.0]
    assert traj.snapshots.shape == (5, 12, 3)
    assert np.all(np.isfinite(traj.snapshots))


def test_initialization_uniform_in_box():
    cfg = _cfg(n=2000, d=2)
    x = initial_ensemble(cfg, 5)
    assert x.min() >= -3 and x.max() <= 3
    assert abs(x.mean()) < 0.1


@pytest.mark.parametrize("lam, gamma", [(0.0, 0.5), (2.0, 0.0)])
@pytest.mark.parametrize("backend", ["numba", "numpy"])
def test_jump_degeneracy(lam, gamma, backend):
    ref = integrate(_cfg("anisotropic_cbo"), 3, backend=backend)
    for tag in ("jump_cbo", "jump_cbo_common_poisson"):
        traj = integrate(_cfg(tag, schedules=_sched(lam=lam, gamma=gamma)), 3, backend=backend)
        np.testing.assert_array_equal(traj.snapshots, ref.snapshots)


@pytest.mark.parametrize("tag", VARIANT_TAGS)
def test_backends_agree(tag):
    cfg = _cfg(tag, horizon=0.5)
    a = integrate(cfg, 1, backend="numba")
    b = integrate(cfg, 1, backend="numpy")
    np.testing.assert_allclose(a.snapshots, b.snapshots, rtol=1e-10, atol=1e-10)
    assert a.n_evaluations == b.n_evaluations


def test_numpy_backend_for_kernel_less_objective():
    f = objective.ObjectiveFunction("sphere", 2, lambda x: np.sum(x * x, axis=-1), np.zeros(2), 0.0)
    traj = integrate(_cfg("jump_cbo", d=2, f=f, horizon=0.2), 0)
    assert np.all(np.isfinite(traj.final_positions))
    with pytest.raises(ValueError):
        integrate(_cfg("jump_cbo", d=2, f=f), 0, backend="numba")


def test_determinism():
    cfg = _cfg()
    a, b = integrate(cfg, 7), integrate(cfg, 7)
    np.testing.assert_array_equal(a.snapshots, b.snapshots)
    c = integrate(cfg, 8)
    assert not np.array_equal(a.snapshots, c.snapshots)


def test_start_of_step_freezing_permutation():
    # permuting particles (with their noise) permutes the result
    cfg = _cfg("jump_cbo", n=6, d=2)
    rng = np.random.default_rng(3)
    x = rng.normal(size=(6, 2))
    dW, S = rng.normal(size=(6, 2)) * 0.1, rng.normal(size=(6, 2))
    perm = rng.permutation(6)
    a = euler_step(x, 0.0, cfg, (dW, S))
    b = euler_step(x[perm], 0.0, cfg, (dW[perm], S[perm]))
    np.testing.assert_allclose(a[perm], b, rtol=1e-13, atol=1e-13)


def test_exact_contraction_two_particles():
    beta, h = 1.0, 0.01
    cfg = RunConfig(ModelVariant("anisotropic_cbo"), _sched(beta, 0.0, 0.0, 0.0, 5.0),
                    objective.quadratic_shifted(1, [0.5]), 2, 1.0, h)
    x = np.array([[0.0], [1.0]])
    gap = 1.0
    for k in range(20):
        x = euler_step(x, k * h, cfg, _zero(2, 1))
        gap *= 1 - beta * h
        assert x.mean() == pytest.approx(0.5, abs=1e-15)
        assert x[1, 0] - x[0, 0] == pytest.approx(gap, rel=1e-12)


def test_common_wiener_shares_increment():
    cfg = _cfg("cbo_common_wiener", n=3, d=2, schedules=_sched(beta=0.0, sigma=1.0))
    x = np.array([[1.0, 1.0], [2.0, 2.0], [-3.0, 0.0]])
    dW = np.array([[0.1, -0.2]])
    v = np.zeros(2)
    new = euler_step(x, 0.0, cfg, (dW, np.zeros((3, 2))), pinned_consensus=v)
    np.testing.assert_allclose(new, x + math.sqrt(2) * x * dW, atol=1e-15)


def test_isotropic_diffusion_uses_norm():
    cfg = _cfg("isotropic_cbo", n=1, d=2, schedules=_sched(beta=0.0, sigma=1.0))
    cfg = cfg.replace(variant=ModelVariant("isotropic_cbo", sqrt2_in_diffusion=False))
    x = np.array([[3.0, 4.0]])
    dW = np.array([[0.1, 0.2]])
    new = euler_step(x, 0.0, cfg, (dW, np.zeros((1, 2))), pinned_consensus=np.zeros(2))
    np.testing.assert_allclose(new, x + 5.0 * dW)


def test_heaviside_drift_switches_off_for_better_particles():
    cfg = _cfg("heaviside_cbo", n=2, d=1, f=objective.quadratic_shifted(1), schedules=_sched(sigma=0.0))
    x = np.array([[0.0], [1.0]])
    v = np.array([0.5])
    new = euler_step(x, 0.0, cfg, _zero(2, 1), pinned_consensus=v)
    # particle 0 is better than the consensus point and stays; particle 1 drifts
    assert new[0, 0] == pytest.approx(0.0, abs=1e-12)
    assert new[1, 0] == pytest.approx(1.0 - 0.01 * 0.5)


def test_time_intensity_variant_ignores_gamma():
    cfg = _cfg("jump_cbo_time_intensity", schedules=_sched(gamma=0.3, lam=4.0))
    beta, csig, gam, lam = coefficients(cfg, np.array([0.0, 1.0]))
    np.testing.assert_array_equal(gam, [1.0, 1.0])
    np.testing.assert_array_equal(lam, [4.0, 4.0])
    assert decay_exponent(cfg.schedules, cfg.variant, 0.0) == pytest.approx(-2 + 2 * 0.49 + 4.0)


def test_jump_term():
    cfg = _cfg("jump_cbo", n=2, d=2, schedules=_sched(beta=0.0, sigma=0.0, gamma=0.5))
    x = np.array([[1.0, -2.0], [0.0, 4.0]])
    S = np.array([[0.4, 1.0], [2.0, -1.0]])
    new = euler_step(x, 0.0, cfg, (np.zeros((2, 2)), S), pinned_consensus=np.zeros(2))
    np.testing.assert_allclose(new, x + 0.5 * x * S)


def test_nonfinite_reported_with_step():
    f = objective.ObjectiveFunction("blowup", 1, lambda x: np.where(x[..., 0] > 1e3, np.nan, x[..., 0] ** 2))
    cfg = RunConfig(ModelVariant("anisotropic_cbo"), _sched(beta=-100.0, sigma=0.0, lam=0.0), f, 3, 5.0, 0.01,
                    init_box=(1.0, 2.0))
    with pytest.raises(NonFiniteStateError) as e:
        integrate(cfg, 0)
    assert e.value.step is not None and e.value.step > 0


def test_decay_exponent_examples():
    plain = ModelVariant("jump_cbo", sqrt2_in_diffusion=False)
    assert decay_exponent(_sched(1.0, 0.0, 0.0, 0.0), plain, 0.0) == -2.0
    assert decay_exponent(_sched(2.0, 1.0, 0.5, 4.0), plain, 0.0) == pytest.approx(-2.0)
    assert decay_exponent(_sched(2.0, 1.0, 0.5, 4.0), ModelVariant("jump_cbo"), 0.0) == pytest.approx(-1.0)
    assert decay_exponent(_sched(1.0, 1.0, 1.0, 3.0), plain, 0.0, uniform_symmetric(3.0)) == pytest.approx(-1 + 9)
    # the jump term only enters for jump variants
    assert decay_exponent(_sched(1.0, 0.5, 0.5, 4.0), ModelVariant("anisotropic_cbo"), 0.0) == pytest.approx(-1.5)
    with pytest.raises(ValueError):
        decay_exponent(_sched(), ModelVariant("heaviside_cbo"), 0.0)
    assert decay_exponent(_sched(1.0, 0.5), ModelVariant("isotropic_cbo"), 0.0, dimension=4) == pytest.approx(0.0)


@given(st.floats(0.0, 3.0), st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.floats(0.0, 30.0))
def test_decay_exponent_matches_one_step_factor(beta, sigma, gamma, lam):
    # E|Y_1 - V|^2 / |Y_0 - V|^2 = (1 - beta h)^2 + c^2 sigma^2 h + lambda h gamma^2 E Z^2
    h = 1e-6
    s = _sched(beta, sigma, gamma, lam)
    factor = (1 - beta * h) ** 2 + 2 * sigma**2 * h + lam * h * gamma**2
    assert decay_exponent(s, ModelVariant("jump_cbo"), 0.0) == pytest.approx((factor - 1) / h, abs=1e-4 + 1e-5 * beta**2)


@pytest.mark.parametrize("tag", ["jump_cbo", "jump_cbo_common_poisson"])
def test_rastrigin_a30_jump_success(tag):
    """Published 100/100 at N=80; a 20-run sample must reach at least 19."""
    spec = harness.table_spec("table2")
    cfg = spec.cell_config(ModelVariant(tag), 80)
    ok = sum(np.linalg.norm(integrate(cfg, r, keep_snapshots=False).final_consensus) <= 0.25 for r in range(20))
    assert ok >= 19


def _max_norm(cfg, run):
    m = [0.0, 0.0]

    def cb(k, t, x):
        m[0] = max(m[0], float(np.abs(x).max()))

    traj = integrate(cfg.replace(snapshot_stride=10), run, keep_snapshots=False, callback=cb)
    m[1] = float(np.abs(traj.snapshot_consensus).max())
    return m


@pytest.mark.xfail(strict=True, reason="transient single-particle excursions exceed 1e6 under the published "
                                       "noise levels; see the decisions ledger")
def test_moment_sanity_particles_all_presets():
    worst = 0.0
    for tid in harness.TABLE_IDS:
        spec = harness.table_spec(tid)
        for v in spec.variants:
            worst = max(worst, _max_norm(spec.cell_config(v, 20), 0)[0])
    assert worst < 1e6


def test_moment_sanity_consensus_all_presets():
    for tid in harness.TABLE_IDS:
        spec = harness.table_spec(tid)
        for v in spec.variants:
            assert _max_norm(spec.cell_config(v, 20), 0)[1] < 1e6

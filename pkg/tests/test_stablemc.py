import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fraceig import stablemc as mc
from fraceig.eigen import principal_eigenpair
from fraceig.fraclap import assemble
from fraceig.geometry import Domain


def draws(alpha, d, dt, n, seed=0):
    return mc.stable_increment(alpha, d, dt, mc.block_rng(seed, 0), n)


def test_brownian_variance():
    dt = 0.01
    x = draws(2.0, 1, dt, 10 ** 6)[:, 0]
    assert x.var() == pytest.approx(2 * dt, rel=0.01)


def test_cauchy_characteristic_function():
    dt = 0.3
    c = np.cos(draws(1.0, 1, dt, 10 ** 6)[:, 0])
    sigma = c.std() / math.sqrt(len(c))
    assert abs(c.mean() - math.exp(-dt)) <= 3 * sigma


@pytest.mark.parametrize("alpha", [0.6, 1.4])
def test_characteristic_function_2d(alpha):
    dt, xi = 0.5, np.array([0.6, -0.8])
    c = np.cos(draws(alpha, 2, dt, 4 * 10 ** 5, seed=1) @ xi)
    assert abs(c.mean() - math.exp(-dt)) <= 3 * c.std() / math.sqrt(len(c))


def test_positive_stable_laplace_transform():
    beta = 0.65
    s = mc.positive_stable(beta, mc.block_rng(2, 0), 4 * 10 ** 5)
    assert np.all(s > 0)
    for lam in (0.5, 1.0, 2.0):
        e = np.exp(-lam * s)
        assert abs(e.mean() - math.exp(-lam ** beta)) <= 3 * e.std() / math.sqrt(len(e))


def test_isotropy():
    x = draws(1.5, 2, 0.1, 4 * 10 ** 5, seed=3)
    for k in range(2):
        assert abs(x[:, k].mean()) <= 3 * x[:, k].std() / math.sqrt(len(x))
    # alpha <= 1 has no mean: test sign symmetry instead
    y = draws(0.8, 1, 0.1, 10 ** 5, seed=4)[:, 0]
    p = np.mean(y > 0)
    assert abs(p - 0.5) <= 3 * math.sqrt(0.25 / len(y))


@pytest.mark.parametrize("alpha", [0.7, 1.3, 2.0])
def test_stable_scaling_in_law(alpha):
    c = 3.0
    a = np.linalg.norm(draws(alpha, 2, c * 0.1, 50_000, seed=5), axis=1)
    b = c ** (1 / alpha) * np.linalg.norm(draws(alpha, 2, 0.1, 50_000, seed=6), axis=1)
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_config_validation():
    with pytest.raises(ValueError):
        mc.PathConfig(2.5, 2, 1e-3, 1.0, 10)
    with pytest.raises(ValueError):
        mc.PathConfig(1.0, 2, 2.0, 1.0, 10)
    with pytest.raises(ValueError):
        mc.PathConfig(1.0, 2, 1e-3, 1.0, 0)


@pytest.mark.parametrize("alpha", [0.8, 1.5])
def test_getoor_mean_exit_time(alpha):
    cfg = mc.PathConfig(alpha, 2, 1e-3, 6.0, 20_000, seed=3)
    fine, coarse = mc.run_paths([0, 0], cfg, mc.ball_region([0, 0], 1.0), strides=(1, 2))
    tau = np.minimum(fine.tau, cfg.horizon)
    sigma = tau.std() / math.sqrt(len(tau))
    bias = abs(tau.mean() - np.minimum(coarse.tau, cfg.horizon).mean())
    assert abs(tau.mean() - mc.getoor_mean_exit_time(2, alpha)) <= 3 * sigma + bias


def test_getoor_mean_exit_time_on_mask_domain():
    alpha, h = 1.5, 1 / 32
    D = Domain.ball(1.0, h)
    cfg = mc.PathConfig(alpha, 2, 1e-3, 6.0, 20_000, seed=4)
    fine, coarse = mc.simulate_exits(D, [0, 0], cfg, strides=(1, 2))
    tau = np.minimum(fine.tau, cfg.horizon)
    g = mc.getoor_mean_exit_time(2, alpha)
    # the staircase boundary is within h of the circle: tau scales like r^alpha
    geometric = g * ((1 + h) ** alpha - 1)
    slack = 3 * tau.std() / math.sqrt(len(tau)) + abs(tau.mean() - np.minimum(coarse.tau, 6.0).mean()) + geometric
    assert abs(tau.mean() - g) <= slack


def test_getoor_formula_off_centre():
    # E_x tau scales like (1 - |x|^2)^{alpha/2}
    assert mc.getoor_mean_exit_time(2, 1.0, [0.6, 0.0]) == pytest.approx(mc.getoor_mean_exit_time(2, 1.0) * 0.8)


def test_jump_exits_overshoot():
    D = Domain.ball(1.0, 1 / 16)
    cfg = mc.PathConfig(1.0, 2, 1e-3, 3.0, 4000, seed=7)
    batch = mc.simulate_exits(D, [0, 0], cfg)[0]
    done = np.isfinite(batch.tau)
    assert np.all(batch.by_jump[done])
    r = np.linalg.norm(batch.exit_position[done], axis=1)
    assert np.mean(r > 1.0 + 0.1) > 0.1
    assert not np.any(D.contains(batch.exit_position[done]))
    assert np.all(np.isnan(batch.exit_position[~done]))


def test_brownian_exits_are_outside_and_continuous():
    D = Domain.ball(1.0, 1 / 16)
    cfg = mc.PathConfig(2.0, 2, 1e-3, 2.0, 2000, seed=8)
    batch = mc.simulate_exits(D, [0, 0], cfg)[0]
    done = np.isfinite(batch.tau)
    assert done.mean() > 0.99
    assert not np.any(batch.by_jump)
    assert not np.any(D.contains(batch.exit_position[done]))
    assert np.all(np.abs(np.linalg.norm(batch.exit_position[done], axis=1) - 1) < 0.25)


def test_potential_integral():
    D = Domain.ball(1.0, 1 / 16)
    cfg = mc.PathConfig(1.2, 2, 1e-3, 0.3, 2000, seed=9)
    zero = mc.simulate_exits(D, [0, 0], cfg, V=0.0)[0]
    assert np.all(zero.v_integral == 0.0)
    const = mc.simulate_exits(D, [0, 0], cfg, V=2.0)[0]
    stop = np.minimum(const.tau, cfg.horizon)
    assert np.allclose(const.v_integral, 2.0 * stop)
    V = np.random.default_rng(0).uniform(-1, 3, D.n_interior)
    var = mc.simulate_exits(D, [0, 0], cfg, V=V)[0]
    assert np.all(var.v_integral <= np.abs(V).max() * stop + 1e-12)


def test_single_path_matches_batch():
    D = Domain.ball(1.0, 1 / 16)
    cfg = mc.PathConfig(1.0, 2, 1e-3, 0.5, 300, seed=10, block_size=128)
    batch = mc.simulate_exits(D, [0.1, 0.2], cfg, V=1.0)[0]
    for i in (0, 129, 299):
        s = mc.simulate_exit(D, [0.1, 0.2], cfg, V=1.0, path_index=i)
        assert s.tau == batch.tau[i] and s.v_integral == batch.v_integral[i]
    with pytest.raises(ValueError, match="outside"):
        mc.simulate_exit(D, [2.0, 0.0], cfg)


def test_determinism_across_threads():
    D = Domain.l_shape(2.0, 1.0, 1 / 16)
    base = mc.PathConfig(1.3, 2, 1e-3, 0.4, 5000, seed=11, block_size=512)
    runs = [mc.simulate_exits(D, [0.5, 0.5], base.replace(threads=k), V=0.5)[0] for k in (1, 4)]
    assert np.array_equal(runs[0].tau, runs[1].tau)
    assert np.array_equal(runs[0].v_integral, runs[1].v_integral)
    assert np.array_equal(runs[0].final_position, runs[1].final_position)


def test_survival_basics():
    D = Domain.ball(1.0, 1 / 32)
    cfg = mc.PathConfig(2.0, 2, 1e-3, 0.2, 20_000, seed=12)
    assert mc.survival_probability(D, [0, 0], 0.0, cfg).value == 1.0
    lam = principal_eigenpair(assemble(D, 2.0)).lam
    est = mc.survival_probability(D, [0, 0], 0.1, cfg)
    assert est.value >= math.exp(-lam * 0.1) - (est.hi - est.lo)
    with pytest.raises(ValueError):
        mc.survival_probability(D, [0, 0], 0.5, cfg)


def test_survival_radial_monotonicity():
    D = Domain.ball(1.0, 1 / 32)
    cfg = mc.PathConfig(1.0, 2, 1e-3, 0.2, 20_000, seed=13)
    vals = [mc.survival_probability(D, [r, 0.0], 0.2, cfg) for r in (0.0, 0.3, 0.6, 0.9)]
    for a, b in zip(vals, vals[1:]):
        assert b.value <= a.value + (a.half_width + b.half_width)


def test_feynman_kac_trivial_cases():
    D = Domain.ball(1.0, 1 / 16)
    cfg = mc.PathConfig(1.0, 2, 1e-3, 0.5, 1000, seed=14)
    u = np.random.default_rng(1).uniform(0.1, 1, D.n_interior)
    x = D.interior_points[17]
    assert mc.feynman_kac(D, 1.0, u, x, 0.0, cfg).value == u[17]
    assert mc.feynman_kac(D, 1.0, np.zeros(D.n_interior), x, 0.3, cfg).value == 0.0


def test_heat_kernels_integrate_to_one():
    from scipy import integrate

    for alpha in (1.0, 2.0):
        total = integrate.quad(lambda r: 2 * math.pi * r * mc.heat_kernel(0.7, r, 2, alpha), 0, np.inf)[0]
        assert total == pytest.approx(1.0, rel=1e-6)


@pytest.mark.parametrize("alpha,d", [(2.0, 1), (2.0, 2), (1.0, 1)])
def test_transition_density_at_mode(alpha, d):
    t = 0.5
    cfg = mc.PathConfig(alpha, d, t, t, 200_000, seed=15)
    est = mc.transition_density(t, np.zeros(d), np.zeros(d), cfg, bandwidth=0.05 * t ** (1 / alpha))
    exact = float(mc.heat_kernel(t, 0.0, d, alpha))
    assert est.value == pytest.approx(exact, rel=0.05)
    assert est.warning is None


def test_transition_density_tail_and_fit():
    alpha, d, t = 1.0, 1, 0.5
    cfg = mc.PathConfig(alpha, d, t, t, 200_000, seed=16)
    ests = []
    for r in (0.0, 1.0, 3.0, 10.0):
        y = np.array([r * t ** (1 / alpha)])
        ests.append(mc.transition_density(t, np.zeros(1), y, cfg, bandwidth=0.05 * max(1, r) * t))
    c_fit = mc.fit_sandwich_constant(ests, alpha, d)
    tail = ests[-1]
    dist = float(abs(tail.y[0]))
    assert tail.value <= c_fit * t / dist ** (d + alpha)
    assert 1 <= c_fit < 10


def test_transition_density_bandwidth_warning():
    cfg = mc.PathConfig(2.0, 1, 0.1, 0.1, 1000, seed=17)
    est = mc.transition_density(0.1, [0.0], [0.0], cfg, bandwidth=1.0)
    assert est.warning and "under-resolves" in est.warning


def test_half_width_shrinks_like_root_n():
    ws = []
    for n in (10_000, 40_000):
        cfg = mc.PathConfig(2.0, 1, 0.1, 0.1, n, seed=18)
        ws.append(mc.transition_density(0.1, [0.0], [0.0], cfg, 0.02).half_width)
    assert ws[0] / ws[1] == pytest.approx(2.0, rel=0.15)


def test_exit_bound_sweep_small():
    cfg = mc.PathConfig(1.0, 2, 1e-3, 0.05, 20_000, seed=19)
    rows = mc.exit_bound_sweep([0.5, 1.0], [0.01, 0.05], 1.0, cfg)
    assert len(rows) == 4
    for row in rows:
        assert row["ci_lo"] <= row["estimate"] <= row["ci_hi"]
        assert 0 < row["ratio"] < 5
    with pytest.raises(ValueError):
        mc.exit_bound_sweep([1.0], [0.1], 2.0, cfg)


def test_exit_sweep_scaling_partner_same_seed_is_exact():
    # with the same stream, scaling space by 2 and time by 2^alpha reproduces the same events
    alpha = 1.0
    cfg = mc.PathConfig(alpha, 2, 1e-3, 0.05, 5000, seed=20)
    a = mc.exit_bound_sweep([0.5], [0.05], alpha, cfg)[0]
    b = mc.exit_bound_sweep([1.0], [0.1], alpha, cfg.replace(dt=2e-3, horizon=0.1))[0]
    assert a["estimate"] == b["estimate"]


def test_levy_balance():
    A = mc.TargetSet.from_domain(Domain.annulus(1.0, 2.0, 0.2))
    cfg = mc.PathConfig(1.0, 2, 2e-3, 0.1, 10_000, seed=5)
    lhs, rhs = mc.levy_jump_balance(A, [0, 0], 0.1, cfg)
    assert abs(lhs.value - rhs.value) <= 3 * math.hypot(lhs.sigma, rhs.sigma)
    _, rhs2 = mc.levy_jump_balance(A, [0, 0], 0.1, cfg, kernel_scale=2.0)
    assert rhs2.value / lhs.value == pytest.approx(2.0, rel=0.2)
    empty = mc.levy_jump_balance(mc.TargetSet.empty(2), [0, 0], 0.1, cfg)
    assert empty[0].value == 0.0 and empty[1].value == 0.0
    with pytest.raises(ValueError, match="singular"):
        mc.levy_jump_balance(A, [1.2, 0.0], 0.1, cfg)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 10_000), st.data())
def test_wilson_interval_properties(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = mc.wilson_interval(k, n)
    assert 0.0 <= lo <= k / n <= hi <= 1.0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 63), st.integers(0, 50))
def test_block_streams_are_reproducible(seed, block):
    a = mc.block_rng(seed, block).standard_normal(4)
    b = mc.block_rng(seed, block).standard_normal(4)
    c = mc.block_rng(seed, block + 1).standard_normal(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)

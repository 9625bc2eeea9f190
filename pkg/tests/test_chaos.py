import math

import numpy as np
import pytest

from chaosmap.chaos import (
    SUPPORT_WEIGHT_RATIO,
    BasisTables,
    ChaosConfig,
    ChaosState,
    chaos_rhs,
    density_from_map,
    eval_map,
    eval_map_jacobian,
    init_gaussian_map,
    map_jacobian_determinants,
    map_mean,
    map_std,
    moments_from_state,
    propagate,
    step_rk4,
)
from chaosmap.errors import MapDegeneracyError
from chaosmap.fokker_planck import GridSpec, grid_moments
from chaosmap.hermite import gauss_hermite_rule, multi_index_set
from chaosmap.observables import monomial
from chaosmap.potentials import (
    ProblemSpec,
    cosine_potential,
    quadratic_potential,
    zero_potential,
)


def ou_std(t, eps, beta=1.0, k=1.0):
    # dsigma^2/dt = -2 k sigma^2 + beta^2 from sigma^2(0) = eps^2
    return math.sqrt(beta * beta / (2 * k) * (1 - math.exp(-2 * k * t))
                     + eps * eps * math.exp(-2 * k * t))


def gaussian_on_grid(spec: GridSpec, mu, var):
    x = spec.centers
    return np.exp(-0.5 * (x - mu) ** 2 / var) / np.sqrt(2 * np.pi * var)


def test_config_defaults_and_validation():
    cfg = ChaosConfig(p=4)
    assert cfg.q == 12
    assert ChaosConfig(p=3, q=5).q == 5
    with pytest.raises(ValueError, match="q must be"):
        ChaosConfig(p=5, q=4)
    with pytest.raises(ValueError, match="dt"):
        ChaosConfig(dt=0.0)
    with pytest.raises(ValueError, match="jac_floor"):
        ChaosConfig(jac_floor=-1.0)
    with pytest.raises(ValueError, match="output_stride"):
        ChaosConfig(output_stride=0)


def test_init_gaussian_map_1d():
    cfg = ChaosConfig(p=3, q=10)
    state = init_gaussian_map([0.0], 0.1, cfg)
    assert np.allclose(state.coeffs, [[0.0, 0.1, 0.0, 0.0]], atol=0.0)
    assert state.t == 0.0
    assert map_mean(state)[0] == 0.0
    assert map_std(state)[0] == pytest.approx(0.1, abs=1e-16)
    # quadrature mean u0 and variance eps^2
    assert moments_from_state(state, monomial(1)) == pytest.approx(0.0, abs=1e-15)
    assert moments_from_state(state, monomial(2)) == pytest.approx(0.01, abs=1e-15)


def test_init_gaussian_map_2d_and_gauge():
    cfg = ChaosConfig(p=1, q=4)
    state = init_gaussian_map([1.0, 2.0], 0.5, cfg)
    # index order (0,0), (1,0), (0,1)
    assert np.allclose(state.coeffs, [[1.0, 0.5, 0.0], [2.0, 0.0, 0.5]], atol=0.0)
    # epsilon enters as |epsilon|: the germ is symmetric
    neg = init_gaussian_map([1.0, 2.0], -0.5, cfg)
    assert np.array_equal(neg.coeffs, state.coeffs)


def test_init_rejects_dirac():
    cfg = ChaosConfig(p=3)
    with pytest.raises(MapDegeneracyError) as err:
        init_gaussian_map([0.0], 0.0, cfg)
    assert err.value.determinant == 0.0
    with pytest.raises(ValueError, match="p must be >= 1"):
        init_gaussian_map([0.0], 0.1, ChaosConfig(p=0, q=3))


def test_eval_map_and_jacobian():
    state = init_gaussian_map([0.0], 0.1, ChaosConfig(p=3, q=10))
    pts = np.array([[0.5], [-1.0], [2.0]])
    assert np.allclose(eval_map(state, pts), 0.1 * pts, atol=1e-16)
    J = eval_map_jacobian(state, pts)
    assert J.shape == (3, 1, 1)
    assert np.allclose(J, 0.1, atol=1e-16)
    single = eval_map(state, [0.5])
    assert single.shape == (1,)
    assert eval_map_jacobian(state, [0.5]).shape == (1, 1)
    dets = map_jacobian_determinants(state)
    assert np.allclose(dets, 0.1, atol=1e-16)


def test_eval_map_hermite_zero():
    # M = 1 + sqrt(2) Hhat_2; Hhat_2(1) = 0 so M(1) = 1
    basis = BasisTables(multi_index_set(1, 2), gauss_hermite_rule(1, 6))
    state = ChaosState(t=0.0, coeffs=[[1.0, 0.0, math.sqrt(2.0)]], basis=basis)
    assert eval_map(state, [1.0])[0] == pytest.approx(1.0, abs=1e-15)


def test_state_validation():
    basis = BasisTables(multi_index_set(1, 2), gauss_hermite_rule(1, 6))
    with pytest.raises(ValueError, match="shape"):
        ChaosState(t=0.0, coeffs=[[1.0, 0.0]], basis=basis)
    with pytest.raises(ValueError, match="finite"):
        ChaosState(t=0.0, coeffs=[[1.0, np.nan, 0.0]], basis=basis)


def test_rhs_heat_hand_check():
    # b = 0, affine map with slope s: dm1/dt = beta^2/(2s), all else 0
    beta, s = 0.7, 0.3
    state = init_gaussian_map([0.4], s, ChaosConfig(p=4, q=12))
    rhs = chaos_rhs(state, zero_potential(), beta)
    i1 = state.index_set.unit_position(0)
    assert rhs[0, i1] == pytest.approx(beta * beta / (2 * s), rel=1e-14)
    rest = np.delete(rhs[0], i1)
    assert np.max(np.abs(rest)) < 1e-14


def test_rhs_ou_hand_check():
    # b(x) = -x keeps the map affine: dm0/dt = -m0, dm1/dt = -m1 + beta^2/(2 m1)
    basis = BasisTables(multi_index_set(1, 4), gauss_hermite_rule(1, 12))
    coeffs = np.zeros((1, 5))
    coeffs[0, 0], coeffs[0, 1] = 0.8, 0.25
    state = ChaosState(t=0.0, coeffs=coeffs, basis=basis)
    rhs = chaos_rhs(state, quadratic_potential(1.0), beta=1.0)
    assert rhs[0, 0] == pytest.approx(-0.8, rel=1e-14)
    assert rhs[0, 1] == pytest.approx(-0.25 + 1.0 / (2 * 0.25), rel=1e-14)
    assert np.max(np.abs(rhs[0, 2:])) < 1e-13


def test_step_rk4_basics():
    state = init_gaussian_map([0.0], 0.1, ChaosConfig(p=3, q=10))
    assert step_rk4(state, zero_potential(), 1.0, 0.0) is state
    with pytest.raises(ValueError):
        step_rk4(state, zero_potential(), 1.0, -1e-3)
    new = step_rk4(state, zero_potential(), 1.0, 1e-3)
    assert new.t == pytest.approx(1e-3)
    i1 = state.index_set.unit_position(0)
    assert new.coeffs[0, i1] == pytest.approx(math.sqrt(0.011), abs=1e-9)


def test_rk4_richardson_ratio():
    # halving dt reduces the closed-form m1 error by ~2^4
    prob = ProblemSpec(quadratic_potential(1.0), beta=1.0, u0=1.0, epsilon=0.1,
                       t_final=0.5)
    target = ou_std(0.5, 0.1)
    errs = []
    for dt in (0.025, 0.0125):
        states = propagate(prob, ChaosConfig(p=4, q=12, dt=dt, output_stride=10**6))
        errs.append(abs(map_std(states[-1])[0] - target))
    ratio = errs[0] / errs[1]
    assert 12.0 <= ratio <= 20.0


def test_heat_run_exactness():
    # b = 0: m1(t)^2 = eps^2 + beta^2 t along the whole run, higher modes silent
    prob = ProblemSpec(zero_potential(), beta=1.0, u0=0.0, epsilon=0.1, t_final=0.5)
    states = propagate(prob, ChaosConfig(p=3, q=10, dt=1e-3))
    i1 = states[0].index_set.unit_position(0)
    for s in states:
        assert abs(s.coeffs[0, i1] ** 2 - (0.01 + s.t)) <= 1e-8
        assert abs(s.coeffs[0, 0]) <= 1e-12
        assert np.max(np.abs(s.coeffs[0, 2:])) <= 1e-10
    assert states[0].t == 0.0
    assert states[-1].t == pytest.approx(0.5, abs=1e-12)
    assert states[-1].coeffs[0, i1] == pytest.approx(math.sqrt(0.51), abs=1e-6)


def test_heat_quarter_time_value():
    prob = ProblemSpec(zero_potential(), beta=1.0, u0=0.0, epsilon=0.1, t_final=0.25)
    states = propagate(prob, ChaosConfig(p=3, q=10, dt=1e-3))
    i1 = states[-1].index_set.unit_position(0)
    assert states[-1].coeffs[0, i1] == pytest.approx(math.sqrt(0.26), abs=1e-6)


def test_heat_moment_examples():
    prob = ProblemSpec(zero_potential(), beta=1.0, u0=0.7, epsilon=0.1, t_final=0.3)
    final = propagate(prob, ChaosConfig(p=3, q=10, dt=1e-3))[-1]
    assert moments_from_state(final, monomial(0)) == pytest.approx(1.0, abs=1e-14)
    assert moments_from_state(final, monomial(1)) == pytest.approx(0.7, abs=1e-10)
    assert moments_from_state(final, monomial(2)) == pytest.approx(
        0.7**2 + 0.01 + 0.3, abs=1e-8)


def test_ou_closed_form_and_p_independence():
    prob = ProblemSpec(quadratic_potential(1.0), beta=1.0, u0=1.0, epsilon=0.1,
                       t_final=1.0)
    finals = {}
    for p, q in ((1, 6), (6, 16)):
        finals[p] = propagate(prob, ChaosConfig(p=p, q=q, dt=1e-3))[-1]
    for p in (1, 6):
        assert map_mean(finals[p])[0] == pytest.approx(math.exp(-1.0), abs=1e-5)
        assert map_std(finals[p])[0] == pytest.approx(ou_std(1.0, 0.1), abs=1e-5)
    # linear drift keeps the map affine: p = 1 and p = 6 agree to solver precision
    assert abs(finals[1].coeffs[0, 0] - finals[6].coeffs[0, 0]) <= 1e-9
    assert abs(finals[1].coeffs[0, 1] - finals[6].coeffs[0, 1]) <= 1e-9
    assert np.max(np.abs(finals[6].coeffs[0, 2:])) <= 1e-9


def test_ou_2d():
    prob = ProblemSpec(quadratic_potential(1.0, n=2), beta=1.0, u0=(1.0, 2.0),
                       epsilon=0.5, t_final=0.3)
    final = propagate(prob, ChaosConfig(p=2, q=6, dt=1e-3))[-1]
    decay = math.exp(-0.3)
    sig = ou_std(0.3, 0.5)
    assert np.allclose(map_mean(final), [decay, 2.0 * decay], atol=1e-6)
    assert np.allclose(map_std(final), [sig, sig], atol=1e-6)
    # components stay decoupled for a separable potential
    idx = final.index_set
    assert abs(final.coeffs[0, idx.unit_position(1)]) <= 1e-10
    assert abs(final.coeffs[1, idx.unit_position(0)]) <= 1e-10
    second = moments_from_state(final, monomial(2, component=1))
    assert second == pytest.approx((2 * decay) ** 2 + sig * sig, abs=1e-8)


def test_propagate_t0_and_stride():
    prob = ProblemSpec(zero_potential(), beta=1.0, u0=0.0, epsilon=0.1, t_final=0.0)
    states = propagate(prob, ChaosConfig(p=3))
    assert len(states) == 1 and states[0].t == 0.0
    prob = ProblemSpec(zero_potential(), beta=1.0, u0=0.0, epsilon=0.1, t_final=0.1)
    states = propagate(prob, ChaosConfig(p=3, q=10, dt=1e-3, output_stride=50))
    assert len(states) == 3
    assert [round(s.t, 6) for s in states] == [0.0, 0.05, 0.1]


def test_map_degeneracy_error_carries_context():
    # strong cosine barrier with a wide germ folds the map early
    prob = ProblemSpec(cosine_potential(1.5, 1.0), beta=0.4, u0=0.0, epsilon=1.2,
                       t_final=2.0)
    with pytest.raises(MapDegeneracyError) as err:
        propagate(prob, ChaosConfig(p=8, q=24, dt=1e-3))
    e = err.value
    assert e.determinant is not None and e.determinant <= 1e-10
    assert e.node is not None and e.node.shape == (1,)
    assert isinstance(e.partial, list) and len(e.partial) >= 1
    assert e.partial[0].t == 0.0
    assert "determinant" in str(e)


def test_effective_support_tables():
    rule = gauss_hermite_rule(1, 16)
    tab = BasisTables(multi_index_set(1, 3), rule)
    w = rule.weights
    expect = w >= SUPPORT_WEIGHT_RATIO * w.max()
    assert np.array_equal(tab.support, expect)
    assert int(tab.support.sum()) == 12
    ins = np.flatnonzero(tab.support)
    assert np.array_equal(tab.clamp_source[ins], ins)
    for j in np.flatnonzero(~tab.support):
        d = np.abs(rule.nodes[:, 0] - rule.nodes[j, 0])
        assert tab.clamp_source[j] == ins[np.argmin(d[ins])]
    # narrow rules keep every node
    tab10 = BasisTables(multi_index_set(1, 3), gauss_hermite_rule(1, 10))
    assert tab10.support.all()
    # tensor rules exclude low-weight corners
    tab2 = BasisTables(multi_index_set(2, 2), gauss_hermite_rule(2, 12))
    assert int(tab2.support.sum()) == 96


def test_clamping_is_exact_for_affine_maps():
    # q = 16 activates tail clamping; the rhs of an affine map is unchanged
    beta, s = 1.0, 0.1
    state = init_gaussian_map([0.0], s, ChaosConfig(p=3, q=16))
    assert not state.basis.support.all()
    rhs = chaos_rhs(state, zero_potential(), beta)
    i1 = state.index_set.unit_position(0)
    assert rhs[0, i1] == pytest.approx(beta * beta / (2 * s), rel=1e-12)
    rest = np.delete(rhs[0], i1)
    assert np.max(np.abs(rest)) < 1e-13


def test_monotonicity_guard_on_support():
    prob = ProblemSpec(cosine_potential(1.0, 1.0), beta=1.0, u0=0.5, epsilon=0.1,
                       t_final=0.3)
    states = propagate(prob, ChaosConfig(p=6, q=24, dt=1e-3))
    for s in states:
        dets = map_jacobian_determinants(s)
        assert np.all(dets[s.basis.support] > 1e-10)


def test_density_from_map_initial_gaussian():
    state = init_gaussian_map([0.0], 0.1, ChaosConfig(p=3, q=10))
    spec = GridSpec(-1.0, 1.0, 2048)
    dens = density_from_map(state, spec)
    ref = gaussian_on_grid(spec, 0.0, 0.01)
    l1 = float(np.sum(np.abs(dens.values - ref)) * dens.dx)
    assert l1 <= 1e-4
    assert abs(dens.mass - 1.0) <= 1e-6


def test_density_from_map_heat_kernel():
    prob = ProblemSpec(zero_potential(), beta=1.0, u0=0.0, epsilon=0.1, t_final=0.5)
    final = propagate(prob, ChaosConfig(p=3, q=10, dt=1e-3))[-1]
    spec = GridSpec(-6.0, 6.0, 2048)
    dens = density_from_map(final, spec)
    var = 0.01 + 0.5
    ref = gaussian_on_grid(spec, 0.0, var)
    assert float(np.sum(np.abs(dens.values - ref)) * dens.dx) <= 1e-4
    assert abs(dens.mass - 1.0) <= 1e-6
    # measure-transform consistency against the quadrature moments
    assert grid_moments(dens, monomial(2)) == pytest.approx(
        moments_from_state(final, monomial(2)), abs=1e-6)


def test_density_from_map_trims_negligible_tails():
    basis = BasisTables(multi_index_set(1, 3), gauss_hermite_rule(1, 10))
    # M = xi + c Hhat_3: M' = 1 + c (3 xi^2 - 3)/sqrt(6) dips negative only
    # beyond |xi| ~ 6.4 for c = -0.02, carrying ~6e-11 of germ mass
    state = ChaosState(t=0.0, coeffs=[[0.0, 1.0, 0.0, -0.02]], basis=basis)
    dens = density_from_map(state, GridSpec(-8.0, 8.0, 2048))
    assert abs(dens.mass - 1.0) <= 1e-6


def test_density_from_map_rejects_folds():
    basis = BasisTables(multi_index_set(1, 3), gauss_hermite_rule(1, 10))
    with pytest.raises(MapDegeneracyError):
        density_from_map(ChaosState(t=0.0, coeffs=[[0.0, -0.5, 0.0, 0.0]], basis=basis),
                         GridSpec(-2.0, 2.0, 256))
    # a fold at |xi| ~ 2.2 carries percent-level mass: reconstruction must refuse
    state = ChaosState(t=0.0, coeffs=[[0.0, 1.0, 0.0, -0.2]], basis=basis)
    with pytest.raises(MapDegeneracyError, match="single-valued"):
        density_from_map(state, GridSpec(-8.0, 8.0, 256))


def test_density_from_map_1d_only():
    state = init_gaussian_map([0.0, 0.0], 0.5, ChaosConfig(p=1, q=4))
    with pytest.raises(ValueError, match="1-D"):
        density_from_map(state, GridSpec(-1.0, 1.0, 64))

import math

import numpy as np
import pytest

from chaosmap.errors import (
    GridCoverageWarning,
    GridDomainError,
    NonNormalizableWarning,
    StabilityError,
    SupportError,
)
from chaosmap.fokker_planck import (
    DensityGrid,
    GridSpec,
    fisher_information,
    fp_solve,
    gaussian_chain_convolve,
    gaussian_density,
    gaussian_kernel_value,
    grid_mean,
    grid_moments,
    grid_variance,
    kl_divergence,
    k1_diagnostics,
    log_gradient,
    stationary_density,
)
from chaosmap.observables import monomial
from chaosmap.potentials import ProblemSpec, quadratic_potential, zero_potential


def heat_problem(epsilon=0.1, u0=0.0, t_final=0.5):
    return ProblemSpec(zero_potential(), beta=1.0, u0=u0, epsilon=epsilon,
                       t_final=t_final)


def ou_problem(epsilon=0.1, u0=1.0, t_final=1.0, beta=1.0):
    return ProblemSpec(quadratic_potential(1.0), beta=beta, u0=u0, epsilon=epsilon,
                       t_final=t_final)


def test_grid_spec():
    spec = GridSpec(-1.0, 1.0, 8)
    assert spec.dx == 0.25
    assert np.allclose(spec.centers, np.linspace(-0.875, 0.875, 8), atol=1e-15)
    with pytest.raises(ValueError, match="x_max"):
        GridSpec(1.0, 1.0, 8)
    with pytest.raises(ValueError, match="at least 4"):
        GridSpec(0.0, 1.0, 3)
    with pytest.raises(ValueError, match="finite"):
        GridSpec(0.0, np.inf, 8)


def test_density_grid():
    vals = np.full(8, 0.5)
    f = DensityGrid(-1.0, 1.0, 8, vals)
    assert f.mass == pytest.approx(1.0, abs=1e-15)
    # values within solver roundoff of zero are clipped, not rejected
    tiny = DensityGrid(-1.0, 1.0, 8, [0.5, 0.5, -1e-13, 0.5, 0.5, 0.5, 0.5, 0.5])
    assert tiny.values.min() == 0.0
    with pytest.raises(ValueError, match="negative"):
        DensityGrid(-1.0, 1.0, 8, [0.5] * 7 + [-1e-3])
    with pytest.raises(ValueError, match="length"):
        DensityGrid(-1.0, 1.0, 8, [0.5] * 7)
    with pytest.raises(ValueError, match="finite"):
        DensityGrid(-1.0, 1.0, 8, [0.5] * 7 + [np.nan])


def test_gaussian_kernel_value():
    peak = gaussian_kernel_value(0.0, 0.2)
    assert peak == pytest.approx(1.0 / (math.sqrt(2 * math.pi) * 0.2), rel=1e-15)
    assert gaussian_kernel_value(0.2, 0.2) == pytest.approx(peak * math.exp(-0.5),
                                                            rel=1e-15)
    assert gaussian_kernel_value(0.0, 0.2, n=2) == pytest.approx(peak * peak, rel=1e-14)
    assert gaussian_kernel_value(0.0, -0.2) == peak
    with pytest.raises(ValueError, match="epsilon"):
        gaussian_kernel_value(0.0, 0.0)


def test_gaussian_density():
    spec = GridSpec(-0.8, 0.8, 4096)
    f = gaussian_density(0.1, 0.0, spec)
    assert np.allclose(f.values, f.values[::-1], rtol=1e-12, atol=0.0)
    assert f.mass == pytest.approx(1.0, abs=1e-14)
    assert abs(grid_variance(f) - 0.01) <= 1e-8
    with pytest.warns(GridCoverageWarning):
        gaussian_density(0.1, 0.0, GridSpec(-0.2, 0.2, 64))
    with pytest.raises(ValueError, match="epsilon"):
        gaussian_density(0.0, 0.0, spec)


def test_stationary_density():
    spec = GridSpec(-8.0, 8.0, 4096)
    f = stationary_density(quadratic_potential(1.0), 1.0, spec)
    assert abs(grid_variance(f) - 0.5) <= 1e-6
    g = stationary_density(quadratic_potential(1.0), math.sqrt(2.0), spec)
    assert abs(grid_variance(g) - 1.0) <= 1e-6
    with pytest.warns(NonNormalizableWarning):
        stationary_density(zero_potential(), 1.0, GridSpec(-1.0, 1.0, 64))
    with pytest.raises(ValueError, match="1-D"):
        stationary_density(quadratic_potential(1.0, n=2), 1.0, spec)
    with pytest.raises(ValueError, match="beta"):
        stationary_density(quadratic_potential(1.0), 0.0, spec)


def test_heat_variance_growth():
    # b = 0: variance grows at exactly beta^2, from eps^2 at t = 0
    spec = GridSpec(-8.0, 8.0, 2048)
    snaps = fp_solve(heat_problem(), spec, dt=1e-4, theta=0.5, output_stride=2500)
    times = [s.t for s in snaps]
    assert times == [0.0, pytest.approx(0.25), pytest.approx(0.5)]
    assert abs(grid_variance(snaps[0]) - 0.01) <= 1e-6
    assert abs(grid_variance(snaps[1]) - 0.26) <= 1e-4
    assert abs(grid_variance(snaps[2]) - 0.51) <= 1e-4
    for s in snaps:
        assert abs(s.mass - 1.0) <= 1e-10
        assert abs(grid_mean(s)) <= 1e-10


def test_ou_mean_decay():
    spec = GridSpec(-6.0, 7.0, 2048)
    final = fp_solve(ou_problem(), spec, dt=1e-3, theta=0.5)[-1]
    assert abs(grid_mean(final) - math.exp(-1.0)) <= 1e-4


def test_stationary_profile_is_fixed_point():
    # start at the stationary Gaussian of the OU well: nothing may move
    prob = ou_problem(epsilon=1.0 / math.sqrt(2.0), u0=0.0, t_final=1.0)
    spec = GridSpec(-8.0, 8.0, 512)
    star = stationary_density(prob.potential, prob.beta, spec)
    snaps = fp_solve(prob, spec, dt=1e-3, theta=0.5, output_stride=1000)
    final = snaps[-1]
    l1 = float(np.sum(np.abs(final.values - star.values)) * final.dx)
    assert l1 <= 1e-10


def test_mass_conserved_every_step():
    spec = GridSpec(-6.0, 7.0, 512)
    snaps = fp_solve(ou_problem(t_final=0.05), spec, dt=1e-3, output_stride=1)
    assert len(snaps) == 51
    for s in snaps:
        assert abs(s.mass - 1.0) <= 1e-12


def test_h_theorem_theta_one():
    prob = ou_problem(epsilon=0.3, u0=1.5, t_final=0.5)
    spec = GridSpec(-8.0, 8.0, 512)
    star = stationary_density(prob.potential, prob.beta, spec)
    snaps = fp_solve(prob, spec, dt=1e-3, theta=1.0, output_stride=25)
    kls = [kl_divergence(s, star) for s in snaps]
    assert len(kls) >= 10
    assert kls[-1] < kls[0]
    assert max(np.diff(kls)) <= 1e-10


def test_stability_error_explicit_scheme():
    # D dt / eps^2 = 5: the explicit update inverts the peak cell at once
    prob = heat_problem(epsilon=0.1, t_final=1.0)
    spec = GridSpec(-2.0, 2.0, 256)
    with pytest.raises(StabilityError) as err:
        fp_solve(prob, spec, dt=0.1, theta=0.0)
    e = err.value
    assert e.suggested_dt is not None
    assert 0.0 < e.suggested_dt < 1e-2
    assert "theta = 1" in str(e)
    # the fully implicit update takes the same step without going negative
    snaps = fp_solve(prob, spec, dt=1e-4, theta=1.0, t_final=0.01)
    assert snaps[-1].values.min() >= 0.0


def test_grid_domain_error():
    prob = heat_problem(epsilon=0.1, t_final=1.0)
    with pytest.raises(GridDomainError, match="enlarge the grid"):
        fp_solve(prob, GridSpec(-0.5, 0.5, 64), dt=1e-3)


def test_fp_solve_validation():
    prob = heat_problem()
    spec = GridSpec(-4.0, 4.0, 64)
    with pytest.raises(ValueError, match="1-D"):
        fp_solve(ProblemSpec(zero_potential(n=2), beta=1.0, u0=(0.0, 0.0),
                             epsilon=0.1, t_final=0.1), spec, dt=1e-3)
    with pytest.raises(ValueError, match="dt"):
        fp_solve(prob, spec, dt=0.0)
    with pytest.raises(ValueError, match="theta"):
        fp_solve(prob, spec, dt=1e-3, theta=1.5)
    with pytest.raises(ValueError, match="output_stride"):
        fp_solve(prob, spec, dt=1e-3, output_stride=0)
    with pytest.raises(ValueError, match="t_final"):
        fp_solve(prob, spec, dt=1e-3, t_final=-1.0)
    only = fp_solve(prob, spec, dt=1e-3, t_final=0.0)
    assert len(only) == 1 and only[0].t == 0.0


def test_snapshot_cadence():
    spec = GridSpec(-4.0, 4.0, 64)
    snaps = fp_solve(heat_problem(t_final=0.01), spec, dt=1e-3, output_stride=4)
    assert [round(s.t, 9) for s in snaps] == [0.0, 0.004, 0.008, 0.01]


def test_kl_divergence():
    spec = GridSpec(-12.0, 12.0, 8192)
    f = gaussian_density(1.0, 0.0, spec)
    g = gaussian_density(math.sqrt(2.0), 0.0, spec)
    target = 0.5 * (0.5 + math.log(2.0) - 1.0)
    assert kl_divergence(f, g) == pytest.approx(target, abs=1e-6)
    assert kl_divergence(f, f) == 0.0
    gen = np.random.Generator(np.random.Philox(key=2))
    small = GridSpec(-1.0, 1.0, 128)
    for _ in range(100):
        a = gen.random(128) + 0.01
        b = gen.random(128) + 0.01
        fa = DensityGrid(-1.0, 1.0, 128, a / (a.sum() * small.dx))
        fb = DensityGrid(-1.0, 1.0, 128, b / (b.sum() * small.dx))
        assert kl_divergence(fa, fb) >= -1e-12
    with pytest.raises(ValueError, match="different grids"):
        kl_divergence(f, gaussian_density(1.0, 0.0, GridSpec(-12.0, 12.0, 4096)))
    holes = np.where(small.centers > 0.0, 1.0, 0.0)
    fh = DensityGrid(-1.0, 1.0, 128, holes / (holes.sum() * small.dx))
    full = DensityGrid(-1.0, 1.0, 128, np.full(128, 0.5))
    with pytest.raises(SupportError):
        kl_divergence(full, fh)


def test_fisher_information():
    spec = GridSpec(-6.0, 6.0, 4096)
    assert fisher_information(gaussian_density(0.5, 0.0, spec)) == pytest.approx(
        4.0, rel=1e-3)
    assert fisher_information(gaussian_density(0.25, 0.0, spec)) == pytest.approx(
        16.0, rel=1e-3)


def test_log_gradient():
    spec = GridSpec(-2.0, 2.0, 4096)
    f = gaussian_density(0.5, 0.1, spec)
    lg = log_gradient(f)
    assert np.isnan(lg[0]) and np.isnan(lg[-1])
    core = slice(1, -1)
    x = f.centers[core]
    assert np.max(np.abs(lg[core] + (x - 0.1) / 0.25)) <= 1e-3
    centered = log_gradient(gaussian_density(0.5, 0.0, spec))
    inner = centered[1:-1]
    assert np.allclose(inner, -inner[::-1], atol=1e-10, equal_nan=True)


def test_k1_diagnostics():
    f = gaussian_density(0.5, 1.0, GridSpec(-5.0, 7.0, 2048))
    diag = k1_diagnostics(f)
    assert set(diag) == {"min_density", "second_moment", "fisher_information",
                         "log_gradient_growth"}
    assert diag["min_density"] >= 0.0
    assert diag["second_moment"] == pytest.approx(1.0 + 0.25, abs=1e-6)
    assert diag["fisher_information"] == pytest.approx(4.0, rel=1e-3)
    assert np.isfinite(diag["log_gradient_growth"])
    assert diag["log_gradient_growth"] > 0.0


def test_gaussian_chain_convolve():
    var = gaussian_chain_convolve(0.01, 0.05, 20)
    assert var == pytest.approx(1.01, abs=1e-6)
    rev = gaussian_chain_convolve(0.01, 0.05, 20, reverse=True)
    assert abs(var - rev) <= 1e-10
    assert gaussian_chain_convolve(0.04, 0.1, 0) == pytest.approx(0.04, abs=1e-9)
    with pytest.raises(ValueError, match="epsilon2"):
        gaussian_chain_convolve(0.0, 0.1, 1)
    with pytest.raises(ValueError, match="dt"):
        gaussian_chain_convolve(0.01, 0.0, 1)
    with pytest.raises(ValueError, match="m"):
        gaussian_chain_convolve(0.01, 0.1, -1)
    with pytest.raises(GridDomainError, match="lost mass"):
        gaussian_chain_convolve(0.01, 0.05, 20, span=2.0)


def test_grid_moment_helpers():
    spec = GridSpec(0.0, 1.0, 512)
    f = DensityGrid(0.0, 1.0, 512, np.ones(512))
    assert grid_mean(f) == pytest.approx(0.5, abs=1e-12)
    assert grid_variance(f) == pytest.approx(1.0 / 12.0, abs=1e-6)
    assert grid_moments(f, monomial(1)) == pytest.approx(0.5, abs=1e-12)
    assert grid_moments(f, monomial(0)) == pytest.approx(f.mass, abs=1e-14)

"""Deterministic Fokker-Planck oracle on a 1-D finite-volume grid.

The density f of the diffusion dU = b(U) dt + beta dW solves

    df/dt = -d(b f)/dx + (beta^2 / 2) d^2 f / dx^2,

discretized here in flux form with Chang-Cooper face weighting.  With
gradient drift b = -psi' the face weights are built from potential
differences, which makes the grid restriction of the stationary weight
exp(-2 psi / beta^2) an exact fixed point of the scheme, and the
implicit update a mass-preserving positivity-preserving Markov map.
Zero-flux boundaries conserve mass exactly (up to solver roundoff); the
flux through the outermost interior faces is monitored so a grid that
is too small fails loudly instead of silently losing tail mass.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded
from scipy.signal import fftconvolve

from .errors import (
    GridCoverageWarning,
    GridDomainError,
    NonNormalizableWarning,
    StabilityError,
    SupportError,
)
from .observables import ObservableSpec, evaluate
from .potentials import ProblemSpec, PotentialSpec, eval_potential

DENSITY_FLOOR = 1e-300
BOUNDARY_FLUX_TOL = 1e-8


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell-centered grid on [x_min, x_max] with m cells."""

    x_min: float
    x_max: float
    m: int

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise ValueError("grid bounds must be finite")
        if self.x_max <= self.x_min:
            raise ValueError("x_max must exceed x_min")
        if self.m < 4:
            raise ValueError("grid needs at least 4 cells")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.m

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.m) + 0.5) * self.dx


@dataclass(frozen=True)
class DensityGrid:
    """A density sampled at the cell centers of a uniform grid."""

    x_min: float
    x_max: float
    m: int
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        GridSpec(self.x_min, self.x_max, self.m)
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.shape[0] != self.m:
            raise ValueError(f"values must have length m={self.m}, got {vals.shape[0]}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("density values must be finite")
        if vals.min() < -1e-12:
            raise ValueError(f"density has a negative cell ({vals.min():.3e})")
        np.clip(vals, 0.0, None, out=vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def spec(self) -> GridSpec:
        return GridSpec(self.x_min, self.x_max, self.m)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.m

    @cached_property
    def centers(self) -> np.ndarray:
        c = self.x_min + (np.arange(self.m) + 0.5) * self.dx
        c.setflags(write=False)
        return c

    @property
    def mass(self) -> float:
        return float(np.sum(self.values) * self.dx)


def gaussian_kernel_value(h: float, epsilon: float, n: int = 1) -> float:
    """Isotropic Gaussian regularization kernel at distance h from its center.

    Peak value (h = 0) is 1 / (sqrt(2 pi) |epsilon|)^n.
    """
    if epsilon == 0:
        raise ValueError("epsilon must be nonzero")
    norm = (np.sqrt(2.0 * np.pi) * abs(epsilon)) ** n
    return float(np.exp(-0.5 * (h / epsilon) ** 2) / norm)


def gaussian_density(epsilon: float, u0: float, grid_spec: GridSpec, t: float = 0.0) -> DensityGrid:
    """Gaussian of standard deviation |epsilon| centered at u0, grid-renormalized.

    Warns if the grid leaves less than 3 |epsilon| on either side of u0,
    since the renormalization then hides real truncation.
    """
    if epsilon == 0:
        raise ValueError("epsilon must be nonzero")
    eps = abs(float(epsilon))
    if (u0 - grid_spec.x_min) < 3.0 * eps or (grid_spec.x_max - u0) < 3.0 * eps:
        warnings.warn(
            f"grid [{grid_spec.x_min}, {grid_spec.x_max}] covers less than 3 epsilon "
            f"around u0={u0}; the renormalized density is visibly truncated",
            GridCoverageWarning, stacklevel=2)
    x = grid_spec.centers
    vals = np.exp(-0.5 * ((x - u0) / eps) ** 2) / (np.sqrt(2.0 * np.pi) * eps)
    vals /= vals.sum() * grid_spec.dx
    return DensityGrid(grid_spec.x_min, grid_spec.x_max, grid_spec.m, vals, t=t)


def stationary_density(potential: PotentialSpec, beta: float, grid_spec: GridSpec) -> DensityGrid:
    """Grid-normalized stationary weight exp(-2 psi / beta^2).

    Emits NonNormalizableWarning when the weight has not decayed at the
    grid boundary, in which case the normalization is purely formal (a
    flat or periodic potential has no normalizable stationary density on
    the line).
    """
    if potential.n != 1:
        raise ValueError("stationary density is implemented for 1-D potentials only")
    if beta == 0:
        raise ValueError("beta must be nonzero")
    x = grid_spec.centers
    psi = eval_potential(potential, x[:, None])
    logw = -2.0 * psi / (beta * beta)
    logw -= logw.max()
    vals = np.exp(logw)
    vals /= vals.sum() * grid_spec.dx
    tail = (vals[0] + vals[-1]) * grid_spec.dx
    if tail > 1e-6:
        warnings.warn(
            f"stationary weight carries mass {tail:.2e} in the boundary cells; "
            "it does not decay on this grid and is likely non-normalizable",
            NonNormalizableWarning, stacklevel=2)
    return DensityGrid(grid_spec.x_min, grid_spec.x_max, grid_spec.m, vals)


def _cc_delta(w: np.ndarray) -> np.ndarray:
    """Chang-Cooper face weight delta(w) = 1/(1 - exp(-w)) - 1/w."""
    out = np.empty_like(w)
    small = np.abs(w) < 1e-8
    ws = w[~small]
    out[~small] = -1.0 / np.expm1(-ws) - 1.0 / ws
    out[small] = 0.5 + w[small] / 12.0
    return out


def _face_coefficients(potential: PotentialSpec, beta: float, grid_spec: GridSpec):
    """Per-face flux coefficients (a, c): F_face = a f_left + c f_right.

    The face Peclet number w = -(psi_right - psi_left) / D is built from
    potential differences, so F vanishes identically on the grid
    restriction of exp(-2 psi / beta^2); a > 0 and c < 0 for every w.
    """
    D = 0.5 * beta * beta
    x = grid_spec.centers
    psi = eval_potential(potential, x[:, None])
    w = -(psi[1:] - psi[:-1]) / D
    delta = _cc_delta(w)
    dx = grid_spec.dx
    beff = w * D / dx
    a = beff * delta + D / dx
    c = beff * (1.0 - delta) - D / dx
    return a, c


def _banded_matrix(a, c, dx, dt, theta, m):
    """Banded storage of I + theta dt L for solve_banded((1, 1), ...)."""
    diag = np.zeros(m)
    diag[:-1] += a / dx
    diag[1:] -= c / dx
    ab = np.zeros((3, m))
    ab[0, 1:] = theta * dt * c / dx
    ab[1] = 1.0 + theta * dt * diag
    ab[2, :-1] = -theta * dt * a / dx
    return ab


def fp_solve(problem: ProblemSpec, grid_spec: GridSpec, dt: float, t_final: float = None,
             theta: float = 0.5, output_stride: int = 50) -> list:
    """Propagate the regularized initial Gaussian to t_final.

    theta = 0.5 is the trapezoidal update (second order in time), theta
    = 1 the unconditionally positive implicit update.  Returns the
    recorded snapshots (initial, every output_stride-th step, final).

    Raises StabilityError when a step produces a negative cell (with a
    suggested dt from the explicit-side positivity bound) and
    GridDomainError when the flux through the outermost interior faces
    exceeds the boundary-flux tolerance, i.e. the grid truncates moving
    mass.
    """
    if problem.n != 1:
        raise ValueError("the density solver is 1-D only")
    if not (np.isfinite(dt) and dt > 0):
        raise ValueError("dt must be positive")
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    if output_stride < 1:
        raise ValueError("output_stride must be >= 1")
    if t_final is None:
        t_final = problem.t_final
    if t_final < 0:
        raise ValueError("t_final must be nonnegative")

    f0 = gaussian_density(problem.epsilon, problem.u0[0], grid_spec)
    a, c = _face_coefficients(problem.potential, problem.beta, grid_spec)
    dx = grid_spec.dx
    m = grid_spec.m
    # explicit-side positivity bound, reported when a step goes negative
    diag_scale = np.zeros(m)
    diag_scale[:-1] += a / dx
    diag_scale[1:] -= c / dx
    dt_bound = 2.0 / diag_scale.max()

    snapshots = [f0]
    f = f0.values.copy()
    t = 0.0
    ab_cache = {}
    step = 0
    steps = _fp_time_steps(t_final, dt)
    for dt_s in steps:
        F = a * f[:-1] + c * f[1:]
        edge_flux = max(abs(F[0]), abs(F[-1]))
        if edge_flux > BOUNDARY_FLUX_TOL:
            raise GridDomainError(
                f"boundary mass flux {edge_flux:.3e} exceeds {BOUNDARY_FLUX_TOL:.1e} "
                f"at t = {t:.6g}; enlarge the grid [{grid_spec.x_min}, {grid_spec.x_max}]")
        key = round(dt_s, 15)
        if key not in ab_cache:
            ab_cache[key] = _banded_matrix(a, c, dx, dt_s, theta, m)
        Lf = np.diff(np.concatenate(([0.0], F, [0.0]))) / dx
        rhs = f - (1.0 - theta) * dt_s * Lf
        f = solve_banded((1, 1), ab_cache[key], rhs)
        fmin = f.min()
        if fmin < -1e-12:
            raise StabilityError(
                f"density went negative ({fmin:.3e}) at t = {t + dt_s:.6g}; "
                f"reduce dt below {0.9 * dt_bound:.3e} or use theta = 1",
                suggested_dt=0.9 * dt_bound)
        t += dt_s
        step += 1
        if step % output_stride == 0 and step != len(steps):
            snapshots.append(DensityGrid(grid_spec.x_min, grid_spec.x_max, m, f, t=t))
    if steps:
        snapshots.append(DensityGrid(grid_spec.x_min, grid_spec.x_max, m, f, t=t))
    return snapshots


def _fp_time_steps(t_final: float, dt: float):
    if t_final == 0.0:
        return []
    n_full = int(np.floor(t_final / dt + 1e-9))
    steps = [dt] * n_full
    rem = t_final - n_full * dt
    if rem > 1e-12 * max(1.0, t_final):
        steps.append(rem)
    return steps


def kl_divergence(f: DensityGrid, g: DensityGrid) -> float:
    """Relative entropy sum f log(f/g) dx with the 0 log 0 = 0 convention.

    Raises SupportError where f puts mass on cells with zero g.
    """
    if (f.x_min, f.x_max, f.m) != (g.x_min, g.x_max, g.m):
        raise ValueError("densities live on different grids")
    fv, gv = f.values, g.values
    if np.any((fv > 0) & (gv <= 0)):
        raise SupportError("f has mass where g vanishes; KL(f || g) is infinite")
    mask = fv > 0
    return float(np.sum(fv[mask] * np.log(fv[mask] / gv[mask])) * f.dx)


def fisher_information(f: DensityGrid, floor: float = DENSITY_FLOOR) -> float:
    """I(f) = int (f')^2 / f dx with centered differences on interior cells."""
    fv = f.values
    grad = (fv[2:] - fv[:-2]) / (2.0 * f.dx)
    core = fv[1:-1]
    mask = core > floor
    return float(np.sum(grad[mask] ** 2 / core[mask]) * f.dx)


def log_gradient(f: DensityGrid, floor: float = DENSITY_FLOOR) -> np.ndarray:
    """Centered-difference d log f / dx; NaN at the ends and below the floor."""
    fv = f.values
    out = np.full(f.m, np.nan)
    ok = (fv[2:] > floor) & (fv[:-2] > floor) & (fv[1:-1] > floor)
    logf = np.log(np.maximum(fv, floor))
    out[1:-1] = np.where(ok, (logf[2:] - logf[:-2]) / (2.0 * f.dx), np.nan)
    return out


def k1_diagnostics(f: DensityGrid, floor: float = 1e-12) -> dict:
    """Admissibility diagnostics for the log-gradient transport class.

    Reports the minimum density, second moment, Fisher information, and
    the smallest C with |d log f / dx| <= C (1 + |x|) over cells above
    the floor.  Report-only: no pass/fail thresholds are applied.
    """
    lg = log_gradient(f, floor=floor)
    x = f.centers
    ok = np.isfinite(lg)
    growth = float(np.max(np.abs(lg[ok]) / (1.0 + np.abs(x[ok])))) if ok.any() else float("nan")
    second = grid_moments(f, ObservableSpec("monomial", degree=2))
    return {
        "min_density": float(f.values.min()),
        "second_moment": second,
        "fisher_information": fisher_information(f),
        "log_gradient_growth": growth,
    }


def gaussian_chain_convolve(epsilon2: float, dt: float, m: int, reverse: bool = False,
                            span: float = 8.0, points_per_sigma: int = 8,
                            mass_tol: float = 1e-8) -> float:
    """Variance after convolving N(0, epsilon2) with m copies of N(0, dt).

    Returns the grid variance of the convolution chain, which equals
    epsilon2 + m dt up to spectral-accuracy grid error.  reverse=True
    convolves in the opposite order (the m heat kernels first), which
    must give the same answer; m = 0 returns the variance of the base
    Gaussian alone.
    """
    if not (np.isfinite(epsilon2) and epsilon2 > 0):
        raise ValueError("epsilon2 must be positive")
    if not (np.isfinite(dt) and dt > 0):
        raise ValueError("dt must be positive")
    if m < 0:
        raise ValueError("m must be >= 0")
    total = epsilon2 + m * dt
    sigma_min = np.sqrt(min(epsilon2, dt))
    L = span * np.sqrt(total)
    dx = sigma_min / points_per_sigma
    half = int(np.ceil(L / dx))
    x = np.arange(-half, half + 1) * dx
    base = np.exp(-0.5 * x * x / epsilon2) / np.sqrt(2.0 * np.pi * epsilon2)
    kern = np.exp(-0.5 * x * x / dt) / np.sqrt(2.0 * np.pi * dt)
    chain = ([kern] * m + [base]) if reverse else ([base] + [kern] * m)
    f = chain[0]
    for nxt in chain[1:]:
        f = fftconvolve(f, nxt, mode="same") * dx
        mass = f.sum() * dx
        if abs(mass - 1.0) > mass_tol:
            raise GridDomainError(
                f"convolution chain lost mass ({mass - 1.0:+.3e}); grid span {L:.3g} too small")
    mass = f.sum() * dx
    mean = float(np.sum(x * f) * dx / mass)
    return float(np.sum((x - mean) ** 2 * f) * dx / mass)


def grid_moments(f: DensityGrid, observable: ObservableSpec) -> float:
    """Grid expectation sum g(x) f(x) dx."""
    vals = evaluate(observable, f.centers[:, None])
    return float(np.sum(vals * f.values) * f.dx)


def grid_mean(f: DensityGrid) -> float:
    return float(np.sum(f.centers * f.values) * f.dx / f.mass)


def grid_variance(f: DensityGrid) -> float:
    mu = grid_mean(f)
    return float(np.sum((f.centers - mu) ** 2 * f.values) * f.dx / f.mass)

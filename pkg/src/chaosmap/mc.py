"""Euler-Maruyama Monte-Carlo reference for the original diffusion.

Randomness comes from a counter-based Philox stream keyed by the run
seed.  Normals are produced by inverse-CDF transform of Philox uniforms,
one 64-bit counter word per variate, so the variate used for (step s,
particle j, component c) sits at the fixed counter offset

    word(s, j, c) = (s + 1) * N * n + j * n + c,        s = 0, 1, ...

with the initial-perturbation block Z occupying words 0 .. N*n - 1.
The Z block is always drawn, whether or not the regularized initial
condition is requested, so regularized and unregularized runs with the
same seed share identical Brownian increments; the coupled
regularization study below relies on this.  Bit-identical output is
promised for a fixed platform and numpy/scipy build.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import DivergenceError
from .potentials import ProblemSpec, eval_drift

_MIN_UNIFORM = 2.0**-53


def _normals(gen: np.random.Generator, shape) -> np.ndarray:
    """Standard normals via inverse CDF of Philox uniforms."""
    u = gen.random(size=shape)
    if np.any(u == 0.0):
        u = np.where(u == 0.0, _MIN_UNIFORM, u)
    return ndtri(u)


@dataclass(frozen=True)
class MCEnsemble:
    """Terminal particle ensemble of one simulation."""

    t: float
    particles: np.ndarray
    seed: int

    def __post_init__(self):
        pts = np.asarray(self.particles, dtype=float)
        if pts.ndim != 2:
            raise ValueError("particles must have shape (N, n)")
        pts.setflags(write=False)
        object.__setattr__(self, "particles", pts)

    @property
    def n_particles(self) -> int:
        return self.particles.shape[0]

    @property
    def n(self) -> int:
        return self.particles.shape[1]


def _time_steps(t_final: float, dt: float):
    """Uniform steps of dt plus one remainder step reaching t_final."""
    if t_final == 0.0:
        return []
    n_full = int(np.floor(t_final / dt + 1e-9))
    steps = [dt] * n_full
    rem = t_final - n_full * dt
    if rem > 1e-12 * max(1.0, t_final):
        steps.append(rem)
    return steps


def simulate(problem: ProblemSpec, n_particles: int, dt: float, seed: int,
             regularized: bool = False) -> MCEnsemble:
    """Euler-Maruyama ensemble at t_final.

    With regularized=True the particles start at u0 + epsilon * Z;
    otherwise they start exactly at u0, but the Z block is still
    consumed from the stream (see module docstring).
    """
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    if not (np.isfinite(dt) and dt > 0):
        raise ValueError("dt must be positive")
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    n = problem.n
    Z = _normals(gen, (n_particles, n))
    U = np.tile(np.asarray(problem.u0, dtype=float), (n_particles, 1))
    if regularized:
        U = U + problem.epsilon * Z
    beta = problem.beta
    for s, dt_s in enumerate(_time_steps(problem.t_final, dt)):
        dW = np.sqrt(dt_s) * _normals(gen, (n_particles, n))
        U = U + eval_drift(problem.potential, U) * dt_s + beta * dW
        if not np.all(np.isfinite(U)):
            raise DivergenceError(
                f"particle diverged to a non-finite value at step {s}", step=s)
    return MCEnsemble(t=problem.t_final, particles=U, seed=int(seed))


def estimate_moments(ensemble: MCEnsemble, observable) -> tuple:
    """(sample mean, standard error) of g over the ensemble.

    The standard error is the ddof=1 sample standard deviation divided
    by sqrt(N); a single-particle ensemble reports zero.
    """
    from .observables import evaluate

    vals = np.asarray(evaluate(observable, ensemble.particles), dtype=float)
    mean = float(np.mean(vals))
    if vals.size < 2:
        return mean, 0.0
    se = float(np.std(vals, ddof=1) / np.sqrt(vals.size))
    return mean, se


@dataclass(frozen=True)
class EpsilonCouplingStudy:
    """Mean-square gap between coupled regularized and unregularized chains."""

    epsilons: tuple
    gaps: tuple
    z_mean_square: float
    slope: float


def coupled_epsilon_study(problem: ProblemSpec, epsilons, n_particles: int,
                          dt: float, seed: int) -> EpsilonCouplingStudy:
    """Measure E|U - U^eps|^2 at t_final with shared noise across all eps.

    Every chain shares the Brownian increments and the perturbation
    block Z of the unregularized chain, so the gap isolates the effect
    of the initial regularization alone.  For zero drift the coupling is
    exact: U - U^eps = -eps Z identically, hence gap = eps^2 * E|Z|^2.
    The fitted log-log slope is 2 for linear drifts and tends to 2 for
    smooth drifts as eps -> 0.
    """
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    if not (np.isfinite(dt) and dt > 0):
        raise ValueError("dt must be positive")
    eps_list = [float(e) for e in epsilons]
    if not eps_list:
        raise ValueError("epsilons must be nonempty")
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    n = problem.n
    Z = _normals(gen, (n_particles, n))
    u0 = np.asarray(problem.u0, dtype=float)
    U = np.tile(u0, (n_particles, 1))
    chains = [U + e * Z for e in eps_list]
    beta = problem.beta
    for s, dt_s in enumerate(_time_steps(problem.t_final, dt)):
        dW = np.sqrt(dt_s) * _normals(gen, (n_particles, n))
        U = U + eval_drift(problem.potential, U) * dt_s + beta * dW
        for idx in range(len(chains)):
            Ue = chains[idx]
            chains[idx] = Ue + eval_drift(problem.potential, Ue) * dt_s + beta * dW
        if not np.all(np.isfinite(U)):
            raise DivergenceError(
                f"particle diverged to a non-finite value at step {s}", step=s)
    gaps = [float(np.mean(np.sum((U - Ue) ** 2, axis=1))) for Ue in chains]
    z_ms = float(np.mean(np.sum(Z * Z, axis=1)))
    ok = [(e, g) for e, g in zip(eps_list, gaps) if e > 0 and g > 0]
    if len(ok) >= 2:
        le = np.log([e for e, _ in ok])
        lg = np.log([g for _, g in ok])
        slope = float(np.polyfit(le, lg, 1)[0])
    else:
        slope = float("nan")
    return EpsilonCouplingStudy(
        epsilons=tuple(eps_list), gaps=tuple(gaps), z_mean_square=z_ms, slope=slope)


@dataclass(frozen=True)
class WienerTruncationStudy:
    """Path-wise error of truncated Wiener expansions at several orders."""

    t: float
    m_levels: tuple
    errors: tuple
    slope: float
    c_fit: float


def wiener_truncation_error(t: float, m_levels, n_samples: int, seed: int,
                            fine_grid: int = 2048) -> WienerTruncationStudy:
    """Monte-Carlo estimate of E[ int_0^t (W - What_m)^2 du ] / t.

    What_m projects the white noise onto the first m members of the
    orthonormal cosine basis of L^2[0, t],

        phi_1 = 1/sqrt(t),   phi_j(s) = sqrt(2/t) cos((j-1) pi s / t),

    and integrates them, What_m(u) = sum_j xi_j int_0^u phi_j.  The
    coefficients xi_j are Riemann-Stieltjes sums of phi_j dW on a fine
    grid.  The error decays like t / (pi^2 (m - 1/2)), i.e. slope -1 in
    m; c_fit reports the fitted constant in error ~ c * t / m.
    """
    if not (np.isfinite(t) and t > 0):
        raise ValueError("t must be positive")
    levels = [int(m) for m in m_levels]
    if not levels or min(levels) < 1:
        raise ValueError("m_levels must be positive integers")
    if max(levels) > fine_grid // 8:
        raise ValueError("fine_grid too coarse for the largest truncation level")
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    G = int(fine_grid)
    dt_g = t / G
    dW = np.sqrt(dt_g) * _normals(gen, (n_samples, G))
    W = np.cumsum(dW, axis=1)
    mids = (np.arange(G) + 0.5) * dt_g
    rights = (np.arange(G) + 1.0) * dt_g
    mmax = max(levels)
    j = np.arange(1, mmax + 1)
    phi_mid = np.empty((G, mmax))
    phi_mid[:, 0] = 1.0 / np.sqrt(t)
    phi_int = np.empty((mmax, G))
    phi_int[0] = rights / np.sqrt(t)
    if mmax > 1:
        freq = (j[1:] - 1) * np.pi / t
        phi_mid[:, 1:] = np.sqrt(2.0 / t) * np.cos(mids[:, None] * freq[None, :])
        phi_int[1:] = np.sqrt(2.0 / t) * np.sin(freq[:, None] * rights[None, :]) / freq[:, None]
    xi = dW @ phi_mid
    errors = []
    for m in levels:
        R = W - xi[:, :m] @ phi_int[:m]
        errors.append(float(np.mean(R * R)))
    lm = np.log(levels)
    le = np.log(errors)
    slope = float(np.polyfit(lm, le, 1)[0]) if len(levels) >= 2 else float("nan")
    c_fit = float(np.exp(np.mean(le + lm - np.log(t))))
    return WienerTruncationStudy(
        t=float(t), m_levels=tuple(levels), errors=tuple(errors),
        slope=slope, c_fit=c_fit)

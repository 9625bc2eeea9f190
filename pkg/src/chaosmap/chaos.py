"""Deterministic propagation of the random transport map in a Hermite chaos basis.

The diffusion dU = b(U) dt + beta dW with Gaussian-regularized initial
condition U0 + eps Z is replaced by a transport equation for the map
M(xi, t) sending a standard Gaussian germ xi ~ N(0, I_n) to the state:
the pushforward of the germ density through M equals the law of the
diffusion, and the white noise trades for a logarithmic density gradient,

    dX/dt = b(X) - (beta^2 / 2) grad log f_X (X).

Expanding M in the normalized tensor Hermite basis, M_i = sum_alpha
m_{i,alpha} Hhat_alpha(xi), and projecting the transport equation onto
the basis yields a closed coefficient ODE with two Gaussian-expectation
terms: the drift projection <b_i(M) Hhat_alpha> and the log-gradient
term, which after the change of variables x = M(xi) and one integration
by parts becomes

    dm_{i,alpha}/dt = <b_i(M) Hhat_alpha>
                      + (beta^2 / 2) sum_l <[J^{-1}]_{l,i} dHhat_alpha/dxi_l>,

where J_{ik} = dM_i/dxi_k is the map Jacobian in germ space.  All
expectations are evaluated with a fixed Gauss-Hermite rule, so the whole
propagation is deterministic; the only randomness left is the germ
inside the final map.  The representation stays valid only while the
map is invertible, which is monitored through the Jacobian determinant
at the quadrature nodes carrying non-negligible Gaussian weight: a
truncated polynomial map is pure extrapolation in the far germ tail,
where its derivative can change sign without any probability mass being
affected, so nodes below SUPPORT_WEIGHT_RATIO of the largest weight are
exempt from the invertibility guard and inherit the inverse Jacobian of
the nearest mass-carrying node instead of contributing a spurious
near-singular one.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from scipy.special import ndtr

from .errors import MapDegeneracyError
from .hermite import MultiIndexSet, QuadratureRule, gauss_hermite_rule, hermite_table, multi_index_set
from .observables import ObservableSpec, evaluate
from .potentials import PotentialSpec, ProblemSpec, eval_drift

# Nodes whose quadrature weight is below this fraction of the largest weight
# lie outside the effective support of the germ: for a 50-node rule the hull
# reaches |xi| ~ 13 where weights are ~1e-36, and the truncated map's
# polynomial tail generically loses monotonicity there long before anything
# measurable happens to moments or densities.  The cutoff keeps every node
# that carries more than ~1e-7 of germ mass.
SUPPORT_WEIGHT_RATIO = 1e-6

# Germ mass that density reconstruction may trim off non-monotone tail
# segments before the map is declared degenerate; equal to the 1e-6
# normalization tolerance the reconstructed density is held to, so a
# reconstruction that succeeds can still integrate to 1 within it.
_TRIM_MASS_TOL = 1e-6


@dataclass(frozen=True)
class ChaosConfig:
    """Discretization knobs for the chaos propagation.

    q defaults to 2p + 4 so quadrature errors stay subordinate to
    truncation; q >= p + 1 is required for the basis Gram matrix to be
    exact.  jac_floor is the determinant floor below which the map is
    declared degenerate.
    """

    p: int = 4
    q: int = None
    dt: float = 1e-3
    jac_floor: float = 1e-10
    output_stride: int = 10

    def __post_init__(self):
        if self.p < 0:
            raise ValueError("p must be >= 0")
        q = 2 * self.p + 4 if self.q is None else int(self.q)
        if q < self.p + 1:
            raise ValueError("q must be >= p + 1")
        object.__setattr__(self, "q", q)
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError("dt must be positive")
        if not (np.isfinite(self.jac_floor) and self.jac_floor > 0):
            raise ValueError("jac_floor must be positive")
        if self.output_stride < 1:
            raise ValueError("output_stride must be >= 1")


def _tensor_tables(index_set: MultiIndexSet, pts: np.ndarray):
    """Basis values (K, N) and gradients (K, N, n) at points (N, n)."""
    A = index_set.as_array
    K, n = A.shape
    N = pts.shape[0]
    kmax = int(A.max()) if K else 0
    vals1d = []
    ders1d = []
    for d in range(n):
        v, dv = hermite_table(kmax, pts[:, d])
        vals1d.append(v)
        ders1d.append(dv)
    values = np.ones((K, N))
    for d in range(n):
        values *= vals1d[d][A[:, d]]
    grads = np.empty((K, N, n))
    for l in range(n):
        g = ders1d[l][A[:, l]].copy()
        for d in range(n):
            if d != l:
                g *= vals1d[d][A[:, d]]
        grads[:, :, l] = g
    return values, grads


class BasisTables:
    """Tensor-Hermite values and gradients cached at a rule's nodes.

    Also precomputes the rule's effective support (nodes whose weight is
    at least SUPPORT_WEIGHT_RATIO of the largest) and, for each node, the
    index of the nearest in-support node, used to clamp the inverse
    Jacobian outside the support.
    """

    def __init__(self, index_set: MultiIndexSet, rule: QuadratureRule):
        if index_set.n != rule.n:
            raise ValueError("index set and quadrature rule dimension mismatch")
        self.index_set = index_set
        self.rule = rule
        values, grads = _tensor_tables(index_set, rule.nodes)
        values.setflags(write=False)
        grads.setflags(write=False)
        self.values = values
        self.grads = grads
        w = rule.weights
        support = w >= SUPPORT_WEIGHT_RATIO * w.max()
        src = np.arange(len(w))
        if not support.all():
            ins = np.flatnonzero(support)
            d2 = ((rule.nodes[:, None, :] - rule.nodes[ins][None, :, :]) ** 2).sum(axis=2)
            src = ins[np.argmin(d2, axis=1)]
            src[support] = np.flatnonzero(support)
        support.setflags(write=False)
        src.setflags(write=False)
        self.support = support
        self.support_indices = np.flatnonzero(support)
        self.clamp_source = src


@dataclass(frozen=True)
class ChaosState:
    """Transport-map coefficients at one instant.

    coeffs has shape (n, K): component i of the map is
    sum_a coeffs[i, a] Hhat_{alpha(a)}(xi).
    """

    t: float
    coeffs: np.ndarray
    basis: BasisTables

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float)
        K = len(self.basis.index_set)
        n = self.basis.index_set.n
        if coeffs.shape != (n, K):
            raise ValueError(f"coeffs must have shape {(n, K)}, got {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n(self) -> int:
        return self.basis.index_set.n

    @property
    def index_set(self) -> MultiIndexSet:
        return self.basis.index_set

    @property
    def rule(self) -> QuadratureRule:
        return self.basis.rule


def init_gaussian_map(u0, epsilon: float, config: ChaosConfig,
                      index_set: MultiIndexSet = None,
                      rule: QuadratureRule = None) -> ChaosState:
    """Affine map u0 + |eps| xi representing the regularized initial law.

    The sign of epsilon is a gauge: the germ is symmetric, so |eps| is
    used to keep the Jacobian determinant positive.  eps = 0 would be a
    Dirac initial law, which has no invertible map.
    """
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    n = u0.size
    eps = float(epsilon)
    if eps == 0.0:
        raise MapDegeneracyError(
            "epsilon = 0 gives a Dirac initial law with a degenerate map; "
            "regularize with a nonzero epsilon", determinant=0.0)
    if index_set is None:
        index_set = multi_index_set(n, config.p)
    if rule is None:
        rule = gauss_hermite_rule(n, config.q)
    basis = BasisTables(index_set, rule)
    coeffs = np.zeros((n, len(index_set)))
    coeffs[:, 0] = u0
    if config.p >= 1:
        for i in range(n):
            coeffs[i, index_set.unit_position(i)] = abs(eps)
    else:
        raise ValueError("p must be >= 1 to represent a non-degenerate initial map")
    return ChaosState(t=0.0, coeffs=coeffs, basis=basis)


def eval_map(state: ChaosState, points):
    """Map values M(xi) at germ points; (n,) for a single point, (N, n) batched."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    values, _ = _tensor_tables(state.index_set, pts)
    out = (state.coeffs @ values).T
    return out[0] if single else out


def eval_map_jacobian(state: ChaosState, points):
    """Jacobians dM_i/dxi_k at germ points; (n, n) single, (N, n, n) batched."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    _, grads = _tensor_tables(state.index_set, pts)
    J = np.einsum("ia,aNk->Nik", state.coeffs, grads, optimize=False)
    return J[0] if single else J


def _node_jacobians(state: ChaosState):
    J = np.einsum("ia,aNk->Nik", state.coeffs, state.basis.grads, optimize=False)
    if state.n == 1:
        dets = J[:, 0, 0]
    else:
        dets = np.linalg.det(J)
    return J, dets


def _check_determinants(state: ChaosState, dets: np.ndarray, jac_floor: float):
    sup = state.basis.support_indices
    worst = sup[int(np.argmin(dets[sup]))]
    if dets[worst] <= jac_floor:
        raise MapDegeneracyError(
            f"map Jacobian determinant {dets[worst]:.3e} at node "
            f"{np.array2string(state.rule.nodes[worst], precision=4)} is below the floor "
            f"{jac_floor:.1e} at t = {state.t:.6g}",
            node=state.rule.nodes[worst].copy(),
            determinant=float(dets[worst]),
        )


def map_jacobian_determinants(state: ChaosState) -> np.ndarray:
    """Jacobian determinants at every quadrature node of the state's rule."""
    _, dets = _node_jacobians(state)
    return dets


def chaos_rhs(state: ChaosState, potential: PotentialSpec, beta: float,
              jac_floor: float = 1e-10) -> np.ndarray:
    """Right-hand side of the coefficient ODE, shape (n, K).

    Evaluates the drift projection and the inverse-Jacobian log-gradient
    term at the state's quadrature nodes.  Raises MapDegeneracyError if
    the determinant at any effective-support node is at or below
    jac_floor, since the inverse Jacobian (and the transport
    representation itself) stops existing.  Outside the support each
    node uses the inverse Jacobian of its nearest in-support neighbour
    (exact for affine maps, and the weights there are too small for the
    substitution to register in any projection).
    """
    tab = state.basis
    w = tab.rule.weights
    J, dets = _node_jacobians(state)
    _check_determinants(state, dets, jac_floor)
    Jsrc = J[tab.clamp_source]
    if state.n == 1:
        Jinv = (1.0 / Jsrc[:, 0, 0])[:, None, None]
    else:
        Jinv = np.linalg.inv(Jsrc)
    M = state.coeffs @ tab.values
    bM = eval_drift(potential, M.T)
    drift = np.einsum("N,Ni,aN->ia", w, bM, tab.values, optimize=False)
    diffusion = np.einsum("N,aNl,Nli->ia", w, tab.grads, Jinv, optimize=False)
    return drift + 0.5 * beta * beta * diffusion


def step_rk4(state: ChaosState, potential: PotentialSpec, beta: float, dt: float,
             jac_floor: float = 1e-10) -> ChaosState:
    """One classical Runge-Kutta step of the coefficient ODE.

    The accepted state is re-checked for Jacobian positivity at every
    effective-support node, so a trajectory of accepted steps never
    contains a map that is degenerate where the germ carries mass.
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if dt == 0:
        return state
    c = state.coeffs
    k1 = chaos_rhs(state, potential, beta, jac_floor)
    s2 = dataclasses.replace(state, t=state.t + 0.5 * dt, coeffs=c + 0.5 * dt * k1)
    k2 = chaos_rhs(s2, potential, beta, jac_floor)
    s3 = dataclasses.replace(state, t=state.t + 0.5 * dt, coeffs=c + 0.5 * dt * k2)
    k3 = chaos_rhs(s3, potential, beta, jac_floor)
    s4 = dataclasses.replace(state, t=state.t + dt, coeffs=c + dt * k3)
    k4 = chaos_rhs(s4, potential, beta, jac_floor)
    new = dataclasses.replace(
        state, t=state.t + dt, coeffs=c + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    _, dets = _node_jacobians(new)
    _check_determinants(new, dets, jac_floor)
    return new


def propagate(problem: ProblemSpec, config: ChaosConfig) -> list:
    """Propagate the transport map to problem.t_final.

    Returns the recorded states: the initial state, every
    output_stride-th accepted step, and the final state.  On map
    degeneracy the error's `partial` attribute carries the states
    recorded before the failure.
    """
    n = problem.n
    index_set = multi_index_set(n, config.p)
    rule = gauss_hermite_rule(n, config.q)
    state = init_gaussian_map(problem.u0, problem.epsilon, config, index_set, rule)
    states = [state]
    T = problem.t_final
    tiny = 1e-12 * max(1.0, T)
    step = 0
    try:
        while T - state.t > tiny:
            dt = min(config.dt, T - state.t)
            state = step_rk4(state, problem.potential, problem.beta, dt, config.jac_floor)
            step += 1
            if step % config.output_stride == 0:
                states.append(state)
    except MapDegeneracyError as err:
        err.partial = list(states)
        raise
    if states[-1] is not state:
        states.append(state)
    return states


def moments_from_state(state: ChaosState, observable: ObservableSpec) -> float:
    """E[g(M(xi))] by quadrature over the germ."""
    M = (state.coeffs @ state.basis.values).T
    vals = evaluate(observable, M)
    return float(np.sum(state.rule.weights * vals))


def map_mean(state: ChaosState) -> np.ndarray:
    """Mean of the mapped state; exactly the degree-zero coefficients."""
    return state.coeffs[:, 0].copy()


def map_std(state: ChaosState) -> np.ndarray:
    """Per-component standard deviation via Parseval on the chaos coefficients."""
    return np.sqrt(np.sum(state.coeffs[:, 1:] ** 2, axis=1))


def density_from_map(state: ChaosState, grid_spec, xi_span: float = 8.0,
                     lattice_points: int = 20001):
    """Push the germ density through a 1-D map onto a spatial grid.

    Samples x = M(xi) and f = phi(xi) / M'(xi) on a dense germ lattice
    spanning +/- xi_span standard deviations (mass beyond 8 is below
    double precision) and linearly interpolates onto the cell centers of
    grid_spec.  The map must be strictly increasing on the lattice apart
    from tail segments carrying negligible germ mass: the reconstruction
    is restricted to the maximal increasing segment around 0, and the
    map counts as degenerate as soon as the trimmed tails hold more than
    ~1e-6 of mass.  The result is the raw change-of-variables density:
    it is not renormalized, and it vanishes outside the image of the
    kept segment.
    """
    from .fokker_planck import DensityGrid

    if state.n != 1:
        raise ValueError("density reconstruction is implemented for 1-D maps only")
    xi = np.linspace(-xi_span, xi_span, lattice_points)
    values, grads = _tensor_tables(state.index_set, xi[:, None])
    m = (state.coeffs @ values)[0]
    md = state.coeffs[0] @ grads[:, :, 0]
    bad = md <= 0.0
    c0 = lattice_points // 2
    lo, hi = 0, lattice_points - 1
    if bad.any():
        left = bad[:c0][::-1]
        if left.any():
            lo = c0 - int(np.argmax(left))
        right = bad[c0 + 1:]
        if right.any():
            hi = c0 + int(np.argmax(right))
        trimmed = ndtr(xi[lo]) + 1.0 - ndtr(xi[hi])
        if bad[c0] or trimmed > _TRIM_MASS_TOL:
            worst = int(np.argmin(md))
            raise MapDegeneracyError(
                f"map derivative {md[worst]:.3e} at germ point {xi[worst]:.4f} is not "
                f"positive and the non-increasing segments carry {trimmed:.2e} of germ "
                "mass; the pushforward density is not single-valued",
                node=np.array([xi[worst]]),
                determinant=float(md[worst]),
            )
    seg = slice(lo, hi + 1)
    f_xi = np.exp(-0.5 * xi[seg] * xi[seg]) / np.sqrt(2.0 * np.pi) / md[seg]
    centers = grid_spec.x_min + (np.arange(grid_spec.m) + 0.5) * (
        (grid_spec.x_max - grid_spec.x_min) / grid_spec.m)
    f = np.interp(centers, m[seg], f_xi, left=0.0, right=0.0)
    return DensityGrid(x_min=grid_spec.x_min, x_max=grid_spec.x_max, m=grid_spec.m,
                       values=f, t=state.t)

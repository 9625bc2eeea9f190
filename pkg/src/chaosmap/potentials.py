"""Potential families for gradient-drift diffusions.

A potential is a smooth scalar field psi with analytic gradient and
Laplacian, from which the drift of the diffusion and its divergence
follow as

    b(x) = -grad psi(x),        div b(x) = -laplacian psi(x).

Every family is a separable sum over coordinates, so each works in any
dimension.  The quadratic family has unbounded psi; it is kept because
its diffusion has closed-form Gaussian moments and anchors most of the
validation suite, even though the transport construction is stated for
smooth bounded potentials.

Point convention: a 1-D array is a single point in R^n, except when
n == 1, where a 1-D array of length N is a batch of N scalar points.
A 2-D array of shape (N, n) is always a batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.interpolate import CubicSpline

VALID_KINDS = ("zero", "quadratic", "cosine", "tanhwell", "tabulated")

_FAMILY_PARAMS = {
    "zero": (),
    "quadratic": ("k",),
    "cosine": ("a", "omega"),
    "tanhwell": ("a", "scale"),
    "tabulated": ("path",),
}

_PARAM_DEFAULTS = {"k": 1.0, "a": 1.0, "omega": 1.0, "scale": 1.0}


def _log_cosh(u):
    # log(cosh(u)) without overflow for large |u|
    au = np.abs(u)
    return au + np.log1p(np.exp(-2.0 * au)) - np.log(2.0)


@dataclass(frozen=True)
class PotentialSpec:
    """A named potential family with parameters, in dimension n."""

    kind: str
    params: Mapping[str, object] = field(default_factory=dict)
    n: int = 1

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(
                f"unknown potential kind {self.kind!r}; valid kinds: {', '.join(VALID_KINDS)}"
            )
        if not isinstance(self.n, int) or self.n < 1:
            raise ValueError("dimension n must be a positive integer")
        allowed = _FAMILY_PARAMS[self.kind]
        for key in self.params:
            if key not in allowed:
                raise ValueError(f"unknown parameter {key!r} for potential kind {self.kind!r}")
        resolved = {}
        for key in allowed:
            if key == "path":
                if "path" not in self.params:
                    raise ValueError("tabulated potential requires a 'path' parameter")
                resolved["path"] = str(self.params["path"])
                continue
            value = float(self.params.get(key, _PARAM_DEFAULTS[key]))
            if not np.isfinite(value):
                raise ValueError(f"parameter {key!r} must be finite")
            resolved[key] = value
        if self.kind == "tanhwell" and resolved["scale"] <= 0:
            raise ValueError("tanhwell scale must be positive")
        object.__setattr__(self, "params", resolved)
        if self.kind == "tabulated":
            object.__setattr__(self, "_spline", _load_table_spline(resolved["path"]))

    @property
    def label(self) -> str:
        if self.kind == "tabulated":
            return f"tabulated:{self.params['path']}"
        inner = ",".join(f"{k}={self.params[k]:g}" for k in _FAMILY_PARAMS[self.kind])
        return self.kind if not inner else f"{self.kind}({inner})"


def _load_table_spline(path):
    """Build a clamped cubic spline from a two-column (x, psi) table."""
    with open(path) as fh:
        first = fh.readline()
    delim = "," if "," in first else None
    table = np.loadtxt(path, delimiter=delim, ndmin=2)
    if table.shape[1] != 2:
        raise ValueError("tabulated potential file must have two columns: x, psi")
    if table.shape[0] < 4:
        raise ValueError("tabulated potential needs at least 4 rows")
    x, psi = table[:, 0], table[:, 1]
    if np.any(np.diff(x) <= 0):
        raise ValueError("tabulated potential abscissae must be strictly increasing")
    if not np.all(np.isfinite(table)):
        raise ValueError("tabulated potential values must be finite")
    # clamped ends give zero slope, so the constant extension below is C^1
    return CubicSpline(x, psi, bc_type="clamped")


def zero_potential(n: int = 1) -> PotentialSpec:
    return PotentialSpec("zero", {}, n)


def quadratic_potential(k: float = 1.0, n: int = 1) -> PotentialSpec:
    """psi(x) = k |x|^2 / 2, the Ornstein-Uhlenbeck well."""
    return PotentialSpec("quadratic", {"k": k}, n)


def cosine_potential(a: float = 1.0, omega: float = 1.0, n: int = 1) -> PotentialSpec:
    """psi(x) = a sum_i cos(omega x_i), smooth bounded and periodic."""
    return PotentialSpec("cosine", {"a": a, "omega": omega}, n)


def tanh_well_potential(a: float = 1.0, scale: float = 1.0, n: int = 1) -> PotentialSpec:
    """psi(x) = a sum_i log cosh(x_i / scale), a soft single well."""
    return PotentialSpec("tanhwell", {"a": a, "scale": scale}, n)


def tabulated_potential(path: str, n: int = 1) -> PotentialSpec:
    """Cubic-spline interpolant of a two-column table, constant outside its range."""
    return PotentialSpec("tabulated", {"path": path}, n)


def _coerce_points(x, n: int):
    """Return (points (N, n), single_flag); see module docstring for the convention."""
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        if n != 1:
            raise ValueError(f"scalar point given for dimension n={n}")
        return pts.reshape(1, 1), True
    if pts.ndim == 1:
        if n == 1:
            return pts.reshape(-1, 1), False
        if pts.shape[0] != n:
            raise ValueError(f"point of length {pts.shape[0]} given for dimension n={n}")
        return pts.reshape(1, n), True
    if pts.ndim == 2:
        if pts.shape[1] != n:
            raise ValueError(f"points of shape {pts.shape} given for dimension n={n}")
        return pts, False
    raise ValueError("points must be at most 2-D")


def _family_terms(spec: PotentialSpec, pts: np.ndarray):
    """Per-coordinate (psi_terms, dpsi, d2psi), each of shape (N, n)."""
    kind, prm = spec.kind, spec.params
    if kind == "zero":
        z = np.zeros_like(pts)
        return z, z, z
    if kind == "quadratic":
        k = prm["k"]
        return 0.5 * k * pts * pts, k * pts, np.full_like(pts, k)
    if kind == "cosine":
        a, om = prm["a"], prm["omega"]
        c = np.cos(om * pts)
        return a * c, -a * om * np.sin(om * pts), -a * om * om * c
    if kind == "tanhwell":
        a, s = prm["a"], prm["scale"]
        th = np.tanh(pts / s)
        return a * _log_cosh(pts / s), (a / s) * th, (a / (s * s)) * (1.0 - th * th)
    if kind == "tabulated":
        spline = spec._spline
        lo, hi = spline.x[0], spline.x[-1]
        xc = np.clip(pts, lo, hi)
        inside = (pts >= lo) & (pts <= hi)
        psi = spline(xc)
        d1 = np.where(inside, spline(xc, 1), 0.0)
        d2 = np.where(inside, spline(xc, 2), 0.0)
        return psi, d1, d2
    raise AssertionError(kind)


def eval_potential(spec: PotentialSpec, x):
    """psi(x); scalar for a single point, (N,) for a batch."""
    pts, single = _coerce_points(x, spec.n)
    if not np.all(np.isfinite(pts)):
        raise ValueError("evaluation points must be finite")
    psi, _, _ = _family_terms(spec, pts)
    out = psi.sum(axis=1)
    return float(out[0]) if single else out


def eval_drift(spec: PotentialSpec, x):
    """b(x) = -grad psi(x); (n,) for a single point, (N, n) for a batch."""
    pts, single = _coerce_points(x, spec.n)
    if not np.all(np.isfinite(pts)):
        raise ValueError("evaluation points must be finite")
    _, d1, _ = _family_terms(spec, pts)
    out = -d1
    return out[0] if single else out


def eval_drift_divergence(spec: PotentialSpec, x):
    """div b(x) = -laplacian psi(x); scalar for a single point, (N,) for a batch."""
    pts, single = _coerce_points(x, spec.n)
    if not np.all(np.isfinite(pts)):
        raise ValueError("evaluation points must be finite")
    _, _, d2 = _family_terms(spec, pts)
    out = -d2.sum(axis=1)
    return float(out[0]) if single else out


@dataclass(frozen=True)
class ProblemSpec:
    """A complete propagation problem.

    The diffusion dU = b(U) dt + beta dW starts at the deterministic
    point u0, regularized by an independent Gaussian perturbation of
    standard deviation |epsilon|, and runs until t_final.
    """

    potential: PotentialSpec
    beta: float
    u0: tuple
    epsilon: float
    t_final: float

    def __post_init__(self):
        u0 = np.atleast_1d(np.asarray(self.u0, dtype=float))
        if u0.ndim != 1:
            raise ValueError("u0 must be a scalar or 1-D sequence")
        if u0.size != self.potential.n:
            raise ValueError(
                f"u0 has {u0.size} components but the potential is {self.potential.n}-dimensional"
            )
        if not np.all(np.isfinite(u0)):
            raise ValueError("u0 must be finite")
        object.__setattr__(self, "u0", tuple(float(v) for v in u0))
        beta = float(self.beta)
        if not np.isfinite(beta) or beta == 0.0:
            raise ValueError("beta must be nonzero")
        object.__setattr__(self, "beta", beta)
        eps = float(self.epsilon)
        if not np.isfinite(eps) or eps == 0.0:
            raise ValueError("epsilon must be nonzero")
        object.__setattr__(self, "epsilon", eps)
        tf = float(self.t_final)
        if not np.isfinite(tf) or tf < 0.0:
            raise ValueError("t_final must be nonnegative")
        object.__setattr__(self, "t_final", tf)

    @property
    def n(self) -> int:
        return self.potential.n

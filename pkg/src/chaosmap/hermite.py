"""Normalized Hermite basis, multi-index bookkeeping, Gauss-Hermite quadrature.

All polynomials are probabilists' Hermite polynomials normalized against
the standard Gaussian weight,

    E[Hhat_j(xi) Hhat_k(xi)] = delta_jk,      xi ~ N(0, 1),

so Hhat_k = He_k / sqrt(k!) with He_k monic.  Values come from the
stable normalized three-term recurrence

    Hhat_{k+1}(x) = (x Hhat_k(x) - sqrt(k) Hhat_{k-1}(x)) / sqrt(k+1)

and derivatives from Hhat_k' = sqrt(k) Hhat_{k-1}.  Multivariate basis
functions are tensor products indexed by multi-indices alpha, truncated
by total degree |alpha| <= p.  Quadrature nodes and weights come from
the eigen-decomposition of the Jacobi matrix (Golub-Welsch) and are
normalized so weights sum to one, i.e. they integrate against the
N(0, I_n) density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

DEFAULT_INDEX_CAP = 1_000_000
DEFAULT_NODE_CAP = 1_000_000


def _compositions(total: int, parts: int):
    """Weak compositions of `total` into `parts` parts, first part largest first."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


@dataclass(frozen=True)
class MultiIndexSet:
    """Total-degree multi-index set {alpha in N^n : |alpha| <= p}.

    Indices are ordered by degree, then within a degree so that earlier
    coordinates dominate: for n=2, p=2 the order is (0,0), (1,0), (0,1),
    (2,0), (1,1), (0,2).
    """

    n: int
    p: int
    indices: tuple

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __getitem__(self, i):
        return self.indices[i]

    @property
    def size(self) -> int:
        return len(self.indices)

    @cached_property
    def as_array(self) -> np.ndarray:
        arr = np.asarray(self.indices, dtype=np.int64).reshape(len(self.indices), self.n)
        arr.setflags(write=False)
        return arr

    def position(self, alpha) -> int:
        key = tuple(int(a) for a in alpha)
        try:
            return self.indices.index(key)
        except ValueError:
            raise KeyError(f"multi-index {key} not in set (n={self.n}, p={self.p})") from None

    def unit_position(self, i: int) -> int:
        """Position of the first-degree index e_i."""
        alpha = tuple(1 if d == i else 0 for d in range(self.n))
        return self.position(alpha)


def basis_size(n: int, p: int) -> int:
    """Cardinality of the total-degree set, binomial(n + p, n)."""
    return math.comb(n + p, n)


def multi_index_set(n: int, p: int, max_size: int = DEFAULT_INDEX_CAP) -> MultiIndexSet:
    """Build the total-degree multi-index set in the documented order."""
    if n < 1:
        raise ValueError("dimension n must be >= 1")
    if p < 0:
        raise ValueError("degree p must be >= 0")
    size = basis_size(n, p)
    if size > max_size:
        raise ValueError(
            f"multi-index set of size {size} exceeds the cap {max_size}; "
            "lower p or n, or raise max_size"
        )
    indices = []
    for degree in range(p + 1):
        indices.extend(_compositions(degree, n))
    return MultiIndexSet(n=n, p=p, indices=tuple(indices))


def hermite_table(kmax: int, xi):
    """Values and derivatives of Hhat_0..Hhat_kmax at xi.

    Returns (vals, ders) of shape (kmax + 1,) + shape(xi).
    """
    if kmax < 0:
        raise ValueError("kmax must be >= 0")
    x = np.asarray(xi, dtype=float)
    vals = np.empty((kmax + 1,) + x.shape, dtype=float)
    ders = np.empty_like(vals)
    vals[0] = 1.0
    ders[0] = 0.0
    if kmax >= 1:
        vals[1] = x
        ders[1] = 1.0
    for k in range(1, kmax):
        vals[k + 1] = (x * vals[k] - math.sqrt(k) * vals[k - 1]) / math.sqrt(k + 1)
        ders[k + 1] = math.sqrt(k + 1) * vals[k]
    return vals, ders


def hermite_eval(k: int, xi):
    """(Hhat_k(xi), Hhat_k'(xi)); floats for scalar input, arrays otherwise."""
    x = np.asarray(xi, dtype=float)
    vals, ders = hermite_table(k, x)
    if x.ndim == 0:
        return float(vals[k]), float(ders[k])
    return vals[k], ders[k]


def _gauss_hermite_1d(q: int):
    if q == 1:
        return np.zeros(1), np.ones(1)
    off = np.sqrt(np.arange(1.0, q))
    jacobi = np.zeros((q, q))
    idx = np.arange(q - 1)
    jacobi[idx, idx + 1] = off
    jacobi[idx + 1, idx] = off
    nodes, vecs = np.linalg.eigh(jacobi)
    weights = vecs[0] ** 2
    # enforce the exact +/- symmetry of the rule
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    weights /= weights.sum()
    return nodes, weights


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss-Hermite rule with probabilist normalization.

    nodes has shape (q**n, n) and weights sums to one; the rule is exact
    for polynomials of per-coordinate degree <= 2q - 1.
    """

    n: int
    q: int
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).reshape(-1, self.n)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if nodes.shape[0] != weights.shape[0]:
            raise ValueError("nodes and weights length mismatch")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("quadrature weights must sum to 1 within 1e-12")
        if self.q >= 2:
            second = weights @ (nodes * nodes)
            if np.any(np.abs(second - 1.0) > 1e-10):
                raise ValueError("quadrature second moment must be 1 within 1e-10")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.weights.shape[0]


def gauss_hermite_rule(n: int, q: int, max_nodes: int = DEFAULT_NODE_CAP) -> QuadratureRule:
    """Tensor product of the q-point Gauss-Hermite rule over n coordinates."""
    if n < 1:
        raise ValueError("dimension n must be >= 1")
    if q < 1:
        raise ValueError("quadrature order q must be >= 1")
    if q**n > max_nodes:
        raise ValueError(
            f"tensor rule with {q}^{n} nodes exceeds the cap {max_nodes}; "
            "lower q or n, or raise max_nodes"
        )
    x1, w1 = _gauss_hermite_1d(q)
    if n == 1:
        return QuadratureRule(n=1, q=q, nodes=x1[:, None], weights=w1)
    grids = np.meshgrid(*([x1] * n), indexing="ij")
    nodes = np.stack([g.reshape(-1) for g in grids], axis=1)
    wgrids = np.meshgrid(*([w1] * n), indexing="ij")
    weights = np.ones(q**n)
    for wg in wgrids:
        weights = weights * wg.reshape(-1)
    weights /= weights.sum()
    return QuadratureRule(n=n, q=q, nodes=nodes, weights=weights)


def tensor_hermite_eval(alpha, xi):
    """Tensor basis function H_alpha and its gradient at points xi.

    xi may be a single point (n,) or a batch (N, n); returns (value,
    gradient) with shapes () and (n,), or (N,) and (N, n).
    """
    alpha = tuple(int(a) for a in alpha)
    n = len(alpha)
    pts = np.asarray(xi, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != n:
        raise ValueError(f"points of shape {pts.shape} given for multi-index of length {n}")
    kmax = max(alpha)
    value = np.ones(pts.shape[0])
    grad = np.empty_like(pts)
    cols = []
    for d in range(n):
        vals, ders = hermite_table(kmax, pts[:, d])
        cols.append((vals[alpha[d]], ders[alpha[d]]))
        value = value * vals[alpha[d]]
    for d in range(n):
        g = cols[d][1].copy()
        for e in range(n):
            if e != d:
                g *= cols[e][0]
        grad[:, d] = g
    if single:
        return float(value[0]), grad[0]
    return value, grad


def project(values_at_nodes, alpha, rule: QuadratureRule) -> float:
    """Quadrature projection <f, H_alpha> from samples of f at the rule's nodes."""
    vals = np.asarray(values_at_nodes, dtype=float).reshape(-1)
    if vals.shape[0] != len(rule):
        raise ValueError(
            f"got {vals.shape[0]} samples for a rule with {len(rule)} nodes"
        )
    h, _ = tensor_hermite_eval(alpha, rule.nodes)
    # np.sum keeps a fixed pairwise reduction order for reproducibility
    return float(np.sum(rule.weights * vals * h))

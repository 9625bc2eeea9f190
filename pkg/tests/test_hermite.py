import math
from fractions import Fraction

import numpy as np
import pytest

from chaosmap.hermite import (
    QuadratureRule,
    basis_size,
    gauss_hermite_rule,
    hermite_eval,
    hermite_table,
    multi_index_set,
    project,
    tensor_hermite_eval,
)


def test_multi_index_sets():
    s = multi_index_set(1, 2)
    assert s.indices == ((0,), (1,), (2,))
    s = multi_index_set(2, 1)
    assert s.indices == ((0, 0), (1, 0), (0, 1))
    s = multi_index_set(2, 2)
    assert len(s) == 6 == basis_size(2, 2)
    assert s.indices == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
    assert s.position((1, 1)) == 4
    assert s.unit_position(1) == 2
    with pytest.raises(KeyError):
        s.position((3, 0))


def test_multi_index_validation():
    with pytest.raises(ValueError, match="cap"):
        multi_index_set(3, 4, max_size=10)
    with pytest.raises(ValueError):
        multi_index_set(0, 2)
    with pytest.raises(ValueError):
        multi_index_set(1, -1)
    assert basis_size(3, 5) == math.comb(8, 3)


def test_hermite_point_values():
    v, d = hermite_eval(0, 1.7)
    assert (v, d) == (1.0, 0.0)
    v, d = hermite_eval(1, 2.0)
    assert (v, d) == (2.0, 1.0)
    v, d = hermite_eval(2, 1.0)
    assert v == pytest.approx(0.0, abs=1e-15)
    assert d == pytest.approx(math.sqrt(2.0), abs=1e-15)


def _he_exact(kmax, x: Fraction):
    """Monic probabilists' Hermite values by exact rational recurrence."""
    vals = [Fraction(1), x]
    for k in range(1, kmax):
        vals.append(x * vals[k] - k * vals[k - 1])
    return vals


@pytest.mark.parametrize("x", [Fraction(-8), Fraction(-3), Fraction(-3, 2),
                               Fraction(1, 2), Fraction(2), Fraction(8)])
def test_recurrence_stability_against_exact_reference(x):
    # Hhat_k = He_k / sqrt(k!), so Hhat_k^2 k! == He_k^2 exactly; comparing
    # squares as rationals avoids irrational sqrt(k!) in the reference.
    kmax = 60
    exact = _he_exact(kmax, x)
    vals, _ = hermite_table(kmax, float(x))
    fact = 1
    for k in range(kmax + 1):
        if k >= 2:
            fact *= k
        assert np.isfinite(vals[k])
        he = exact[k]
        if he == 0:
            assert vals[k] == 0.0
            continue
        assert (vals[k] > 0) == (he > 0)
        ratio = Fraction(float(vals[k])) ** 2 * fact / (he * he)
        assert abs(float(ratio) - 1.0) < 2e-9


def test_derivative_identity_by_finite_difference():
    xs = np.linspace(-3.0, 3.0, 11)
    h = 1e-6
    for k in range(1, 11):
        _, d = hermite_eval(k, xs)
        vp, _ = hermite_eval(k, xs + h)
        vm, _ = hermite_eval(k, xs - h)
        assert np.max(np.abs(d - (vp - vm) / (2 * h))) < 1e-5


def test_gauss_hermite_small_rules():
    r = gauss_hermite_rule(1, 1)
    assert r.nodes[0, 0] == 0.0 and r.weights[0] == 1.0
    r = gauss_hermite_rule(1, 2)
    assert np.allclose(r.nodes[:, 0], [-1.0, 1.0], atol=1e-14)
    assert np.allclose(r.weights, [0.5, 0.5], atol=1e-14)
    # symmetry is enforced exactly
    r = gauss_hermite_rule(1, 9)
    assert np.all(r.nodes[:, 0] + r.nodes[::-1, 0] == 0.0)
    assert np.all(r.weights == r.weights[::-1])


def test_gaussian_moments_by_quadrature():
    r20 = gauss_hermite_rule(1, 20)
    assert abs(np.sum(r20.weights * r20.nodes[:, 0] ** 4) - 3.0) < 1e-10
    # exact for degree <= 2q-1: E[x^(2k)] = (2k-1)!!
    r = gauss_hermite_rule(1, 5)
    x = r.nodes[:, 0]
    for k, target in [(2, 1.0), (4, 3.0), (6, 15.0), (8, 105.0)]:
        assert np.sum(r.weights * x**k) == pytest.approx(target, rel=1e-8)
    for k in (1, 3, 5, 7, 9):
        assert abs(np.sum(r.weights * x**k)) < 1e-12


def test_tensor_rule():
    r = gauss_hermite_rule(2, 3)
    assert len(r) == 9
    assert abs(r.weights.sum() - 1.0) < 1e-14
    x1, x2 = r.nodes[:, 0], r.nodes[:, 1]
    assert abs(np.sum(r.weights * x1 * x1 * x2 * x2) - 1.0) < 1e-10
    assert abs(np.sum(r.weights * x1 * x2)) < 1e-14


def test_rule_caps_and_validation():
    with pytest.raises(ValueError, match="cap"):
        gauss_hermite_rule(2, 1100)
    with pytest.raises(ValueError):
        gauss_hermite_rule(1, 0)
    with pytest.raises(ValueError, match="sum to 1"):
        QuadratureRule(n=1, q=2, nodes=[[-1.0], [1.0]], weights=[0.5, 0.6])


def test_tensor_hermite_values():
    v, g = tensor_hermite_eval((0, 0), (0.3, -0.7))
    assert v == 1.0 and np.all(g == 0.0)
    v, _ = tensor_hermite_eval((1, 1), (1.0, 2.0))
    assert v == pytest.approx(2.0, abs=1e-15)
    v, g = tensor_hermite_eval((2, 0), (1.0, 5.0))
    assert v == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(g, [math.sqrt(2.0), 0.0], atol=1e-15)
    with pytest.raises(ValueError, match="shape"):
        tensor_hermite_eval((1, 0), (1.0, 2.0, 3.0))


def test_orthonormality_1d():
    q = 12
    r = gauss_hermite_rule(1, q)
    # quadrature of Hhat_j Hhat_k exact while j + k <= 2q - 1
    vals, _ = hermite_table(11, r.nodes[:, 0])
    gram = (vals * r.weights) @ vals.T
    assert np.max(np.abs(gram - np.eye(12))) < 1e-10


def test_orthonormality_tensor():
    idx = multi_index_set(2, 3)
    r = gauss_hermite_rule(2, 6)
    for a in idx:
        va, _ = tensor_hermite_eval(a, r.nodes)
        for b in idx:
            vb, _ = tensor_hermite_eval(b, r.nodes)
            target = 1.0 if a == b else 0.0
            assert abs(np.sum(r.weights * va * vb) - target) < 1e-10


def test_project():
    r = gauss_hermite_rule(1, 8)
    c = 3.7 * np.ones(len(r))
    assert project(c, (0,), r) == pytest.approx(3.7, abs=1e-12)
    assert project(c, (1,), r) == pytest.approx(0.0, abs=1e-12)
    # xi^2 = Hhat_0 + sqrt(2) Hhat_2
    f = r.nodes[:, 0] ** 2
    assert project(f, (2,), r) == pytest.approx(math.sqrt(2.0), abs=1e-12)
    assert project(f, (0,), r) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError, match="samples"):
        project(np.ones(3), (0,), r)


def test_project_reproduces_basis():
    idx = multi_index_set(1, 5)
    r = gauss_hermite_rule(1, 8)
    for a in idx:
        va, _ = tensor_hermite_eval(a, r.nodes)
        for b in idx:
            target = 1.0 if a == b else 0.0
            assert abs(project(va, b, r) - target) < 1e-10

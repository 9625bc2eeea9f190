"""Observables g(x) whose expectations the propagators and oracles report."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

VALID_OBSERVABLES = ("monomial", "polynomial", "tanh")
MAX_MONOMIAL_DEGREE = 8


@dataclass(frozen=True)
class ObservableSpec:
    """One scalar observable acting on a chosen coordinate.

    kind "monomial" uses `degree`, "polynomial" uses ascending `coeffs`,
    and "tanh" (a smooth bounded test function) uses `scale`.
    """

    kind: str
    degree: int = 1
    coeffs: tuple = ()
    scale: float = 1.0
    component: int = 0

    def __post_init__(self):
        if self.kind not in VALID_OBSERVABLES:
            raise ValueError(
                f"unknown observable kind {self.kind!r}; valid kinds: {', '.join(VALID_OBSERVABLES)}"
            )
        if self.component < 0:
            raise ValueError("component must be >= 0")
        if self.kind == "monomial":
            if not 0 <= self.degree <= MAX_MONOMIAL_DEGREE:
                raise ValueError(f"monomial degree must be in 0..{MAX_MONOMIAL_DEGREE}")
        elif self.kind == "polynomial":
            coeffs = tuple(float(c) for c in self.coeffs)
            if not coeffs:
                raise ValueError("polynomial needs at least one coefficient")
            if not all(np.isfinite(coeffs)):
                raise ValueError("polynomial coefficients must be finite")
            object.__setattr__(self, "coeffs", coeffs)
        elif self.kind == "tanh":
            if not (np.isfinite(self.scale) and self.scale > 0):
                raise ValueError("tanh scale must be positive")

    @property
    def label(self) -> str:
        if self.kind == "monomial":
            base = "1" if self.degree == 0 else ("x" if self.degree == 1 else f"x^{self.degree}")
        elif self.kind == "polynomial":
            base = "poly(" + ",".join(f"{c:g}" for c in self.coeffs) + ")"
        else:
            base = f"tanh(x/{self.scale:g})"
        return base if self.component == 0 else f"{base}[{self.component}]"


def monomial(degree: int, component: int = 0) -> ObservableSpec:
    return ObservableSpec("monomial", degree=degree, component=component)


def polynomial(coeffs, component: int = 0) -> ObservableSpec:
    return ObservableSpec("polynomial", coeffs=tuple(coeffs), component=component)


def smooth_bounded(scale: float = 1.0, component: int = 0) -> ObservableSpec:
    return ObservableSpec("tanh", scale=scale, component=component)


def evaluate(obs: ObservableSpec, x):
    """g(x) on a single point (n,) or a batch (N, n)."""
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if obs.component >= pts.shape[1]:
        raise ValueError(
            f"observable targets component {obs.component} but points have {pts.shape[1]}"
        )
    xi = pts[:, obs.component]
    if obs.kind == "monomial":
        out = np.ones_like(xi) if obs.degree == 0 else xi**obs.degree
    elif obs.kind == "polynomial":
        out = np.polynomial.polynomial.polyval(xi, obs.coeffs)
    else:
        out = np.tanh(xi / obs.scale)
    return float(out[0]) if single else out


def parse_observable(item) -> ObservableSpec:
    """Parse an observable from config shorthand.

    Strings: "1", "x", "x^2" .. "x^8", or "tanh".  Mappings: a full
    {"kind": ...} object with the keys of ObservableSpec.
    """
    if isinstance(item, str):
        text = item.strip()
        if text == "1":
            return monomial(0)
        if text == "x":
            return monomial(1)
        if text.startswith("x^"):
            try:
                return monomial(int(text[2:]))
            except ValueError as err:
                raise ConfigError(f"bad observable {item!r}: {err}") from None
        if text == "tanh":
            return smooth_bounded()
        raise ConfigError(
            f"bad observable {item!r}; expected '1', 'x', 'x^k' (k <= {MAX_MONOMIAL_DEGREE}) or 'tanh'"
        )
    if isinstance(item, dict):
        allowed = {"kind", "degree", "coeffs", "scale", "component"}
        for key in item:
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in observable object")
        if "kind" not in item:
            raise ConfigError("observable object needs a 'kind'")
        kwargs = dict(item)
        if "coeffs" in kwargs:
            kwargs["coeffs"] = tuple(kwargs["coeffs"])
        try:
            return ObservableSpec(**kwargs)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad observable object: {err}") from None
    raise ConfigError(f"observable entries must be strings or objects, got {type(item).__name__}")

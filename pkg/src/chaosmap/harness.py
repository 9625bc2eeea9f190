"""Run configuration, orchestration, and CSV/manifest artifact emission.

A run is described by one JSON object; unknown keys are rejected with a
closest-match suggestion, defaults are filled in, and the fully resolved
configuration is echoed both into the run manifest and (as a digest)
into every CSV header, so any artifact can be re-run byte-identically
from its manifest alone.  Floats are written with 17 significant digits,
which round-trips IEEE doubles exactly.
"""

from __future__ import annotations

import csv
import difflib
import hashlib
import json
import math
import platform
import time
from dataclasses import dataclass, replace
from importlib import metadata
from pathlib import Path

import numpy as np

from . import chaos as chaos_mod
from . import fokker_planck as fp_mod
from . import mc as mc_mod
from .chaos import ChaosConfig
from .errors import ChaosmapError, ConfigError, MapDegeneracyError, NumericsError
from .hermite import basis_size
from .observables import ObservableSpec, parse_observable
from .potentials import VALID_KINDS, PotentialSpec, ProblemSpec

METHODS = ("chaos", "mc", "fp", "compare", "wiener-dim", "epsilon-study")
DEFAULT_SEED = 20260814
MANIFEST_SCHEMA = "chaosmap-run/1"


# ---------------------------------------------------------------- settings

@dataclass(frozen=True)
class MCSettings:
    n_particles: int = 100_000
    dt: float = 1e-3
    seed: int = DEFAULT_SEED
    regularized: bool = True


@dataclass(frozen=True)
class FPSettings:
    x_min: float = None
    x_max: float = None
    m: int = 2048
    dt: float = 1e-4
    theta: float = 0.5
    output_stride: int = 50


@dataclass(frozen=True)
class CompareSettings:
    methods: tuple = ("chaos", "fp", "mc")
    tol_det: float = 1e-3
    se_multiplier: float = 3.0


@dataclass(frozen=True)
class EpsilonStudySettings:
    epsilons: tuple = (0.4, 0.2, 0.1, 0.05)
    n_particles: int = 20_000
    dt: float = 1e-3
    seed: int = DEFAULT_SEED
    observable: ObservableSpec = ObservableSpec("monomial", degree=2)
    fp_reference_epsilon: float = None


@dataclass(frozen=True)
class WienerDimSettings:
    t_list: tuple = (0.5, 1.0, 2.0, 4.0, 8.0)
    tol: float = 1e-3
    p: int = 3
    n: int = 1
    m_levels: tuple = (4, 8, 16, 32)
    n_samples: int = 2000
    fine_grid: int = 2048
    seed: int = DEFAULT_SEED
    t_ref: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    method: str
    problem: ProblemSpec
    observables: tuple
    chaos: ChaosConfig
    mc: MCSettings
    fp: FPSettings
    compare: CompareSettings
    epsilon_study: EpsilonStudySettings
    wiener_dim: WienerDimSettings
    plots: bool
    resolved: dict


# ---------------------------------------------------------------- validation

def _check_keys(mapping: dict, allowed, where: str):
    for key in mapping:
        if key not in allowed:
            hint = difflib.get_close_matches(key, sorted(allowed), n=1)
            extra = f"; did you mean {hint[0]!r}?" if hint else ""
            raise ConfigError(f"unknown key {key!r} in {where}{extra}")


def _as_float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    return float(value)


def _as_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    return int(value)


def _as_bool(value, where: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{where} must be a boolean, got {value!r}")
    return value


def _parse_potential(raw, n: int) -> PotentialSpec:
    if isinstance(raw, str):
        text = raw.strip()
        if text.startswith("tabulated:"):
            raw = {"kind": "tabulated", "path": text.split(":", 1)[1]}
        else:
            raw = {"kind": text}
    if not isinstance(raw, dict):
        raise ConfigError("problem.potential must be a name or an object with a 'kind'")
    if "kind" not in raw:
        raise ConfigError("problem.potential object needs a 'kind'")
    kind = raw["kind"]
    if kind not in VALID_KINDS:
        hint = difflib.get_close_matches(str(kind), VALID_KINDS, n=1)
        extra = f"; did you mean {hint[0]!r}?" if hint else ""
        raise ConfigError(f"unknown potential kind {kind!r}{extra}")
    params = {k: v for k, v in raw.items() if k != "kind"}
    try:
        return PotentialSpec(kind, params, n)
    except ValueError as err:
        raise ConfigError(f"problem.potential: {err}") from None


def _parse_problem(raw) -> ProblemSpec:
    if not isinstance(raw, dict):
        raise ConfigError("'problem' must be an object")
    allowed = ("potential", "dimension", "beta", "u0", "epsilon", "t_final")
    _check_keys(raw, allowed, "problem")
    for key in ("potential", "beta", "u0", "epsilon", "t_final"):
        if key not in raw:
            raise ConfigError(f"problem is missing required key {key!r}")
    u0_raw = raw["u0"]
    if isinstance(u0_raw, (int, float)) and not isinstance(u0_raw, bool):
        u0 = (float(u0_raw),)
    elif isinstance(u0_raw, list) and u0_raw:
        u0 = tuple(_as_float(v, "problem.u0 entries") for v in u0_raw)
    else:
        raise ConfigError("problem.u0 must be a number or a nonempty list of numbers")
    n = _as_int(raw.get("dimension", len(u0)), "problem.dimension")
    potential = _parse_potential(raw["potential"], n)
    try:
        return ProblemSpec(
            potential=potential,
            beta=_as_float(raw["beta"], "problem.beta"),
            u0=u0,
            epsilon=_as_float(raw["epsilon"], "problem.epsilon"),
            t_final=_as_float(raw["t_final"], "problem.t_final"),
        )
    except ValueError as err:
        raise ConfigError(f"problem: {err}") from None


def _section(data: dict, name: str) -> dict:
    raw = data.get(name, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"'{name}' must be an object")
    return raw


def _build_chaos(raw: dict) -> ChaosConfig:
    _check_keys(raw, ("p", "q", "dt", "jac_floor", "output_stride"), "chaos")
    kwargs = {}
    if "p" in raw:
        kwargs["p"] = _as_int(raw["p"], "chaos.p")
    if "q" in raw and raw["q"] is not None:
        kwargs["q"] = _as_int(raw["q"], "chaos.q")
    if "dt" in raw:
        kwargs["dt"] = _as_float(raw["dt"], "chaos.dt")
    if "jac_floor" in raw:
        kwargs["jac_floor"] = _as_float(raw["jac_floor"], "chaos.jac_floor")
    if "output_stride" in raw:
        kwargs["output_stride"] = _as_int(raw["output_stride"], "chaos.output_stride")
    try:
        return ChaosConfig(**kwargs)
    except ValueError as err:
        raise ConfigError(f"chaos: {err}") from None


def _build_mc(raw: dict) -> MCSettings:
    _check_keys(raw, ("n_particles", "dt", "seed", "regularized"), "mc")
    out = MCSettings(
        n_particles=_as_int(raw.get("n_particles", MCSettings.n_particles), "mc.n_particles"),
        dt=_as_float(raw.get("dt", MCSettings.dt), "mc.dt"),
        seed=_as_int(raw.get("seed", MCSettings.seed), "mc.seed"),
        regularized=_as_bool(raw.get("regularized", MCSettings.regularized), "mc.regularized"),
    )
    if out.n_particles < 1:
        raise ConfigError("mc.n_particles must be >= 1")
    if out.dt <= 0:
        raise ConfigError("mc.dt must be positive")
    return out


def _default_fp_bounds(problem: ProblemSpec):
    half = 4.0 * abs(problem.epsilon) + 5.0 * abs(problem.beta) * math.sqrt(
        max(problem.t_final, 0.01)) + 1.0
    center = problem.u0[0]
    return center - half, center + half


def _build_fp(raw: dict, problem) -> FPSettings:
    _check_keys(raw, ("x_min", "x_max", "m", "dt", "theta", "output_stride"), "fp")
    if problem is not None and problem.n == 1:
        lo, hi = _default_fp_bounds(problem)
    else:
        lo, hi = -10.0, 10.0
    out = FPSettings(
        x_min=_as_float(raw.get("x_min", lo), "fp.x_min"),
        x_max=_as_float(raw.get("x_max", hi), "fp.x_max"),
        m=_as_int(raw.get("m", FPSettings.m), "fp.m"),
        dt=_as_float(raw.get("dt", FPSettings.dt), "fp.dt"),
        theta=_as_float(raw.get("theta", FPSettings.theta), "fp.theta"),
        output_stride=_as_int(raw.get("output_stride", FPSettings.output_stride),
                              "fp.output_stride"),
    )
    if out.x_max <= out.x_min:
        raise ConfigError("fp.x_max must exceed fp.x_min")
    if out.m < 4:
        raise ConfigError("fp.m must be >= 4")
    if out.dt <= 0:
        raise ConfigError("fp.dt must be positive")
    if not 0.0 <= out.theta <= 1.0:
        raise ConfigError("fp.theta must lie in [0, 1]")
    if out.output_stride < 1:
        raise ConfigError("fp.output_stride must be >= 1")
    return out


def _build_compare(raw: dict) -> CompareSettings:
    _check_keys(raw, ("methods", "tol_det", "se_multiplier"), "compare")
    methods = raw.get("methods", list(CompareSettings.methods))
    if not isinstance(methods, list) or len(methods) < 2:
        raise ConfigError("compare.methods must list at least two methods")
    for m in methods:
        if m not in ("chaos", "fp", "mc"):
            hint = difflib.get_close_matches(str(m), ("chaos", "fp", "mc"), n=1)
            extra = f"; did you mean {hint[0]!r}?" if hint else ""
            raise ConfigError(f"unknown compare method {m!r}{extra}")
    if len(set(methods)) != len(methods):
        raise ConfigError("compare.methods must not repeat")
    out = CompareSettings(
        methods=tuple(methods),
        tol_det=_as_float(raw.get("tol_det", CompareSettings.tol_det), "compare.tol_det"),
        se_multiplier=_as_float(raw.get("se_multiplier", CompareSettings.se_multiplier),
                                "compare.se_multiplier"),
    )
    if out.tol_det <= 0 or out.se_multiplier <= 0:
        raise ConfigError("compare tolerances must be positive")
    return out


def _build_epsilon_study(raw: dict) -> EpsilonStudySettings:
    _check_keys(raw, ("epsilons", "n_particles", "dt", "seed", "observable",
                      "fp_reference_epsilon"), "epsilon_study")
    eps_raw = raw.get("epsilons", list(EpsilonStudySettings.epsilons))
    if not isinstance(eps_raw, list) or not eps_raw:
        raise ConfigError("epsilon_study.epsilons must be a nonempty list")
    epsilons = tuple(_as_float(e, "epsilon_study.epsilons entries") for e in eps_raw)
    if any(e < 0 for e in epsilons):
        raise ConfigError("epsilon_study.epsilons must be nonnegative")
    ref = raw.get("fp_reference_epsilon")
    if ref is not None:
        ref = _as_float(ref, "epsilon_study.fp_reference_epsilon")
        if ref <= 0:
            raise ConfigError("epsilon_study.fp_reference_epsilon must be positive")
    obs = parse_observable(raw.get("observable", "x^2"))
    out = EpsilonStudySettings(
        epsilons=epsilons,
        n_particles=_as_int(raw.get("n_particles", EpsilonStudySettings.n_particles),
                            "epsilon_study.n_particles"),
        dt=_as_float(raw.get("dt", EpsilonStudySettings.dt), "epsilon_study.dt"),
        seed=_as_int(raw.get("seed", EpsilonStudySettings.seed), "epsilon_study.seed"),
        observable=obs,
        fp_reference_epsilon=ref,
    )
    if out.n_particles < 2:
        raise ConfigError("epsilon_study.n_particles must be >= 2")
    if out.dt <= 0:
        raise ConfigError("epsilon_study.dt must be positive")
    return out


def _build_wiener_dim(raw: dict, problem) -> WienerDimSettings:
    _check_keys(raw, ("t_list", "tol", "p", "n", "m_levels", "n_samples", "fine_grid",
                      "seed", "t_ref"), "wiener_dim")
    t_raw = raw.get("t_list", list(WienerDimSettings.t_list))
    if not isinstance(t_raw, list) or not t_raw:
        raise ConfigError("wiener_dim.t_list must be a nonempty list")
    m_raw = raw.get("m_levels", list(WienerDimSettings.m_levels))
    if not isinstance(m_raw, list) or len(m_raw) < 2:
        raise ConfigError("wiener_dim.m_levels must list at least two levels")
    default_n = problem.n if problem is not None else WienerDimSettings.n
    out = WienerDimSettings(
        t_list=tuple(_as_float(t, "wiener_dim.t_list entries") for t in t_raw),
        tol=_as_float(raw.get("tol", WienerDimSettings.tol), "wiener_dim.tol"),
        p=_as_int(raw.get("p", WienerDimSettings.p), "wiener_dim.p"),
        n=_as_int(raw.get("n", default_n), "wiener_dim.n"),
        m_levels=tuple(_as_int(v, "wiener_dim.m_levels entries") for v in m_raw),
        n_samples=_as_int(raw.get("n_samples", WienerDimSettings.n_samples),
                          "wiener_dim.n_samples"),
        fine_grid=_as_int(raw.get("fine_grid", WienerDimSettings.fine_grid),
                          "wiener_dim.fine_grid"),
        seed=_as_int(raw.get("seed", WienerDimSettings.seed), "wiener_dim.seed"),
        t_ref=_as_float(raw.get("t_ref", WienerDimSettings.t_ref), "wiener_dim.t_ref"),
    )
    if any(t <= 0 for t in out.t_list):
        raise ConfigError("wiener_dim.t_list entries must be positive")
    if out.tol <= 0:
        raise ConfigError("wiener_dim.tol must be positive")
    if out.p < 0 or out.n < 1:
        raise ConfigError("wiener_dim.p must be >= 0 and wiener_dim.n >= 1")
    return out


def build_config(data: dict, method: str = None) -> RunConfig:
    """Validate a raw config mapping and fill defaults.

    `method` (from a CLI subcommand) must agree with the config's own
    "method" key when both are present.
    """
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    allowed = ("method", "problem", "observables", "chaos", "mc", "fp", "compare",
               "epsilon_study", "wiener_dim", "plots")
    _check_keys(data, allowed, "config")
    cfg_method = data.get("method")
    if cfg_method is not None and cfg_method not in METHODS:
        hint = difflib.get_close_matches(str(cfg_method), METHODS, n=1)
        extra = f"; did you mean {hint[0]!r}?" if hint else ""
        raise ConfigError(f"unknown method {cfg_method!r}{extra}")
    if method is not None and cfg_method is not None and method != cfg_method:
        raise ConfigError(
            f"config requests method {cfg_method!r} but the command line asked for {method!r}")
    effective = method or cfg_method
    if effective is None:
        raise ConfigError("no method given: set \"method\" in the config or use a subcommand")

    problem = None
    if "problem" in data:
        problem = _parse_problem(data["problem"])
    elif effective != "wiener-dim":
        raise ConfigError(f"method {effective!r} requires a 'problem' section")

    obs_raw = data.get("observables", ["x", "x^2"])
    if not isinstance(obs_raw, list) or not obs_raw:
        raise ConfigError("'observables' must be a nonempty list")
    observables = tuple(parse_observable(o) for o in obs_raw)

    chaos_cfg = _build_chaos(_section(data, "chaos"))
    mc_cfg = _build_mc(_section(data, "mc"))
    fp_cfg = _build_fp(_section(data, "fp"), problem)
    compare_cfg = _build_compare(_section(data, "compare"))
    eps_cfg = _build_epsilon_study(_section(data, "epsilon_study"))
    wiener_cfg = _build_wiener_dim(_section(data, "wiener_dim"), problem)
    plots = _as_bool(data.get("plots", True), "plots")

    config = RunConfig(
        method=effective, problem=problem, observables=observables, chaos=chaos_cfg,
        mc=mc_cfg, fp=fp_cfg, compare=compare_cfg, epsilon_study=eps_cfg,
        wiener_dim=wiener_cfg, plots=plots, resolved={})
    object.__setattr__(config, "resolved", _resolve(config))
    return config


def load_config(path, method: str = None) -> RunConfig:
    """Load and validate a JSON run configuration from disk."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(
            f"config parse error at line {err.lineno}, column {err.colno}: {err.msg}") from None
    return build_config(data, method=method)


def _obs_dict(obs: ObservableSpec) -> dict:
    out = {"kind": obs.kind, "component": obs.component}
    if obs.kind == "monomial":
        out["degree"] = obs.degree
    elif obs.kind == "polynomial":
        out["coeffs"] = list(obs.coeffs)
    else:
        out["scale"] = obs.scale
    return out


def _resolve(config: RunConfig) -> dict:
    """Canonical config echo; feeding it back to build_config is a fixed point."""
    out = {"method": config.method, "plots": config.plots}
    if config.problem is not None:
        prob = config.problem
        out["problem"] = {
            "potential": {"kind": prob.potential.kind, **prob.potential.params},
            "dimension": prob.n,
            "beta": prob.beta,
            "u0": list(prob.u0),
            "epsilon": prob.epsilon,
            "t_final": prob.t_final,
        }
    out["observables"] = [_obs_dict(o) for o in config.observables]
    cc = config.chaos
    out["chaos"] = {"p": cc.p, "q": cc.q, "dt": cc.dt, "jac_floor": cc.jac_floor,
                    "output_stride": cc.output_stride}
    mcs = config.mc
    out["mc"] = {"n_particles": mcs.n_particles, "dt": mcs.dt, "seed": mcs.seed,
                 "regularized": mcs.regularized}
    fps = config.fp
    out["fp"] = {"x_min": fps.x_min, "x_max": fps.x_max, "m": fps.m, "dt": fps.dt,
                 "theta": fps.theta, "output_stride": fps.output_stride}
    cmp_ = config.compare
    out["compare"] = {"methods": list(cmp_.methods), "tol_det": cmp_.tol_det,
                      "se_multiplier": cmp_.se_multiplier}
    eps = config.epsilon_study
    out["epsilon_study"] = {
        "epsilons": list(eps.epsilons), "n_particles": eps.n_particles, "dt": eps.dt,
        "seed": eps.seed, "observable": _obs_dict(eps.observable)}
    if eps.fp_reference_epsilon is not None:
        out["epsilon_study"]["fp_reference_epsilon"] = eps.fp_reference_epsilon
    wd = config.wiener_dim
    out["wiener_dim"] = {
        "t_list": list(wd.t_list), "tol": wd.tol, "p": wd.p, "n": wd.n,
        "m_levels": list(wd.m_levels), "n_samples": wd.n_samples,
        "fine_grid": wd.fine_grid, "seed": wd.seed, "t_ref": wd.t_ref}
    return out


def override_seed(config: RunConfig, seed: int) -> RunConfig:
    """New config with every stochastic section re-seeded."""
    data = json.loads(json.dumps(config.resolved))
    data["mc"]["seed"] = int(seed)
    data["epsilon_study"]["seed"] = int(seed)
    data["wiener_dim"]["seed"] = int(seed)
    return build_config(data)


def set_plots(config: RunConfig, plots: bool) -> RunConfig:
    data = json.loads(json.dumps(config.resolved))
    data["plots"] = bool(plots)
    return build_config(data)


def load_manifest_config(path) -> RunConfig:
    """Rebuild the RunConfig embedded in a run manifest."""
    data = json.loads(Path(path).read_text())
    if "config" not in data:
        raise ConfigError(f"{path} is not a run manifest (no 'config' field)")
    return build_config(data["config"])


# ---------------------------------------------------------------- artifacts

def config_digest(config: RunConfig) -> str:
    blob = json.dumps(config.resolved, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def problem_digest(problem: ProblemSpec) -> str:
    blob = json.dumps({
        "potential": {"kind": problem.potential.kind, **problem.potential.params},
        "beta": problem.beta, "u0": list(problem.u0), "epsilon": problem.epsilon,
        "t_final": problem.t_final}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    return str(value)


def _write_csv(out_dir: Path, name: str, columns, rows, header_lines=()):
    path = out_dir / name
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return name


def _jsonable(value):
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def _versions() -> dict:
    out = {"python": platform.python_version(), "chaosmap": package_version()}
    for dist in ("numpy", "scipy", "matplotlib"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = "unknown"
    return out


def package_version() -> str:
    try:
        return metadata.version("chaosmap")
    except metadata.PackageNotFoundError:
        return "0.0.0+local"


def _error_record(err: Exception) -> dict:
    rec = {"type": type(err).__name__, "message": str(err)}
    for attr in ("node", "determinant", "step", "suggested_dt"):
        if hasattr(err, attr) and getattr(err, attr) is not None:
            rec[attr] = _jsonable(getattr(err, attr))
    return rec


# ---------------------------------------------------------------- reports

@dataclass(frozen=True)
class MethodMoment:
    method: str
    observable: str
    value: float
    uncertainty: float


@dataclass(frozen=True)
class CompareCheck:
    observable: str
    check: str
    discrepancy: float
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class ComparisonReport:
    moments: tuple
    checks: tuple
    statuses: dict
    chaos_states: list = None
    fp_snapshots: list = None
    mc_ensemble: object = None

    @property
    def agree(self) -> bool:
        if any(status != "ok" for status in self.statuses.values()):
            return False
        return all(check.passed for check in self.checks)


@dataclass(frozen=True)
class WienerDimensionReport:
    tol: float
    p: int
    n: int
    rows: tuple            # (t, m_required, wiener_terms, transformed_terms)
    study: mc_mod.WienerTruncationStudy


@dataclass(frozen=True)
class EpsilonStudyReport:
    rows: tuple            # (epsilon, mc_gap, coupling_prediction, chaos_fp_gap, status)
    z_mean_square: float
    mc_slope: float
    chaos_fp_slope: float
    fp_reference_epsilon: float
    observable: str


def wiener_term_count(m: int, p: int) -> int:
    """Basis size of a degree-p chaos over m Wiener modes, binomial(m + p, p)."""
    return math.comb(m + p, p)


def _fp_reference_grid(config: RunConfig) -> fp_mod.GridSpec:
    return fp_mod.GridSpec(config.fp.x_min, config.fp.x_max, config.fp.m)


def compare_methods(config: RunConfig) -> ComparisonReport:
    """Run the requested propagators on one problem and cross-check moments.

    Deterministic pairs (chaos vs fp) must agree within tol_det;
    stochastic pairs (chaos vs mc) within se_multiplier standard errors.
    A method that fails contributes a failed status and every check
    involving it is reported as not passed; agreement is never claimed
    on top of a failed sub-run.
    """
    if config.problem is None:
        raise ConfigError("compare requires a 'problem' section")
    if not config.observables:
        raise ConfigError("compare requires at least one observable")
    wanted = config.compare.methods
    statuses = {}
    values = {}
    moments = []
    chaos_states = fp_snapshots = mc_ensemble = None

    if "chaos" in wanted:
        try:
            chaos_states = chaos_mod.propagate(config.problem, config.chaos)
            final = chaos_states[-1]
            values["chaos"] = {
                o.label: (chaos_mod.moments_from_state(final, o), 0.0)
                for o in config.observables}
            statuses["chaos"] = "ok"
        except NumericsError as err:
            statuses["chaos"] = f"failed: {err}"
    if "fp" in wanted:
        try:
            if config.problem.n != 1:
                raise ConfigError("the fp oracle is 1-D only")
            fp_snapshots = fp_mod.fp_solve(
                config.problem, _fp_reference_grid(config), config.fp.dt,
                theta=config.fp.theta, output_stride=config.fp.output_stride)
            final = fp_snapshots[-1]
            values["fp"] = {
                o.label: (fp_mod.grid_moments(final, o), 0.0)
                for o in config.observables}
            statuses["fp"] = "ok"
        except NumericsError as err:
            statuses["fp"] = f"failed: {err}"
    if "mc" in wanted:
        try:
            mc_ensemble = mc_mod.simulate(
                config.problem, config.mc.n_particles, config.mc.dt, config.mc.seed,
                regularized=config.mc.regularized)
            values["mc"] = {
                o.label: mc_mod.estimate_moments(mc_ensemble, o)
                for o in config.observables}
            statuses["mc"] = "ok"
        except NumericsError as err:
            statuses["mc"] = f"failed: {err}"

    for method in wanted:
        for o in config.observables:
            if statuses.get(method) == "ok":
                val, unc = values[method][o.label]
            else:
                val, unc = float("nan"), float("nan")
            moments.append(MethodMoment(method, o.label, val, unc))

    checks = []
    pairs = []
    if "chaos" in wanted and "fp" in wanted:
        pairs.append(("chaos", "fp", "deterministic"))
    if "chaos" in wanted and "mc" in wanted:
        pairs.append(("chaos", "mc", "statistical"))
    for left, right, kind in pairs:
        for o in config.observables:
            name = f"{left}-vs-{right}"
            if statuses.get(left) != "ok" or statuses.get(right) != "ok":
                checks.append(CompareCheck(o.label, name, float("nan"), float("nan"), False))
                continue
            lv = values[left][o.label][0]
            rv, runc = values[right][o.label]
            tol = config.compare.tol_det if kind == "deterministic" \
                else config.compare.se_multiplier * runc
            disc = abs(lv - rv)
            checks.append(CompareCheck(o.label, name, disc, tol, bool(disc <= tol)))
    return ComparisonReport(
        moments=tuple(moments), checks=tuple(checks), statuses=statuses,
        chaos_states=chaos_states, fp_snapshots=fp_snapshots, mc_ensemble=mc_ensemble)


def wiener_dimension_report(t_list, tol: float, p: int, n: int = 1,
                            m_levels=(4, 8, 16, 32), n_samples: int = 2000,
                            seed: int = DEFAULT_SEED, fine_grid: int = 2048,
                            t_ref: float = 1.0) -> WienerDimensionReport:
    """Compare basis growth of truncated-Wiener and transformed formulations.

    Fits the constant c in error ~ c t / m from a truncation study at
    t_ref, converts the tolerance into a required mode count
    m(t) = ceil(c t / tol), and tabulates the degree-p basis sizes
    binomial(m + p, p) (Wiener chaos over m modes) against
    binomial(n + p, n) (transformed chaos over the n germ coordinates),
    which does not depend on t.
    """
    study = mc_mod.wiener_truncation_error(t_ref, m_levels, n_samples, seed, fine_grid)
    rows = []
    for t in t_list:
        m_req = max(1, math.ceil(study.c_fit * t / tol))
        rows.append((float(t), m_req, wiener_term_count(m_req, p), basis_size(n, p)))
    return WienerDimensionReport(tol=tol, p=p, n=n, rows=tuple(rows), study=study)


def epsilon_study(config: RunConfig) -> EpsilonStudyReport:
    """Regularization study across a list of epsilon values.

    Column mc_gap is the coupled mean-square gap E|U - U^eps|^2 from the
    shared-noise Monte-Carlo pair; coupling_prediction is eps^2 E|Z|^2,
    exact for zero drift.  Column chaos_fp_gap compares the chaos moment
    at eps against a Fokker-Planck run at a small reference epsilon
    (default min(eps)/4), exposing the O(eps^2) moment offset of the
    regularized initial condition.  eps = 0 rows carry a rejected status
    for the chaos column since the map would be degenerate.
    """
    if config.problem is None:
        raise ConfigError("epsilon-study requires a 'problem' section")
    s = config.epsilon_study
    base = config.problem
    study = mc_mod.coupled_epsilon_study(base, s.epsilons, s.n_particles, s.dt, s.seed)
    positive = [e for e in s.epsilons if e > 0]
    if not positive:
        raise ConfigError("epsilon_study.epsilons needs at least one positive value")
    eps_ref = s.fp_reference_epsilon or min(positive) / 4.0
    ref_problem = replace(base, epsilon=eps_ref)
    ref_snaps = fp_mod.fp_solve(
        ref_problem, _fp_reference_grid(config), config.fp.dt,
        theta=config.fp.theta, output_stride=config.fp.output_stride)
    ref_moment = fp_mod.grid_moments(ref_snaps[-1], s.observable)
    rows = []
    for eps, gap in zip(study.epsilons, study.gaps):
        prediction = eps * eps * study.z_mean_square
        if eps == 0:
            rows.append((eps, gap, prediction, float("nan"),
                         "rejected: epsilon must be nonzero (degenerate map)"))
            continue
        try:
            states = chaos_mod.propagate(replace(base, epsilon=eps), config.chaos)
            moment = chaos_mod.moments_from_state(states[-1], s.observable)
            rows.append((eps, gap, prediction, abs(moment - ref_moment), "ok"))
        except NumericsError as err:
            rows.append((eps, gap, prediction, float("nan"), f"failed: {err}"))
    valid = [(e, r[3]) for e, r in zip(study.epsilons, rows)
             if r[4] == "ok" and np.isfinite(r[3]) and r[3] > 0 and e > 0]
    if len(valid) >= 2:
        le = np.log([v[0] for v in valid])
        lg = np.log([v[1] for v in valid])
        cf_slope = float(np.polyfit(le, lg, 1)[0])
    else:
        cf_slope = float("nan")
    return EpsilonStudyReport(
        rows=tuple(rows), z_mean_square=study.z_mean_square, mc_slope=study.slope,
        chaos_fp_slope=cf_slope, fp_reference_epsilon=eps_ref,
        observable=s.observable.label)


# ---------------------------------------------------------------- run

def _header(config: RunConfig, extra=()) -> list:
    lines = [f"method = {config.method}", f"config = {config_digest(config)}"]
    if config.problem is not None:
        lines.append(f"problem = {problem_digest(config.problem)}")
    lines.extend(extra)
    return lines


def _alpha_str(alpha) -> str:
    return ";".join(str(int(a)) for a in alpha)


def _write_chaos_artifacts(config, states, out_dir, artifacts, prefix="chaos"):
    head = _header(config)
    rows = []
    for state in states:
        for i in range(state.n):
            for a, alpha in enumerate(state.index_set):
                rows.append((state.t, i, _alpha_str(alpha), state.coeffs[i, a]))
    artifacts.append(_write_csv(out_dir, f"{prefix}_coefficients.csv",
                                ("t", "i", "alpha", "m"), rows, head))
    mrows = []
    for state in states:
        for o in config.observables:
            mrows.append((state.t, o.label, chaos_mod.moments_from_state(state, o)))
    artifacts.append(_write_csv(out_dir, f"{prefix}_moments.csv",
                                ("t", "observable", "value"), mrows, head))


def _run_chaos(config: RunConfig, out_dir: Path, artifacts: list) -> dict:
    if config.problem is None:
        raise ConfigError("chaos requires a 'problem' section")
    try:
        states = chaos_mod.propagate(config.problem, config.chaos)
    except MapDegeneracyError as err:
        if err.partial:
            _write_chaos_artifacts(config, err.partial, out_dir, artifacts)
        raise
    _write_chaos_artifacts(config, states, out_dir, artifacts)
    if config.plots:
        from . import plots
        artifacts.extend(plots.chaos_figures(states, config, out_dir))
    final = states[-1]
    return {
        "t_final": final.t,
        "mean": _jsonable(chaos_mod.map_mean(final)),
        "std": _jsonable(chaos_mod.map_std(final)),
        "moments": {o.label: chaos_mod.moments_from_state(final, o)
                    for o in config.observables},
    }


def _run_mc(config: RunConfig, out_dir: Path, artifacts: list) -> dict:
    if config.problem is None:
        raise ConfigError("mc requires a 'problem' section")
    ensemble = mc_mod.simulate(
        config.problem, config.mc.n_particles, config.mc.dt, config.mc.seed,
        regularized=config.mc.regularized)
    head = _header(config, (f"t = {_fmt(ensemble.t)}",
                            f"n_particles = {ensemble.n_particles}",
                            f"seed = {ensemble.seed}"))
    rows = []
    summary = {}
    for o in config.observables:
        mean, se = mc_mod.estimate_moments(ensemble, o)
        rows.append((o.label, mean, se))
        summary[o.label] = {"value": mean, "standard_error": se}
    artifacts.append(_write_csv(out_dir, "mc_moments.csv",
                                ("observable", "value", "standard_error"), rows, head))
    if config.plots:
        from . import plots
        artifacts.extend(plots.mc_figures(ensemble, config, out_dir))
    return {"t_final": ensemble.t, "n_particles": ensemble.n_particles,
            "seed": ensemble.seed, "moments": summary}


def _write_density_csv(config, density, out_dir, artifacts, name):
    head = _header(config, (f"t = {_fmt(density.t)}",))
    rows = list(zip(density.centers, density.values))
    artifacts.append(_write_csv(out_dir, name, ("x", "f"), rows, head))


def _run_fp(config: RunConfig, out_dir: Path, artifacts: list) -> dict:
    if config.problem is None:
        raise ConfigError("fp requires a 'problem' section")
    grid = _fp_reference_grid(config)
    snaps = fp_mod.fp_solve(config.problem, grid, config.fp.dt,
                            theta=config.fp.theta,
                            output_stride=config.fp.output_stride)
    import warnings as _warnings
    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore")
        f_st = fp_mod.stationary_density(config.problem.potential, config.problem.beta, grid)
    head = _header(config)
    trace = []
    for snap in snaps:
        trace.append((snap.t, snap.mass, fp_mod.grid_mean(snap), fp_mod.grid_variance(snap),
                      fp_mod.kl_divergence(snap, f_st)))
    artifacts.append(_write_csv(out_dir, "fp_trace.csv",
                                ("t", "mass", "mean", "variance", "kl_to_stationary"),
                                trace, head))
    _write_density_csv(config, snaps[-1], out_dir, artifacts, "fp_density.csv")
    mrows = [(o.label, fp_mod.grid_moments(snaps[-1], o)) for o in config.observables]
    artifacts.append(_write_csv(out_dir, "fp_moments.csv", ("observable", "value"),
                                mrows, head))
    if config.plots:
        from . import plots
        artifacts.extend(plots.fp_figures(snaps, f_st, config, out_dir))
    return {"t_final": snaps[-1].t, "mass": snaps[-1].mass,
            "mean": fp_mod.grid_mean(snaps[-1]), "variance": fp_mod.grid_variance(snaps[-1]),
            "moments": {label: value for label, value in mrows}}


def _run_compare(config: RunConfig, out_dir: Path, artifacts: list) -> dict:
    report = compare_methods(config)
    head = _header(config)
    rows = [(m.observable, m.method, m.value, m.uncertainty,
             report.statuses.get(m.method, "ok")) for m in report.moments]
    artifacts.append(_write_csv(out_dir, "compare_report.csv",
                                ("observable", "method", "value", "uncertainty", "status"),
                                rows, head))
    crows = [(c.observable, c.check, c.discrepancy, c.tolerance, c.passed)
             for c in report.checks]
    artifacts.append(_write_csv(out_dir, "compare_checks.csv",
                                ("observable", "check", "discrepancy", "tolerance", "passed"),
                                crows, head))
    if (report.chaos_states is not None and report.fp_snapshots is not None
            and config.problem.n == 1 and report.statuses.get("chaos") == "ok"
            and report.statuses.get("fp") == "ok"):
        grid = _fp_reference_grid(config)
        chaos_density = chaos_mod.density_from_map(report.chaos_states[-1], grid)
        _write_density_csv(config, chaos_density, out_dir, artifacts,
                           "compare_density_chaos.csv")
        _write_density_csv(config, report.fp_snapshots[-1], out_dir, artifacts,
                           "compare_density_fp.csv")
    if config.plots:
        from . import plots
        artifacts.extend(plots.compare_figures(report, config, out_dir))
    return {
        "agree": report.agree,
        "statuses": report.statuses,
        "checks": [{"observable": c.observable, "check": c.check,
                    "discrepancy": _jsonable(c.discrepancy),
                    "tolerance": _jsonable(c.tolerance), "passed": c.passed}
                   for c in report.checks],
    }


def _run_wiener_dim(config: RunConfig, out_dir: Path, artifacts: list) -> dict:
    w = config.wiener_dim
    report = wiener_dimension_report(
        w.t_list, w.tol, w.p, w.n, m_levels=w.m_levels, n_samples=w.n_samples,
        seed=w.seed, fine_grid=w.fine_grid, t_ref=w.t_ref)
    head = _header(config, (f"t_ref = {_fmt(w.t_ref)}", f"tol = {_fmt(w.tol)}"))
    artifacts.append(_write_csv(out_dir, "wiener_truncation.csv", ("m", "error"),
                                list(zip(report.study.m_levels, report.study.errors)), head))
    artifacts.append(_write_csv(
        out_dir, "wiener_dimensions.csv",
        ("t", "m_required", "wiener_terms", "transformed_terms"), report.rows, head))
    if config.plots:
        from . import plots
        artifacts.extend(plots.wiener_figures(report, config, out_dir))
    return {"slope": report.study.slope, "c_fit": report.study.c_fit,
            "rows": [list(r) for r in report.rows]}


def _run_epsilon_study(config: RunConfig, out_dir: Path, artifacts: list) -> dict:
    report = epsilon_study(config)
    head = _header(config, (f"observable = {report.observable}",
                            f"fp_reference_epsilon = {_fmt(report.fp_reference_epsilon)}"))
    artifacts.append(_write_csv(
        out_dir, "epsilon_gaps.csv",
        ("epsilon", "mc_gap", "coupling_prediction", "chaos_fp_gap", "status"),
        report.rows, head))
    artifacts.append(_write_csv(
        out_dir, "epsilon_slopes.csv", ("quantity", "value"),
        [("mc_slope", report.mc_slope), ("chaos_fp_slope", report.chaos_fp_slope),
         ("z_mean_square", report.z_mean_square)], head))
    if config.plots:
        from . import plots
        artifacts.extend(plots.epsilon_figures(report, config, out_dir))
    return {"mc_slope": report.mc_slope, "chaos_fp_slope": report.chaos_fp_slope,
            "z_mean_square": report.z_mean_square}


_DISPATCH = {
    "chaos": _run_chaos,
    "mc": _run_mc,
    "fp": _run_fp,
    "compare": _run_compare,
    "wiener-dim": _run_wiener_dim,
    "epsilon-study": _run_epsilon_study,
}


def _effective_seed(config: RunConfig):
    if config.method in ("mc", "compare"):
        return config.mc.seed
    if config.method == "epsilon-study":
        return config.epsilon_study.seed
    if config.method == "wiener-dim":
        return config.wiener_dim.seed
    return None


def run(config: RunConfig, out_dir) -> dict:
    """Execute one run and write its artifacts and manifest into out_dir.

    Always writes manifest.json, with status "error" and a
    machine-readable error record when a numerical failure occurred
    (partial artifacts, e.g. the trajectory before a map degeneracy,
    are still written); the error is then re-raised for the caller.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts: list = []
    summary: dict = {}
    status, error_rec = "ok", None
    t0 = time.perf_counter()
    try:
        summary = _DISPATCH[config.method](config, out, artifacts)
    except ChaosmapError as err:
        status, error_rec = "error", _error_record(err)
        raise
    finally:
        manifest = {
            "schema": MANIFEST_SCHEMA,
            "method": config.method,
            "config": config.resolved,
            "seed": _effective_seed(config),
            "versions": _versions(),
            "wall_time_s": round(time.perf_counter() - t0, 6),
            "status": status,
            "error": error_rec,
            "artifacts": sorted(artifacts),
            "summary": _jsonable(summary),
        }
        with open(out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return manifest

"""Figure rendering for run reports; PNGs land next to the CSV artifacts."""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from . import chaos as chaos_mod  # noqa: E402
from . import fokker_planck as fp_mod  # noqa: E402

_DPI = 150


def _save(fig, out_dir, name):
    path = out_dir / name
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return name


def chaos_figures(states, config, out_dir):
    written = []
    fig, ax = plt.subplots(figsize=(6, 4))
    ts = [s.t for s in states]
    final = states[-1]
    K = len(final.index_set)
    for a in range(K):
        mags = [max(abs(float(s.coeffs[0, a])), 1e-18) for s in states]
        ax.semilogy(ts, mags, lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel("|m_alpha| (component 0)")
    ax.set_title("chaos coefficients")
    ax.grid(True, alpha=0.3)
    written.append(_save(fig, out_dir, "chaos_coefficients.png"))
    if final.n == 1:
        mean = chaos_mod.map_mean(final)[0]
        std = chaos_mod.map_std(final)[0]
        lo, hi = mean - 6 * std, mean + 6 * std
        grid = fp_mod.GridSpec(lo, hi, 512)
        try:
            f = chaos_mod.density_from_map(final, grid)
        except Exception:
            return written
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(f.centers, f.values, lw=1.5)
        ax.set_xlabel("x")
        ax.set_ylabel("f(x)")
        ax.set_title(f"map density at t = {final.t:g}")
        ax.grid(True, alpha=0.3)
        written.append(_save(fig, out_dir, "chaos_density.png"))
    return written


def mc_figures(ensemble, config, out_dir):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(ensemble.particles[:, 0], bins=80, density=True, alpha=0.75)
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.set_title(f"ensemble histogram at t = {ensemble.t:g} (N = {ensemble.n_particles})")
    ax.grid(True, alpha=0.3)
    return [_save(fig, out_dir, "mc_histogram.png")]


def fp_figures(snapshots, f_st, config, out_dir):
    written = []
    fig, ax = plt.subplots(figsize=(6, 4))
    picks = np.unique(np.linspace(0, len(snapshots) - 1, 5).astype(int))
    for idx in picks:
        snap = snapshots[idx]
        ax.plot(snap.centers, snap.values, lw=1, label=f"t = {snap.t:g}")
    if f_st is not None:
        ax.plot(f_st.centers, f_st.values, "k--", lw=1, label="stationary")
    ax.set_xlabel("x")
    ax.set_ylabel("f(x)")
    ax.set_title("density evolution")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    written.append(_save(fig, out_dir, "fp_density.png"))
    fig, ax = plt.subplots(figsize=(6, 4))
    ts = [s.t for s in snapshots]
    ax.plot(ts, [fp_mod.grid_mean(s) for s in snapshots], label="mean")
    ax.plot(ts, [fp_mod.grid_variance(s) for s in snapshots], label="variance")
    ax.set_xlabel("t")
    ax.set_title("grid moments")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    written.append(_save(fig, out_dir, "fp_trace.png"))
    return written


def compare_figures(report, config, out_dir):
    written = []
    labels = [o.label for o in config.observables]
    methods = list(config.compare.methods)
    width = 0.8 / max(len(methods), 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = np.arange(len(labels))
    for k, method in enumerate(methods):
        vals, errs = [], []
        for lab in labels:
            match = [m for m in report.moments if m.method == method and m.observable == lab]
            vals.append(match[0].value if match else np.nan)
            errs.append(match[0].uncertainty if match else np.nan)
        ax.bar(xs + k * width, vals, width, yerr=errs, capsize=3, label=method)
    ax.set_xticks(xs + 0.4 - width / 2)
    ax.set_xticklabels(labels)
    ax.set_ylabel("E[g]")
    ax.set_title("method comparison")
    ax.legend(fontsize=8)
    ax.grid(True, axis="y", alpha=0.3)
    written.append(_save(fig, out_dir, "compare_moments.png"))
    if (report.chaos_states is not None and report.fp_snapshots is not None
            and report.statuses.get("chaos") == "ok" and report.statuses.get("fp") == "ok"
            and config.problem.n == 1):
        final = report.fp_snapshots[-1]
        try:
            fmap = chaos_mod.density_from_map(report.chaos_states[-1], final.spec)
        except Exception:
            return written
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(final.centers, final.values, lw=1.5, label="fokker-planck")
        ax.plot(fmap.centers, fmap.values, "--", lw=1.5, label="transport map")
        ax.set_xlabel("x")
        ax.set_ylabel("f(x)")
        ax.set_title(f"density overlay at t = {final.t:g}")
        ax.legend(fontsize=8)
        ax.grid(True, alpha=0.3)
        written.append(_save(fig, out_dir, "compare_density.png"))
    return written


def wiener_figures(report, config, out_dir):
    written = []
    study = report.study
    fig, ax = plt.subplots(figsize=(6, 4))
    ms = np.asarray(study.m_levels, dtype=float)
    ax.loglog(ms, study.errors, "o-", label="measured")
    ax.loglog(ms, study.c_fit * study.t / ms, "k--",
              label=f"c t / m (c = {study.c_fit:.3g})")
    ax.set_xlabel("modes m")
    ax.set_ylabel("path-wise truncation error")
    ax.set_title(f"Wiener truncation at t = {study.t:g} (slope {study.slope:.2f})")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    written.append(_save(fig, out_dir, "wiener_truncation.png"))
    fig, ax = plt.subplots(figsize=(6, 4))
    ts = [r[0] for r in report.rows]
    ax.semilogy(ts, [r[2] for r in report.rows], "o-", label="Wiener basis")
    ax.semilogy(ts, [r[3] for r in report.rows], "s-", label="transformed basis")
    ax.set_xlabel("t")
    ax.set_ylabel(f"degree-{report.p} basis size")
    ax.set_title(f"basis growth at tolerance {report.tol:g}")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    written.append(_save(fig, out_dir, "wiener_dimensions.png"))
    return written


def epsilon_figures(report, config, out_dir):
    fig, ax = plt.subplots(figsize=(6, 4))
    eps = [r[0] for r in report.rows if r[0] > 0]
    gaps = [r[1] for r in report.rows if r[0] > 0]
    preds = [r[2] for r in report.rows if r[0] > 0]
    ax.loglog(eps, gaps, "o-", label=f"coupled MC gap (slope {report.mc_slope:.2f})")
    ax.loglog(eps, preds, "k--", label="eps^2 E|Z|^2")
    cf = [(r[0], r[3]) for r in report.rows if r[4] == "ok" and np.isfinite(r[3])]
    if cf:
        ax.loglog([v[0] for v in cf], [v[1] for v in cf], "s-",
                  label=f"|chaos - fp ref| (slope {report.chaos_fp_slope:.2f})")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("gap")
    ax.set_title("regularization study")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    return [_save(fig, out_dir, "epsilon_study.png")]

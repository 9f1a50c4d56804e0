"""Figure regeneration from the pipeline's delimited outputs.

Pure views: every job reads documented CSV columns, recomputes no physics,
and renders one figure analog as PNG + SVG. Polar panels draw the magnitude
of each surface distribution with the sign encoded by line style (solid
lobes positive, dashed negative).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

OSCILLATING = ("presync", "sync", "postsync")
CASE_LABELS = {
    "presync": r"$f_e/f_s = 0.8$",
    "sync": r"$f_e/f_s = 0.97$",
    "postsync": r"$f_e/f_s = 1.2$",
}


class FigureInputError(Exception):
    """A required CSV input is missing or malformed."""


def read_csv(path: Path) -> dict:
    """Numeric CSV with optional leading # comment lines."""
    if not path.exists():
        raise FigureInputError(f"missing required input: {path}")
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise FigureInputError(f"empty input: {path}")
    header = [h.strip() for h in lines[0].split(",")]
    try:
        rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    except ValueError as exc:
        raise FigureInputError(f"non-numeric data in {path}: {exc}") from exc
    return {name: rows[:, k] for k, name in enumerate(header)}


def require_columns(table: dict, columns, path) -> None:
    missing = [c for c in columns if c not in table]
    if missing:
        raise FigureInputError(f"{path} lacks required columns: {', '.join(missing)}")


@dataclass
class FigureJob:
    """One renderable figure: input CSVs by role, output stem, options."""

    figure_id: str
    inputs: dict
    output_stem: Path
    options: dict = field(default_factory=dict)

    def render(self) -> list[Path]:
        fig = _RENDERERS[self.figure_id](self.inputs, self.options)
        written = []
        for ext in ("png", "svg"):
            out = self.output_stem.with_suffix(f".{ext}")
            fig.savefig(out, dpi=160, bbox_inches="tight")
            written.append(out)
        plt.close(fig)
        return written


def _signed_polar(ax, theta, values, color, label=None, lw=1.2):
    """Magnitude in the radial direction, dashed where the value is negative."""
    theta = np.concatenate([theta, theta[:1] + 2 * math.pi])
    values = np.concatenate([values, values[:1]])
    mag = np.abs(values)
    sign = values >= 0
    start = 0
    labeled = False
    for k in range(1, len(theta) + 1):
        if k == len(theta) or sign[k] != sign[start]:
            style = "-" if sign[start] else "--"
            ax.plot(
                theta[start:k],
                mag[start:k],
                style,
                color=color,
                lw=lw,
                label=label if (label and not labeled) else None,
            )
            labeled = True
            start = max(k - 1, 0)
    ax.set_yticklabels([])
    ax.tick_params(labelsize=6)


def _mode_columns(table, i):
    return table[f"psi_{i}"], table[f"psi_{i}_sin"], table[f"psi_{i}_cos"]


def render_mean_field(inputs, options):
    mean = read_csv(inputs["mean_field"])
    require_columns(mean, ("x", "y", "p"), inputs["mean_field"])
    surf = read_csv(inputs["surface_modes"])
    require_columns(surf, ("theta", "p_mean"), inputs["surface_modes"])

    fig = plt.figure(figsize=(9, 4))
    ax = fig.add_subplot(1, 2, 1)
    x, y, p = mean["x"], mean["y"], mean["p"]
    near = (np.abs(x) < 6) & (np.abs(y) < 6)
    tri = ax.tricontourf(x[near], y[near], p[near], levels=31, cmap="RdBu_r")
    fig.colorbar(tri, ax=ax, label=r"$\bar{p}$")
    ax.add_patch(plt.Circle((0, 0), 0.5, color="white", zorder=3))
    ax.add_patch(plt.Circle((0, 0), 0.5, fill=False, color="k", zorder=4))
    ax.set_aspect("equal")
    ax.set_xlim(-3, 6)
    ax.set_ylim(-3, 3)
    ax.set_xlabel("x/D")
    ax.set_ylabel("y/D")
    ax.set_title("mean pressure field", fontsize=9)

    ax2 = fig.add_subplot(1, 2, 2, projection="polar")
    _signed_polar(ax2, surf["theta"], surf["p_mean"], "C0", label=r"$\bar{p}^s$")
    ax2.legend(loc="upper right", fontsize=7)
    ax2.set_title("mean surface pressure", fontsize=9)
    fig.tight_layout()
    return fig


def _surface_mode_grid(tables, case_ids, n_modes):
    n_cols = len(tables)
    fig, axes = plt.subplots(
        n_modes,
        n_cols,
        figsize=(2.6 * n_cols, 2.6 * n_modes),
        subplot_kw={"projection": "polar"},
    )
    axes = np.atleast_2d(axes)
    if axes.shape != (n_modes, n_cols):
        axes = axes.reshape(n_modes, n_cols)
    for col, (cid, table) in enumerate(zip(case_ids, tables)):
        th = table["theta"]
        for row in range(n_modes):
            ax = axes[row, col]
            psi, psin, pcos = _mode_columns(table, row + 1)
            _signed_polar(ax, th, psi, "C0", label=rf"$\psi_{{{row + 1}}}^s$")
            _signed_polar(ax, th, psin, "C1", label="sine part", lw=0.9)
            _signed_polar(ax, th, pcos, "C2", label="cosine part", lw=0.9)
            if row == 0:
                ax.set_title(CASE_LABELS.get(cid, cid), fontsize=9)
        axes[0, col].legend(loc="upper right", bbox_to_anchor=(1.45, 1.15), fontsize=6)
    return fig


def render_surface_modes_stationary(inputs, options):
    table = read_csv(inputs["surface_modes"])
    n_modes = options.get("n_modes", 4)
    require_columns(
        table,
        ["theta"] + [f"psi_{i}{s}" for i in range(1, n_modes + 1) for s in ("", "_sin", "_cos")],
        inputs["surface_modes"],
    )
    fig = _surface_mode_grid([table], ["stationary"], n_modes)
    fig.suptitle("stationary cylinder: surface pressure modes", fontsize=10)
    return fig


def render_surface_modes_oscillating(inputs, options):
    n_modes = options.get("n_modes", 4)
    tables = []
    for cid in OSCILLATING:
        table = read_csv(inputs[cid])
        require_columns(
            table,
            ["theta"] + [f"psi_{i}" for i in range(1, n_modes + 1)],
            inputs[cid],
        )
        tables.append(table)
    fig = _surface_mode_grid(tables, list(OSCILLATING), n_modes)
    fig.suptitle("oscillating cylinder: surface pressure modes", fontsize=10)
    return fig


def _ldc_bars(ax_l, ax_d, table, label):
    modes = table["mode"]
    modal = modes > 0
    idx = modes[modal].astype(int)
    ax_l.bar(idx, np.abs(table["L_i"][modal]), color="C0")
    ax_d.bar(idx, np.abs(table["D_i"][modal]), color="C1")
    ax_l.set_ylabel(f"{label}\n|LDC|", fontsize=8)
    ax_d.set_ylabel("|DDC|", fontsize=8)
    for ax in (ax_l, ax_d):
        ax.set_xticks(idx)
        ax.tick_params(labelsize=7)


def render_ldc_ddc_stationary(inputs, options):
    table = read_csv(inputs["ldc_ddc"])
    require_columns(table, ("mode", "L_i", "D_i"), inputs["ldc_ddc"])
    fig, (ax_l, ax_d) = plt.subplots(1, 2, figsize=(8, 3))
    _ldc_bars(ax_l, ax_d, table, "stationary")
    ax_l.set_xlabel("mode")
    ax_d.set_xlabel("mode")
    fig.suptitle("lift/drag decomposition coefficients (stationary)", fontsize=10)
    fig.tight_layout()
    return fig


def render_ldc_ddc_oscillating(inputs, options):
    fig, axes = plt.subplots(3, 2, figsize=(8, 8))
    for row, cid in enumerate(OSCILLATING):
        table = read_csv(inputs[cid])
        require_columns(table, ("mode", "L_i", "D_i"), inputs[cid])
        _ldc_bars(axes[row, 0], axes[row, 1], table, CASE_LABELS[cid])
    axes[-1, 0].set_xlabel("mode")
    axes[-1, 1].set_xlabel("mode")
    fig.suptitle("lift/drag decomposition coefficients (oscillating)", fontsize=10)
    fig.tight_layout()
    return fig


def render_lift_histories(inputs, options):
    n_cycles = options.get("n_cycles", 12)
    fig, axes = plt.subplots(3, 1, figsize=(8, 7), sharex=False)
    for ax, cid in zip(axes, OSCILLATING):
        table = read_csv(inputs[cid])
        require_columns(table, ("t", "cl", "y"), inputs[cid])
        t, cl, y = table["t"], table["cl"], table["y"]
        t_span = n_cycles * 5.2
        mask = t >= t[-1] - t_span
        ax.plot(t[mask], cl[mask], "C0", lw=0.9, label="$C_L$")
        ax.set_ylabel("$C_L$")
        ax2 = ax.twinx()
        ax2.plot(t[mask], y[mask], "C3", lw=0.9, label="$A_e/D$")
        ax2.set_ylabel("$A_e/D$", color="C3")
        ax2.tick_params(axis="y", labelcolor="C3")
        ax.set_title(CASE_LABELS[cid], fontsize=9)
    axes[-1].set_xlabel("tU/D")
    fig.tight_layout()
    return fig


_RENDERERS = {
    "fig2_mean_field": render_mean_field,
    "fig3_surface_modes_stationary": render_surface_modes_stationary,
    "fig4_ldc_ddc_stationary": render_ldc_ddc_stationary,
    "fig5_lift_histories": render_lift_histories,
    "fig6_surface_modes_oscillating": render_surface_modes_oscillating,
    "fig7_ldc_ddc_oscillating": render_ldc_ddc_oscillating,
}

FIGURE_IDS = tuple(_RENDERERS)


def build_jobs(results_dir, out_dir=None, only=None) -> list[FigureJob]:
    results_dir = Path(results_dir)
    out_dir = Path(out_dir) if out_dir else results_dir / "figures"
    jobs = [
        FigureJob(
            "fig2_mean_field",
            {
                "mean_field": results_dir / "stationary" / "mean_field.csv",
                "surface_modes": results_dir / "stationary" / "surface_modes.csv",
            },
            out_dir / "fig2_mean_field",
        ),
        FigureJob(
            "fig3_surface_modes_stationary",
            {"surface_modes": results_dir / "stationary" / "surface_modes.csv"},
            out_dir / "fig3_surface_modes_stationary",
        ),
        FigureJob(
            "fig4_ldc_ddc_stationary",
            {"ldc_ddc": results_dir / "stationary" / "ldc_ddc.csv"},
            out_dir / "fig4_ldc_ddc_stationary",
        ),
        FigureJob(
            "fig5_lift_histories",
            {cid: results_dir / cid / "forces.csv" for cid in OSCILLATING},
            out_dir / "fig5_lift_histories",
        ),
        FigureJob(
            "fig6_surface_modes_oscillating",
            {cid: results_dir / cid / "surface_modes.csv" for cid in OSCILLATING},
            out_dir / "fig6_surface_modes_oscillating",
        ),
        FigureJob(
            "fig7_ldc_ddc_oscillating",
            {cid: results_dir / cid / "ldc_ddc.csv" for cid in OSCILLATING},
            out_dir / "fig7_ldc_ddc_oscillating",
        ),
    ]
    if only:
        jobs = [j for j in jobs if only in j.figure_id]
        if not jobs:
            raise FigureInputError(
                f"no figure matches --only {only!r}; known ids: {', '.join(FIGURE_IDS)}"
            )
    return jobs


def make_all(results_dir, out_dir=None, only=None) -> list[Path]:
    """Render every figure analog; returns the list of written image files.

    Inputs are validated before any rendering starts, so a missing CSV
    fails the run by name without leaving partial output.
    """
    jobs = build_jobs(results_dir, out_dir=out_dir, only=only)
    for job in jobs:
        for path in job.inputs.values():
            if not Path(path).exists():
                raise FigureInputError(f"missing required input: {path}")
    target = jobs[0].output_stem.parent
    target.mkdir(parents=True, exist_ok=True)
    written = []
    for job in jobs:
        written.extend(job.render())
    return written

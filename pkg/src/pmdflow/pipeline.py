"""End-to-end case pipeline: simulate -> record -> POD -> PMD -> report.

A case is described by a flat ``key = value`` config file (# comments).
Stages write their artifacts into ``<out_root>/<case_id>/`` and mark
completion in ``manifest.json`` keyed by the effective-configuration hash,
so ``--resume`` skips stages whose inputs have not changed. Every CSV
starts with a ``# config_hash=...`` provenance comment and all floats are
written with shortest round-trip reprs, which together with single-threaded
kernels makes reruns byte-identical.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import pmd, pod, signals, snapshots
from .containers import write_state
from .errors import ConfigValidationError, PmdflowError
from .grid import (
    GridSpec,
    build_grid,
    export_grid_binary,
    export_grid_csv,
    surface_arc_elements,
)
from .snapshots import SnapshotPlan, load_ensemble, record, save_ensemble, split_mean
from .solver import CaseConfig, CylinderSolver, ForceRecord

__all__ = ["CaseSetup", "RunManifest", "parse_config", "run_case", "run_suite", "run_report"]

TOOLKIT_VERSION = "0.1.0"
STAGES = ("simulate", "pod", "pmd")

_DEFAULTS = {
    "reynolds": 200.0,
    "amplitude_ratio": 0.0,
    "freq_ratio": 0.0,
    "f_shed_ref": 0.196,
    "dt": 0.005,
    "n_steps": 0,
    "transient_cycles": 30.0,
    "perturbation_amp": 0.05,
    "perturbation_time": 2.0,
    "n_radial": 193,
    "n_circ": 257,
    "domain_diameter": 40.0,
    "stretch_ratio": 3.7,
    "snaps_per_cycle": 40,
    "n_cycles": 4,
    "analysis_modes": 10,
}

_INT_KEYS = {"n_steps", "n_radial", "n_circ", "snaps_per_cycle", "n_cycles", "analysis_modes"}


@dataclass(frozen=True)
class CaseSetup:
    """Effective configuration of one case (after profile/grid overrides)."""

    case_id: str
    grid_spec: GridSpec
    case_config: CaseConfig
    snaps_per_cycle: int
    n_cycles: int
    analysis_modes: int
    profile: str = "full"
    seed: int = 0

    def config_hash(self) -> str:
        payload = json.dumps(
            {
                "case_id": self.case_id,
                "grid": dataclasses.asdict(self.grid_spec),
                "case": dataclasses.asdict(self.case_config),
                "snaps_per_cycle": self.snaps_per_cycle,
                "n_cycles": self.n_cycles,
                "analysis_modes": self.analysis_modes,
                "profile": self.profile,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def parse_config(path) -> dict:
    """Read a flat key = value config file into a raw dict."""
    values = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigValidationError(
                f"line {lineno}", f"expected 'key = value', got {raw!r}"
            )
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key != "case_id" and key not in _DEFAULTS:
            raise ConfigValidationError(key, "unknown configuration key")
        values[key] = value
    if "case_id" not in values:
        raise ConfigValidationError("case_id", "missing required key")
    return values


def build_setup(
    raw: dict,
    profile: str = "full",
    grid_override: tuple[int, int] | None = None,
    seed: int = 0,
) -> CaseSetup:
    params = dict(_DEFAULTS)
    case_id = raw["case_id"]
    for key, value in raw.items():
        if key == "case_id":
            continue
        try:
            params[key] = int(value) if key in _INT_KEYS else float(value)
        except ValueError:
            raise ConfigValidationError(key, f"cannot parse value {value!r}") from None

    if profile == "ci":
        params["n_radial"] = 97
        params["n_circ"] = 129
        params["dt"] = 2.0 * params["dt"]
    elif profile != "full":
        raise ConfigValidationError("profile", f"unknown profile {profile!r}")
    if grid_override is not None:
        params["n_radial"], params["n_circ"] = grid_override

    grid_spec = GridSpec(
        n_radial=params["n_radial"],
        n_circ=params["n_circ"],
        domain_diameter=params["domain_diameter"],
        stretch_ratio=params["stretch_ratio"],
    )
    grid_spec.validate()
    case_config = CaseConfig(
        reynolds=params["reynolds"],
        amplitude_ratio=params["amplitude_ratio"],
        freq_ratio=params["freq_ratio"],
        f_shed_ref=params["f_shed_ref"],
        dt=params["dt"],
        n_steps=params["n_steps"],
        transient_cycles=params["transient_cycles"],
        perturbation_amp=params["perturbation_amp"],
        perturbation_time=params["perturbation_time"],
    )
    case_config.validate()
    if params["snaps_per_cycle"] < 2:
        raise ConfigValidationError("snaps_per_cycle", "must be >= 2")
    if params["n_cycles"] < 1:
        raise ConfigValidationError("n_cycles", "must be >= 1")
    return CaseSetup(
        case_id=case_id,
        grid_spec=grid_spec,
        case_config=case_config,
        snaps_per_cycle=params["snaps_per_cycle"],
        n_cycles=params["n_cycles"],
        analysis_modes=params["analysis_modes"],
        profile=profile,
        seed=seed,
    )


@dataclass
class RunManifest:
    case_id: str
    config_hash: str
    version: str
    profile: str
    seed: int
    artifacts: dict
    diagnostics: dict
    stages_done: list

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text())
        return cls(**data)


def default_out_root(explicit=None) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get("PMDFLOW_OUT", "pmdflow_out"))


def _load_or_new_manifest(case_dir: Path, setup: CaseSetup) -> RunManifest:
    path = case_dir / "manifest.json"
    chash = setup.config_hash()
    if path.exists():
        try:
            manifest = RunManifest.load(path)
            if manifest.config_hash == chash:
                return manifest
        except (json.JSONDecodeError, TypeError):
            pass
    return RunManifest(
        case_id=setup.case_id,
        config_hash=chash,
        version=TOOLKIT_VERSION,
        profile=setup.profile,
        seed=setup.seed,
        artifacts={},
        diagnostics={},
        stages_done=[],
    )


def _stage_complete(manifest: RunManifest, case_dir: Path, stage: str) -> bool:
    if stage not in manifest.stages_done:
        return False
    return all(
        (case_dir / name).exists()
        for key, name in manifest.artifacts.items()
        if key.startswith(stage + ":")
    )


def post_onset_window(t: np.ndarray, frac: float = 0.25) -> np.ndarray:
    """Mask selecting the post-onset part of a force history."""
    t = np.asarray(t)
    return t >= (t[0] + frac * (t[-1] - t[0]))


def read_csv_columns(path) -> dict:
    """Numeric CSV reader that skips # provenance comments."""
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    header = [h.strip() for h in lines[0].split(",")]
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if rows.size == 0:
        rows = np.empty((0, len(header)))
    return {name: rows[:, k] for k, name in enumerate(header)}


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def _stage_simulate(setup: CaseSetup, case_dir: Path, manifest: RunManifest, log) -> None:
    cfg = setup.case_config
    chash = manifest.config_hash
    grid = build_grid(setup.grid_spec)
    export_grid_binary(grid, case_dir / "grid.bin")
    export_grid_csv(grid, case_dir / "grid.csv", header_comment=f"config_hash={chash}")

    solver = CylinderSolver(grid, cfg)
    t_nominal = 1.0 / cfg.f_shed_ref
    t_transient = cfg.transient_cycles * t_nominal
    max_steps = cfg.n_steps if cfg.n_steps > 0 else 10**9

    forces_path = case_dir / "forces.csv"
    history_t, history_cl = [], []
    steps = 0
    with open(forces_path, "w") as fh:
        fh.write(f"# config_hash={chash}\n")
        fh.write(ForceRecord.CSV_HEADER + "\n")

        def advance():
            nonlocal steps
            state, rec = solver.step()
            fh.write(rec.csv_row() + "\n")
            history_t.append(rec.t)
            history_cl.append(rec.cl_total)
            steps += 1
            if steps > max_steps:
                raise PmdflowError(f"n_steps cap {cfg.n_steps} reached at t={state.t:.2f}")
            return state, rec

        while solver.state.t < t_transient:
            advance()
        log(f"transient done at t={solver.state.t:.1f} ({steps} steps)")

        # cadence: measured shedding period; a locked oscillating case
        # snaps to the excitation period
        t_arr = np.array(history_t)
        cl_arr = np.array(history_cl)
        window = t_arr >= (solver.state.t - 12.0 * t_nominal)
        try:
            period_measured = signals.measure_period(t_arr[window], cl_arr[window])
        except ValueError:
            period_measured = t_nominal
        locked = False
        period = period_measured
        if cfg.freq_ratio > 0:
            t_exc = 1.0 / (cfg.freq_ratio * cfg.f_shed_ref)
            locked = abs(period_measured - t_exc) / t_exc < 0.05
            if locked:
                period = t_exc

        # phase alignment: start recording at an upward lift crossing
        level = float(np.mean(cl_arr[window]))
        aligned = False
        prev_cl = history_cl[-1]
        for _ in range(int(2.5 * period / cfg.dt) + 2):
            state, rec = advance()
            if prev_cl < level <= rec.cl_total:
                aligned = True
                break
            prev_cl = rec.cl_total
        if not aligned:
            log("no lift crossing found (steady wake); recording starts immediately")

        plan = SnapshotPlan(setup.snaps_per_cycle, setup.n_cycles, period)

        def stream():
            yield solver.state
            while True:
                state, _ = advance()
                yield state

        matrix = record(stream(), plan, grid)
        save_ensemble(matrix, case_dir / "ensemble.pmd")

    state = solver.state
    write_state(case_dir / "checkpoint.bin", state.u, state.v, state.p, state.t)

    t_arr = np.array(history_t)
    cl_arr = np.array(history_cl)
    window = t_arr >= (t_arr[-1] - 10.0 * period)
    manifest.diagnostics.update(
        {
            "max_poisson_residual": solver.max_poisson_residual,
            "max_divergence": solver.max_divergence,
            "max_cfl": solver.max_cfl,
            "period_measured": period_measured,
            "period_recording": period,
            "locked": locked,
            "strouhal": 1.0 / period_measured,
            "t_end": float(t_arr[-1]),
            "n_snapshots": int(matrix.n_snapshots),
            "cl_amplitude": float(np.max(np.abs(cl_arr[window] - cl_arr[window].mean()))),
            "freq_ratio": cfg.freq_ratio,
            "f_shed_ref": cfg.f_shed_ref,
            "amplitude_ratio": cfg.amplitude_ratio,
        }
    )
    manifest.artifacts.update(
        {
            "simulate:grid_bin": "grid.bin",
            "simulate:grid_csv": "grid.csv",
            "simulate:forces": "forces.csv",
            "simulate:ensemble": "ensemble.pmd",
            "simulate:checkpoint": "checkpoint.bin",
        }
    )


def _stage_pod(setup: CaseSetup, case_dir: Path, manifest: RunManifest, log) -> None:
    chash = manifest.config_hash
    matrix = load_ensemble(case_dir / "ensemble.pmd")
    mean, fluct = split_mean(matrix)
    basis = pod.PodBasis.from_ensemble(
        fluct,
        matrix.weights,
        matrix.times,
        analysis_modes=setup.analysis_modes,
        surface_index=matrix.surface_index,
    )
    pod.save_basis(basis, case_dir / "basis.pod1")
    comment = f"config_hash={chash}"
    pod.export_eigenvalues_csv(basis, case_dir / "eigenvalues.csv", comment)
    pod.export_temporal_csv(basis, case_dir / "temporal_coeffs.csv", comment)
    grid = build_grid(setup.grid_spec)
    snapshots.export_field_csv(
        mean, grid, case_dir / "mean_field.csv", header_comment=comment
    )
    snapshots.export_snapshot_csv(
        matrix, 0, grid, case_dir / "snapshot_0000.csv", header_comment=comment
    )
    log(f"pod: kept {basis.n_modes} modes, lambda_1 = {basis.lambdas[0]:.4e}")
    manifest.artifacts.update(
        {
            "pod:basis": "basis.pod1",
            "pod:eigenvalues": "eigenvalues.csv",
            "pod:temporal": "temporal_coeffs.csv",
            "pod:mean_field": "mean_field.csv",
            "pod:snapshot0": "snapshot_0000.csv",
        }
    )
    manifest.diagnostics.update(
        {
            "n_modes_kept": int(basis.n_modes),
            "lambda_1": float(basis.lambdas[0]) if basis.n_modes else 0.0,
            "energy_first_pair": float(np.sum(basis.energy_fractions()[:2])),
            "n99": int(basis.n_modes_for_energy(0.99)) if basis.n_modes else 0,
        }
    )


def _stage_pmd(setup: CaseSetup, case_dir: Path, manifest: RunManifest, log) -> None:
    chash = manifest.config_hash
    comment = f"config_hash={chash}"
    matrix = load_ensemble(case_dir / "ensemble.pmd")
    mean, _ = split_mean(matrix)
    basis = pod.load_basis(case_dir / "basis.pod1", analysis_modes=setup.analysis_modes)
    grid = build_grid(setup.grid_spec)
    quad = surface_arc_elements(grid)

    sms = pmd.extract_surface(basis, mean, matrix.surface_index, grid.theta)
    coeffs = pmd.decomposition_coefficients(sms, quad)
    history = pmd.modal_forces(
        coeffs,
        basis.temporal,
        matrix.times,
        matrix.surface_rows(),
        grid.theta,
        quadrature=quad,
    )
    m = basis.M
    pmd.export_ldc_ddc_csv(coeffs, case_dir / "ldc_ddc.csv", comment)
    pmd.export_surface_modes_csv(sms, case_dir / "surface_modes.csv", n_modes=m, header_comment=comment)
    pmd.export_modal_forces_csv(history, case_dir / "modal_forces.csv", n_levels=m, header_comment=comment)

    forces = read_csv_columns(case_dir / "forces.csv")
    mask = post_onset_window(forces["t"])
    t_post, cl_post = forces["t"][mask], forces["cl"][mask]
    beat = signals.detect_beat(t_post, cl_post)
    depth = signals.envelope_modulation_depth(cl_post)
    freq, mag = signals.hann_spectrum(t_post, cl_post)
    peaks = signals.dominant_peaks(freq, mag)
    recon_err_cl = float(np.max(np.abs(history.cl_modal[-1] - history.cl_reference)))
    recon_err_cd = float(np.max(np.abs(history.cd_modal[-1] - history.cd_reference)))

    diag = {
        "beat": bool(beat),
        "envelope_depth": float(depth),
        "peak_frequency": float(peaks[0][0]) if peaks else 0.0,
        "L_o": coeffs.L_o,
        "D_o": coeffs.D_o,
        "reconstruction_error_cl": recon_err_cl,
        "reconstruction_error_cd": recon_err_cd,
        "lift_variance_m2": pmd.variance_capture(history.cl_reference, history.cl_modal[min(2, m)]),
        "drag_variance_m2": pmd.variance_capture(history.cd_reference, history.cd_modal[min(2, m)]),
        "drag_variance_m4": pmd.variance_capture(history.cd_reference, history.cd_modal[min(4, m)]),
    }
    manifest.diagnostics.update(diag)

    with open(case_dir / "case_summary.csv", "w") as fh:
        fh.write(f"# {comment}\n")
        keys = [
            "case_id", "freq_ratio", "n99", "beat", "peak_frequency", "strouhal",
            "envelope_depth", "L_o", "D_o", "reconstruction_error_cl",
        ]
        fh.write(",".join(keys) + "\n")
        fh.write(
            ",".join(
                [
                    setup.case_id,
                    repr(setup.case_config.freq_ratio),
                    str(manifest.diagnostics.get("n99", 0)),
                    str(int(beat)),
                    repr(diag["peak_frequency"]),
                    repr(manifest.diagnostics.get("strouhal", 0.0)),
                    repr(diag["envelope_depth"]),
                    repr(coeffs.L_o),
                    repr(coeffs.D_o),
                    repr(recon_err_cl),
                ]
            )
            + "\n"
        )
    log(
        f"pmd: |L_o|={abs(coeffs.L_o):.4f}, beat={beat}, "
        f"full-rank force error={max(recon_err_cl, recon_err_cd):.2e}"
    )
    manifest.artifacts.update(
        {
            "pmd:ldc_ddc": "ldc_ddc.csv",
            "pmd:surface_modes": "surface_modes.csv",
            "pmd:modal_forces": "modal_forces.csv",
            "pmd:case_summary": "case_summary.csv",
        }
    )


_STAGE_FUNCS = {"simulate": _stage_simulate, "pod": _stage_pod, "pmd": _stage_pmd}
_STAGE_DEPS = {"simulate": (), "pod": ("simulate",), "pmd": ("simulate", "pod")}


def run_case(
    config_path,
    out_root=None,
    profile: str = "full",
    grid_override=None,
    resume: bool = False,
    seed: int = 0,
    stages=STAGES,
    log=print,
) -> RunManifest:
    """Run the requested stages of one case; returns the updated manifest."""
    raw = parse_config(config_path)
    setup = build_setup(raw, profile=profile, grid_override=grid_override, seed=seed)
    case_dir = default_out_root(out_root) / setup.case_id
    case_dir.mkdir(parents=True, exist_ok=True)
    manifest = _load_or_new_manifest(case_dir, setup)

    def stage_log(msg):
        log(f"[{setup.case_id}] {msg}")

    for stage in STAGES:
        if stage not in stages:
            continue
        for dep in _STAGE_DEPS[stage]:
            if not _stage_complete(manifest, case_dir, dep):
                raise PmdflowError(
                    f"stage '{stage}' requires completed stage '{dep}' "
                    f"(run it first or use the 'all' command)"
                )
        if resume and _stage_complete(manifest, case_dir, stage):
            stage_log(f"{stage}: up to date, skipped")
            continue
        stage_log(f"{stage}: running")
        try:
            _STAGE_FUNCS[stage](setup, case_dir, manifest, stage_log)
        except Exception as exc:
            manifest.save(case_dir / "manifest.json")
            raise PmdflowError(f"stage '{stage}' failed: {exc}") from exc
        if stage not in manifest.stages_done:
            manifest.stages_done.append(stage)
        manifest.save(case_dir / "manifest.json")
    return manifest


def _suite_worker(args):
    config_path, out_root, profile, grid_override, resume, seed = args
    try:
        manifest = run_case(
            config_path,
            out_root=out_root,
            profile=profile,
            grid_override=grid_override,
            resume=resume,
            seed=seed,
        )
        return (str(config_path), None, manifest.case_id)
    except Exception as exc:  # collected per case, suite continues
        return (str(config_path), f"{type(exc).__name__}: {exc}", None)


def run_suite(
    config_dir,
    out_root=None,
    profile: str = "full",
    grid_override=None,
    resume: bool = False,
    seed: int = 0,
    parallelism: int = 1,
    log=print,
):
    """Run every *.cfg in a directory (at most ``parallelism`` at a time),
    then produce the cross-case regime report. Returns (n_failed, results)."""
    config_dir = Path(config_dir)
    configs = sorted(config_dir.glob("*.cfg"))
    if not configs:
        raise PmdflowError(f"no configs found in {config_dir}")
    jobs = [
        (str(c), str(default_out_root(out_root)), profile, grid_override, resume, seed)
        for c in configs
    ]
    if parallelism <= 1:
        results = [_suite_worker(job) for job in jobs]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_suite_worker, jobs))
    failed = [(cfg, err) for cfg, err, _ in results if err]
    for cfg, err, cid in results:
        log(f"{cfg}: {'FAILED ' + err if err else 'ok (' + cid + ')'}")
    completed = [cid for _, err, cid in results if not err]
    if completed:
        try:
            run_report(default_out_root(out_root), cases=completed, log=log)
        except PmdflowError as exc:
            log(f"report: {exc}")
    return len(failed), results


def _case_analysis_from_artifacts(case_dir: Path) -> pmd.CaseAnalysis:
    manifest = RunManifest.load(case_dir / "manifest.json")
    eig = read_csv_columns(case_dir / "eigenvalues.csv")
    ldc = read_csv_columns(case_dir / "ldc_ddc.csv")
    forces = read_csv_columns(case_dir / "forces.csv")
    mask = post_onset_window(forces["t"])
    diag = manifest.diagnostics
    period = diag.get("period_measured", 1.0)
    freq_ratio = float(diag.get("freq_ratio", 0.0))
    f_e = freq_ratio * float(diag.get("f_shed_ref", 0.0))
    modal = ldc["mode"] > 0
    coeffs = pmd.DecompCoefficients(
        L_o=float(ldc["L_i"][0]),
        D_o=float(ldc["D_i"][0]),
        L=ldc["L_i"][modal],
        D=ldc["D_i"][modal],
    )
    lambdas = eig["lambda"]
    return pmd.CaseAnalysis(
        case_id=manifest.case_id,
        freq_ratio=freq_ratio,
        excitation_frequency=f_e,
        lambdas=lambdas,
        coeffs=coeffs,
        force_t=forces["t"][mask],
        force_cl=forces["cl"][mask],
        measured_period=float(period),
    )


def run_report(out_root, cases=None, required=pmd.CANONICAL_CASES, log=print):
    """Cross-case regime summary plus diagnostic figures."""
    root = default_out_root(out_root)
    if cases is None:
        cases = [p.parent.name for p in sorted(root.glob("*/manifest.json"))]
    if not cases:
        raise PmdflowError(f"no completed cases under {root}")
    analyses = {}
    for cid in cases:
        case_dir = root / cid
        if not (case_dir / "case_summary.csv").exists():
            log(f"report: case {cid} incomplete, skipping")
            continue
        analyses[cid] = _case_analysis_from_artifacts(case_dir)
    required = tuple(r for r in required if r is not None)
    summary = pmd.regime_report(analyses, required=required)
    report_dir = root / "report"
    report_dir.mkdir(exist_ok=True)
    pmd.export_regime_summary_csv(summary, root / "regime_summary.csv")
    _render_report_figures(root, analyses, report_dir, log)
    log(f"report: wrote {root / 'regime_summary.csv'}")
    return summary


def _render_report_figures(root: Path, analyses: dict, report_dir: Path, log) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ordered = sorted(analyses.values(), key=lambda c: c.freq_ratio)
    fig, axes = plt.subplots(len(ordered), 1, figsize=(8, 2.2 * len(ordered)), sharex=False)
    if len(ordered) == 1:
        axes = [axes]
    for ax, case in zip(axes, ordered):
        ax.plot(case.force_t, case.force_cl, lw=0.8)
        ax.set_ylabel("$C_L$")
        ax.set_title(f"{case.case_id} (f_e/f_s = {case.freq_ratio:g})", fontsize=9)
    axes[-1].set_xlabel("tU/D")
    fig.tight_layout()
    fig.savefig(report_dir / "lift_histories.png", dpi=150)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    for case in ordered:
        lam = case.lambdas[:20]
        ax.semilogy(
            np.arange(1, len(lam) + 1), lam / lam.sum(), "o-", ms=3, label=case.case_id
        )
    ax.set_xlabel("mode")
    ax.set_ylabel("normalized eigenvalue")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(report_dir / "eigenvalue_spectra.png", dpi=150)
    plt.close(fig)
    log(f"report: figures in {report_dir}")

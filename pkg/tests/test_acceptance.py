"""Acceptance suite: one test per release criterion.

Runs the four canonical cases (stationary; frequency ratios 0.8, 0.97,
1.2 at one-tenth-diameter amplitude) through the full pipeline, then checks
every criterion at its stated tolerance and prints one PASS/FAIL line per
criterion (visible with ``pytest -s`` or in the captured output).

By default the cases run at the fast "ci" profile (97x129 grid, doubled
time step), where the Table-1 check applies its widened Strouhal band.
Set PMDFLOW_ACCEPT=full to run the 193x257 production resolution with the
tight Strouhal and mean-drag bands (tens of minutes).
"""

import os
from pathlib import Path

import numpy as np
import pytest

from pmdflow.pipeline import (
    RunManifest,
    read_csv_columns,
    post_onset_window,
    run_case,
    run_suite,
)
from pmdflow.pod import PodBasis, load_basis
from pmdflow.snapshots import load_ensemble, split_mean
from pmdflow import signals

PROFILE = os.environ.get("PMDFLOW_ACCEPT", "ci")
CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
CASES = ("stationary", "presync", "sync", "postsync")


def report(name: str, passed: bool, detail: str) -> None:
    print(f"ACCEPTANCE {name}: {'PASS' if passed else 'FAIL'} - {detail}")
    assert passed, f"{name}: {detail}"


@pytest.fixture(scope="session")
def suite_dir(tmp_path_factory):
    out = os.environ.get("PMDFLOW_ACCEPT_DIR")
    if out and (Path(out) / "regime_summary.csv").exists():
        return Path(out)
    out = Path(out) if out else tmp_path_factory.mktemp("acceptance")
    n_failed, _ = run_suite(
        CONFIG_DIR, out_root=out, profile=PROFILE, parallelism=2, resume=True
    )
    assert n_failed == 0, "case pipeline failed; see log"
    return Path(out)


def _manifest(suite_dir, case):
    return RunManifest.load(suite_dir / case / "manifest.json")


def test_criterion_table1(suite_dir):
    man = _manifest(suite_dir, "stationary")
    st = man.diagnostics["strouhal"]
    forces = read_csv_columns(suite_dir / "stationary" / "forces.csv")
    t, cd = forces["t"], forces["cd"]
    window = t >= t[-1] - 10.0 * man.diagnostics["period_measured"]
    cd_mean = float(np.mean(cd[window]))
    if PROFILE == "full":
        ok = abs(st - 0.19) <= 0.01 and abs(cd_mean - 1.29) <= 0.06
        detail = f"St={st:.4f} (0.19+-0.01), mean C_D={cd_mean:.4f} (1.29+-0.06)"
    else:
        ok = abs(st - 0.19) <= 0.02
        detail = f"ci profile: St={st:.4f} (0.19+-0.02); mean C_D={cd_mean:.4f} (informative)"
    report("table1-reproduction", ok, detail)


def test_criterion_pressure_dominance(suite_dir):
    forces = read_csv_columns(suite_dir / "stationary" / "forces.csv")
    mask = post_onset_window(forces["t"])
    lift_frac = float(np.std(forces["cl_p"][mask]) / np.std(forces["cl"][mask]))
    drag_frac = float(np.mean(forces["cd_p"][mask]) / np.mean(forces["cd"][mask]))
    ok = lift_frac > 0.85 and drag_frac > 0.70
    report(
        "pressure-dominance",
        ok,
        f"pressure lift fraction {lift_frac:.3f} (>0.85), "
        f"pressure drag fraction {drag_frac:.3f} (>0.70)",
    )


def _weighted_svd(fluct, weights):
    sq = np.sqrt(weights)
    U, S, Vt = np.linalg.svd(sq[:, None] * fluct, full_matrices=False)
    return U / sq[:, None], S**2 / fluct.shape[1]


def test_criterion_pod_correctness(suite_dir):
    failures = []
    # real shedding data plus a synthetic ensemble through the same checks
    rng = np.random.default_rng(1)
    synth_fluct = rng.normal(size=(300, 24))
    synth_fluct -= synth_fluct.mean(axis=1, keepdims=True)
    synth_w = rng.uniform(0.1, 2.0, size=300)
    synthetic = ("synthetic", synth_fluct, synth_w, None)

    matrix = load_ensemble(suite_dir / "stationary" / "ensemble.pmd")
    mean, fluct = split_mean(matrix)
    real = ("stationary", fluct, matrix.weights, matrix.surface_index)

    details = []
    for label, fl, w, sidx in (real, synthetic):
        basis = PodBasis.from_ensemble(fl, w, np.arange(float(fl.shape[1])), surface_index=sidx)
        m = basis.M
        gram = basis.modes[:, :m].T @ (w[:, None] * basis.modes[:, :m])
        ortho = float(np.max(np.abs(gram - np.eye(m))))
        cov = basis.temporal[:m] @ basis.temporal[:m].T / basis.n_snapshots
        cov_rel = float(np.max(np.abs(np.diag(cov) - basis.lambdas[:m]) / basis.lambdas[:m]))
        modes_svd, lam_svd = _weighted_svd(fl, w)
        svd_err = 0.0
        for i in range(m):
            a, b = basis.modes[:, i], modes_svd[:, i]
            sign = np.sign(a @ (w * b))
            svd_err = max(svd_err, float(np.max(np.abs(a - sign * b))))
        lam_rel = float(np.max(np.abs(basis.lambdas[:m] - lam_svd[:m]) / lam_svd[:m]))
        recon = basis.reconstruct(np.zeros(fl.shape[0]))
        recon_err = float(np.max(np.abs(recon - fl)))
        details.append(
            f"{label}: ortho {ortho:.1e}, cov {cov_rel:.1e}, svd {svd_err:.1e}/"
            f"{lam_rel:.1e}, recon {recon_err:.1e}"
        )
        if not (ortho < 1e-10 and cov_rel < 1e-8 and svd_err < 1e-8
                and lam_rel < 1e-8 and recon_err < 1e-10):
            failures.append(label)
    report("pod-correctness", not failures, "; ".join(details))


def test_criterion_ldc_ddc_structure(suite_dir):
    case_dir = suite_dir / "stationary"
    ldc = read_csv_columns(case_dir / "ldc_ddc.csv")
    man = _manifest(suite_dir, "stationary")
    L_o = float(ldc["L_i"][0])
    L = np.abs(ldc["L_i"][1:11])
    D = np.abs(ldc["D_i"][1:11])
    lift_pair = max(L[0], L[1]) > np.max(L[2:])
    drag_pair = max(D[2], D[3]) > max(D[0], D[1])
    recon = max(
        man.diagnostics["reconstruction_error_cl"],
        man.diagnostics["reconstruction_error_cd"],
    )
    ok = abs(L_o) < 0.01 and lift_pair and drag_pair and recon < 1e-10
    report(
        "ldc-ddc-structure",
        ok,
        f"|L_o|={abs(L_o):.2e} (<0.01), lift pair dominance {lift_pair}, "
        f"drag pair dominance {drag_pair}, full-rank force error {recon:.1e} (<1e-10)",
    )


def test_criterion_regime_phenomenology(suite_dir):
    mans = {c: _manifest(suite_dir, c) for c in CASES}
    beats = {c: mans[c].diagnostics["beat"] for c in CASES}
    n99 = {c: mans[c].diagnostics["n99"] for c in CASES}

    # the locked case must respond at the excitation frequency
    forces = read_csv_columns(suite_dir / "sync" / "forces.csv")
    mask = post_onset_window(forces["t"])
    t_post = forces["t"][mask]
    freq, mag = signals.hann_spectrum(t_post, forces["cl"][mask])
    peak = signals.dominant_peaks(freq, mag)[0][0]
    f_e = mans["sync"].diagnostics["freq_ratio"] * mans["sync"].diagnostics["f_shed_ref"]
    bin_width = 1.0 / (t_post[-1] - t_post[0])
    at_fe = abs(peak - f_e) <= 1.5 * bin_width

    ok = (
        not beats["sync"]
        and beats["presync"]
        and beats["postsync"]
        and at_fe
        and n99["presync"] > n99["sync"]
        and n99["postsync"] > n99["sync"]
    )
    report(
        "regime-phenomenology",
        ok,
        f"beats: sync={beats['sync']}, presync={beats['presync']}, "
        f"postsync={beats['postsync']}; sync peak {peak:.4f} vs f_e {f_e:.4f}; "
        f"N99 sync={n99['sync']}, presync={n99['presync']}, postsync={n99['postsync']}",
    )


def test_criterion_numerics(suite_dir):
    worst_resid = 0.0
    worst_div = 0.0
    for case in CASES:
        diag = _manifest(suite_dir, case).diagnostics
        worst_resid = max(worst_resid, diag["max_poisson_residual"])
        worst_div = max(worst_div, diag["max_divergence"])
    from test_convergence import spatial_orders

    orders, _ = spatial_orders()
    ok = worst_resid < 1e-8 and worst_div < 1e-8 and min(orders) >= 1.9
    report(
        "numerics",
        ok,
        f"max Poisson residual {worst_resid:.1e} (<1e-8), max divergence "
        f"{worst_div:.1e} (<1e-8), spatial orders {[round(o, 2) for o in orders]} (>=1.9)",
    )


def test_supplementary_mode_structure(suite_dir):
    """Real-data mode-structure properties (not release criteria).

    Thresholds follow the measured pressure-POD structure: the first pair
    is energy-split roughly 1.0/0.7 (pressure modes pair less evenly than
    velocity modes), the second pair is near-degenerate, and the lock-out
    higher-mode spread appears in whichever force component the case
    excites (drag for the post-synchronous case).
    """
    eig = read_csv_columns(suite_dir / "stationary" / "eigenvalues.csv")
    lam = eig["lambda"]
    assert abs(lam[2] - lam[3]) / lam[2] < 0.2, "second pair not near-degenerate"
    fr = lam / lam.sum()
    assert fr[:2].sum() > 0.80
    assert fr[:4].sum() > 0.95

    def spread(case):
        ldc = read_csv_columns(suite_dir / case / "ldc_ddc.csv")
        L = np.abs(ldc["L_i"][1:11])
        D = np.abs(ldc["D_i"][1:11])
        return bool(
            np.any(L[4:] > 0.2 * L.max()) or np.any(D[4:] > 0.2 * D.max())
        )

    assert spread("presync"), "pre-synchronous case lacks higher-mode contributions"
    assert spread("postsync"), "post-synchronous case lacks higher-mode contributions"
    assert not spread("sync"), "locked case should concentrate in the leading pairs"
    assert not spread("stationary")

    for case, expect_beating in (
        ("stationary", False),
        ("sync", False),
        ("presync", True),
        ("postsync", True),
    ):
        depth = _manifest(suite_dir, case).diagnostics["envelope_depth"]
        assert (depth > 0.2) == expect_beating, f"{case}: envelope depth {depth:.3f}"
    print("ACCEPTANCE supplementary-mode-structure: PASS - pair structure, "
          "lock-out spread and envelope depths consistent")


def test_criterion_determinism(tmp_path):
    cfg = tmp_path / "det.cfg"
    cfg.write_text(
        "case_id = det\nreynolds = 200.0\nn_radial = 41\nn_circ = 65\n"
        "domain_diameter = 20.0\nstretch_ratio = 3.0\ndt = 0.02\n"
        "transient_cycles = 2\nsnaps_per_cycle = 8\nn_cycles = 1\n"
    )
    digests = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        run_case(cfg, out_root=out, log=lambda *a: None)
        case_dir = out / "det"
        blob = b"".join(
            p.read_bytes() for p in sorted(case_dir.iterdir()) if p.is_file()
        )
        import hashlib

        digests.append(hashlib.sha256(blob).hexdigest())
    ok = digests[0] == digests[1]
    report(
        "determinism",
        ok,
        f"two single-threaded reruns: artifact digest {digests[0][:12]} == {digests[1][:12]}",
    )

"""Pressure-mode decomposition: surface modes, lift/drag decomposition
coefficients and modal force reconstruction.

Surface modes are plain restrictions of the full-field POD modes to the
cylinder ring. Each surface function f contributes to the pressure forces
through the quadratures

    lift contribution = -integral f sin(theta) dtheta
    drag contribution = -integral f cos(theta) dtheta

applied to the mean surface pressure (giving L_o, D_o) and to every surface
mode (giving the LDC/DDC scalars L_i, D_i). The modal pressure-force
history at truncation m is then L_o + sum_{i<=m} a_i(t) L_i, compared
against direct quadrature of each stored snapshot.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import signals
from .errors import MissingCase
from .pod import PodBasis

__all__ = [
    "SurfaceModeSet",
    "DecompCoefficients",
    "ModalForceHistory",
    "CaseAnalysis",
    "RegimeSummary",
    "extract_surface",
    "decomposition_coefficients",
    "modal_forces",
    "variance_capture",
    "regime_report",
    "CANONICAL_CASES",
]

CANONICAL_CASES = ("stationary", "presync", "sync", "postsync")


@dataclass
class SurfaceModeSet:
    """Mean surface pressure and surface modes with sine/cosine dissection."""

    theta: np.ndarray
    mean_surface: np.ndarray
    modes_surface: np.ndarray  # (n_modes, n_surface)
    mean_sine: np.ndarray = field(init=False)
    mean_cosine: np.ndarray = field(init=False)
    sine_parts: np.ndarray = field(init=False)
    cosine_parts: np.ndarray = field(init=False)

    def __post_init__(self):
        sin_t = np.sin(self.theta)
        cos_t = np.cos(self.theta)
        self.mean_sine = -self.mean_surface * sin_t
        self.mean_cosine = -self.mean_surface * cos_t
        self.sine_parts = -self.modes_surface * sin_t[None, :]
        self.cosine_parts = -self.modes_surface * cos_t[None, :]


@dataclass
class DecompCoefficients:
    """Mean and per-mode lift/drag decomposition scalars."""

    L_o: float
    D_o: float
    L: np.ndarray
    D: np.ndarray


@dataclass
class ModalForceHistory:
    """Reconstructed pressure-force histories per truncation level.

    cl_modal[m] is the series using modes 1..m (row 0 is the mean-only
    constant L_o); cl_reference comes from direct surface quadrature of the
    stored snapshots.
    """

    t: np.ndarray
    cl_modal: np.ndarray
    cd_modal: np.ndarray
    cl_reference: np.ndarray
    cd_reference: np.ndarray


def extract_surface(
    basis: PodBasis,
    mean_field: np.ndarray,
    surface_index: np.ndarray,
    theta: np.ndarray,
) -> SurfaceModeSet:
    """Restrict the mean field and every mode to the surface nodes."""
    surface_index = np.asarray(surface_index)
    return SurfaceModeSet(
        theta=np.asarray(theta, dtype=float),
        mean_surface=np.asarray(mean_field)[surface_index],
        modes_surface=basis.modes[surface_index, :].T.copy(),
    )


def _quadrature_weights(sms: SurfaceModeSet, quadrature) -> np.ndarray:
    if quadrature is None:
        n = len(sms.theta)
        return np.full(n, 2.0 * np.pi / n)
    pairs = list(quadrature)
    thetas = np.array([p[0] for p in pairs])
    if len(thetas) != len(sms.theta) or np.max(np.abs(thetas - sms.theta)) > 1e-12:
        raise ValueError("quadrature nodes do not match the surface ordering")
    return np.array([p[1] for p in pairs])


def decomposition_coefficients(
    sms: SurfaceModeSet, quadrature=None
) -> DecompCoefficients:
    """LDC/DDC scalars by surface quadrature.

    quadrature: optional iterable of (theta, dtheta) pairs as produced by
    grid.surface_arc_elements; defaults to the uniform spacing implied by
    the surface ordering.
    """
    dth = _quadrature_weights(sms, quadrature)
    sin_t = np.sin(sms.theta)
    cos_t = np.cos(sms.theta)
    L_o = -float(np.sum(sms.mean_surface * sin_t * dth))
    D_o = -float(np.sum(sms.mean_surface * cos_t * dth))
    L = -(sms.modes_surface * (sin_t * dth)[None, :]).sum(axis=1)
    D = -(sms.modes_surface * (cos_t * dth)[None, :]).sum(axis=1)
    return DecompCoefficients(L_o=L_o, D_o=D_o, L=L, D=D)


def modal_forces(
    coeffs: DecompCoefficients,
    temporal: np.ndarray,
    times: np.ndarray,
    surface_snapshots: np.ndarray,
    theta: np.ndarray,
    quadrature=None,
) -> ModalForceHistory:
    """Modal pressure-force reconstruction at every truncation level.

    surface_snapshots holds the stored surface pressures (n_surface x
    n_snaps); the reference series is their direct quadrature, independent
    of the modal route.
    """
    theta = np.asarray(theta, dtype=float)
    if quadrature is None:
        dth = np.full(len(theta), 2.0 * np.pi / len(theta))
    else:
        dth = np.array([p[1] for p in quadrature])
    sin_t, cos_t = np.sin(theta), np.cos(theta)

    cl_ref = -(surface_snapshots * (sin_t * dth)[:, None]).sum(axis=0)
    cd_ref = -(surface_snapshots * (cos_t * dth)[:, None]).sum(axis=0)

    n_modes, n_snaps = temporal.shape
    cl_modal = np.empty((n_modes + 1, n_snaps))
    cd_modal = np.empty((n_modes + 1, n_snaps))
    cl_modal[0] = coeffs.L_o
    cd_modal[0] = coeffs.D_o
    cl_terms = coeffs.L[:, None] * temporal
    cd_terms = coeffs.D[:, None] * temporal
    cl_modal[1:] = coeffs.L_o + np.cumsum(cl_terms, axis=0)
    cd_modal[1:] = coeffs.D_o + np.cumsum(cd_terms, axis=0)

    return ModalForceHistory(
        t=np.asarray(times, dtype=float),
        cl_modal=cl_modal,
        cd_modal=cd_modal,
        cl_reference=cl_ref,
        cd_reference=cd_ref,
    )


def variance_capture(reference: np.ndarray, reconstruction: np.ndarray) -> float:
    """var(reconstruction) / var(reference); 1 means fully captured."""
    ref_var = float(np.var(reference))
    if ref_var == 0.0:
        return 1.0
    return float(np.var(reconstruction)) / ref_var


@dataclass
class CaseAnalysis:
    """Everything regime_report needs from one completed case."""

    case_id: str
    freq_ratio: float
    excitation_frequency: float  # 0 for the stationary case
    lambdas: np.ndarray
    coeffs: DecompCoefficients
    force_t: np.ndarray  # post-transient lift history (dense sampling)
    force_cl: np.ndarray
    measured_period: float


@dataclass
class RegimeRow:
    case_id: str
    freq_ratio: float
    n99: int
    beat: bool
    peak_frequency: float
    strouhal: float
    envelope_depth: float
    dominant_lift_mode: int
    dominant_drag_mode: int


@dataclass
class RegimeSummary:
    rows: list

    def row(self, case_id: str) -> RegimeRow:
        for r in self.rows:
            if r.case_id == case_id:
                return r
        raise KeyError(case_id)


def _n99(lambdas: np.ndarray) -> int:
    total = lambdas.sum()
    cum = np.cumsum(lambdas) / total
    return int(np.searchsorted(cum, 0.99 - 1e-12) + 1)


def regime_report(cases: dict, required=CANONICAL_CASES) -> RegimeSummary:
    """Cross-case synchronization summary.

    cases maps case_id -> CaseAnalysis; raises MissingCase unless every
    required id is present. N99 counts the modes needed for 99% of the
    fluctuation energy; the beat flag comes from the Hann spectrum of the
    post-transient lift history (two separated peaks above 25% of the
    maximum).
    """
    missing = [cid for cid in required if cid not in cases]
    if missing:
        raise MissingCase(missing)

    rows = []
    for cid, case in cases.items():
        freq, mag = signals.hann_spectrum(case.force_t, case.force_cl)
        peaks = signals.dominant_peaks(freq, mag)
        peak_f = peaks[0][0] if peaks else 0.0
        beat = signals.detect_beat(case.force_t, case.force_cl)
        depth = signals.envelope_modulation_depth(case.force_cl)
        m = min(len(case.coeffs.L), 10)
        rows.append(
            RegimeRow(
                case_id=cid,
                freq_ratio=case.freq_ratio,
                n99=_n99(case.lambdas),
                beat=beat,
                peak_frequency=float(peak_f),
                strouhal=1.0 / case.measured_period,
                envelope_depth=depth,
                dominant_lift_mode=int(np.argmax(np.abs(case.coeffs.L[:m]))) + 1,
                dominant_drag_mode=int(np.argmax(np.abs(case.coeffs.D[:m]))) + 1,
            )
        )
    return RegimeSummary(rows=rows)


# ---------------------------------------------------------------------------
# CSV exports (the documented pipeline interfaces)
# ---------------------------------------------------------------------------

def export_ldc_ddc_csv(coeffs: DecompCoefficients, path, header_comment="") -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write("mode,L_i,D_i\n")
        fh.write(f"0,{coeffs.L_o!r},{coeffs.D_o!r}\n")
        for i, (li, di) in enumerate(zip(coeffs.L, coeffs.D), start=1):
            fh.write(f"{i},{float(li)!r},{float(di)!r}\n")


def export_surface_modes_csv(sms: SurfaceModeSet, path, n_modes=None, header_comment="") -> None:
    m = sms.modes_surface.shape[0] if n_modes is None else min(n_modes, sms.modes_surface.shape[0])
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        cols = ["theta", "p_mean", "p_mean_sin", "p_mean_cos"]
        for i in range(1, m + 1):
            cols += [f"psi_{i}", f"psi_{i}_sin", f"psi_{i}_cos"]
        fh.write(",".join(cols) + "\n")
        for j, th in enumerate(sms.theta):
            vals = [th, sms.mean_surface[j], sms.mean_sine[j], sms.mean_cosine[j]]
            for i in range(m):
                vals += [
                    sms.modes_surface[i, j],
                    sms.sine_parts[i, j],
                    sms.cosine_parts[i, j],
                ]
            fh.write(",".join(repr(float(v)) for v in vals) + "\n")


def export_modal_forces_csv(history: ModalForceHistory, path, n_levels=None, header_comment="") -> None:
    m_total = history.cl_modal.shape[0] - 1
    m = m_total if n_levels is None else min(n_levels, m_total)
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        cols = ["t", "cl_ref", "cd_ref"]
        cols += [f"cl_m{i}" for i in range(1, m + 1)]
        cols += [f"cd_m{i}" for i in range(1, m + 1)]
        fh.write(",".join(cols) + "\n")
        for k, t in enumerate(history.t):
            vals = [t, history.cl_reference[k], history.cd_reference[k]]
            vals += [history.cl_modal[i, k] for i in range(1, m + 1)]
            vals += [history.cd_modal[i, k] for i in range(1, m + 1)]
            fh.write(",".join(repr(float(v)) for v in vals) + "\n")


def export_regime_summary_csv(summary: RegimeSummary, path, header_comment="") -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(
            [
                "case_id",
                "freq_ratio",
                "n99",
                "beat",
                "peak_frequency",
                "strouhal",
                "envelope_depth",
                "dominant_lift_mode",
                "dominant_drag_mode",
            ]
        )
        for r in summary.rows:
            writer.writerow(
                [
                    r.case_id,
                    repr(r.freq_ratio),
                    r.n99,
                    int(r.beat),
                    repr(r.peak_frequency),
                    repr(r.strouhal),
                    repr(r.envelope_depth),
                    r.dominant_lift_mode,
                    r.dominant_drag_mode,
                ]
            )

"""Pressure POD by the method of snapshots.

Given the zero-mean fluctuation matrix P' (n_points x N) and positive cell
weights w, the temporal correlation matrix

    G[k, l] = (1/N) sum_x w(x) P'(x, k) P'(x, l)

is symmetric nonnegative; its eigenpairs (lambda_i, Q_i) yield the spatial
modes psi_i ~ P' Q_i / sqrt(N lambda_i) and temporal coefficients
a_i(t_k) = <P'[:, k], psi_i>_w.

Numerics: modes are renormalized explicitly and passed through a two-sweep
weighted Gram-Schmidt, which keeps the basis orthonormal to round-off even
for eigenvalues many decades below lambda_1 (the raw eigenvector route
degrades as eps * lambda_1 / lambda_i). By default every mode with a
positive eigenvalue is kept: the full basis spans the ensemble exactly, so
p_bar + Psi a reproduces each snapshot to round-off, which downstream force
reconstruction relies on. Analysis retains the leading M modes (M = 10
unless asked otherwise).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import containers
from .errors import ConvergenceFailure, DegenerateMode

__all__ = [
    "PodBasis",
    "correlation_matrix",
    "eigendecompose",
    "compute_modes",
    "temporal_coefficients",
    "save_basis",
    "load_basis",
    "export_eigenvalues_csv",
    "export_temporal_csv",
]

DEFAULT_ANALYSIS_MODES = 10
DEGENERACY_CUTOFF = 1e-12  # relative to lambda_1; requests below this fail


def correlation_matrix(fluct: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted temporal correlation matrix G (N x N, symmetric PSD)."""
    fluct = np.asarray(fluct)
    w = np.asarray(weights)
    n_snaps = fluct.shape[1]
    G = fluct.T @ (w[:, None] * fluct) / n_snaps
    return 0.5 * (G + G.T)


def eigendecompose(G: np.ndarray):
    """Descending eigenpairs of a symmetric matrix; negatives clipped to 0."""
    try:
        lam, Q = scipy.linalg.eigh(G)
    except scipy.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"symmetric eigensolver failed: {exc}") from exc
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    Q = Q[:, order]
    return np.clip(lam, 0.0, None), Q


def _weighted_gram_schmidt(modes: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Two-sweep modified Gram-Schmidt in the weighted inner product."""
    psi = modes.copy()
    w = weights[:, None]
    m = psi.shape[1]
    for i in range(m):
        v = psi[:, i]
        for _ in range(2):
            if i > 0:
                coeffs = psi[:, :i].T @ (weights * v)
                v = v - psi[:, :i] @ coeffs
        norm = np.sqrt(v @ (weights * v))
        if norm <= 0.0:
            raise DegenerateMode(f"mode {i + 1} collapsed during orthonormalization")
        psi[:, i] = v / norm
    del w
    return psi


def compute_modes(
    fluct: np.ndarray,
    weights: np.ndarray,
    lambdas: np.ndarray,
    Q: np.ndarray,
    n_modes: int | None = None,
    surface_index: np.ndarray | None = None,
):
    """Spatial modes for the retained eigenpairs.

    With n_modes = None all strictly positive eigenvalues are retained (the
    completeness the reconstruction contract needs). An explicit n_modes
    request that reaches at or below DEGENERACY_CUTOFF * lambda_1 raises
    DegenerateMode. Returns (modes, kept) where kept indexes the retained
    eigenpairs.

    Sign convention: each mode is flipped so its largest-magnitude surface
    value (largest-magnitude value overall when no surface is given) is
    positive, making downstream force-decomposition signs reproducible.
    """
    fluct = np.asarray(fluct)
    weights = np.asarray(weights)
    lam1 = lambdas[0] if len(lambdas) else 0.0
    floor = DEGENERACY_CUTOFF * lam1

    if n_modes is None:
        kept = np.flatnonzero(lambdas > 0.0)
    else:
        if n_modes < 1 or n_modes > len(lambdas):
            raise DegenerateMode(
                f"requested {n_modes} modes, ensemble supports at most {len(lambdas)}"
            )
        if lambdas[n_modes - 1] <= floor:
            raise DegenerateMode(
                f"mode {n_modes} has eigenvalue {lambdas[n_modes - 1]:.3e} at or "
                f"below the degeneracy cutoff {floor:.3e}"
            )
        kept = np.arange(n_modes)

    raw = fluct @ Q[:, kept]
    norms = np.sqrt(np.einsum("ij,ij->j", raw, weights[:, None] * raw))
    positive = norms > 0.0
    kept = kept[positive]
    raw = raw[:, positive] / norms[positive][None, :]
    modes = _weighted_gram_schmidt(raw, weights)

    probe = modes[surface_index, :] if surface_index is not None else modes
    pick = np.argmax(np.abs(probe), axis=0)
    signs = np.sign(probe[pick, np.arange(probe.shape[1])])
    signs[signs == 0.0] = 1.0
    modes *= signs[None, :]
    return modes, kept


def temporal_coefficients(
    fluct: np.ndarray, weights: np.ndarray, modes: np.ndarray
) -> np.ndarray:
    """a_i(t_k) = <P'[:, k], psi_i>_w, shape (n_modes, n_snaps)."""
    return modes.T @ (np.asarray(weights)[:, None] * np.asarray(fluct))


@dataclass
class PodBasis:
    """Weighted POD basis of a snapshot ensemble.

    All positive-energy modes are stored (completeness); ``M`` is the
    analysis truncation used for mode-level reporting.
    """

    lambdas: np.ndarray
    Q: np.ndarray
    modes: np.ndarray
    temporal: np.ndarray
    times: np.ndarray
    M: int

    @classmethod
    def from_ensemble(
        cls,
        fluct: np.ndarray,
        weights: np.ndarray,
        times: np.ndarray,
        analysis_modes: int = DEFAULT_ANALYSIS_MODES,
        surface_index: np.ndarray | None = None,
    ) -> "PodBasis":
        G = correlation_matrix(fluct, weights)
        lam, Q = eigendecompose(G)
        modes, kept = compute_modes(
            fluct, weights, lam, Q, surface_index=surface_index
        )
        a = temporal_coefficients(fluct, weights, modes)
        return cls(
            lambdas=lam[kept],
            Q=Q[:, kept],
            modes=modes,
            temporal=a,
            times=np.asarray(times, dtype=float),
            M=min(analysis_modes, modes.shape[1]),
        )

    @property
    def n_modes(self) -> int:
        return self.modes.shape[1]

    @property
    def n_snapshots(self) -> int:
        return self.temporal.shape[1]

    def energy_fractions(self) -> np.ndarray:
        total = self.lambdas.sum()
        return self.lambdas / total if total > 0 else self.lambdas

    def n_modes_for_energy(self, fraction: float) -> int:
        """Smallest mode count whose cumulative energy reaches fraction."""
        cum = np.cumsum(self.energy_fractions())
        return int(np.searchsorted(cum, fraction - 1e-15) + 1)

    def reconstruct(self, mean: np.ndarray, n_modes: int | None = None) -> np.ndarray:
        m = self.n_modes if n_modes is None else n_modes
        return mean[:, None] + self.modes[:, :m] @ self.temporal[:m, :]


def save_basis(basis: PodBasis, path) -> None:
    containers.write_basis(
        path, basis.lambdas, basis.Q, basis.modes, basis.temporal, basis.times
    )


def load_basis(path, analysis_modes: int = DEFAULT_ANALYSIS_MODES) -> PodBasis:
    lam, Q, modes, temporal, times = containers.read_basis(path)
    return PodBasis(
        lambdas=lam,
        Q=Q,
        modes=modes,
        temporal=temporal,
        times=times,
        M=min(analysis_modes, modes.shape[1]),
    )


def export_eigenvalues_csv(basis: PodBasis, path, header_comment: str = "") -> None:
    fractions = basis.energy_fractions()
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write("mode,lambda,lambda_normalized\n")
        for i, (lam, frac) in enumerate(zip(basis.lambdas, fractions), start=1):
            fh.write(f"{i},{float(lam)!r},{float(frac)!r}\n")


def export_temporal_csv(basis: PodBasis, path, header_comment: str = "") -> None:
    m = basis.M
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write("t," + ",".join(f"a_{i}" for i in range(1, m + 1)) + "\n")
        for k, t in enumerate(basis.times):
            vals = ",".join(repr(float(basis.temporal[i, k])) for i in range(m))
            fh.write(f"{float(t)!r},{vals}\n")

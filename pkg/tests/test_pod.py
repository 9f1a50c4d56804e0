import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pmdflow.errors import DegenerateMode
from pmdflow.pod import (
    PodBasis,
    compute_modes,
    correlation_matrix,
    eigendecompose,
    save_basis,
    load_basis,
    temporal_coefficients,
)


def rng_ensemble(seed, n_points=30, n_snaps=8):
    rng = np.random.default_rng(seed)
    fluct = rng.normal(size=(n_points, n_snaps))
    fluct -= fluct.mean(axis=1, keepdims=True)
    weights = rng.uniform(0.2, 2.0, size=n_points)
    return fluct, weights


def weighted_svd_oracle(fluct, weights):
    """Independent route: plain SVD of the sqrt(w)-scaled matrix."""
    sq = np.sqrt(weights)
    U, S, Vt = np.linalg.svd(sq[:, None] * fluct, full_matrices=False)
    modes = U / sq[:, None]
    lambdas = S**2 / fluct.shape[1]
    return modes, lambdas, Vt.T


# ---------------------------------------------------------------------------
# correlation matrix
# ---------------------------------------------------------------------------

def test_correlation_zero():
    G = correlation_matrix(np.zeros((10, 4)), np.ones(10))
    assert np.max(np.abs(G)) == 0.0


def test_correlation_single_column():
    c = np.array([1.0, -2.0, 0.5])
    w = np.array([2.0, 1.0, 4.0])
    G = correlation_matrix(c[:, None], w)
    assert G.shape == (1, 1)
    assert G[0, 0] == pytest.approx(np.sum(w * c * c), rel=1e-14)


def test_correlation_matches_bruteforce():
    fluct, weights = rng_ensemble(0, n_points=20, n_snaps=5)
    G = correlation_matrix(fluct, weights)
    # oracle: explicit loops over the definition
    n = fluct.shape[1]
    G_ref = np.zeros((n, n))
    for k in range(n):
        for l in range(n):
            G_ref[k, l] = np.sum(weights * fluct[:, k] * fluct[:, l]) / n
    np.testing.assert_allclose(G, G_ref, atol=1e-12)
    np.testing.assert_allclose(G, G.T, atol=0)


# ---------------------------------------------------------------------------
# eigendecomposition
# ---------------------------------------------------------------------------

def test_eigen_identity():
    lam, Q = eigendecompose(np.eye(3))
    np.testing.assert_allclose(lam, 1.0, atol=1e-14)
    resid = np.eye(3) @ Q - Q * lam[None, :]
    assert np.max(np.abs(resid)) < 1e-12


def test_eigen_diagonal():
    lam, Q = eigendecompose(np.diag([4.0, 1.0, 0.0]))
    np.testing.assert_allclose(lam, [4.0, 1.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(np.abs(Q), np.eye(3)[:, [0, 1, 2]], atol=1e-14)


def test_eigen_reconstructs_random_symmetric():
    rng = np.random.default_rng(42)
    A = rng.normal(size=(10, 10))
    G = 0.5 * (A + A.T)
    lam_raw, Q = eigendecompose(G)
    # negatives are clipped for POD use; undo for the reconstruction oracle
    lam_full = np.sort(np.linalg.eigvalsh(G))[::-1]
    recon = Q @ np.diag(lam_full) @ Q.T
    assert np.max(np.abs(recon - G)) < 1e-10
    assert np.all(np.diff(lam_raw) <= 1e-14)
    np.testing.assert_allclose(Q.T @ Q, np.eye(10), atol=1e-12)


# ---------------------------------------------------------------------------
# modes and coefficients
# ---------------------------------------------------------------------------

def test_rank_one_mode():
    rng = np.random.default_rng(3)
    c = rng.normal(size=25)
    s = np.sin(2 * np.pi * np.arange(6) / 6)
    fluct = np.outer(c, s)
    weights = rng.uniform(0.5, 1.5, size=25)
    G = correlation_matrix(fluct, weights)
    lam, Q = eigendecompose(G)
    modes, kept = compute_modes(fluct, weights, lam, Q, n_modes=1)
    assert modes.shape[1] == 1
    norm = np.sqrt(modes[:, 0] @ (weights * modes[:, 0]))
    assert norm == pytest.approx(1.0, abs=1e-12)
    cosine = abs(modes[:, 0] @ (weights * c)) / np.sqrt(c @ (weights * c))
    assert cosine == pytest.approx(1.0, abs=1e-10)
    a = temporal_coefficients(fluct, weights, modes)
    corr = np.corrcoef(a[0], s)[0, 1]
    assert abs(corr) == pytest.approx(1.0, abs=1e-10)


def test_rank_one_degenerate_request():
    c = np.linspace(1.0, 2.0, 12)
    fluct = np.outer(c, [1.0, -1.0, 0.5, -0.5])
    fluct -= fluct.mean(axis=1, keepdims=True)
    w = np.ones(12)
    G = correlation_matrix(fluct, w)
    lam, Q = eigendecompose(G)
    with pytest.raises(DegenerateMode):
        compute_modes(fluct, w, lam, Q, n_modes=2)


def test_two_mode_synthetic():
    # oracle by construction: orthonormal spatial profiles carrying
    # sin(2 pi t) and 0.3 cos(4 pi t) over exactly sampled periods give
    # lambda = 0.5 and 0.045 (ratio 100/9)
    rng = np.random.default_rng(9)
    n_pts = 40
    weights = rng.uniform(0.5, 2.0, size=n_pts)
    f1 = rng.normal(size=n_pts)
    f2 = rng.normal(size=n_pts)
    f1 /= np.sqrt(f1 @ (weights * f1))
    f2 -= (f2 @ (weights * f1)) * f1
    f2 /= np.sqrt(f2 @ (weights * f2))
    t = np.arange(40) / 40.0
    fluct = np.outer(f1, np.sin(2 * np.pi * t)) + 0.3 * np.outer(f2, np.cos(4 * np.pi * t))

    G = correlation_matrix(fluct, weights)
    lam, Q = eigendecompose(G)
    assert lam[0] == pytest.approx(0.5, rel=1e-12)
    assert lam[1] == pytest.approx(0.045, rel=1e-12)
    assert lam[0] / lam[1] == pytest.approx(0.5 / 0.045, rel=1e-10)
    modes, _ = compute_modes(fluct, weights, lam, Q, n_modes=2)
    for col, ref in ((0, f1), (1, f2)):
        cosine = abs(modes[:, col] @ (weights * ref))
        assert cosine > 0.999


def test_svd_equivalence_oracle():
    fluct, weights = rng_ensemble(17, n_points=60, n_snaps=12)
    basis = PodBasis.from_ensemble(fluct, weights, times=np.arange(12.0))
    modes_svd, lam_svd, _ = weighted_svd_oracle(fluct, weights)
    r = basis.n_modes
    np.testing.assert_allclose(basis.lambdas, lam_svd[:r], rtol=1e-8)
    for i in range(r):
        a, b = basis.modes[:, i], modes_svd[:, i]
        sign = np.sign(a @ (weights * b))
        np.testing.assert_allclose(a, sign * b, atol=1e-8)


def test_orthonormality_and_covariance():
    fluct, weights = rng_ensemble(23, n_points=50, n_snaps=10)
    basis = PodBasis.from_ensemble(fluct, weights, times=np.arange(10.0))
    gram = basis.modes.T @ (weights[:, None] * basis.modes)
    np.testing.assert_allclose(gram, np.eye(basis.n_modes), atol=1e-10)
    cov = basis.temporal @ basis.temporal.T / basis.n_snapshots
    # the covariance identity applies to the energetic modes; the zero-mean
    # constraint leaves one eigenvalue at the numerical-noise floor
    healthy = basis.lambdas > 1e-12 * basis.lambdas[0]
    np.testing.assert_allclose(
        np.diag(cov)[healthy], basis.lambdas[healthy], rtol=1e-8
    )
    assert np.all(np.diag(cov)[~healthy] < 1e-12 * basis.lambdas[0])
    off = cov - np.diag(np.diag(cov))
    assert np.max(np.abs(off)) < 1e-8 * basis.lambdas[0]


def test_parseval():
    fluct, weights = rng_ensemble(31)
    basis = PodBasis.from_ensemble(fluct, weights, times=np.arange(8.0))
    total = np.sum(basis.temporal**2) / basis.n_snapshots
    assert total == pytest.approx(np.sum(basis.lambdas), rel=1e-8)


def test_full_rank_reconstruction():
    fluct, weights = rng_ensemble(7, n_points=40, n_snaps=9)
    mean = np.linspace(-1, 1, 40)
    W = mean[:, None] + fluct
    basis = PodBasis.from_ensemble(fluct, weights, times=np.arange(9.0))
    recon = basis.reconstruct(mean)
    assert np.max(np.abs(recon - W)) < 1e-10


def test_temporal_zero_fluctuations():
    fluct = np.zeros((20, 5))
    w = np.ones(20)
    basis = PodBasis.from_ensemble(fluct, w, times=np.arange(5.0))
    assert basis.n_modes == 0
    assert basis.temporal.shape == (0, 5)


def test_energy_optimality_against_random_bases():
    # POD's top-r captured energy must beat any random orthonormal set
    fluct, weights = rng_ensemble(2, n_points=20, n_snaps=8)
    basis = PodBasis.from_ensemble(fluct, weights, times=np.arange(8.0))
    n = fluct.shape[1]
    rng = np.random.default_rng(99)
    for r in (1, 2, 4):
        pod_energy = np.sum(basis.lambdas[:r])
        for _ in range(100):
            raw = rng.normal(size=(20, r))
            # orthonormalize in the weighted inner product
            V = np.zeros_like(raw)
            for i in range(r):
                v = raw[:, i]
                for j in range(i):
                    v = v - (V[:, j] @ (weights * v)) * V[:, j]
                V[:, i] = v / np.sqrt(v @ (weights * v))
            proj = V.T @ (weights[:, None] * fluct)
            captured = np.sum(proj**2) / n
            assert captured <= pod_energy * (1 + 1e-10)


def test_basis_roundtrip(tmp_path):
    fluct, weights = rng_ensemble(13)
    basis = PodBasis.from_ensemble(fluct, weights, times=np.arange(8.0))
    path = tmp_path / "basis.pod1"
    save_basis(basis, path)
    back = load_basis(path)
    assert back.lambdas.tobytes() == basis.lambdas.tobytes()
    assert back.modes.tobytes() == basis.modes.tobytes()
    assert back.temporal.tobytes() == basis.temporal.tobytes()
    assert back.M == basis.M


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    n_points=st.integers(8, 40),
    n_snaps=st.integers(2, 10),
)
def test_pod_properties_random(seed, n_points, n_snaps):
    fluct, weights = rng_ensemble(seed, n_points, n_snaps)
    basis = PodBasis.from_ensemble(fluct, weights, times=np.arange(float(n_snaps)))
    if basis.n_modes == 0:
        return
    gram = basis.modes.T @ (weights[:, None] * basis.modes)
    assert np.max(np.abs(gram - np.eye(basis.n_modes))) < 1e-10
    assert np.all(np.diff(basis.lambdas) <= 1e-12 * max(basis.lambdas[0], 1e-30))
    recon = basis.reconstruct(np.zeros(n_points))
    assert np.max(np.abs(recon - fluct)) < 1e-10
    _, lam_svd, _ = weighted_svd_oracle(fluct, weights)
    r = basis.n_modes
    np.testing.assert_allclose(basis.lambdas, lam_svd[:r], rtol=1e-8, atol=1e-12)

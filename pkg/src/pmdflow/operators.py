"""Discrete operators for the fractional-step solver.

Fields live on nodes of a structured (xi, eta) grid with unit index spacing.
eta is always periodic (the O-grid seam); xi is either bounded by the
cylinder wall (ring 0) and the far-field circle (last ring), or periodic for
the square test box used by manufactured-solution checks.

Finite-volume bookkeeping uses half-index faces between adjacent nodes in
both directions. Fluxes are contravariant volume fluxes U = J (xi_x u +
xi_y v), V = J (eta_x u + eta_y v); with face fluxes obtained by averaging
node fluxes, the discrete divergence of a uniform stream vanishes to
round-off (freestream preservation).

The elliptic solves (pressure Poisson, Crank-Nicolson Helmholtz) exploit
that on this grid family the flux coefficients J g^{11}, J g^{22} depend on
the ring only and the cross coefficient J g^{12} vanishes: an azimuthal FFT
decouples the system into independent radial tridiagonal solves, factored
once and reused every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PoissonDivergence
from .grid import OGrid

__all__ = [
    "SolverGeometry",
    "geometry_from_ogrid",
    "periodic_box_geometry",
    "contravariant_fluxes",
    "face_interp_xi",
    "face_interp_eta",
    "div_imbalance",
    "quick_face_xi",
    "quick_face_eta",
    "diffusion_apply",
    "node_gradient",
    "OGridEllipticSolver",
    "BoxEllipticSolver",
]


@dataclass
class SolverGeometry:
    """Metric data in the layout the stencil kernels expect.

    All node arrays are (nr, nq) over unique azimuthal columns (no seam).
    ``a11``/``a22`` are the ring profiles of the elliptic flux coefficients
    J g^{11} and J g^{22}; ``a11f`` holds their xi-face averages.
    """

    periodic_xi: bool
    nr: int
    nq: int
    x: np.ndarray
    y: np.ndarray
    J: np.ndarray
    xi_x: np.ndarray
    xi_y: np.ndarray
    eta_x: np.ndarray
    eta_y: np.ndarray
    a11: np.ndarray
    a22: np.ndarray
    a11f: np.ndarray
    cell_weights: np.ndarray
    theta: np.ndarray | None = None
    radii: np.ndarray | None = None

    @property
    def n_interior(self) -> int:
        return self.nr if self.periodic_xi else self.nr - 2

    def interior(self, arr: np.ndarray) -> np.ndarray:
        return arr if self.periodic_xi else arr[1:-1]


def geometry_from_ogrid(grid: OGrid) -> SolverGeometry:
    gu = grid.unique
    J = gu(grid.jacobian)
    x_xi, x_eta = gu(grid.x_xi), gu(grid.x_eta)
    y_xi, y_eta = gu(grid.y_xi), gu(grid.y_eta)

    a11_full = (x_eta**2 + y_eta**2) / J
    a22_full = (x_xi**2 + y_xi**2) / J
    a12_full = -(x_xi * x_eta + y_xi * y_eta) / J

    scale = np.max(np.abs(a11_full))
    if np.max(np.abs(a12_full)) > 1e-11 * scale:
        raise ValueError(
            "grid is not orthogonal: cross metric coefficient "
            f"{np.max(np.abs(a12_full)):.3e} exceeds tolerance"
        )
    a11 = a11_full[:, 0].copy()
    a22 = a22_full[:, 0].copy()
    for prof, full in ((a11, a11_full), (a22, a22_full)):
        if np.max(np.abs(full - prof[:, None])) > 1e-11 * np.max(np.abs(prof)):
            raise ValueError("elliptic coefficients vary azimuthally")

    return SolverGeometry(
        periodic_xi=False,
        nr=grid.n_radial,
        nq=grid.n_unique,
        x=gu(grid.x).copy(),
        y=gu(grid.y).copy(),
        J=J.copy(),
        xi_x=gu(grid.xi_x).copy(),
        xi_y=gu(grid.xi_y).copy(),
        eta_x=gu(grid.eta_x).copy(),
        eta_y=gu(grid.eta_y).copy(),
        a11=a11,
        a22=a22,
        a11f=0.5 * (a11[:-1] + a11[1:]),
        cell_weights=grid.cell_weights(),
        theta=grid.theta.copy(),
        radii=grid.radii.copy(),
    )


def periodic_box_geometry(n: int, length: float) -> SolverGeometry:
    """Uniform doubly periodic square box of n x n nodes (test topology)."""
    h = length / n
    xv = h * np.arange(n)
    x, y = np.meshgrid(xv, xv, indexing="ij")
    J = np.full((n, n), h * h)
    ones = np.ones(n)
    return SolverGeometry(
        periodic_xi=True,
        nr=n,
        nq=n,
        x=x,
        y=y,
        J=J,
        xi_x=np.full((n, n), 1.0 / h),
        xi_y=np.zeros((n, n)),
        eta_x=np.zeros((n, n)),
        eta_y=np.full((n, n), 1.0 / h),
        a11=ones.copy(),
        a22=ones.copy(),
        a11f=ones.copy(),
        cell_weights=J.copy(),
    )


# ---------------------------------------------------------------------------
# stencil kernels
# ---------------------------------------------------------------------------

def contravariant_fluxes(geo: SolverGeometry, u, v):
    U = geo.J * (geo.xi_x * u + geo.xi_y * v)
    V = geo.J * (geo.eta_x * u + geo.eta_y * v)
    return U, V


def face_interp_xi(geo: SolverGeometry, U):
    """Average node values onto xi-faces; face i sits between rings i, i+1."""
    if geo.periodic_xi:
        return 0.5 * (U + np.roll(U, -1, axis=0))
    return 0.5 * (U[:-1] + U[1:])


def face_interp_eta(V):
    """Average node values onto eta-faces; face j sits between j, j+1 (mod)."""
    return 0.5 * (V + np.roll(V, -1, axis=1))


def div_imbalance(geo: SolverGeometry, Fxi, Feta):
    """Net face outflow per control volume at solved nodes (flux form, not
    divided by J). Shape (n_interior, nq)."""
    deta = Feta - np.roll(Feta, 1, axis=1)
    if geo.periodic_xi:
        return Fxi - np.roll(Fxi, 1, axis=0) + deta
    return Fxi[1:] - Fxi[:-1] + deta[1:-1]


def quick_face_xi(geo: SolverGeometry, q, F):
    """QUICK-interpolated xi-face values of q, upwinded on the face flux F.

    Quadratic upstream interpolation: 6/8 upwind + 3/8 downwind - 1/8
    far-upwind. At the two wall/far-field-adjacent faces the far-upwind node
    does not exist for one flux direction; those fall back to the linear
    average.
    """
    if geo.periodic_xi:
        qm1 = np.roll(q, 1, axis=0)
        qp1 = np.roll(q, -1, axis=0)
        qp2 = np.roll(q, -2, axis=0)
        pos = (6.0 * q + 3.0 * qp1 - qm1) / 8.0
        neg = (6.0 * qp1 + 3.0 * q - qp2) / 8.0
        return np.where(F >= 0.0, pos, neg)
    lin = 0.5 * (q[:-1] + q[1:])
    pos = lin.copy()
    pos[1:] = (6.0 * q[1:-1] + 3.0 * q[2:] - q[:-2]) / 8.0
    neg = lin.copy()
    neg[:-1] = (6.0 * q[1:-1] + 3.0 * q[:-2] - q[2:]) / 8.0
    return np.where(F >= 0.0, pos, neg)


def quick_face_eta(q, V):
    qm1 = np.roll(q, 1, axis=1)
    qp1 = np.roll(q, -1, axis=1)
    qp2 = np.roll(q, -2, axis=1)
    pos = (6.0 * q + 3.0 * qp1 - qm1) / 8.0
    neg = (6.0 * qp1 + 3.0 * q - qp2) / 8.0
    return np.where(V >= 0.0, pos, neg)


def convective_imbalance(geo: SolverGeometry, q, Fxi, Feta):
    """Flux-form divergence of (U q, V q) with QUICK face values of q."""
    qf_xi = quick_face_xi(geo, q, Fxi)
    qf_eta = quick_face_eta(q, Feta)
    return div_imbalance(geo, Fxi * qf_xi, Feta * qf_eta)


def diffusion_apply(geo: SolverGeometry, q):
    """Flux-form scalar Laplacian at solved nodes (all faces compact).

    Returns sum of a-weighted face differences; divide by J for the
    physical Laplacian.
    """
    if geo.periodic_xi:
        fx = geo.a11f[:, None] * (np.roll(q, -1, axis=0) - q)
        dxi = fx - np.roll(fx, 1, axis=0)
        fy = geo.a22[:, None] * (np.roll(q, -1, axis=1) - q)
        deta = fy - np.roll(fy, 1, axis=1)
        return dxi + deta
    fx = geo.a11f[:, None] * (q[1:] - q[:-1])
    dxi = fx[1:] - fx[:-1]
    fy = geo.a22[:, None] * (np.roll(q, -1, axis=1) - q)
    deta = (fy - np.roll(fy, 1, axis=1))[1:-1]
    return dxi + deta


def _d_xi(geo: SolverGeometry, p):
    if geo.periodic_xi:
        return 0.5 * (np.roll(p, -1, axis=0) - np.roll(p, 1, axis=0))
    out = np.empty_like(p)
    out[1:-1] = 0.5 * (p[2:] - p[:-2])
    out[0] = -1.5 * p[0] + 2.0 * p[1] - 0.5 * p[2]
    out[-1] = 1.5 * p[-1] - 2.0 * p[-2] + 0.5 * p[-3]
    return out


def _d_eta(p):
    return 0.5 * (np.roll(p, -1, axis=1) - np.roll(p, 1, axis=1))


def node_gradient(geo: SolverGeometry, p):
    """Cartesian gradient (px, py) at every node (central, one-sided 2nd
    order at bounded xi ends)."""
    dp_xi = _d_xi(geo, p)
    dp_eta = _d_eta(p)
    px = geo.xi_x * dp_xi + geo.eta_x * dp_eta
    py = geo.xi_y * dp_xi + geo.eta_y * dp_eta
    return px, py


# ---------------------------------------------------------------------------
# elliptic direct solvers
# ---------------------------------------------------------------------------

class _FourierTridiag:
    """Batch of radial tridiagonal systems, one per azimuthal Fourier mode.

    Coefficients are real and time-independent; factoring happens once. The
    solve does an rfft over eta, Thomas sweeps over the radius (vectorized
    across modes), and an irfft back.
    """

    def __init__(self, lo, up, diag, nq, pin_first_k0=False):
        # lo/up: (ni,) radial couplings; diag: (ni, nk)
        self.nq = nq
        ni, nk = diag.shape
        self.ni = ni
        up_k = np.repeat(up[:, None], nk, axis=1).astype(float)
        lo_k = np.repeat(lo[:, None], nk, axis=1).astype(float)
        diag = diag.astype(float).copy()
        if pin_first_k0:
            diag[0, 0] = 1.0
            up_k[0, 0] = 0.0
            lo_k[0, 0] = 0.0
        self.pin_first_k0 = pin_first_k0
        w = np.zeros_like(diag)
        dhat = diag.copy()
        for i in range(1, ni):
            w[i] = lo_k[i] / dhat[i - 1]
            dhat[i] = diag[i] - w[i] * up_k[i - 1]
        self.w = w
        self.dhat = dhat
        self.up = up_k

    def solve(self, rhs):
        # rhs: (ni, nq) real
        R = np.fft.rfft(rhs, axis=1)
        if self.pin_first_k0:
            R[0, 0] = 0.0
        for i in range(1, self.ni):
            R[i] -= self.w[i] * R[i - 1]
        R[-1] /= self.dhat[-1]
        for i in range(self.ni - 2, -1, -1):
            R[i] = (R[i] - self.up[i] * R[i + 1]) / self.dhat[i]
        return np.fft.irfft(R, n=self.nq, axis=1)


class OGridEllipticSolver:
    """Pressure-Poisson and momentum-Helmholtz solves on the O-grid."""

    def __init__(self, geo: SolverGeometry):
        if geo.periodic_xi:
            raise ValueError("use BoxEllipticSolver for periodic-xi grids")
        self.geo = geo
        nq = geo.nq
        self.nk = nq // 2 + 1
        self.mu = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(self.nk) / nq)
        ni = geo.n_interior
        rings = np.arange(1, geo.nr - 1)

        # Poisson: couplings only across faces between interior rings; the
        # wall- and farfield-adjacent faces are Neumann (prescribed flux).
        lo = np.zeros(ni)
        up = np.zeros(ni)
        lo[1:] = geo.a11f[rings[1:] - 1]
        up[:-1] = geo.a11f[rings[:-1]]
        b_prof = geo.a22[rings]
        diag = -(lo + up)[:, None] - b_prof[:, None] * self.mu[None, :]
        self._poisson = _FourierTridiag(lo, up, diag, nq, pin_first_k0=True)
        self._p_gapc = geo.a11f[rings[:-1]]  # faces between interior rings
        self._b_prof = b_prof
        self._Jint = geo.J[1:-1]
        self._wint = geo.cell_weights[1:-1]

    def poisson_apply(self, phi):
        """Flux-form Laplacian of an interior-ring field (Neumann closure)."""
        gapc = self._p_gapc[:, None]
        fx = gapc * (phi[1:] - phi[:-1])
        out = np.zeros_like(phi)
        out[:-1] += fx
        out[1:] -= fx
        fy = self._b_prof[:, None] * (np.roll(phi, -1, axis=1) - phi)
        out += fy - np.roll(fy, 1, axis=1)
        return out

    def poisson_solve(self, b, tol=1e-12, max_refine=8, weight_inv=None):
        """Solve A phi = b (flux form) with the mean of phi pinned to zero.

        b is projected onto the compatible subspace (volume-weighted), the
        pinned direct solve is refined until the max-norm residual drops
        below tol. weight_inv rescales the residual before the max (pass
        1/J to measure it in physical per-area units). Raises
        PoissonDivergence if refinement stalls.
        """
        w = self._Jint
        b = b - w * (b.sum() / w.sum())

        def rmax_of(resid):
            if weight_inv is None:
                return float(np.max(np.abs(resid)))
            return float(np.max(np.abs(resid * weight_inv)))

        phi = self._poisson.solve(b)
        resid = b - self.poisson_apply(phi)
        rmax = rmax_of(resid)
        iters = 0
        while rmax > tol and iters < max_refine:
            phi = phi + self._poisson.solve(resid)
            resid = b - self.poisson_apply(phi)
            rmax = rmax_of(resid)
            iters += 1
        if rmax > tol:
            raise PoissonDivergence(rmax, tol, iters)
        phi = phi - np.sum(self._wint * phi) / np.sum(self._wint)
        return phi, rmax, iters

    def helmholtz_factor(self, c: float) -> "_HelmholtzHandle":
        """Factor (J - c * Lap_flux) over interior rings for constant c."""
        geo = self.geo
        ni = geo.n_interior
        rings = np.arange(1, geo.nr - 1)
        lo = np.zeros(ni)
        up = np.zeros(ni)
        lo[1:] = -c * geo.a11f[rings[1:] - 1]
        up[:-1] = -c * geo.a11f[rings[:-1]]
        j_prof = geo.J[rings, 0]
        diag_base = (
            j_prof
            + c * (geo.a11f[rings - 1] + geo.a11f[rings])
        )
        diag = diag_base[:, None] + c * geo.a22[rings][:, None] * self.mu[None, :]
        tri = _FourierTridiag(lo, up, diag, geo.nq)
        return _HelmholtzHandle(tri, c, geo.a11f[0], geo.a11f[-1])


class _HelmholtzHandle:
    def __init__(self, tri, c, wall_coef, outer_coef):
        self._tri = tri
        self.c = c
        self._wall_coef = wall_coef
        self._outer_coef = outer_coef

    def solve(self, rhs_times_J, q_wall, q_outer):
        """Solve (J - c Lap) q = J * rhs with Dirichlet ring values."""
        R = rhs_times_J.copy()
        R[0] += self.c * self._wall_coef * q_wall
        R[-1] += self.c * self._outer_coef * q_outer
        return self._tri.solve(R)


class BoxEllipticSolver:
    """Spectral solves on the doubly periodic uniform box."""

    def __init__(self, geo: SolverGeometry):
        if not geo.periodic_xi:
            raise ValueError("BoxEllipticSolver requires a periodic box")
        self.geo = geo
        n = geo.nr
        mu_xi = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(n) / n)
        nk = geo.nq // 2 + 1
        mu_eta = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(nk) / geo.nq)
        self._lap_sym = -(mu_xi[:, None] + mu_eta[None, :])
        self._Jval = float(geo.J[0, 0])

    def poisson_apply(self, phi):
        return diffusion_apply(self.geo, phi)

    def poisson_solve(self, b, tol=1e-12, max_refine=8, weight_inv=None):
        b = b - b.mean()
        sym = self._lap_sym.copy()
        sym[0, 0] = 1.0

        def direct(rhs):
            R = np.fft.rfft2(rhs)
            R[0, 0] = 0.0
            return np.fft.irfft2(R / sym, s=rhs.shape)

        def rmax_of(resid):
            if weight_inv is None:
                return float(np.max(np.abs(resid)))
            return float(np.max(np.abs(resid * weight_inv)))

        phi = direct(b)
        resid = b - self.poisson_apply(phi)
        rmax = rmax_of(resid)
        iters = 0
        while rmax > tol and iters < max_refine:
            phi = phi + direct(resid)
            resid = b - self.poisson_apply(phi)
            rmax = rmax_of(resid)
            iters += 1
        if rmax > tol:
            raise PoissonDivergence(rmax, tol, iters)
        return phi - phi.mean(), rmax, iters

    def helmholtz_factor(self, c: float):
        denom = self._Jval - c * self._lap_sym
        box = self

        class _BoxHelmholtz:
            def solve(self, rhs_times_J, q_wall=None, q_outer=None):
                R = np.fft.rfft2(rhs_times_J)
                return np.fft.irfft2(R / denom, s=rhs_times_J.shape)

        return _BoxHelmholtz()

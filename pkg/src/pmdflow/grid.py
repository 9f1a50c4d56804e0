"""O-type cylinder grid in generalized coordinates.

The grid wraps a unit-diameter cylinder with concentric rings of nodes.
Computational coordinates are (xi, eta) with unit index spacing: xi runs
radially from the cylinder surface (ring 0, r = D/2) to the far-field circle
(last ring, r = domain_diameter/2), eta runs counterclockwise around the
cylinder. The circumferential seam is stored twice: column `n_circ - 1`
duplicates column 0, so a 193x257 request yields 193x257 stored nodes with
256 unique azimuthal positions (the paper-style point count). All numerics
operate on the unique columns; helpers below slice the seam off.

Angle convention: theta = 0 on the downstream ray (+x), theta = pi at the
upstream stagnation ray, counterclockwise positive.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import GridValidationError

__all__ = [
    "GridSpec",
    "OGrid",
    "build_grid",
    "surface_arc_elements",
    "integrate_surface",
    "export_grid_binary",
    "load_grid_binary",
    "export_grid_csv",
]


@dataclass(frozen=True)
class GridSpec:
    """User-facing description of an O-grid.

    n_circ counts stored circumferential points including the duplicated
    seam column, matching the usual "193x257 points" bookkeeping; the number
    of unique azimuthal stations is ``n_circ - 1``.
    """

    n_radial: int
    n_circ: int
    domain_diameter: float
    cylinder_diameter: float = 1.0
    stretch_ratio: float = 3.7

    def validate(self) -> None:
        if self.n_radial < 3:
            raise GridValidationError(
                f"n_radial must be >= 3, got {self.n_radial}"
            )
        if self.n_circ < 8:
            raise GridValidationError(f"n_circ must be >= 8, got {self.n_circ}")
        if self.cylinder_diameter <= 0:
            raise GridValidationError(
                f"cylinder_diameter must be positive, got {self.cylinder_diameter}"
            )
        if self.domain_diameter <= self.cylinder_diameter:
            raise GridValidationError(
                "domain_diameter must exceed cylinder_diameter, got "
                f"{self.domain_diameter} <= {self.cylinder_diameter}"
            )
        if self.stretch_ratio < 1.0:
            raise GridValidationError(
                f"stretch_ratio must be >= 1 (1 = uniform), got {self.stretch_ratio}"
            )

    @property
    def n_unique(self) -> int:
        return self.n_circ - 1


@dataclass
class OGrid:
    """O-grid with node coordinates, metric derivatives and Jacobian.

    Arrays are shaped (n_radial, n_circ) with the seam column duplicated,
    except ``theta`` which holds the n_circ - 1 unique surface angles in
    [0, 2*pi). Metric arrays hold d(xi)/dx etc. per node; ``x_xi`` and
    friends are the forward map derivatives the inverses were built from.
    """

    spec: GridSpec
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    jacobian: np.ndarray
    x_xi: np.ndarray
    x_eta: np.ndarray
    y_xi: np.ndarray
    y_eta: np.ndarray
    xi_x: np.ndarray = field(init=False)
    xi_y: np.ndarray = field(init=False)
    eta_x: np.ndarray = field(init=False)
    eta_y: np.ndarray = field(init=False)

    def __post_init__(self):
        J = self.jacobian
        self.xi_x = self.y_eta / J
        self.xi_y = -self.x_eta / J
        self.eta_x = -self.y_xi / J
        self.eta_y = self.x_xi / J

    @property
    def n_radial(self) -> int:
        return self.x.shape[0]

    @property
    def n_circ(self) -> int:
        return self.x.shape[1]

    @property
    def n_unique(self) -> int:
        return self.n_circ - 1

    @property
    def radii(self) -> np.ndarray:
        """Ring radii (distance of each ring from the cylinder axis)."""
        return np.hypot(self.x[:, 0], self.y[:, 0])

    def unique(self, arr: np.ndarray) -> np.ndarray:
        """View of a node array without the duplicated seam column."""
        return arr[..., : self.n_unique]

    def cell_weights(self) -> np.ndarray:
        """Area weight per unique node: J * dxi * deta, trapezoid-ended.

        dxi = deta = 1 by construction; the first and last radial rings get
        half weight so the weights tile the annulus once. Summing the result
        reproduces the annulus area to discretization error.
        """
        w = self.unique(self.jacobian).copy()
        w[0, :] *= 0.5
        w[-1, :] *= 0.5
        return w

    def total_area(self) -> float:
        return float(self.cell_weights().sum())

    def surface_index(self) -> np.ndarray:
        """Flat indices of the cylinder-surface nodes in a (n_radial *
        n_unique) row-major flattening of unique-node fields, ordered by
        increasing theta."""
        return np.arange(self.n_unique, dtype=np.int64)


def _radial_profile(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Ring radii and dr/d(index) with tanh clustering toward the wall.

    stretch_ratio = 1 gives uniform spacing; larger values cluster rings at
    the cylinder surface. The default 3.7 puts the first spacing near
    0.005 D on a 193-ring, 40 D grid (resolves the Re = 200 boundary layer).
    Returns the analytic profile derivative alongside the radii; the grid
    builder uses it at the two end rings where one-sided differences of a
    strongly stretched profile can lose monotonicity.
    """
    r_in = 0.5 * spec.cylinder_diameter
    r_out = 0.5 * spec.domain_diameter
    span = r_out - r_in
    n = spec.n_radial
    xi = np.linspace(0.0, 1.0, n)
    beta = spec.stretch_ratio - 1.0
    if beta < 1e-12:
        s = xi
        ds = np.ones_like(xi)
    else:
        s = 1.0 + np.tanh(beta * (xi - 1.0)) / np.tanh(beta)
        s[0] = 0.0
        s[-1] = 1.0
        ds = beta / np.tanh(beta) / np.cosh(beta * (xi - 1.0)) ** 2
    return r_in + span * s, span * ds / (n - 1)


def _central_eta_periodic(arr: np.ndarray) -> np.ndarray:
    """Second-order d/deta on the unique columns, periodic wraparound."""
    return 0.5 * (np.roll(arr, -1, axis=1) - np.roll(arr, 1, axis=1))


def build_grid(spec: GridSpec) -> OGrid:
    """Construct the O-grid with metrics and Jacobian for a validated spec."""
    spec.validate()
    n_uniq = spec.n_unique
    r, dr_di = _radial_profile(spec)
    theta = 2.0 * np.pi * np.arange(n_uniq) / n_uniq

    xu = r[:, None] * np.cos(theta)[None, :]
    yu = r[:, None] * np.sin(theta)[None, :]

    # radial metric: interior by central differencing of the coordinates,
    # end rings from the analytic profile slope (keeps J > 0 on any grid)
    dr = dr_di.copy()
    dr[1:-1] = 0.5 * (r[2:] - r[:-2])
    x_xi = dr[:, None] * np.cos(theta)[None, :]
    y_xi = dr[:, None] * np.sin(theta)[None, :]
    x_eta = _central_eta_periodic(xu)
    y_eta = _central_eta_periodic(yu)
    jac = x_xi * y_eta - x_eta * y_xi
    if np.any(jac <= 0):
        raise GridValidationError("grid Jacobian not positive everywhere")

    def seam(a):
        return np.concatenate([a, a[:, :1]], axis=1)

    return OGrid(
        spec=spec,
        x=seam(xu),
        y=seam(yu),
        theta=theta,
        jacobian=seam(jac),
        x_xi=seam(x_xi),
        x_eta=seam(x_eta),
        y_xi=seam(y_xi),
        y_eta=seam(y_eta),
    )


def surface_arc_elements(grid: OGrid) -> list[tuple[float, float]]:
    """(theta, dtheta) quadrature pairs over the cylinder surface.

    Periodic trapezoidal rule on the uniformly spaced surface nodes:
    every node carries dtheta = 2*pi/n_unique, which integrates sin(k
    theta) and cos(k theta) to round-off for all k below the Nyquist limit.
    """
    dtheta = 2.0 * np.pi / grid.n_unique
    return [(float(t), dtheta) for t in grid.theta]


def integrate_surface(grid: OGrid, values: np.ndarray) -> float:
    """Integral of a surface field over theta in [0, 2*pi) (trapezoidal)."""
    values = np.asarray(values)
    if values.shape[-1] == grid.n_circ:
        values = values[..., : grid.n_unique]
    if values.shape[-1] != grid.n_unique:
        raise ValueError(
            f"surface field has {values.shape[-1]} entries, "
            f"expected {grid.n_unique} (or {grid.n_circ} with seam)"
        )
    return float(values.sum(axis=-1) * (2.0 * np.pi / grid.n_unique))


_GRID_HEADER = struct.Struct("<ii")


def export_grid_binary(grid: OGrid, path) -> None:
    """Plain binary dump: two int32 LE dims, then x and y planes as float64
    LE, row-major with the radial index slowest."""
    with open(path, "wb") as fh:
        fh.write(_GRID_HEADER.pack(grid.n_radial, grid.n_circ))
        fh.write(np.ascontiguousarray(grid.x, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(grid.y, dtype="<f8").tobytes())


def load_grid_binary(path) -> tuple[np.ndarray, np.ndarray]:
    """Read back a grid binary; returns (x, y) planes."""
    with open(path, "rb") as fh:
        ni, nj = _GRID_HEADER.unpack(fh.read(_GRID_HEADER.size))
        count = ni * nj
        x = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(ni, nj)
        y = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(ni, nj)
    return x.copy(), y.copy()


def export_grid_csv(grid: OGrid, path, header_comment: str = "") -> None:
    """Debug dump: one row per stored node with coordinates and Jacobian."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "x", "y", "jacobian"])
        for i in range(grid.n_radial):
            for j in range(grid.n_circ):
                writer.writerow(
                    [
                        i,
                        j,
                        repr(float(grid.x[i, j])),
                        repr(float(grid.y[i, j])),
                        repr(float(grid.jacobian[i, j])),
                    ]
                )

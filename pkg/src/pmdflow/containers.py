"""Binary container formats shared by the pipeline stages.

All integers are 32-bit little-endian, all floats 64-bit little-endian.

Ensemble file (magic ``PMD1``): header (n_points, n_snaps, n_surface),
then times, weights, surface_index (int32) and the snapshot matrix in
column-major order (one full pressure field per column).

Basis file (magic ``POD1``): header (n_points, n_snaps, n_modes, n_kept),
then eigenvalues, snapshot-space eigenvectors Q (n_snaps x n_kept), spatial
modes (n_points x n_kept), temporal coefficients (n_kept x n_snaps) and
snapshot times, each column-major.

Flow-state checkpoint (magic ``FLOW``): header (n_radial, n_unique), time
as one float, then the u, v, p planes row-major.
"""

from __future__ import annotations

import struct

import numpy as np

_I32 = "<i4"
_F64 = "<f8"


def _write_array(fh, arr, dtype=_F64, order="F"):
    fh.write(np.asarray(arr).astype(dtype).tobytes(order=order))


def _read_array(fh, count, dtype=_F64):
    itemsize = np.dtype(dtype).itemsize
    buf = fh.read(count * itemsize)
    if len(buf) != count * itemsize:
        raise IOError("container truncated")
    return np.frombuffer(buf, dtype=dtype).copy()


def write_ensemble(path, data, weights, times, surface_index):
    data = np.asarray(data)
    n_points, n_snaps = data.shape
    with open(path, "wb") as fh:
        fh.write(b"PMD1")
        fh.write(struct.pack("<iii", n_points, n_snaps, len(surface_index)))
        _write_array(fh, times)
        _write_array(fh, weights)
        _write_array(fh, surface_index, dtype=_I32)
        _write_array(fh, data, order="F")


def read_ensemble(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != b"PMD1":
            raise IOError(f"not an ensemble file (magic {magic!r})")
        n_points, n_snaps, n_surface = struct.unpack("<iii", fh.read(12))
        times = _read_array(fh, n_snaps)
        weights = _read_array(fh, n_points)
        surface_index = _read_array(fh, n_surface, dtype=_I32).astype(np.int64)
        data = _read_array(fh, n_points * n_snaps).reshape(
            (n_points, n_snaps), order="F"
        )
    return data, weights, times, surface_index


def write_basis(path, lambdas, Q, modes, temporal, times):
    modes = np.asarray(modes)
    Q = np.asarray(Q)
    n_points, n_kept = modes.shape
    n_snaps = Q.shape[0]
    with open(path, "wb") as fh:
        fh.write(b"POD1")
        fh.write(struct.pack("<iiii", n_points, n_snaps, n_kept, n_kept))
        _write_array(fh, lambdas)
        _write_array(fh, Q, order="F")
        _write_array(fh, modes, order="F")
        _write_array(fh, temporal, order="F")
        _write_array(fh, times)


def read_basis(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != b"POD1":
            raise IOError(f"not a basis file (magic {magic!r})")
        n_points, n_snaps, n_kept, _ = struct.unpack("<iiii", fh.read(16))
        lambdas = _read_array(fh, n_kept)
        Q = _read_array(fh, n_snaps * n_kept).reshape((n_snaps, n_kept), order="F")
        modes = _read_array(fh, n_points * n_kept).reshape(
            (n_points, n_kept), order="F"
        )
        temporal = _read_array(fh, n_kept * n_snaps).reshape(
            (n_kept, n_snaps), order="F"
        )
        times = _read_array(fh, n_snaps)
    return lambdas, Q, modes, temporal, times


def write_state(path, u, v, p, t):
    u = np.asarray(u)
    with open(path, "wb") as fh:
        fh.write(b"FLOW")
        fh.write(struct.pack("<ii", u.shape[0], u.shape[1]))
        fh.write(struct.pack("<d", t))
        for plane in (u, v, p):
            _write_array(fh, plane, order="C")


def read_state(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != b"FLOW":
            raise IOError(f"not a flow-state file (magic {magic!r})")
        nr, nq = struct.unpack("<ii", fh.read(8))
        (t,) = struct.unpack("<d", fh.read(8))
        planes = [
            _read_array(fh, nr * nq).reshape((nr, nq), order="C") for _ in range(3)
        ]
    return planes[0], planes[1], planes[2], t

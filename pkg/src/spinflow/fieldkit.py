"""Periodic grids, spectral and finite-difference operators, quadrature, snapshots.

Fields are plain numpy arrays with a fixed layout:

* scalar:  shape ``(n1, n2, n3)``, real or complex
* vector:  shape ``(3, n1, n2, n3)``, real
* spinor:  shape ``(2, n1, n2, n3)``, complex

The trailing three axes are always the grid axes, so every operator below
works on arrays with any number of leading component axes.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

SCHEMES = ("spectral", "central2")


def fft_workers() -> int:
    """Thread count for FFT kernels, capped by ``SPINFLOW_THREADS``."""
    raw = os.environ.get("SPINFLOW_THREADS")
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Constants:
    """Physical constants. ``charge`` is signed, everything else positive."""

    hbar: float = 1.0
    mass: float = 1.0
    charge: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        for name in ("hbar", "mass", "c"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise ValueError(f"{name} must be positive and finite, got {val}")
        if not np.isfinite(self.charge):
            raise ValueError("charge must be finite")

    @property
    def mu_B(self) -> float:
        """Bohr magneton with the sign carried by the charge, -e hbar / 2 m c."""
        return -self.charge * self.hbar / (2.0 * self.mass * self.c)

    @property
    def h(self) -> float:
        return 2.0 * np.pi * self.hbar


@dataclass(frozen=True)
class Grid:
    """Uniform periodic 3D lattice.

    Node ``(i, j, k)`` sits at ``origin + (i*dx1, j*dx2, k*dx3)``.
    """

    dims: tuple
    spacing: tuple
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        spacing = tuple(float(d) for d in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or len(spacing) != 3 or len(origin) != 3:
            raise ValueError("dims, spacing and origin need three entries each")
        if min(dims) < 4:
            raise ValueError(f"every grid dimension must be >= 4, got {dims}")
        if min(spacing) <= 0 or not all(np.isfinite(spacing)):
            raise ValueError(f"spacings must be positive, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def centered(cls, dims, half_width, offset=0.0):
        """Box ``[-L, L)`` per axis, optionally shifted by ``offset`` cells."""
        dims = tuple(int(n) for n in np.broadcast_to(dims, 3))
        half = np.broadcast_to(np.asarray(half_width, float), 3)
        spacing = tuple(2.0 * half / np.asarray(dims))
        off = np.broadcast_to(np.asarray(offset, float), 3)
        origin = tuple(-half + off * np.asarray(spacing))
        return cls(dims, spacing, origin)

    @property
    def shape(self):
        return self.dims

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def lengths(self):
        return tuple(n * d for n, d in zip(self.dims, self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def min_spacing(self) -> float:
        return min(self.spacing)

    def axis(self, i):
        return self.origin[i] + self.spacing[i] * np.arange(self.dims[i])

    @cached_property
    def coords(self):
        """Node positions, shape ``(3, n1, n2, n3)``."""
        return np.stack(np.meshgrid(*(self.axis(i) for i in range(3)), indexing="ij"))

    def wavenumbers(self, i):
        return 2.0 * np.pi * sfft.fftfreq(self.dims[i], d=self.spacing[i])

    @cached_property
    def k_squared(self):
        k = [self.wavenumbers(i) for i in range(3)]
        return k[0][:, None, None] ** 2 + k[1][None, :, None] ** 2 + k[2][None, None, :] ** 2

    @property
    def k_max(self):
        """Largest resolved wavenumber per axis (pi/dx for even sizes, 0 for a single layer)."""
        return tuple(float(np.max(np.abs(self.wavenumbers(i)))) for i in range(3))

    def check(self, arr, rank=None):
        """Raise if ``arr`` does not live on this grid."""
        arr = np.asarray(arr)
        if arr.shape[-3:] != self.dims:
            raise ValueError(f"field shape {arr.shape} does not match grid dims {self.dims}")
        if rank is not None and arr.shape[:-3] != rank:
            raise ValueError(f"expected component shape {rank}, got {arr.shape[:-3]}")
        return arr


def _check_finite(arr):
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite values in field")


def _spectral_diff(f, grid, axis, order=1):
    ax = f.ndim - 3 + axis
    n = grid.dims[axis]
    k = grid.wavenumbers(axis)
    if order == 1 and n % 2 == 0:
        # Nyquist mode has no odd derivative on a symmetric grid
        k = k.copy()
        k[n // 2] = 0.0
    mult = (1j * k) ** order
    shape = [1] * f.ndim
    shape[ax] = n
    w = fft_workers()
    if np.iscomplexobj(f):
        out = sfft.ifft(sfft.fft(f, axis=ax, workers=w) * mult.reshape(shape), axis=ax, workers=w)
        return out
    shape[ax] = n // 2 + 1
    mult = mult[: n // 2 + 1].reshape(shape)
    return sfft.irfft(sfft.rfft(f, axis=ax, workers=w) * mult, n=n, axis=ax, workers=w)


def _central_diff(f, grid, axis, order=1):
    ax = f.ndim - 3 + axis
    h = grid.spacing[axis]
    fp = np.roll(f, -1, axis=ax)
    fm = np.roll(f, 1, axis=ax)
    if order == 1:
        return (fp - fm) / (2.0 * h)
    return (fp - 2.0 * f + fm) / h**2


def partial(f, grid: Grid, axis: int, scheme="spectral", order=1):
    """Derivative of ``f`` along one grid axis."""
    if scheme == "spectral":
        return _spectral_diff(f, grid, axis, order)
    if scheme == "central2":
        return _central_diff(f, grid, axis, order)
    raise ValueError(f"unknown scheme {scheme!r}")


def gradient(f, grid: Grid, scheme="spectral"):
    """Gradient; a leading 3-axis is prepended to the input shape."""
    f = grid.check(f)
    return np.stack([partial(f, grid, i, scheme) for i in range(3)])


def divergence(F, grid: Grid, scheme="spectral"):
    F = grid.check(F)
    if F.shape[0] != 3:
        raise ValueError("divergence needs a 3-vector field")
    return sum(partial(F[i], grid, i, scheme) for i in range(3))


def curl(F, grid: Grid, scheme="spectral"):
    F = grid.check(F)
    if F.shape[0] != 3:
        raise ValueError("curl needs a 3-vector field")
    d = lambda comp, ax: partial(F[comp], grid, ax, scheme)
    return np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)])


def laplacian(f, grid: Grid, scheme="spectral"):
    f = grid.check(f)
    return sum(partial(f, grid, i, scheme, order=2) for i in range(3))


_KINDS = {"gradient": gradient, "divergence": divergence, "curl": curl, "laplacian": laplacian}


def derivative(field, grid: Grid, kind="gradient", scheme="spectral"):
    """Dispatch to one of the differential operators by name."""
    if kind not in _KINDS:
        raise ValueError(f"unknown derivative kind {kind!r}")
    field = np.asarray(field)
    _check_finite(field)
    return _KINDS[kind](field, grid, scheme)


def phase_gradient(angle, grid: Grid, period=2 * np.pi, scheme="spectral"):
    """Gradient of an angle-valued field that may wrap by ``period``.

    Differentiates ``exp(i 2 pi angle / period)`` instead of the raw values,
    so branch cuts of the stored representative do not matter.
    """
    scale = 2.0 * np.pi / period
    w = np.exp(1j * scale * np.asarray(angle))
    dw = gradient(w, grid, scheme)
    return np.imag(np.conj(w) * dw) / scale


def dot(a, b):
    return np.einsum("i...,i...->...", a, b)


def cross(a, b):
    return np.stack([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def integrate_volume(f, grid: Grid):
    """Riemann sum over the periodic cell (spectrally accurate for smooth data)."""
    f = grid.check(f)
    _check_finite(f)
    return np.sum(f, axis=(-3, -2, -1)) * grid.cell_volume


def interpolate(field, grid: Grid, points):
    """Periodic trilinear interpolation of ``field`` at ``points`` (shape (N, 3))."""
    field = grid.check(field)
    pts = np.atleast_2d(np.asarray(points, float))
    idx = []
    frac = []
    for a in range(3):
        s = (pts[:, a] - grid.origin[a]) / grid.spacing[a]
        i0 = np.floor(s)
        frac.append(s - i0)
        idx.append(i0.astype(np.int64) % grid.dims[a])
    out = 0.0
    for c0 in (0, 1):
        w0 = frac[0] if c0 else 1.0 - frac[0]
        i = (idx[0] + c0) % grid.dims[0]
        for c1 in (0, 1):
            w1 = frac[1] if c1 else 1.0 - frac[1]
            j = (idx[1] + c1) % grid.dims[1]
            for c2 in (0, 1):
                w2 = frac[2] if c2 else 1.0 - frac[2]
                k = (idx[2] + c2) % grid.dims[2]
                out = out + (w0 * w1 * w2) * field[..., i, j, k]
    return out


def spectral_interpolator(field, grid: Grid):
    """Evaluate the trigonometric interpolant of a real ``field`` at arbitrary points.

    Returns ``f(points) -> values`` with the component axes of ``field``
    leading, like :func:`interpolate`.  Exact for band-limited data; each
    point costs one contraction over all modes.
    """
    field = grid.check(field)
    comp = field.shape[:-3]
    coef = sfft.fftn(field, axes=(-3, -2, -1), workers=fft_workers()) / grid.size
    coef = coef.reshape((-1,) + grid.dims)
    ks = [grid.wavenumbers(a) for a in range(3)]

    def evaluate(points):
        pts = np.atleast_2d(np.asarray(points, float))
        out = np.empty((coef.shape[0], len(pts)))
        for j, p in enumerate(pts):
            e = [np.exp(1j * ks[a] * (p[a] - grid.origin[a])) for a in range(3)]
            out[:, j] = np.einsum("cijk,i,j,k->c", coef, e[0], e[1], e[2]).real
        return out.reshape(comp + (len(pts),))

    return evaluate


def integrate_line(F, grid: Grid, loop):
    """Midpoint-rule circulation of ``F`` along a closed polyline."""
    loop = np.asarray(loop, float)
    if loop.ndim != 2 or loop.shape[1] != 3:
        raise ValueError("loop must have shape (N, 3)")
    if not np.allclose(loop[0], loop[-1]):
        raise ValueError("loop is not closed: first and last points differ")
    if len(np.unique(np.round(loop[:-1], 12), axis=0)) < 3:
        raise ValueError("loop needs at least 3 distinct points")
    F = grid.check(F, rank=(3,))
    mid = 0.5 * (loop[1:] + loop[:-1])
    dq = np.diff(loop, axis=0)
    vals = interpolate(F, grid, mid)  # (3, N)
    return float(np.sum(vals.T * dq))


def integrate_surface(F, grid: Grid, vertices, triangles):
    """Flux of ``F`` through a triangulated surface, centroid rule.

    Orientation follows the vertex order of each triangle (right-hand rule).
    """
    F = grid.check(F, rank=(3,))
    v = np.asarray(vertices, float)
    tri = np.asarray(triangles, int)
    a, b, c = v[tri[:, 0]], v[tri[:, 1]], v[tri[:, 2]]
    area_vec = 0.5 * np.cross(b - a, c - a)
    vals = interpolate(F, grid, (a + b + c) / 3.0)
    return float(np.sum(vals.T * area_vec))


def _plane_basis(normal):
    n = np.asarray(normal, float)
    n = n / np.linalg.norm(n)
    trial = np.eye(3)[np.argmin(np.abs(n))]
    e1 = np.cross(n, trial)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return n, e1, e2


def circle_loop(center=(0.0, 0.0, 0.0), radius=1.0, normal=(0.0, 0.0, 1.0), n=256):
    """Closed circle with counter-clockwise orientation about ``normal``."""
    _, e1, e2 = _plane_basis(normal)
    t = np.linspace(0.0, 2.0 * np.pi, n + 1)
    pts = np.asarray(center, float) + radius * (np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2)
    pts[-1] = pts[0]
    return pts


def disk_cap(center=(0.0, 0.0, 0.0), radius=1.0, normal=(0.0, 0.0, 1.0), n=256, rings=64):
    """Triangulated flat disk whose rim coincides with ``circle_loop(..., n)``.

    Returns ``(vertices, triangles)`` oriented along ``normal``.
    """
    _, e1, e2 = _plane_basis(normal)
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    ring_dirs = np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2
    c = np.asarray(center, float)
    verts = [c[None, :]]
    for r in np.linspace(radius / rings, radius, rings):
        verts.append(c + r * ring_dirs)
    verts = np.concatenate(verts)
    tris = []
    for j in range(n):
        tris.append((0, 1 + j, 1 + (j + 1) % n))
    for ring in range(rings - 1):
        base0 = 1 + ring * n
        base1 = base0 + n
        for j in range(n):
            j1 = (j + 1) % n
            tris.append((base0 + j, base1 + j, base1 + j1))
            tris.append((base0 + j, base1 + j1, base0 + j1))
    return verts, np.asarray(tris)


def surface_boundary(vertices, triangles):
    """Vertices on edges used by exactly one triangle (empty for closed surfaces)."""
    tri = np.asarray(triangles)
    edges = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    boundary = np.unique(uniq[counts == 1])
    return np.asarray(vertices)[boundary]


# --------------------------------------------------------------------------
# snapshots

MAGIC = b"QASNAP01"
KIND_REAL, KIND_COMPLEX, KIND_VEC3, KIND_SPINOR = 0, 1, 2, 3


class SnapshotError(ValueError):
    pass


def _field_kind(arr, grid):
    if arr.shape == grid.dims:
        return KIND_COMPLEX if np.iscomplexobj(arr) else KIND_REAL
    if arr.shape == (3,) + grid.dims and not np.iscomplexobj(arr):
        return KIND_VEC3
    if arr.shape == (2,) + grid.dims:
        return KIND_SPINOR
    raise SnapshotError(f"cannot store array of shape {arr.shape} on grid {grid.dims}")


def _payload(arr, kind):
    # node-major layout: all components of a node are contiguous
    if kind == KIND_REAL:
        flat = arr.astype("<f8")
    elif kind == KIND_COMPLEX:
        flat = np.stack([arr.real, arr.imag], axis=-1)
    elif kind == KIND_VEC3:
        flat = np.moveaxis(arr, 0, -1)
    else:
        z = np.moveaxis(np.asarray(arr, complex), 0, -1)
        flat = np.stack([z.real, z.imag], axis=-1)
    return np.ascontiguousarray(flat, dtype="<f8").tobytes()


_PER_NODE = {KIND_REAL: 1, KIND_COMPLEX: 2, KIND_VEC3: 3, KIND_SPINOR: 4}


def snapshot_write(path, grid: Grid, fields: dict):
    """Write named fields sharing ``grid`` to the binary snapshot format."""
    buf = bytearray(MAGIC)
    buf += struct.pack("<3I", *grid.dims)
    buf += struct.pack("<3d", *grid.spacing)
    buf += struct.pack("<3d", *grid.origin)
    buf += struct.pack("<I", len(fields))
    for name, arr in fields.items():
        arr = np.asarray(arr)
        kind = _field_kind(arr, grid)
        raw = name.encode("utf-8")
        buf += struct.pack("<I", len(raw)) + raw + struct.pack("<B", kind)
        buf += _payload(arr, kind)
    Path(path).write_bytes(bytes(buf))


def _unpack(data, kind, dims):
    vals = np.frombuffer(data, dtype="<f8")
    if kind == KIND_REAL:
        return vals.reshape(dims).copy()
    if kind == KIND_COMPLEX:
        v = vals.reshape(dims + (2,))
        return v[..., 0] + 1j * v[..., 1]
    if kind == KIND_VEC3:
        return np.moveaxis(vals.reshape(dims + (3,)), -1, 0).copy()
    v = vals.reshape(dims + (2, 2))
    return np.moveaxis(v[..., 0] + 1j * v[..., 1], -1, 0).copy()


def snapshot_read(path, grid: Grid | None = None):
    """Read a snapshot; returns ``(grid, {name: array})`` in file order.

    If ``grid`` is given, the stored dims must match it.
    """
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise SnapshotError("bad magic")
    pos = 8

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise SnapshotError("truncated payload")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    dims = struct.unpack("<3I", take(12))
    spacing = struct.unpack("<3d", take(24))
    origin = struct.unpack("<3d", take(24))
    stored = Grid(dims, spacing, origin)
    if grid is not None and tuple(grid.dims) != tuple(dims):
        raise SnapshotError(f"dims mismatch: file {dims}, expected {grid.dims}")
    (count,) = struct.unpack("<I", take(4))
    fields = {}
    nodes = stored.size
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (kind,) = struct.unpack("<B", take(1))
        if kind not in _PER_NODE:
            raise SnapshotError(f"unknown field kind {kind} for {name!r}")
        chunk = take(8 * nodes * _PER_NODE[kind])
        fields[name] = _unpack(chunk, kind, stored.dims)
    return stored, fields

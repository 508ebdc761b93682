"""Static external fields: potentials, derived B and E, and the windowed gauges.

A periodic box cannot hold a linearly growing vector potential, so uniform
and gradient magnetic fields are realized by multiplying the textbook gauge
with a smooth flat-top window.  Inside the flat region the fields are exact;
scenarios keep the density there.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fieldkit import Grid, curl, divergence, gradient


def smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(np.asarray(s, float), 0.0, 1.0)
    with np.errstate(over="ignore"):
        return _smooth_step(s)


def _smooth_step(s):
    a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def flat_top_window(grid: Grid, axes=(0, 1, 2), inner=0.6, outer=0.9, center=(0.0, 0.0, 0.0)):
    """Product of 1D windows, 1 for ``|q_i - c_i| < inner*L_i/2``, 0 beyond ``outer*L_i/2``."""
    w = np.ones(grid.dims)
    for ax in axes:
        half = 0.5 * grid.lengths[ax]
        s = np.abs(grid.coords[ax] - center[ax]) / half
        w = w * (1.0 - smooth_step((s - inner) / (outer - inner)))
    return w


@dataclass
class EMConfig:
    """External environment: scalar potential Phi, vector potential A, trap V.

    ``B`` is stored explicitly.  For configurations built from a vector
    potential it is ``curl A``; ``zeeman`` configurations carry a uniform B
    with A = 0, which only couples through the spin term.
    """

    grid: Grid
    Phi: np.ndarray
    V: np.ndarray
    A: np.ndarray
    B: np.ndarray
    label: str = "none"
    window: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid.check(self.Phi, rank=())
        self.grid.check(self.V, rank=())
        self.grid.check(self.A, rank=(3,))
        self.grid.check(self.B, rank=(3,))

    @property
    def E(self):
        return -gradient(self.Phi, self.grid)

    @property
    def has_vector_potential(self):
        return bool(np.any(self.A != 0.0))

    @property
    def has_magnetic_field(self):
        return bool(np.any(self.B != 0.0))

    @property
    def is_static_scalar(self):
        return not self.has_vector_potential

    @classmethod
    def none(cls, grid):
        z = np.zeros(grid.dims)
        return cls(grid, z, z.copy(), np.zeros((3,) + grid.dims), np.zeros((3,) + grid.dims))

    @classmethod
    def from_potentials(cls, grid, A=None, Phi=None, V=None, label="custom", window=None):
        A = np.zeros((3,) + grid.dims) if A is None else np.asarray(A, float)
        Phi = np.zeros(grid.dims) if Phi is None else np.asarray(Phi, float)
        V = np.zeros(grid.dims) if V is None else np.asarray(V, float)
        return cls(grid, Phi, V, A, curl(A, grid), label, window or {})

    @classmethod
    def zeeman(cls, grid, B, V=None, Phi=None):
        """Uniform B acting only on the spin (A = 0)."""
        Bv = np.broadcast_to(np.asarray(B, float).reshape(3, 1, 1, 1), (3,) + grid.dims).copy()
        Phi = np.zeros(grid.dims) if Phi is None else np.asarray(Phi, float)
        V = np.zeros(grid.dims) if V is None else np.asarray(V, float)
        return cls(grid, Phi, V, np.zeros((3,) + grid.dims), Bv, "zeeman")

    def with_potential(self, V=None, Phi=None):
        return EMConfig(self.grid, self.Phi if Phi is None else np.asarray(Phi, float),
                        self.V if V is None else np.asarray(V, float), self.A, self.B,
                        self.label, dict(self.window))

    def consistency(self):
        """Max deviation of B from curl A (zero-A configs exempt) and max |div B|."""
        dev = 0.0 if self.label == "zeeman" else float(np.max(np.abs(curl(self.A, self.grid) - self.B)))
        return {"curl_mismatch": dev, "max_div_B": float(np.max(np.abs(divergence(self.B, self.grid))))}


def uniform_field(grid, B0, center=(0.0, 0.0, 0.0), inner=0.6, outer=0.9, V=None):
    """Uniform B along axis 3 in the windowed symmetric gauge A = (B x q)/2."""
    q = grid.coords - np.asarray(center, float).reshape(3, 1, 1, 1)
    A = 0.5 * B0 * np.stack([-q[1], q[0], np.zeros(grid.dims)])
    W = flat_top_window(grid, axes=(0, 1), inner=inner, outer=outer, center=center)
    win = {"kind": "flat_top", "axes": "1,2", "inner": inner, "outer": outer}
    return EMConfig.from_potentials(grid, A * W, V=V, label="uniform", window=win)


def stern_gerlach(grid, B0, b, center=(0.0, 0.0, 0.0), inner=0.6, outer=0.9, V=None):
    """Divergence-free gradient field B = (-b x/2, -b y/2, B0 + b z), windowed.

    Vector potential A = (B0 + b z)/2 * (-y, x, 0).
    """
    q = grid.coords - np.asarray(center, float).reshape(3, 1, 1, 1)
    amp = 0.5 * (B0 + b * q[2])
    A = np.stack([-amp * q[1], amp * q[0], np.zeros(grid.dims)])
    W = flat_top_window(grid, inner=inner, outer=outer, center=center)
    win = {"kind": "flat_top", "axes": "1,2,3", "inner": inner, "outer": outer}
    return EMConfig.from_potentials(grid, A * W, V=V, label="stern_gerlach", window=win)


def harmonic_trap(grid, omega, mass=1.0, center=(0.0, 0.0, 0.0), axes=(0, 1, 2)):
    """Spin-independent trap (m omega^2/2) |q - c|^2 restricted to ``axes``."""
    q = grid.coords - np.asarray(center, float).reshape(3, 1, 1, 1)
    return 0.5 * mass * omega**2 * sum(q[a] ** 2 for a in axes)

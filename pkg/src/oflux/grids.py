"""Grids, domains, fields, and the basic calculus every diagnostic consumes.

Conventions
-----------
* Axes are indexed 0..n-1 (n = 2 or 3).  Velocity arrays have shape
  ``(n, *dims)``; scalar fields have shape ``dims``.  All arrays are C-order
  float64 and node-collocated.
* A periodic axis of extent L and ``m`` points has spacing ``L/m``; node
  ``m`` is identified with node 0 and is not stored.
* A wall axis of extent L and ``m`` points has spacing ``L/(m-1)``; nodes 0
  and ``m-1`` sit exactly on the two wall planes.
* Quadrature is trapezoidal everywhere: full weight on periodic axes, half
  weight on wall planes.
* Differentiation is spectral along periodic axes (Nyquist derivative set to
  zero, which keeps the operator antisymmetric) and second-order central
  along wall axes with one-sided closures on the wall planes.

All types are immutable after construction; operations are pure functions,
and reductions use numpy's pairwise summation so results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import PreconditionError

PERIODIC = "periodic"
WALL = "wall"

_MIN_DIM = 8


@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian lattice with per-axis periodicity flags."""

    dims: tuple[int, ...]
    extents: tuple[float, ...]
    axis_kinds: tuple[str, ...]

    def __post_init__(self):
        if not (2 <= len(self.dims) <= 3):
            raise PreconditionError("grid must have 2 or 3 axes")
        if len(self.extents) != len(self.dims) or len(self.axis_kinds) != len(self.dims):
            raise PreconditionError("dims, extents and axis_kinds must have equal length")
        for m in self.dims:
            if m < _MIN_DIM:
                raise PreconditionError(
                    f"grid too coarse for mollification: dims must be >= {_MIN_DIM}, got {m}"
                )
        for L in self.extents:
            if not L > 0:
                raise PreconditionError("grid extents must be strictly positive")
        for kind in self.axis_kinds:
            if kind not in (PERIODIC, WALL):
                raise PreconditionError(f"unknown axis kind {kind!r}")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def spacing(self) -> tuple[float, ...]:
        out = []
        for m, L, kind in zip(self.dims, self.extents, self.axis_kinds):
            out.append(L / m if kind == PERIODIC else L / (m - 1))
        return tuple(out)

    @property
    def max_spacing(self) -> float:
        return max(self.spacing)

    def axis_coords(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return h * np.arange(self.dims[axis])

    def meshes(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis."""
        coords = [self.axis_coords(a) for a in range(self.ndim)]
        return list(np.meshgrid(*coords, indexing="ij", sparse=True))

    def cell_volume(self) -> float:
        v = 1.0
        for h in self.spacing:
            v *= h
        return v

    def quad_weights(self) -> np.ndarray:
        """Trapezoid weight array of shape ``dims`` (includes cell volume)."""
        w = np.array(1.0)
        for a in range(self.ndim):
            wa = np.full(self.dims[a], self.spacing[a])
            if self.axis_kinds[a] == WALL:
                wa[0] *= 0.5
                wa[-1] *= 0.5
            shape = [1] * self.ndim
            shape[a] = self.dims[a]
            w = w * wa.reshape(shape)
        return w

    def wavenumbers(self, axis: int) -> np.ndarray:
        if self.axis_kinds[axis] != PERIODIC:
            raise PreconditionError("wavenumbers are defined on periodic axes only")
        m = self.dims[axis]
        return 2.0 * np.pi * np.fft.fftfreq(m, d=self.extents[axis] / m)

    @property
    def fully_periodic(self) -> bool:
        return all(k == PERIODIC for k in self.axis_kinds)


def make_grid(
    dims: Sequence[int],
    extents: Sequence[float],
    axis_kinds: Sequence[str] | str = PERIODIC,
) -> Grid:
    """Build a grid; ``axis_kinds`` may be a single kind applied to all axes."""
    if isinstance(axis_kinds, str):
        axis_kinds = [axis_kinds] * len(dims)
    return Grid(tuple(int(m) for m in dims), tuple(float(L) for L in extents), tuple(axis_kinds))


@dataclass(frozen=True)
class Domain:
    """A grid together with its global geometry.

    ``periodic`` is a fully periodic box; ``channel`` is periodic in the
    tangential axes with wall planes on exactly one axis.
    """

    grid: Grid
    geometry: str

    def __post_init__(self):
        if self.geometry not in ("periodic", "channel"):
            raise PreconditionError(f"unknown geometry {self.geometry!r}")
        walls = [k for k in self.grid.axis_kinds if k == WALL]
        if self.geometry == "periodic" and walls:
            raise PreconditionError("periodic domain cannot have wall axes")
        if self.geometry == "channel" and len(walls) != 1:
            raise PreconditionError("channel geometry requires exactly one wall axis")

    @property
    def wall_axis(self) -> int:
        if self.geometry != "channel":
            raise PreconditionError("no boundary: domain is fully periodic")
        return self.grid.axis_kinds.index(WALL)

    @property
    def channel_width(self) -> float:
        return self.grid.extents[self.wall_axis]

    def distance_field(self) -> np.ndarray:
        """d(x) = distance to the nearest wall plane, broadcast to the grid."""
        a = self.wall_axis
        y = self.grid.axis_coords(a)
        L = self.channel_width
        d = np.minimum(y, L - y)
        shape = [1] * self.grid.ndim
        shape[a] = self.grid.dims[a]
        return np.broadcast_to(d.reshape(shape), self.grid.dims).copy()

    def normal_sign_field(self) -> np.ndarray:
        """Sign s such that the outward normal at the nearest wall is s*e_wall.

        The nearest wall of a point at wall coordinate y is the lower plane
        when y <= L/2 (ties resolve to the lower wall), whose outward normal
        points in -e_wall; the upper plane has outward normal +e_wall.
        """
        a = self.wall_axis
        y = self.grid.axis_coords(a)
        s = np.where(y <= 0.5 * self.channel_width, -1.0, 1.0)
        shape = [1] * self.grid.ndim
        shape[a] = self.grid.dims[a]
        return np.broadcast_to(s.reshape(shape), self.grid.dims).copy()


def distance_to_boundary(domain: Domain, x: Sequence[float]):
    """Distance, nearest boundary point, and outward unit normal for a point.

    Mid-channel ties resolve to the lower wall.  Raises on periodic domains.
    """
    if domain.geometry != "channel":
        raise PreconditionError("no boundary: domain is fully periodic")
    a = domain.wall_axis
    x = np.asarray(x, dtype=float)
    if x.shape != (domain.grid.ndim,):
        raise PreconditionError("point dimension does not match the grid")
    y = x[a]
    L = domain.channel_width
    if not (0.0 < y < L):
        raise PreconditionError("point must be strictly interior to the channel")
    d_lo, d_hi = y, L - y
    sigma = x.copy()
    normal = np.zeros(domain.grid.ndim)
    if d_lo <= d_hi:  # tie -> lower wall
        sigma[a] = 0.0
        normal[a] = -1.0
        d = d_lo
    else:
        sigma[a] = L
        normal[a] = 1.0
        d = d_hi
    return d, sigma, normal


@dataclass(frozen=True)
class Snapshot:
    """Velocity (and optional pressure) sampled on grid nodes at one time."""

    grid: Grid
    velocity: np.ndarray
    pressure: np.ndarray | None = None
    time: float = 0.0
    tags: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.velocity, dtype=float)
        object.__setattr__(self, "velocity", v)
        if v.shape != (self.grid.ndim, *self.grid.dims):
            raise PreconditionError(
                f"velocity shape {v.shape} does not match grid ({self.grid.ndim}, {self.grid.dims})"
            )
        if self.pressure is not None:
            p = np.asarray(self.pressure, dtype=float)
            if p.shape != self.grid.dims:
                raise PreconditionError("pressure shape does not match grid")
            object.__setattr__(self, "pressure", p)

    def with_pressure(self, pressure: np.ndarray) -> "Snapshot":
        return Snapshot(self.grid, self.velocity, pressure, self.time, dict(self.tags))


@dataclass(frozen=True)
class Trajectory:
    """Uniformly spaced snapshots of one evolving field."""

    snapshots: tuple[Snapshot, ...]
    dt: float

    def __post_init__(self):
        snaps = tuple(self.snapshots)
        object.__setattr__(self, "snapshots", snaps)
        if len(snaps) < 1:
            raise PreconditionError("trajectory needs at least one snapshot")
        times = np.array([s.time for s in snaps])
        if len(snaps) > 1:
            steps = np.diff(times)
            if not np.allclose(steps, self.dt, rtol=0.0, atol=1e-10 * max(1.0, abs(self.dt))):
                raise PreconditionError("snapshot times must form an arithmetic progression with step dt")
        if self.dt <= 0 and len(snaps) > 1:
            raise PreconditionError("dt must be positive")

    @property
    def grid(self) -> Grid:
        return self.snapshots[0].grid

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    @property
    def t_range(self) -> tuple[float, float]:
        return self.snapshots[0].time, self.snapshots[-1].time

    def __len__(self) -> int:
        return len(self.snapshots)

    def __getitem__(self, i) -> Snapshot:
        return self.snapshots[i]

    def map(self, f: Callable[[Snapshot], Snapshot]) -> "Trajectory":
        return Trajectory(tuple(f(s) for s in self.snapshots), self.dt)


# ---------------------------------------------------------------------------
# discrete calculus
# ---------------------------------------------------------------------------


def _spectral_deriv(f: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    k = grid.wavenumbers(axis)
    m = grid.dims[axis]
    if m % 2 == 0:
        k = k.copy()
        k[m // 2] = 0.0  # antisymmetric operator: drop the Nyquist derivative
    shape = [1] * f.ndim
    shape[axis] = m
    fh = np.fft.fft(f, axis=axis)
    return np.fft.ifft(1j * k.reshape(shape) * fh, axis=axis).real


def _wall_deriv(f: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    h = grid.spacing[axis]
    out = np.empty_like(f)
    fm = np.moveaxis(f, axis, 0)
    om = np.moveaxis(out, axis, 0)
    om[1:-1] = (fm[2:] - fm[:-2]) / (2.0 * h)
    om[0] = (-3.0 * fm[0] + 4.0 * fm[1] - fm[2]) / (2.0 * h)
    om[-1] = (3.0 * fm[-1] - 4.0 * fm[-2] + fm[-3]) / (2.0 * h)
    return out


def deriv(f: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    """First derivative of a scalar field along one axis.

    The field may carry leading component axes; ``axis`` counts grid axes.
    """
    lead = f.ndim - grid.ndim
    ax = axis + lead
    if grid.axis_kinds[axis] == PERIODIC:
        return _spectral_deriv(f, ax, grid)
    return _wall_deriv(f, ax, grid)


def deriv2(f: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    """Second derivative along one axis (central, one-sided on wall planes)."""
    lead = f.ndim - grid.ndim
    ax = axis + lead
    if grid.axis_kinds[axis] == PERIODIC:
        k = grid.wavenumbers(axis)
        shape = [1] * f.ndim
        shape[ax] = grid.dims[axis]
        fh = np.fft.fft(f, axis=ax)
        return np.fft.ifft(-(k.reshape(shape) ** 2) * fh, axis=ax).real
    h = grid.spacing[axis]
    out = np.empty_like(f)
    fm = np.moveaxis(f, ax, 0)
    om = np.moveaxis(out, ax, 0)
    om[1:-1] = (fm[2:] - 2.0 * fm[1:-1] + fm[:-2]) / h**2
    om[0] = (2.0 * fm[0] - 5.0 * fm[1] + 4.0 * fm[2] - fm[3]) / h**2
    om[-1] = (2.0 * fm[-1] - 5.0 * fm[-2] + 4.0 * fm[-3] - fm[-4]) / h**2
    return out


def gradient(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Gradient of a scalar field: shape ``(ndim, *dims)``."""
    return np.stack([deriv(f, a, grid) for a in range(grid.ndim)])


def divergence(snapshot: Snapshot) -> np.ndarray:
    """Discrete divergence of the velocity field."""
    grid = snapshot.grid
    out = np.zeros(grid.dims)
    for a in range(grid.ndim):
        out += deriv(snapshot.velocity[a], a, grid)
    return out


def integrate(f: np.ndarray, grid: Grid) -> float:
    """Trapezoid quadrature of a scalar field over the domain."""
    return float(np.sum(f * grid.quad_weights()))


def energy(snapshot: Snapshot) -> float:
    """Kinetic energy 0.5 * ||u||^2 over the domain (trapezoid quadrature)."""
    return 0.5 * integrate(np.sum(snapshot.velocity**2, axis=0), snapshot.grid)

"""Discrete mollifiers, cutoffs, and the nested-region bookkeeping.

The kernel profile is the standard radial bump exp(-1/(1-s^2)) on |s| < 1.
Kernels are sampled at node offsets and renormalized so that the discrete
sum times the cell volume is exactly one; this makes mollification exact on
constants and (by stencil symmetry) on affine fields.

Every mollified value is only ever evaluated on regions that keep an
epsilon-margin from non-periodic boundaries, so no literal extension of the
data is needed: inside the margin the cutoff-extended field and the raw
field convolve identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import MarginViolationError, PreconditionError, UnderResolvedError
from .grids import PERIODIC, WALL, Grid, Snapshot, Trajectory

# ---------------------------------------------------------------------------
# bump profile and its normalized antiderivative
# ---------------------------------------------------------------------------


def bump(s):
    """exp(-1/(1-s^2)) for |s| < 1, zero elsewhere."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(-1.0 / (1.0 - si * si))
    return out


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_N_PANELS = 24


def _bump_integral(t):
    """Vectorized integral of the bump from -1 to t (composite Gauss-Legendre)."""
    t = np.asarray(t, dtype=float)
    t_clip = np.clip(t, -1.0, 1.0)
    edges = np.linspace(0.0, 1.0, _N_PANELS + 1)
    total = np.zeros_like(t_clip)
    width = t_clip + 1.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        a = -1.0 + lo * width
        b = -1.0 + hi * width
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        for xg, wg in zip(_GL_NODES, _GL_WEIGHTS):
            total += wg * half * bump(mid + half * xg)
    return total


_BUMP_MASS = float(_bump_integral(1.0))


def bump_cdf(t):
    """Normalized bump antiderivative: 0 at t <= -1, 1 at t >= 1, C-infinity."""
    return _bump_integral(t) / _BUMP_MASS


def smooth_ramp(t):
    """C-infinity monotone ramp: exactly 0 for t <= 0, exactly 1 for t >= 1."""
    return bump_cdf(2.0 * np.asarray(t, dtype=float) - 1.0)


# ---------------------------------------------------------------------------
# mollifiers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Mollifier:
    """Radial kernel of support radius ``epsilon`` sampled on grid offsets.

    The stencil is the closed ball |offset| <= epsilon in physical units;
    the bump vanishes on the bounding sphere, so weights are zero exactly
    where |offset| >= epsilon.  After sampling, the weights are renormalized
    so that sum(weights) * cell_volume == 1.
    """

    epsilon: float
    spacing: tuple[float, ...]
    offsets: np.ndarray  # (k, ndim) int
    weights: np.ndarray  # (k,) float, renormalized
    dimension: int

    @property
    def stencil_size(self) -> int:
        return len(self.weights)

    def second_moment(self) -> np.ndarray:
        """Discrete kernel second moment  sum_o w_o h^n (o*h) otimes (o*h)."""
        vol = float(np.prod(self.spacing))
        z = self.offsets * np.asarray(self.spacing)
        return np.einsum("k,ki,kj->ij", self.weights * vol, z, z)

    def transfer(self, grid: Grid) -> np.ndarray:
        """DFT of the kernel placed on a fully periodic grid."""
        return _kernel_hat(self, grid)


def make_mollifier(epsilon: float, grid: Grid) -> Mollifier:
    """Sample the bump kernel at node offsets within radius ``epsilon``."""
    h = grid.spacing
    hmax = max(h)
    if epsilon < 2.0 * hmax:
        raise UnderResolvedError(
            f"under-resolved kernel: epsilon={epsilon:g} below the 2h floor ({2 * hmax:g})"
        )
    reach = [int(np.floor(epsilon / ha + 1e-12)) for ha in h]
    axes = [np.arange(-r, r + 1) for r in reach]
    mesh = np.meshgrid(*axes, indexing="ij")
    offsets = np.stack([m.ravel() for m in mesh], axis=1)
    z = offsets * np.asarray(h)
    r = np.sqrt(np.sum(z * z, axis=1))
    keep = r <= epsilon * (1.0 + 1e-12)
    offsets = offsets[keep]
    w = bump(r[keep] / epsilon)
    vol = float(np.prod(h))
    w = w / (np.sum(w) * vol)
    return Mollifier(float(epsilon), tuple(h), offsets, w, grid.ndim)


def _kernel_grid(mol: Mollifier, grid: Grid) -> np.ndarray:
    """Kernel weights scattered onto the (periodic) grid, times cell volume."""
    k = np.zeros(grid.dims)
    vol = grid.cell_volume()
    idx = tuple((mol.offsets[:, a] % grid.dims[a]) for a in range(grid.ndim))
    np.add.at(k, idx, mol.weights * vol)
    return k


_HAT_CACHE: dict[tuple, np.ndarray] = {}


def _kernel_hat(mol: Mollifier, grid: Grid) -> np.ndarray:
    key = (grid.dims, grid.spacing, round(mol.epsilon, 15))
    got = _HAT_CACHE.get(key)
    if got is None:
        got = np.fft.fftn(_kernel_grid(mol, grid))
        if len(_HAT_CACHE) > 64:
            _HAT_CACHE.clear()
        _HAT_CACHE[key] = got
    return got


def margin_violations(grid: Grid, region: np.ndarray | None, epsilon: float) -> list[tuple]:
    """Region nodes closer than ``epsilon`` to a wall plane (periodic axes never violate)."""
    if region is None:
        region = np.ones(grid.dims, dtype=bool)
    bad = np.zeros(grid.dims, dtype=bool)
    for a in range(grid.ndim):
        if grid.axis_kinds[a] != WALL:
            continue
        y = grid.axis_coords(a)
        close = (y < epsilon) | (y > grid.extents[a] - epsilon)
        shape = [1] * grid.ndim
        shape[a] = grid.dims[a]
        bad |= close.reshape(shape)
    hits = np.argwhere(region & bad)
    return [tuple(int(i) for i in row) for row in hits[:8]]


def _check_margin(grid: Grid, region, epsilon: float):
    bad = margin_violations(grid, region, epsilon)
    if bad:
        raise MarginViolationError(
            f"margin violation: {len(bad)}+ region nodes within epsilon={epsilon:g} "
            f"of a wall plane, e.g. {bad[:3]}",
            offending_nodes=bad,
        )


def _convolve_stencil(f: np.ndarray, mol: Mollifier, grid: Grid) -> np.ndarray:
    """Direct stencil convolution.  Values are valid wherever the epsilon-margin
    holds; on wall axes the wrapped contributions land only inside the margin."""
    vol = grid.cell_volume()
    out = np.zeros_like(f)
    lead = f.ndim - grid.ndim
    for o, w in zip(mol.offsets, mol.weights):
        if w == 0.0:
            continue
        shifted = np.roll(f, shift=tuple(o), axis=tuple(range(lead, f.ndim)))
        out += (w * vol) * shifted
    return out


def _convolve_spectral(f: np.ndarray, mol: Mollifier, grid: Grid) -> np.ndarray:
    khat = _kernel_hat(mol, grid)
    lead = f.ndim - grid.ndim
    axes = tuple(range(lead, f.ndim))
    return np.fft.ifftn(np.fft.fftn(f, axes=axes) * khat, axes=axes).real


def mollify_field(
    f: np.ndarray,
    mollifier: Mollifier,
    grid: Grid,
    region: np.ndarray | None = None,
    method: str = "auto",
) -> np.ndarray:
    """Convolve a field with the kernel; result is valid on ``region``.

    ``f`` may carry leading component axes.  On fully periodic grids the
    spectral path is used by default (it is the same circular convolution);
    pass ``method="stencil"`` to force the direct sum.
    """
    _check_margin(grid, region, mollifier.epsilon)
    if method == "auto":
        method = "spectral" if grid.fully_periodic else "stencil"
    if method == "spectral":
        if not grid.fully_periodic:
            raise PreconditionError("spectral mollification requires a fully periodic grid")
        return _convolve_spectral(f, mollifier, grid)
    if method == "stencil":
        return _convolve_stencil(f, mollifier, grid)
    raise PreconditionError(f"unknown mollification method {method!r}")


def mollify_snapshot(
    snap: Snapshot, mollifier: Mollifier, region: np.ndarray | None = None, method: str = "auto"
) -> Snapshot:
    v = mollify_field(snap.velocity, mollifier, snap.grid, region, method)
    p = None
    if snap.pressure is not None:
        p = mollify_field(snap.pressure, mollifier, snap.grid, region, method)
    return Snapshot(snap.grid, v, p, snap.time, dict(snap.tags))


# ---------------------------------------------------------------------------
# nested regions
# ---------------------------------------------------------------------------


def _distance_to_set(mask: np.ndarray, grid: Grid) -> np.ndarray:
    """Euclidean distance from every node to the nearest True node.

    Periodic axes are handled by tiling the mask three times and cropping.
    """
    if not mask.any():
        return np.full(grid.dims, np.inf)
    tiled = mask
    for a in range(grid.ndim):
        if grid.axis_kinds[a] == PERIODIC:
            tiled = np.concatenate([tiled] * 3, axis=a)
    dist = ndimage.distance_transform_edt(~tiled, sampling=grid.spacing)
    sl = []
    for a in range(grid.ndim):
        m = grid.dims[a]
        sl.append(slice(m, 2 * m) if grid.axis_kinds[a] == PERIODIC else slice(0, m))
    return dist[tuple(sl)]


def set_distance(a_mask: np.ndarray, b_mask: np.ndarray, grid: Grid) -> float:
    """min over a in A, b in B of |a - b| (periodic metric on periodic axes)."""
    if not a_mask.any() or not b_mask.any():
        return float("inf")
    d = _distance_to_set(b_mask, grid)
    return float(d[a_mask].min())


@dataclass(frozen=True)
class RegionChain:
    """Nested index sets Q3 sub Q2 sub Q1 sub Qtilde with margin ``eta``.

    Optional time bookkeeping (``t_range`` and margin ``tau``) marks the
    admissible window for space-time mollification.
    """

    grid: Grid
    q3: np.ndarray
    q2: np.ndarray
    q1: np.ndarray
    qtilde: np.ndarray
    eta: float
    t_range: tuple[float, float] | None = None
    tau: float = 0.0

    def __post_init__(self):
        if not self.q3.any():
            raise PreconditionError("Q3 must be nonempty")
        pairs = [(self.q3, self.q2), (self.q2, self.q1), (self.q1, self.qtilde)]
        for inner, outer in pairs:
            if np.any(inner & ~outer):
                raise PreconditionError("regions are not nested")
        tol = 1e-9 * self.eta
        for inner, outer in pairs:
            comp = ~outer
            if comp.any():
                gap = set_distance(inner, comp, self.grid)
                if gap < self.eta - tol:
                    raise PreconditionError(
                        f"region margins violated: set distance {gap:g} < eta={self.eta:g}"
                    )

    @property
    def regions(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.q3, self.q2, self.q1)

    def time_window(self, shrink: int) -> tuple[float, float]:
        if self.t_range is None:
            raise PreconditionError("region chain carries no time window")
        t1, t2 = self.t_range
        return (t1 + shrink * self.tau, t2 - shrink * self.tau)


def full_box_chain(grid: Grid, eta: float, t_range=None, tau: float = 0.0) -> RegionChain:
    """On a fully periodic grid every region may be the whole box."""
    if not grid.fully_periodic:
        raise PreconditionError("full-box chains require a fully periodic grid")
    full = np.ones(grid.dims, dtype=bool)
    return RegionChain(grid, full, full.copy(), full.copy(), full.copy(), eta, t_range, tau)


def nested_regions(
    support: np.ndarray,
    eta: float,
    grid: Grid,
    count: int = 3,
    t_range=None,
    tau: float = 0.0,
) -> RegionChain:
    """Grow ``count`` nested regions outward from ``support`` by steps of ``eta``.

    Q_i is the set of nodes within i*eta of the support (rounding is outward:
    node inclusion uses the closed ball).  On wall axes the outermost margin
    must stay clear of the wall planes; otherwise the maximal feasible eta is
    reported.
    """
    if count != 3:
        raise PreconditionError("the chain discipline is fixed at three regions")
    if eta <= 0:
        raise PreconditionError("margin eta must be positive")
    support = np.asarray(support, dtype=bool)
    if support.shape != grid.dims:
        raise PreconditionError("support mask shape does not match the grid")
    if not support.any():
        raise PreconditionError("support must be nonempty")

    dist = _distance_to_set(support, grid)
    tol = 1e-12 * max(grid.extents)
    masks = [dist <= i * eta + tol for i in range(1, count + 1)]
    qtilde = dist <= (count + 1) * eta + tol

    wall_d = np.full(grid.dims, np.inf)
    for a in range(grid.ndim):
        if grid.axis_kinds[a] != WALL:
            continue
        y = grid.axis_coords(a)
        da = np.minimum(y, grid.extents[a] - y)
        shape = [1] * grid.ndim
        shape[a] = grid.dims[a]
        wall_d = np.minimum(wall_d, np.broadcast_to(da.reshape(shape), grid.dims))
    if np.isfinite(wall_d).any():
        clearance = float(wall_d[support].min())
        if clearance < (count + 1) * eta:
            raise PreconditionError(
                "domain too small for margins: support sits "
                f"{clearance:g} from a wall; maximal feasible eta is {clearance / (count + 1):g}"
            )
    return RegionChain(grid, masks[0], masks[1], masks[2], qtilde, eta, t_range, tau)


# ---------------------------------------------------------------------------
# cutoff fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CutoffField:
    """Scalar field in [0,1]: exactly 1 on ``inner``, exactly 0 outside ``outer``."""

    grid: Grid
    values: np.ndarray
    inner: np.ndarray
    outer: np.ndarray
    width: float


def cutoff_region(grid: Grid, inner: np.ndarray, outer: np.ndarray) -> CutoffField:
    """Smooth transition from 1 on ``inner`` to 0 outside ``outer``.

    Built by composing the bump ramp with the node distance to the complement
    of ``outer``, normalized by the inner/complement gap.
    """
    inner = np.asarray(inner, dtype=bool)
    outer = np.asarray(outer, dtype=bool)
    if np.any(inner & ~outer):
        raise PreconditionError("inner region must be contained in outer region")
    if not inner.any():
        raise PreconditionError("inner region must be nonempty")
    comp = ~outer
    if not comp.any():
        return CutoffField(grid, np.ones(grid.dims), inner, outer, float("inf"))
    gap = set_distance(inner, comp, grid)
    floor = 2.0 * min(grid.spacing)  # resolution along the transition direction
    if gap < floor:
        raise PreconditionError(
            f"zero-width transition: inner/outer gap {gap:g} is below 2h={floor:g}"
        )
    d = _distance_to_set(comp, grid)
    values = smooth_ramp(d / gap)
    values[inner] = 1.0
    values[comp] = 0.0
    return CutoffField(grid, values, inner, outer, gap)


def block_mask(grid: Grid, lo_frac, hi_frac) -> np.ndarray:
    """Axis-aligned block over [lo, hi) index fractions (scalar or per-axis)."""
    lo = [lo_frac] * grid.ndim if np.isscalar(lo_frac) else list(lo_frac)
    hi = [hi_frac] * grid.ndim if np.isscalar(hi_frac) else list(hi_frac)
    mask = np.ones(grid.dims, dtype=bool)
    for a in range(grid.ndim):
        m = grid.dims[a]
        idx = np.arange(m)
        sel = (idx >= int(lo[a] * m)) & (idx < int(hi[a] * m))
        shape = [1] * grid.ndim
        shape[a] = m
        mask &= sel.reshape(shape)
    return mask


# ---------------------------------------------------------------------------
# space-time mollification
# ---------------------------------------------------------------------------


def time_kernel(kappa: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """1-D bump kernel sampled at step offsets, normalized to sum*dt == 1."""
    if kappa < 2.0 * dt:
        raise UnderResolvedError(f"under-resolved time kernel: kappa={kappa:g} below 2*dt={2 * dt:g}")
    reach = int(np.floor(kappa / dt + 1e-12))
    m = np.arange(-reach, reach + 1)
    w = bump(np.abs(m * dt) / kappa)
    w = w / (np.sum(w) * dt)
    return m, w


def time_space_mollify(
    traj: Trajectory,
    epsilon: float,
    kappa: float,
    chain: RegionChain,
    region: np.ndarray | None = None,
    order: str = "time-first",
) -> Trajectory:
    """Separable space-time mollification, restricted to the admissible window.

    Requires kappa <= tau/2 and epsilon <= eta/2 for the chain's margins.
    """
    if chain.tau > 0 and kappa > 0.5 * chain.tau:
        raise PreconditionError(f"kappa={kappa:g} exceeds tau/2={0.5 * chain.tau:g}")
    if (~chain.q2).any() and epsilon > 0.5 * chain.eta:
        raise PreconditionError(f"epsilon={epsilon:g} exceeds eta/2={0.5 * chain.eta:g}")
    grid = traj.grid
    mol = make_mollifier(epsilon, grid)
    offs, w = time_kernel(kappa, traj.dt)
    reach = int(offs.max())
    n = len(traj)
    if n - 2 * reach <= 0:
        raise PreconditionError("trajectory too short for the requested time radius")
    if region is None:
        region = chain.q2

    def smooth_time(arrays):
        out = []
        for i in range(reach, n - reach):
            acc = sum(wm * traj.dt * arrays[i - m] for m, wm in zip(offs, w))
            out.append(acc)
        return out

    vels = [s.velocity for s in traj.snapshots]
    prs = [s.pressure for s in traj.snapshots]
    has_p = all(p is not None for p in prs)

    if order == "time-first":
        v_t = smooth_time(vels)
        snaps = []
        for j, i in enumerate(range(reach, n - reach)):
            v = mollify_field(v_t[j], mol, grid, region)
            p = None
            if has_p:
                p_t = sum(wm * traj.dt * prs[i - m] for m, wm in zip(offs, w))
                p = mollify_field(p_t, mol, grid, region)
            snaps.append(Snapshot(grid, v, p, traj.snapshots[i].time, dict(traj.snapshots[i].tags)))
        return Trajectory(tuple(snaps), traj.dt)
    if order == "space-first":
        v_s = [mollify_field(v, mol, grid, region) for v in vels]
        p_s = [mollify_field(p, mol, grid, region) for p in prs] if has_p else None
        snaps = []
        for i in range(reach, n - reach):
            v = sum(wm * traj.dt * v_s[i - m] for m, wm in zip(offs, w))
            p = sum(wm * traj.dt * p_s[i - m] for m, wm in zip(offs, w)) if has_p else None
            snaps.append(Snapshot(grid, v, p, traj.snapshots[i].time, dict(traj.snapshots[i].tags)))
        return Trajectory(tuple(snaps), traj.dt)
    raise PreconditionError(f"unknown order {order!r}")

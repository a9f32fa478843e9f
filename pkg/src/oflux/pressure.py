"""Pressure recovery from velocity and pressure-regularity diagnostics.

The periodic solve inverts the Poisson equation -Lap p = d_i d_j (u_i u_j)
spectrally.  The channel solve attacks the physical Neumann problem
(dp/dn = -(u.grad u).n on the walls) with spectral differentiation in the
tangential axes and a second-order tridiagonal solve per tangential mode;
the zero mode's right side is projected onto the solvable subspace.  The
gauge is mean-zero everywhere: domain mean on periodic boxes, interior-node
mean on channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .grids import WALL, Domain, Grid, Snapshot, deriv, deriv2
from .mollify import CutoffField, cutoff_region
from .synth import holder_norm

# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PressureSolveReport:
    pressure: np.ndarray
    residual: float
    gauge: str
    boundary_condition: str


@dataclass(frozen=True)
class SobolevNormEstimate:
    beta: float
    value: float
    region: str


# ---------------------------------------------------------------------------
# periodic solve
# ---------------------------------------------------------------------------


def _quadratic_source_hat(snap: Snapshot) -> np.ndarray:
    """FFT of d_i d_j (u_i u_j) on a fully periodic grid."""
    grid = snap.grid
    n = grid.ndim
    ks = np.meshgrid(*[grid.wavenumbers(a) for a in range(n)], indexing="ij", sparse=True)
    src = np.zeros(grid.dims, dtype=complex)
    for i in range(n):
        for j in range(i, n):
            prod_hat = np.fft.fftn(snap.velocity[i] * snap.velocity[j])
            term = (1j * ks[i]) * (1j * ks[j]) * prod_hat
            src += term if i == j else 2.0 * term
    return src


def solve_pressure_periodic(snap: Snapshot) -> PressureSolveReport:
    """Spectral inversion of -Lap p = d_i d_j (u_i u_j) with zero-mean gauge."""
    grid = snap.grid
    if not grid.fully_periodic:
        raise PreconditionError("periodic pressure solve requires a fully periodic domain")
    n = grid.ndim
    ks = np.meshgrid(*[grid.wavenumbers(a) for a in range(n)], indexing="ij", sparse=True)
    k2 = sum(k * k for k in ks)
    src_hat = _quadratic_source_hat(snap)
    with np.errstate(divide="ignore", invalid="ignore"):
        p_hat = np.where(k2 > 0, src_hat / np.where(k2 > 0, k2, 1.0), 0.0)
    p = np.fft.ifftn(p_hat).real
    # apply the spectral Laplacian back
    lap = np.fft.ifftn(-k2 * np.fft.fftn(p)).real
    src = np.fft.ifftn(src_hat).real
    residual = float(np.abs(-lap - src).max())
    return PressureSolveReport(p, residual, "zero-mean", "periodic")


# ---------------------------------------------------------------------------
# channel solve
# ---------------------------------------------------------------------------


def _advective_term(snap: Snapshot, comp: int) -> np.ndarray:
    """(u . grad) u_comp with the module's differencing rules."""
    grid = snap.grid
    out = np.zeros(grid.dims)
    for i in range(grid.ndim):
        out += snap.velocity[i] * deriv(snap.velocity[comp], i, grid)
    return out


def _channel_source(snap: Snapshot) -> np.ndarray:
    """d_i d_j (u_i u_j): spectral on periodic axes, FD (one-sided) on the wall axis."""
    grid = snap.grid
    n = grid.ndim
    src = np.zeros(grid.dims)
    for i in range(n):
        for j in range(i, n):
            prod = snap.velocity[i] * snap.velocity[j]
            if i == j:
                term = deriv2(prod, i, grid)
            else:
                first = deriv(prod, j, grid) if grid.axis_kinds[j] == WALL else deriv(prod, i, grid)
                other = i if grid.axis_kinds[j] == WALL else j
                term = deriv(first, other, grid)
                term = 2.0 * term
            src += term
    return src


def _thomas_solve(lower, diag, upper, rhs):
    """Vectorized Thomas algorithm along the last axis (no pivoting)."""
    n = rhs.shape[-1]
    c = np.zeros_like(rhs)
    d = np.zeros_like(rhs)
    c[..., 0] = upper[..., 0] / diag[..., 0]
    d[..., 0] = rhs[..., 0] / diag[..., 0]
    for j in range(1, n):
        denom = diag[..., j] - lower[..., j - 1] * c[..., j - 1]
        if j < n - 1:
            c[..., j] = upper[..., j] / denom
        d[..., j] = (rhs[..., j] - lower[..., j - 1] * d[..., j - 1]) / denom
    x = np.zeros_like(rhs)
    x[..., -1] = d[..., -1]
    for j in range(n - 2, -1, -1):
        x[..., j] = d[..., j] - c[..., j] * x[..., j + 1]
    return x


def solve_channel_neumann(
    source: np.ndarray, g_lo: np.ndarray, g_hi: np.ndarray, domain: Domain
) -> np.ndarray:
    """Solve -Lap p = source with dp/dy = g_lo, g_hi on the two wall planes.

    ``g_lo``/``g_hi`` are the wall-axis derivative of p on the lower/upper
    plane (fields over the tangential axes).  The zero tangential mode's
    right side is projected to the solvable subspace; the returned field has
    zero interior-node mean.
    """
    grid = domain.grid
    w = domain.wall_axis
    ny = grid.dims[w]
    h = grid.spacing[w]
    per_axes = [a for a in range(grid.ndim) if a != w]

    f = np.moveaxis(source, w, -1)  # (tangential..., y)
    f_hat = np.fft.fftn(f, axes=tuple(range(f.ndim - 1)))
    g_lo_hat = np.fft.fftn(np.asarray(g_lo, dtype=float))
    g_hi_hat = np.fft.fftn(np.asarray(g_hi, dtype=float))

    kper = np.meshgrid(*[grid.wavenumbers(a) for a in per_axes], indexing="ij", sparse=True)
    k2 = sum(k * k for k in kper) if kper else np.array(0.0)
    k2 = np.broadcast_to(k2, f_hat.shape[:-1]).copy()

    # rows: p'' - k^2 p = -S_hat, with the ghost-eliminated Neumann closures
    rhs = -f_hat.copy()
    rhs[..., 0] += (2.0 / h) * g_lo_hat
    rhs[..., -1] -= (2.0 / h) * g_hi_hat

    diag = np.empty(f_hat.shape, dtype=complex)
    lower = np.empty(f_hat.shape[:-1] + (ny - 1,), dtype=complex)
    upper = np.empty_like(lower)
    diag[...] = (-2.0 / h**2) - k2[..., None]
    lower[...] = 1.0 / h**2
    upper[...] = 1.0 / h**2
    upper[..., 0] = 2.0 / h**2
    lower[..., -1] = 2.0 / h**2

    # zero tangential mode: singular Neumann problem -> project and pin
    zero_idx = (0,) * (f_hat.ndim - 1)
    wts = np.full(ny, 1.0)
    wts[0] = wts[-1] = 0.5
    r0 = rhs[zero_idx]
    c = np.sum(wts * r0) / np.sum(wts)
    r0 = r0 - c
    r0[0] = 0.0
    rhs[zero_idx] = r0
    d0 = diag[zero_idx].copy()
    d0[0] = 1.0
    diag[zero_idx] = d0
    u0 = upper[zero_idx].copy()
    u0[0] = 0.0
    upper[zero_idx] = u0

    p_hat = _thomas_solve(lower, diag, upper, rhs)
    p = np.fft.ifftn(p_hat, axes=tuple(range(f.ndim - 1))).real
    p = np.moveaxis(p, -1, w)

    interior = [slice(None)] * grid.ndim
    interior[w] = slice(1, -1)
    p = p - p[tuple(interior)].mean()
    return np.ascontiguousarray(p)


def solve_pressure_channel(snap: Snapshot, domain: Domain, imp_tol: float = 1e-8) -> PressureSolveReport:
    """Neumann pressure recovery on a channel; requires u.n = 0 on the walls."""
    if domain.geometry != "channel":
        raise PreconditionError("channel pressure solve requires channel geometry")
    grid = snap.grid
    w = domain.wall_axis
    lo = [slice(None)] * grid.ndim
    hi = [slice(None)] * grid.ndim
    lo[w], hi[w] = 0, grid.dims[w] - 1
    un_lo = np.abs(snap.velocity[w][tuple(lo)]).max()
    un_hi = np.abs(snap.velocity[w][tuple(hi)]).max()
    if max(un_lo, un_hi) > imp_tol:
        raise PreconditionError(
            f"impermeability violated: max |u.n| on walls = {max(un_lo, un_hi):.3e} "
            f"exceeds {imp_tol:.1e}; Neumann data would be inconsistent"
        )
    adv_w = _advective_term(snap, w)
    g_lo = -adv_w[tuple(lo)]
    g_hi = -adv_w[tuple(hi)]
    source = _channel_source(snap)
    p = solve_channel_neumann(source, g_lo, g_hi, domain)

    lap = np.zeros(grid.dims)
    for a in range(grid.ndim):
        lap += deriv2(p, a, grid)
    interior = [slice(None)] * grid.ndim
    interior[w] = slice(1, -1)
    residual = float(np.abs((-lap - source)[tuple(interior)]).max())
    return PressureSolveReport(p, residual, "zero-mean (interior nodes)", "neumann: dp/dn = -(u.grad u).n")


def attach_pressure(snap: Snapshot, domain: Domain) -> Snapshot:
    """Convenience: solve for p on either geometry and attach it."""
    if domain.geometry == "periodic":
        rep = solve_pressure_periodic(snap)
    else:
        rep = solve_pressure_channel(snap, domain)
    return snap.with_pressure(rep.pressure)


# ---------------------------------------------------------------------------
# negative Sobolev norm
# ---------------------------------------------------------------------------


def negative_sobolev_norm(
    field: np.ndarray,
    beta: float,
    grid: Grid,
    cutoff: CutoffField | None = None,
    region: np.ndarray | None = None,
) -> SobolevNormEstimate:
    """Spectrally weighted H^{-beta} norm: sqrt(sum (1+|k|^2)^-beta |f_hat|^2).

    The field is multiplied by the cutoff (or restricted to ``region``),
    extended periodically along periodic axes and odd-extended along a wall
    axis, and transformed with the volume normalization that makes beta = 0
    reproduce the L^2 norm exactly.
    """
    if beta < 0:
        raise PreconditionError("beta must be nonnegative")
    f = np.array(field, dtype=float)
    if cutoff is not None:
        f = f * cutoff.values
    elif region is not None:
        f = np.where(region, f, 0.0)

    wall_axes = [a for a in range(grid.ndim) if grid.axis_kinds[a] == WALL]
    if len(wall_axes) > 1:
        raise PreconditionError("at most one wall axis is supported")
    extents = list(grid.extents)
    scale = 1.0
    if wall_axes:
        a = wall_axes[0]
        n = grid.dims[a]
        fm = np.moveaxis(f, a, -1)
        ext = np.concatenate([fm, -fm[..., -2:0:-1]], axis=-1)
        f = np.moveaxis(ext, -1, a)
        extents[a] = 2.0 * grid.extents[a]
        scale = 1.0 / np.sqrt(2.0)

    dims = f.shape
    vol = 1.0
    for L in extents:
        vol *= L
    npts = int(np.prod(dims))
    f_hat = np.fft.fftn(f) * (np.sqrt(vol) / npts)
    ks = np.meshgrid(
        *[2.0 * np.pi * np.fft.fftfreq(m, d=L / m) for m, L in zip(dims, extents)],
        indexing="ij",
        sparse=True,
    )
    k2 = sum(k * k for k in ks)
    weight = (1.0 + k2) ** (-beta)
    value = scale * float(np.sqrt(np.sum(weight * np.abs(f_hat) ** 2)))
    descr = "full grid" if region is None and cutoff is None else "cutoff region"
    return SobolevNormEstimate(float(beta), value, descr)


# ---------------------------------------------------------------------------
# interior Hölder comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InteriorHolderReport:
    pressure_holder: float
    velocity_holder_sq: float
    boundary_pressure_norm: float
    ratio: float | None
    degenerate: str | None
    alpha: float
    beta: float


def interior_holder_check(
    snap: Snapshot,
    chain,
    alpha: float,
    beta: float = 1.0,
    domain: Domain | None = None,
    gamma: float | None = None,
    seed: int = 0,
) -> InteriorHolderReport:
    """Compare ||p||_{C^a(Q2)} against ||u||^2_{C^a(Qtilde)} plus the
    near-boundary H^{-beta} pressure norm.

    The constant in the underlying elliptic estimate is unquantified, so the
    ratio is a diagnostic to track across refinements, not a pass/fail.
    """
    if snap.pressure is None:
        raise PreconditionError("interior_holder_check requires a snapshot with pressure")
    if not (1.0 / 3.0 < alpha < 1.0):
        raise PreconditionError("alpha must lie in (1/3, 1)")
    grid = snap.grid
    p_norm = holder_norm(snap.pressure, alpha, region=chain.q2, grid=grid, seed=seed)
    u_norm = holder_norm(snap, alpha, region=chain.qtilde, seed=seed)
    if domain is not None and domain.geometry == "channel":
        if gamma is None:
            gamma = domain.channel_width / 8.0
        d = domain.distance_field()
        outer = d < gamma
        inner = d < gamma / 2.0
        cf = cutoff_region(grid, inner, outer)
        nsn = negative_sobolev_norm(snap.pressure, beta, grid, cutoff=cf).value
    else:
        nsn = 0.0
    denom = u_norm**2 + nsn
    scale = float(np.abs(snap.velocity).max() + np.abs(snap.pressure).max())
    if denom < 1e-12 * max(1.0, scale) and p_norm < 1e-12 * max(1.0, scale):
        return InteriorHolderReport(p_norm, u_norm**2, nsn, None, "0/0 degenerate", alpha, beta)
    return InteriorHolderReport(p_norm, u_norm**2, nsn, p_norm / denom, None, alpha, beta)

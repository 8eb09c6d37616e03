"""Uniform-grid log-density representation and log-concavity diagnostics.

Densities are stored as log-values on a uniform 1D or 2D grid; ``-inf``
marks nodes outside the support, which encodes hard truncation (convex
indicator) without smoothing.  All quadrature is trapezoidal (tensor
trapezoid in 2D), which is second-order accurate and monotone.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BoundaryMinimumError,
    BoundNotApplicableError,
    CoverageError,
    GridMismatchError,
    InsufficientSupportError,
)

# Values below exp(_LOG_FLOOR) relative to the node maximum are treated as
# exact zeros when converting linear values to log-values; this absorbs
# sign-flipping round-off without punching holes into the support.
_LOG_FLOOR = -660.0

# Relative floor for FFT-derived value arrays: absolute FFT round-off is a
# few ulp of the peak, so nodes this far below the peak carry no reliable
# information and are zeroed; the mass removed this way stays far below the
# 1e-8 conservation budget for exponentially decaying tails.
FFT_REL_FLOOR = 1e-8


def _as_axis_tuple(value, dim: int) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.repeat(arr, dim)
    if arr.size != dim:
        raise ValueError(f"expected {dim} per-axis values, got {arr.size}")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid on a box in R^d with d in {1, 2}.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1 or 2.
    lower, upper : float or sequence of float
        Per-axis bounds (a scalar is broadcast to all axes).
    points_per_axis : int
        Number of nodes per axis, at least 8.  Spacing per axis is
        ``(upper - lower) / (points_per_axis - 1)``.
    """

    dim: int
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        object.__setattr__(self, "lower", _as_axis_tuple(self.lower, self.dim))
        object.__setattr__(self, "upper", _as_axis_tuple(self.upper, self.dim))
        if self.points_per_axis < 8:
            raise ValueError("points_per_axis must be at least 8")
        for lo, hi in zip(self.lower, self.upper):
            if not hi > lo:
                raise ValueError("upper must exceed lower on every axis")

    @property
    def spacing(self) -> tuple[float, ...]:
        n = self.points_per_axis - 1
        return tuple((hi - lo) / n for lo, hi in zip(self.lower, self.upper))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    def axis(self, i: int = 0) -> np.ndarray:
        return np.linspace(self.lower[i], self.upper[i], self.points_per_axis)

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(n, dim)`` in row-major node order."""
        if self.dim == 1:
            return self.axis(0)[:, None]
        xx, yy = np.meshgrid(self.axis(0), self.axis(1), indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()], axis=1)

    def trapezoid_weights(self) -> np.ndarray:
        """Quadrature weights with the same shape as a value array."""
        w1 = np.full(self.points_per_axis, 1.0)
        w1[0] = w1[-1] = 0.5
        if self.dim == 1:
            return w1 * self.spacing[0]
        wx = w1 * self.spacing[0]
        wy = w1 * self.spacing[1]
        return np.outer(wx, wy)

    def tensor_square(self) -> "GridSpec":
        """The 2D grid whose axes are two copies of this 1D grid."""
        if self.dim != 1:
            raise ValueError("tensor_square is defined for 1D grids only")
        return GridSpec(2, (self.lower[0],) * 2, (self.upper[0],) * 2, self.points_per_axis)


def _contiguous(mask_1d: np.ndarray) -> bool:
    idx = np.flatnonzero(mask_1d)
    return idx.size == 0 or idx.size == idx[-1] - idx[0] + 1


def _check_support_convex(mask: np.ndarray) -> None:
    if mask.ndim == 1:
        if not _contiguous(mask):
            raise ValueError("1D support must be a contiguous node interval")
        return
    for row in mask:
        if not _contiguous(row):
            raise ValueError("2D support must be row-convex")


@dataclass(frozen=True)
class GridDensity:
    """Nonnegative density on a :class:`GridSpec`, stored as log-values.

    ``mass`` is the trapezoidal quadrature of ``exp(log_values)`` and is
    computed on construction.  Instances are immutable; the value array is
    made read-only.
    """

    grid: GridSpec
    log_values: np.ndarray
    mass: float = field(init=False)

    def __post_init__(self):
        lv = np.asarray(self.log_values, dtype=float)
        if lv.shape != self.grid.shape:
            raise ValueError(f"log_values shape {lv.shape} != grid shape {self.grid.shape}")
        if np.isnan(lv).any():
            raise ValueError("log_values must not contain NaN")
        if np.isposinf(lv).any():
            raise ValueError("log_values must not contain +inf")
        lv = lv.copy()
        lv.flags.writeable = False
        object.__setattr__(self, "log_values", lv)
        _check_support_convex(self.support_mask)
        m = float(np.sum(self.grid.trapezoid_weights() * self.values()))
        object.__setattr__(self, "mass", m)

    @classmethod
    def from_values(cls, grid: GridSpec, values: np.ndarray,
                    rel_floor: float | None = None) -> "GridDensity":
        """Build from linear values; tiny/negative values become exact zeros.

        ``rel_floor`` raises the zeroing threshold to ``rel_floor * max``;
        pass :data:`FFT_REL_FLOOR` for arrays coming out of an FFT.
        """
        v = np.asarray(values, dtype=float)
        if v.size and np.isfinite(v).all() and v.max() > 0:
            floor = v.max() * max(np.exp(_LOG_FLOOR), rel_floor or 0.0)
            v = np.where(v > floor, v, 0.0)
        with np.errstate(divide="ignore"):
            return cls(grid, np.log(v, out=np.full(v.shape, -np.inf), where=v > 0))

    @property
    def support_mask(self) -> np.ndarray:
        return np.isfinite(self.log_values)

    @property
    def is_zero(self) -> bool:
        return not self.support_mask.any()

    def values(self) -> np.ndarray:
        with np.errstate(over="raise"):
            return np.exp(np.where(self.support_mask, self.log_values, -np.inf))

    def normalized(self) -> "GridDensity":
        if self.mass <= 0:
            raise ValueError("cannot normalize a zero density")
        return GridDensity(self.grid, self.log_values - np.log(self.mass))

    def mean(self) -> np.ndarray:
        w = self.grid.trapezoid_weights() * self.values()
        nodes = self.grid.nodes()
        return nodes.T @ w.ravel() / self.mass

    def second_moment(self, center=None) -> float:
        """Quadrature of |x - center|^2 against the normalized density."""
        if center is None:
            center = self.mean()
        center = np.atleast_1d(np.asarray(center, dtype=float))
        w = self.grid.trapezoid_weights() * self.values()
        sq = np.sum((self.grid.nodes() - center) ** 2, axis=1)
        return float(sq @ w.ravel() / self.mass)

    def variance(self) -> float:
        return self.second_moment(self.mean())

    # -- serialization ------------------------------------------------------

    def to_csv(self, path) -> None:
        """Write ``# dim, lower, upper, points, mass`` then x[,y],log_value rows.

        Multi-component lower/upper fields are space-separated; ``-inf`` is
        spelled literally and NaN never appears.
        """
        lo = " ".join(repr(v) for v in self.grid.lower)
        hi = " ".join(repr(v) for v in self.grid.upper)
        buf = io.StringIO()
        buf.write(f"# {self.grid.dim}, {lo}, {hi}, {self.grid.points_per_axis}, {self.mass!r}\n")
        nodes = self.grid.nodes()
        flat = self.log_values.ravel()
        for p, v in zip(nodes, flat):
            coords = ",".join(repr(c) for c in p)
            buf.write(f"{coords},{'-inf' if np.isneginf(v) else repr(float(v))}\n")
        with open(path, "w") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def from_csv(cls, path) -> "GridDensity":
        with open(path) as fh:
            header = fh.readline()
            if not header.startswith("#"):
                raise ValueError("missing header line")
            parts = [p.strip() for p in header[1:].split(",")]
            dim = int(parts[0])
            lower = tuple(float(v) for v in parts[1].split())
            upper = tuple(float(v) for v in parts[2].split())
            points = int(parts[3])
            grid = GridSpec(dim, lower, upper, points)
            vals = [float(line.rsplit(",", 1)[1]) for line in fh if line.strip()]
        lv = np.asarray(vals, dtype=float).reshape(grid.shape)
        return cls(grid, lv)


@dataclass(frozen=True)
class GaussianParams:
    """Mean vector and SPD covariance matrix of a Gaussian density."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        c = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if c.shape != (m.size, m.size):
            raise ValueError("covariance shape incompatible with mean")
        if not np.allclose(c, c.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(c).min() <= 0:
            raise ValueError("covariance must be positive definite")
        m.flags.writeable = False
        c.flags.writeable = False
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "covariance", c)

    @property
    def dim(self) -> int:
        return self.mean.size

    @classmethod
    def univariate(cls, mean: float, variance: float) -> "GaussianParams":
        return cls(np.array([mean]), np.array([[variance]]))


@dataclass(frozen=True)
class ConvexityRange:
    """Scalar curvature envelope of -log f over the support interior."""

    kappa_min: float
    kappa_max: float

    def __post_init__(self):
        if self.kappa_min > self.kappa_max:
            raise ValueError("kappa_min must not exceed kappa_max")


def gaussian_density(params: GaussianParams, grid: GridSpec) -> GridDensity:
    """Exact Gaussian log-density sampled at the grid nodes.

    Requires the grid to cover ``mean +- 6 sigma`` on every axis so that the
    quadrature mass is 1 up to truncation error.
    """
    if params.dim != grid.dim:
        raise GridMismatchError(f"params dim {params.dim} != grid dim {grid.dim}")
    sigma = np.sqrt(np.diag(params.covariance))
    for i in range(grid.dim):
        if params.mean[i] - 6 * sigma[i] < grid.lower[i] or params.mean[i] + 6 * sigma[i] > grid.upper[i]:
            raise CoverageError(
                f"grid axis {i} [{grid.lower[i]}, {grid.upper[i]}] does not cover "
                f"mean {params.mean[i]} +- 6 sigma ({6 * sigma[i]:.3g})"
            )
    diff = grid.nodes() - params.mean
    cinv = np.linalg.inv(params.covariance)
    quad = np.einsum("ni,ij,nj->n", diff, cinv, diff)
    _, logdet = np.linalg.slogdet(params.covariance)
    lv = -0.5 * (quad + params.dim * np.log(2 * np.pi) + logdet)
    return GridDensity(grid, lv.reshape(grid.shape))


def convolve(f: GridDensity, g: GridDensity) -> GridDensity:
    """Linear convolution of two grid densities by zero-padded FFT.

    Both inputs must share a grid; the result lives on the sum grid (same
    spacing, doubled extent), so no wrap-around occurs and the output mass
    is ``mass(f) * mass(g)`` up to boundary-value truncation.
    """
    from scipy.signal import fftconvolve

    if f.grid != g.grid:
        raise GridMismatchError("convolve requires identical grids")
    grid = f.grid
    out_vals = fftconvolve(f.values(), g.values())
    out_vals *= float(np.prod(grid.spacing))
    out_grid = GridSpec(
        grid.dim,
        tuple(2 * lo for lo in grid.lower),
        tuple(2 * hi for hi in grid.upper),
        2 * grid.points_per_axis - 1,
    )
    return GridDensity.from_values(out_grid, out_vals, rel_floor=FFT_REL_FLOOR)


def _interior_mask(mask: np.ndarray) -> np.ndarray:
    """Nodes whose full finite-difference neighborhood lies in the support."""
    out = np.zeros_like(mask)
    if mask.ndim == 1:
        out[1:-1] = mask[1:-1] & mask[:-2] & mask[2:]
        return out
    inner = mask[1:-1, 1:-1].copy()
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            inner &= mask[1 + di:mask.shape[0] - 1 + di, 1 + dj:mask.shape[1] - 1 + dj]
    out[1:-1, 1:-1] = inner
    return out


def convexity_range(f: GridDensity) -> ConvexityRange:
    """Eigenvalue envelope of the second-difference Hessian of -log f.

    Only interior nodes whose full stencil lies inside the support are
    used; one-sided differences near truncation cutoffs would corrupt the
    estimate.
    """
    mask = f.support_mask
    interior = _interior_mask(mask)
    if not interior.any():
        raise InsufficientSupportError("support has no interior nodes for the stencil")
    u = np.where(mask, -f.log_values, np.nan)
    if f.grid.dim == 1:
        h = f.grid.spacing[0]
        d2 = (u[:-2] - 2 * u[1:-1] + u[2:]) / h**2
        vals = d2[interior[1:-1]]
        return ConvexityRange(float(vals.min()), float(vals.max()))
    hx, hy = f.grid.spacing
    uxx = (u[:-2, 1:-1] - 2 * u[1:-1, 1:-1] + u[2:, 1:-1]) / hx**2
    uyy = (u[1:-1, :-2] - 2 * u[1:-1, 1:-1] + u[1:-1, 2:]) / hy**2
    uxy = (u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]) / (4 * hx * hy)
    sel = interior[1:-1, 1:-1]
    a, b, c = uxx[sel], uyy[sel], uxy[sel]
    half_tr = 0.5 * (a + b)
    disc = np.sqrt(0.25 * (a - b) ** 2 + c**2)
    return ConvexityRange(float((half_tr - disc).min()), float((half_tr + disc).max()))


def _refine_extremum_1d(x: np.ndarray, v: np.ndarray, i: int) -> float:
    """Parabolic sub-node refinement of an extremum at node i (if interior)."""
    if i == 0 or i == len(x) - 1:
        return float(x[i])
    vm, v0, vp = v[i - 1], v[i], v[i + 1]
    if not (np.isfinite(vm) and np.isfinite(vp)):
        return float(x[i])
    denom = vm - 2 * v0 + vp
    if denom == 0:
        return float(x[i])
    delta = 0.5 * (vm - vp) / denom
    h = x[1] - x[0]
    return float(x[i] + np.clip(delta, -1, 1) * h)


def _argmin_position(grid: GridSpec, values: np.ndarray, *, require_interior: bool) -> np.ndarray:
    """Location of the grid minimum of ``values`` with parabolic refinement."""
    v = np.where(np.isfinite(values), values, np.inf)
    flat_idx = int(np.argmin(v))
    if grid.dim == 1:
        i = flat_idx
        if require_interior and (i == 0 or i == grid.points_per_axis - 1):
            raise BoundaryMinimumError("minimum is on the grid boundary")
        return np.array([_refine_extremum_1d(grid.axis(0), v, i)])
    i, j = np.unravel_index(flat_idx, grid.shape)
    n = grid.points_per_axis
    if require_interior and (i in (0, n - 1) or j in (0, n - 1)):
        raise BoundaryMinimumError("minimum is on the grid boundary")
    x = _refine_extremum_1d(grid.axis(0), v[:, j], i)
    y = _refine_extremum_1d(grid.axis(1), v[i, :], j)
    return np.array([x, y])


def second_moment_about_argmin(f: GridDensity) -> float:
    """Quadrature of |x - xhat|^2 f(x) with xhat the refined mode of f.

    For a density with curvature lower bound kappa > 0 the result is at
    most d / kappa; the caller supplies that comparison.
    """
    if abs(f.mass - 1.0) > 1e-6:
        raise ValueError("density must be normalized")
    if convexity_range(f).kappa_min <= 0:
        raise BoundNotApplicableError("density is not strictly log-concave on the grid")
    xhat = _argmin_position(f.grid, np.where(f.support_mask, -f.log_values, np.inf),
                            require_interior=False)
    return f.second_moment(xhat)


@dataclass(frozen=True)
class ArgminShiftReport:
    """Minimiser locations of V, U, V+U and the shift inequality verdict."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    lhs: float
    rhs: float
    tol: float
    holds: bool


def argmin_shift_check(grid: GridSpec, v_values: np.ndarray, u_values: np.ndarray,
                       alpha: float, beta_lip: float) -> ArgminShiftReport:
    """Check the argmin-shift inequality for an alpha-convex V and a potential
    U with beta_lip-Lipschitz gradient.

    With x = argmin V, y = argmin U, z = argmin(V + U), verifies

        (1/alpha) |z - y| >= max{ (1/beta_lip) |z - x|, (1/(alpha+beta_lip)) |y - x| }

    up to grid tolerance 2h.  Minima on the grid boundary are rejected since
    the discrete gradients there are unreliable.
    """
    if alpha <= 0 or beta_lip <= 0:
        raise ValueError("alpha and beta_lip must be positive")
    v = np.asarray(v_values, dtype=float)
    u = np.asarray(u_values, dtype=float)
    if v.shape != grid.shape or u.shape != grid.shape:
        raise ValueError("potential arrays must match the grid shape")
    x = _argmin_position(grid, v, require_interior=True)
    y = _argmin_position(grid, u, require_interior=True)
    z = _argmin_position(grid, v + u, require_interior=True)
    lhs = float(np.linalg.norm(z - y)) / alpha
    rhs = max(float(np.linalg.norm(z - x)) / beta_lip,
              float(np.linalg.norm(y - x)) / (alpha + beta_lip))
    tol = 2 * max(grid.spacing)
    return ArgminShiftReport(x, y, z, lhs, rhs, tol, bool(lhs >= rhs - tol))

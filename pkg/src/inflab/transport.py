"""Wasserstein distances and the transport bounds for log-Lipschitz perturbations.

Provides the exact 1D quantile construction for any order p (including
infinity), an exact discrete bottleneck distance for equal-weight point
clouds, the closed-form isotropic/anisotropic bounds, a generic direction
optimizer, and the transport-information inequality checker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.spatial.distance import cdist

from .errors import BoundNotApplicableError, RegimeNotCoveredError
from .functionals import fisher_information_inf, fisher_information_p
from .logconcave import GridDensity, convexity_range

MAX_BOTTLENECK_POINTS = 4096


class GroundNorm(Enum):
    """Ground metric for point-cloud distances.

    PAIR_L1 treats each point as a pair (x1, x2) in R^{2d} and uses
    |x1| + |x2| with Euclidean halves.
    """

    EUCLIDEAN = "euclidean"
    PAIR_L1 = "pair_l1"


class Regime(Enum):
    ISOTROPIC = "isotropic"
    ANISO_CASE1 = "aniso_case1"
    ANISO_CASE2 = "aniso_case2"
    GENERIC = "generic"


@dataclass(frozen=True)
class BoundReport:
    """Value of a transport bound together with its extremal direction."""

    value: float
    regime: Regime
    witness_direction: np.ndarray

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("bound value must be nonnegative")
        w = np.atleast_1d(np.asarray(self.witness_direction, dtype=float))
        w.flags.writeable = False
        object.__setattr__(self, "witness_direction", w)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "regime": self.regime.value,
            "witness_direction": [float(v) for v in self.witness_direction],
        }


@dataclass(frozen=True)
class ConvexitySpec:
    """Curvature matrix K and directional perturbation bound ell.

    ``ell`` must be positively 1-homogeneous and continuous; it is called
    with an array of shape (m, d) and must return shape (m,).  When the
    bound has the projection shape ell(z) = L |P z| for an orthogonal
    projection P, pass ``projection=(P, L)`` so the closed form can be used.
    """

    k_matrix: np.ndarray
    ell: Callable[[np.ndarray], np.ndarray]
    projection: tuple[np.ndarray, float] | None = None

    def __post_init__(self):
        k = np.atleast_2d(np.asarray(self.k_matrix, dtype=float))
        if k.shape[0] != k.shape[1]:
            raise ValueError("K must be square")
        if not np.allclose(k, k.T, atol=1e-10):
            raise ValueError("K must be symmetric")
        if np.linalg.eigvalsh(k).min() <= 0:
            raise ValueError("K must be positive definite")
        k.flags.writeable = False
        object.__setattr__(self, "k_matrix", k)
        self._spot_check_homogeneity()
        if self.projection is not None:
            p = np.atleast_2d(np.asarray(self.projection[0], dtype=float))
            if not (np.allclose(p, p.T, atol=1e-10) and np.allclose(p @ p, p, atol=1e-10)):
                raise ValueError("projection matrix must be an orthogonal projection")
            object.__setattr__(self, "projection", (p, float(self.projection[1])))

    @property
    def dim(self) -> int:
        return self.k_matrix.shape[0]

    def ell_at(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        out = np.asarray(self.ell(z), dtype=float)
        if out.shape != (z.shape[0],):
            raise ValueError("ell must map (m, d) arrays to (m,) arrays")
        return out

    def _spot_check_homogeneity(self):
        rng = np.random.default_rng(0)
        z = rng.standard_normal((4, self.dim))
        base = self.ell_at(z)
        for t in (0.5, 2.0, 7.0):
            scaled = self.ell_at(t * z)
            if not np.allclose(scaled, t * base, rtol=1e-8, atol=1e-10):
                raise ValueError("ell is not positively 1-homogeneous")

    @classmethod
    def isotropic(cls, kappa: float, lip: float, dim: int) -> "ConvexitySpec":
        eye = np.eye(dim)
        return cls(kappa * eye, lambda z: lip * np.linalg.norm(z, axis=-1),
                   projection=(eye, lip))

    @classmethod
    def from_projection(cls, k_matrix: np.ndarray, p_matrix: np.ndarray,
                        lip: float) -> "ConvexitySpec":
        p = np.atleast_2d(np.asarray(p_matrix, dtype=float))
        return cls(k_matrix, lambda z: lip * np.linalg.norm(z @ p.T, axis=-1),
                   projection=(p, lip))


# -- 1D Wasserstein ----------------------------------------------------------

def _quantiles(density: GridDensity, u: np.ndarray) -> np.ndarray:
    """Left-continuous inverse of the trapezoidal CDF by linear interpolation."""
    x = density.grid.axis(0)
    f = density.values()
    h = density.grid.spacing[0]
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * h * (f[1:] + f[:-1]))])
    cdf /= cdf[-1]
    idx = np.clip(np.searchsorted(cdf, u, side="left"), 1, x.size - 1)
    c0, c1 = cdf[idx - 1], cdf[idx]
    gap = c1 - c0
    t = np.where(gap > 0, np.clip((u - c0) / np.where(gap > 0, gap, 1.0), 0.0, 1.0), 1.0)
    return x[idx - 1] + t * h


def wasserstein_1d(mu: GridDensity, nu: GridDensity, p: float,
                   n_quantiles: int = 8192) -> float:
    """Exact-coupling W_p between 1D densities via the quantile construction.

    CDFs are built by cumulative trapezoidal quadrature and inverted on a
    uniform midpoint u-grid; p = inf returns the sup of quantile gaps.
    """
    if mu.grid.dim != 1 or nu.grid.dim != 1:
        raise ValueError("wasserstein_1d requires 1D densities")
    if not (p == math.inf or p >= 1):
        raise ValueError("p must be >= 1 or inf")
    if n_quantiles < 4096:
        raise ValueError("at least 4096 quantile points are required")
    for d in (mu, nu):
        if abs(d.mass - 1.0) > 1e-6:
            raise ValueError("densities must be normalized")
    u = (np.arange(n_quantiles) + 0.5) / n_quantiles
    gap = np.abs(_quantiles(mu, u) - _quantiles(nu, u))
    if p == math.inf:
        return float(gap.max())
    return float(np.mean(gap**p) ** (1.0 / p))


# -- discrete bottleneck -----------------------------------------------------

def _pairwise(a: np.ndarray, b: np.ndarray, norm: GroundNorm) -> np.ndarray:
    if norm is GroundNorm.EUCLIDEAN:
        return cdist(a, b)
    d = a.shape[1]
    if d % 2 != 0:
        raise ValueError("PAIR_L1 requires an even ambient dimension")
    half = d // 2
    return cdist(a[:, :half], b[:, :half]) + cdist(a[:, half:], b[:, half:])


def _perfect_matching_exists(dist: np.ndarray, threshold: float) -> bool:
    graph = csr_matrix(dist <= threshold)
    match = maximum_bipartite_matching(graph, perm_type="column")
    return bool((match != -1).all())


def bottleneck_distance(a, b, norm: GroundNorm = GroundNorm.EUCLIDEAN) -> float:
    """Exact infinity-Wasserstein distance between equal-weight point clouds.

    Binary search over the sorted multiset of pairwise distances, with a
    perfect-matching feasibility probe (augmenting-path maximum matching)
    at each threshold.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError("point clouds must have equal sizes and dimensions")
    if a.shape[0] > MAX_BOTTLENECK_POINTS:
        raise ValueError(f"at most {MAX_BOTTLENECK_POINTS} points are supported")
    dist = _pairwise(a, b, norm)
    levels = np.unique(dist)
    lo, hi = 0, levels.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _perfect_matching_exists(dist, levels[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(levels[lo])


# -- bound calculators -------------------------------------------------------

def bound_anisotropic(kappa_a: float, kappa_b: float, l_a: float) -> BoundReport:
    """Two-regime closed-form bound for a perturbation Lipschitz along A only.

    Returns L_A / kappa_A when kappa_A <= 2 kappa_B, and otherwise
    L_A / (2 sqrt(kappa_B (kappa_A - kappa_B))); the two branches agree at
    kappa_A = 2 kappa_B.  The witness direction lives in the (A, B) plane.
    """
    if kappa_a <= 0 or kappa_b <= 0:
        raise ValueError("curvature parameters must be positive")
    if l_a < 0:
        raise ValueError("L_A must be nonnegative")
    if kappa_a <= 2 * kappa_b:
        return BoundReport(l_a / kappa_a, Regime.ANISO_CASE1, np.array([1.0, 0.0]))
    z_a = l_a / (2 * (kappa_a - kappa_b))
    z_b = math.sqrt(max(z_a * (l_a - kappa_a * z_a), 0.0) / kappa_b)
    w = np.array([z_a, z_b])
    value = l_a / (2 * math.sqrt(kappa_b * (kappa_a - kappa_b)))
    return BoundReport(value, Regime.ANISO_CASE2, w / np.linalg.norm(w))


def bound_isotropic(kappa: float, lip: float) -> BoundReport:
    """The simplest bound L / kappa for an L-Lipschitz log-perturbation."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if lip < 0:
        raise ValueError("lip must be nonnegative")
    return BoundReport(lip / kappa, Regime.ISOTROPIC, np.array([1.0]))


def bound_kernel(kappa: float, x, xt) -> float:
    """Transport bound between the transition kernels anchored at x and xt.

    Equals |x - xt| / (sqrt(2) (1/2 + kappa)) for kappa > 1/2, which is the
    anisotropic bound with kappa_A = 1/2 + kappa, kappa_B = kappa and
    L_A = |x - xt| / sqrt(2) via the symmetric/antisymmetric split of the
    pair space.
    """
    if kappa <= 0.5:
        raise RegimeNotCoveredError("the kernel bound requires kappa > 1/2")
    delta = float(np.linalg.norm(np.atleast_1d(x) - np.atleast_1d(xt)))
    return delta / (math.sqrt(2.0) * (0.5 + kappa))


def _recognized_projection(spec: ConvexitySpec):
    """Extract (kappa_a, kappa_b, L) when K = kappa_a P + kappa_b (I - P)."""
    if spec.projection is None:
        return None
    p, lip = spec.projection
    q = np.eye(spec.dim) - p
    rank_p = int(round(np.trace(p)))
    rank_q = spec.dim - rank_p
    k = spec.k_matrix
    if np.linalg.norm(p @ k @ q) > 1e-10:
        return None
    if rank_p == 0:
        return None
    kappa_a = float(np.trace(p @ k @ p)) / rank_p
    if np.linalg.norm(p @ k @ p - kappa_a * p) > 1e-10 * max(1.0, kappa_a):
        return None
    if rank_q == 0:
        return ("isotropic", kappa_a, lip)
    kappa_b = float(np.trace(q @ k @ q)) / rank_q
    if np.linalg.norm(q @ k @ q - kappa_b * q) > 1e-10 * max(1.0, kappa_b):
        return None
    return ("aniso", kappa_a, kappa_b, lip, p)


def _sweep_directions(n: int) -> np.ndarray:
    theta = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    return np.stack([np.cos(theta), np.sin(theta)], axis=1), theta


def _golden_max(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Golden-section maximisation of a unimodal f on [lo, hi]."""
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def bound_generic(spec: ConvexitySpec, method: str = "auto") -> BoundReport:
    """Largest |z| subject to <z, Kz> <= ell(z).

    Along a ray z = r omega the constraint reads r <omega, K omega> <=
    ell(omega), so the supremum equals the best ratio ell(omega) /
    <omega, K omega> over unit directions.  ``method='sweep'`` forces the
    dense direction sweep with golden-section refinement (2D only);
    ``'closed_form'`` forces the projection closed form; ``'auto'`` uses the
    closed form whenever the declared projection shape matches K.
    """
    if method not in ("auto", "sweep", "closed_form"):
        raise ValueError("method must be auto, sweep, or closed_form")
    recognized = _recognized_projection(spec)
    if method == "closed_form" or (method == "auto" and recognized is not None):
        if recognized is None:
            raise ValueError("spec has no recognized projection shape")
        if recognized[0] == "isotropic":
            _, kappa, lip = recognized
            rep = bound_isotropic(kappa, lip)
            w = np.zeros(spec.dim)
            w[0] = 1.0
            return BoundReport(rep.value, rep.regime, w)
        _, kappa_a, kappa_b, lip, p = recognized
        rep = bound_anisotropic(kappa_a, kappa_b, lip)
        # embed the (A, B)-plane witness into R^d along concrete subspace axes
        eig_w, eig_v = np.linalg.eigh(p)
        a_dir = eig_v[:, np.argmax(eig_w)]
        b_dir = eig_v[:, np.argmin(eig_w)] if eig_w.min() < 0.5 else a_dir
        w = rep.witness_direction[0] * a_dir + rep.witness_direction[1] * b_dir
        return BoundReport(rep.value, rep.regime, w / np.linalg.norm(w))

    if spec.dim != 2:
        raise ValueError("the direction sweep is implemented for d = 2 only")
    k = spec.k_matrix

    def ratio(theta: np.ndarray) -> np.ndarray:
        omega = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        num = np.maximum(spec.ell_at(omega), 0.0)
        den = np.einsum("...i,ij,...j->...", omega, k, omega)
        return num / den

    n = 360
    theta = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    vals = ratio(theta)
    if vals.max() <= 0:
        return BoundReport(0.0, Regime.GENERIC, np.array([1.0, 0.0]))
    best_theta, best_val = 0.0, -np.inf
    is_peak = (vals >= np.roll(vals, 1)) & (vals >= np.roll(vals, -1))
    for i in np.flatnonzero(is_peak):
        lo = theta[i] - 2 * np.pi / n
        hi = theta[i] + 2 * np.pi / n
        t = _golden_max(lambda th: float(ratio(np.asarray([th]))[0]), lo, hi)
        v = float(ratio(np.asarray([t]))[0])
        if v > best_val:
            best_theta, best_val = t, v
    w = np.array([math.cos(best_theta), math.sin(best_theta)])
    return BoundReport(best_val, Regime.GENERIC, w)


# -- transport-information check ---------------------------------------------

@dataclass(frozen=True)
class TiReport:
    """Both sides of the transport-information inequality and the verdict."""

    lhs: float
    rhs: float
    tol: float
    kappa_min: float
    holds: bool


def ti_check(mu: GridDensity, nu: GridDensity, p: float, tol_factor: float = 1.0) -> TiReport:
    """Check W_p(mu, nu) <= (1/kappa) I_p(nu|mu)^(1/p) on 1D grid densities.

    kappa is the grid curvature lower bound of mu; the comparison tolerance
    is max(1e-3, tol_factor * h).
    """
    kappa = convexity_range(mu).kappa_min
    if kappa <= 0:
        raise BoundNotApplicableError("mu has no positive curvature lower bound")
    lhs = wasserstein_1d(mu, nu, p)
    if p == math.inf:
        info = fisher_information_inf(nu, mu)
    else:
        info = fisher_information_p(nu, mu, p) ** (1.0 / p)
    rhs = info / kappa
    tol = max(1e-3, tol_factor * mu.grid.spacing[0])
    return TiReport(lhs, rhs, tol, kappa, bool(lhs <= rhs + tol))


# -- equal-mass quantization for 2D infinity-Wasserstein ----------------------

@dataclass(frozen=True)
class QuantizedWinfResult:
    """Quantized bottleneck estimate with its reported resolution."""

    value: float
    n_points: int
    resolution: float


def _split_cell(pos: np.ndarray, w: np.ndarray, depth: int, out: list) -> None:
    if depth == 0:
        total = w.sum()
        out.append((pos.T @ w) / total)
        return
    spread = [np.sqrt(np.sum(w * (pos[:, k] - np.average(pos[:, k], weights=w)) ** 2))
              for k in range(pos.shape[1])]
    axis = int(np.argmax(spread))
    order = np.argsort(pos[:, axis], kind="stable")
    cum = np.cumsum(w[order])
    half = 0.5 * cum[-1]
    k = int(np.searchsorted(cum, half))
    # split atom k fractionally so both halves carry exactly half the mass
    left_idx, right_idx = order[: k + 1], order[k:]
    w_left = w[left_idx].copy()
    w_right = w[right_idx].copy()
    w_before = cum[k - 1] if k > 0 else 0.0
    w_left[-1] = half - w_before
    w_right[0] = cum[k] - half
    keep_l = w_left > 0
    keep_r = w_right > 0
    _split_cell(pos[left_idx][keep_l], w_left[keep_l], depth - 1, out)
    _split_cell(pos[right_idx][keep_r], w_right[keep_r], depth - 1, out)


def quantize_equal_mass(density: GridDensity, n_points: int) -> np.ndarray:
    """Quantize a density to n equal-mass points by recursive median splits.

    Cells are halved at the mass median along their axis of largest spread;
    representative points are cell barycenters.  n must be a power of two so
    the halving tree yields exactly equal masses.
    """
    depth = int(round(math.log2(n_points)))
    if 2**depth != n_points or n_points < 1:
        raise ValueError("n_points must be a positive power of two")
    w = (density.grid.trapezoid_weights() * density.values()).ravel()
    pos = density.grid.nodes()
    keep = w > 0
    pos, w = pos[keep], w[keep]
    if w.size == 0:
        raise ValueError("cannot quantize a zero density")
    out: list = []
    _split_cell(pos, w, depth, out)
    return np.asarray(out)


def wasserstein_inf_quantized(f: GridDensity, g: GridDensity, n_points: int,
                              norm: GroundNorm = GroundNorm.EUCLIDEAN) -> QuantizedWinfResult:
    """Infinity-Wasserstein surrogate: quantize both densities, then bottleneck.

    The reported resolution is the larger RMS cell radius of the two
    quantizations (a measure of how much displacement quantization itself
    may hide).
    """
    pa = quantize_equal_mass(f, n_points)
    pb = quantize_equal_mass(g, n_points)
    value = bottleneck_distance(pa, pb, norm)
    res = max(_rms_cell_radius(f, pa), _rms_cell_radius(g, pb))
    return QuantizedWinfResult(value, n_points, res)


def _rms_cell_radius(density: GridDensity, points: np.ndarray) -> float:
    """Mass-weighted RMS distance of grid atoms to their nearest representative."""
    w = (density.grid.trapezoid_weights() * density.values()).ravel()
    pos = density.grid.nodes()
    keep = w > 0
    pos, w = pos[keep], w[keep]
    d2 = np.min(cdist(pos, points, "sqeuclidean"), axis=1)
    return float(np.sqrt(np.sum(w * d2) / np.sum(w)))

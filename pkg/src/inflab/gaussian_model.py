"""Closed-form analysis of the trait model under quadratic selection in 1D.

With mortality ``m(x) = alpha x^2 / 2`` the model maps Gaussians to
multiples of Gaussians, the quasi-equilibrium is the centred Gaussian with
variance ``1/beta``, and all divergences to it have closed forms, which
makes the per-step contraction factors exactly computable.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedRatioError, WitnessNotFoundError
from .functionals import DivergenceKind, gaussian_divergence
from .logconcave import GaussianParams


def solve_beta(alpha: float) -> float:
    """Positive solution of beta = alpha + beta / (1/2 + beta).

    Equivalent to the quadratic beta^2 - (alpha + 1/2) beta - alpha/2 = 0;
    the returned root exceeds max(1/2, alpha) and satisfies the fixed-point
    equation to 1e-12.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    b = 0.5 * ((alpha + 0.5) + math.sqrt((alpha + 0.5) ** 2 + 2 * alpha))
    residual = b - alpha - b / (0.5 + b)
    assert abs(residual) < 1e-12
    return b


@dataclass(frozen=True)
class QuadraticModel:
    """Selection strength alpha > 0 together with the derived beta."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if abs(self.beta - self.alpha - self.beta / (0.5 + self.beta)) > 1e-12:
            raise ValueError("beta does not satisfy the fixed-point equation")
        if self.beta <= 0.5:
            raise ValueError("beta must exceed 1/2")

    @classmethod
    def from_alpha(cls, alpha: float) -> "QuadraticModel":
        return cls(alpha, solve_beta(alpha))

    @property
    def equilibrium_variance(self) -> float:
        return 1.0 / self.beta

    def equilibrium(self) -> GaussianParams:
        return GaussianParams.univariate(0.0, 1.0 / self.beta)


def recursion_step(mu: float, sigma2: float, model: QuadraticModel) -> tuple[float, float]:
    """One normalized model step on Gaussian parameters (mean, variance)."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    s2 = 1.0 + 0.5 * sigma2
    denom = 1.0 + model.alpha * s2
    return mu / denom, s2 / denom


def step_mass_ratio(mu: float, sigma2: float, model: QuadraticModel) -> float:
    """Mass ratio of one un-normalized step applied to a unit-mass Gaussian.

    Integrating exp(-alpha x^2 / 2) against the post-reproduction Gaussian
    N(mu, 1 + sigma2/2) gives the closed form below.
    """
    s2 = 1.0 + 0.5 * sigma2
    denom = 1.0 + model.alpha * s2
    return math.exp(-model.alpha * mu**2 / (2 * denom)) / math.sqrt(denom)


def equilibrium_mass_ratio(model: QuadraticModel) -> float:
    """The per-generation mass ratio at the quasi-equilibrium: (1/2+beta)^(-1/2)."""
    return step_mass_ratio(0.0, 1.0 / model.beta, model)


def contraction_factor(mu: float, sigma2: float, model: QuadraticModel,
                       kind: DivergenceKind) -> float:
    """Divergence-to-equilibrium ratio after versus before one normalized step.

    For FisherInf the value is the squared max-gradient ratio, which is
    finite only on the slice sigma2 = 1/beta; elsewhere both sides are
    infinite and NaN is returned to mark the ratio as undefined.
    """
    star_var = 1.0 / model.beta
    mu_t, sigma2_t = recursion_step(mu, sigma2, model)
    if kind.name == "fisher_inf":
        if abs(sigma2 - star_var) > 1e-12 * max(1.0, star_var):
            return math.nan
        if abs(mu) < 1e-14:
            raise UndefinedRatioError("denominator vanishes at the equilibrium point")
        return (mu_t / mu) ** 2
    star = GaussianParams.univariate(0.0, star_var)
    den = gaussian_divergence(GaussianParams.univariate(mu, sigma2), star, kind)
    if den < 1e-14:
        raise UndefinedRatioError("denominator divergence is below 1e-14")
    num = gaussian_divergence(GaussianParams.univariate(mu_t, sigma2_t), star, kind)
    return num / den


@dataclass(frozen=True)
class HeatmapGrid:
    """Dense contraction-factor table over a (mu, sigma2) window.

    ``values[i, j]`` is the factor at ``(mu_values[j], sigma2_values[i])``;
    cells where the before-step divergence vanishes are NaN-masked.
    """

    mu_values: np.ndarray
    sigma2_values: np.ndarray
    values: np.ndarray
    functional: str
    alpha: float
    beta: float
    grey_line_sigma2: float

    def __post_init__(self):
        if self.values.shape != (self.sigma2_values.size, self.mu_values.size):
            raise ValueError("values shape must be (len(sigma2), len(mu))")

    def to_csv(self, path) -> None:
        """Header ``# alpha, beta, functional, grey_line_sigma2`` then mu, sigma2, value rows."""
        buf = io.StringIO()
        buf.write(f"# {self.alpha!r}, {self.beta!r}, {self.functional}, {self.grey_line_sigma2!r}\n")
        for i, s2 in enumerate(self.sigma2_values):
            for j, mu in enumerate(self.mu_values):
                v = self.values[i, j]
                buf.write(f"{mu!r},{s2!r},{'nan' if np.isnan(v) else repr(float(v))}\n")
        with open(path, "w") as fh:
            fh.write(buf.getvalue())


def _factor_table(mu: np.ndarray, s2: np.ndarray, model: QuadraticModel,
                  kind: DivergenceKind) -> np.ndarray:
    """Vectorized contraction factors on the mesh sigma2 x mu."""
    mm, ss = np.meshgrid(mu, s2)
    star = 1.0 / model.beta
    s2_post = 1.0 + 0.5 * ss
    denom = 1.0 + model.alpha * s2_post
    mt, st = mm / denom, s2_post / denom

    def div(m, v):
        if kind.name == "kl":
            return 0.5 * (m**2 / star + np.log(star / v) - 1 + v / star)
        return m**2 / star**2 + (v - star) ** 2 / (v * star**2)

    den = div(mm, ss)
    num = div(mt, st)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den < 1e-14, np.nan, num / den)
    return out


def heatmap(model: QuadraticModel, kind: DivergenceKind,
            mu_range: tuple[float, float, int],
            sigma2_range: tuple[float, float, int]) -> HeatmapGrid:
    """Evaluate contraction factors densely; the equilibrium cell is masked."""
    if kind.name not in ("kl", "fisher_p"):
        raise ValueError("heatmaps are defined for KL and Fisher2 only")
    mu = np.linspace(*mu_range[:2], mu_range[2])
    s2 = np.linspace(*sigma2_range[:2], sigma2_range[2])
    if (s2 <= 0).any():
        raise ValueError("sigma2 range must be positive")
    name = "kl" if kind.name == "kl" else "fisher2"
    return HeatmapGrid(mu, s2, _factor_table(mu, s2, model, kind), name,
                       model.alpha, model.beta, 1.0 / model.beta)


def exceedance_witness(model: QuadraticModel) -> tuple[float, float, float]:
    """A concrete (mu, sigma2) whose KL and Fisher2 factors exceed (1/2+beta)^-2.

    Searches the small-variance / large-mean corner where the factor
    approaches (1 + alpha)^-2 > (1/2 + beta)^-2.
    """
    target = (0.5 + model.beta) ** -2
    for sigma2 in (1e-3, 1e-2, 1e-4, 1e-1):
        for mu in (1e3, 1e2, 1e4):
            kl = contraction_factor(mu, sigma2, model, DivergenceKind.kl())
            f2 = contraction_factor(mu, sigma2, model, DivergenceKind.fisher_p(2))
            if kl > target and f2 > target:
                return mu, sigma2, min(kl, f2)
    raise WitnessNotFoundError("no exceedance found in the search corner")

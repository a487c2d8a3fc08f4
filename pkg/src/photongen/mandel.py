"""Forward photon-counting transform (Mandel's formula).

``p_n = integral of W**n exp(-W) / n! * P(W) dW`` for continuous intensity
models, and the finite sum over modulator levels for a :class:`LevelTable`.
All Poisson weights are evaluated in log space so that n in the hundreds is
safe.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammaln, xlogy

from .distributions import (
    DomainError,
    IntensityModel,
    LevelTable,
    PhotonPMF,
    PointMass,
)

__all__ = [
    "NumericalFailure",
    "DesignMatrix",
    "log_poisson_weight",
    "poisson_weight",
    "forward_discrete",
    "forward_continuous",
    "build_design_matrix",
]

QUAD_EPSREL = 1e-10
# integrand cut-off relative to its peak, ln(1e-20)
_LOG_CUTOFF = -46.0
_QUAD_LIMIT = 400


class NumericalFailure(ArithmeticError):
    """A numerical routine did not reach its tolerance."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


def log_poisson_weight(w, n):
    """``n ln w - w - ln n!``, vectorised; ``-inf`` where the weight is 0."""
    w = np.asarray(w, dtype=float)
    n = np.asarray(n)
    return xlogy(n, w) - w - gammaln(n + 1.0)


def poisson_weight(w: float, n: int) -> float:
    """Poisson probability of ``n`` photons at integrated intensity ``w``."""
    if w < 0:
        raise DomainError(f"intensity must be non-negative, got {w}")
    if not 0 <= n <= 10**6:
        raise DomainError(f"photon number out of range: {n}")
    if w == 0:
        return 1.0 if n == 0 else 0.0
    return math.exp(n * math.log(w) - w - math.lgamma(n + 1))


@dataclass(frozen=True)
class DesignMatrix:
    """Poisson kernel on a level grid with the normalisation row appended.

    ``matrix`` has shape ``(n_max + 2, n_levels)``; row ``n`` holds the
    Poisson weights of photon number ``n`` and the final row is the constant
    ``norm_weight``.
    """

    matrix: np.ndarray
    levels: np.ndarray
    n_max: int
    norm_weight: float = 1.0

    @property
    def kernel(self) -> np.ndarray:
        return self.matrix[:-1]


def _kernel(levels: np.ndarray, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1)[:, None]
    return np.exp(log_poisson_weight(levels[None, :], n))


def build_design_matrix(table: LevelTable, n_max: int, norm_weight: float = 1.0) -> DesignMatrix:
    if n_max < 0:
        raise DomainError("n_max must be non-negative")
    kern = _kernel(table.levels, n_max)
    matrix = np.vstack([kern, np.full(table.n_levels, float(norm_weight))])
    matrix.setflags(write=False)
    return DesignMatrix(matrix, table.levels, n_max, float(norm_weight))


def forward_discrete(table: LevelTable, n_max: int) -> PhotonPMF:
    """Photon statistics produced by a level table, up to ``n_max``."""
    probs = _kernel(table.levels, n_max) @ table.probs
    return PhotonPMF.from_probs(probs)


def _u_bounds(logf, n, scale):
    """Integration limits in u = ln W where ``logf`` exceeds peak + cut-off."""
    hi = max(math.log(max(n, 1)) + 6.0, math.log(scale) + 8.0, 4.0)
    u = np.linspace(-60.0, hi, 6001)
    while True:
        with np.errstate(all="ignore"):
            lf = logf(u)
        lf = np.where(np.isnan(lf), -np.inf, lf)
        peak = int(np.argmax(lf))
        top = lf[peak]
        if not np.isfinite(top):
            return None
        keep = np.flatnonzero(lf > top + _LOG_CUTOFF)
        if keep[-1] == u.size - 1:
            # integrand still significant at the right edge
            u = np.linspace(-60.0, u[-1] + 20.0, 6001)
            continue
        step = u[1] - u[0]
        return u[max(keep[0] - 1, 0)], u[keep[-1] + 1], u[peak], step


def _continuous_element(model: IntensityModel, n: int) -> float:
    lgam = math.lgamma(n + 1)

    def logf(u):
        w = np.exp(u)
        with np.errstate(divide="ignore"):
            return n * u - w - lgam + np.log(model.pdf(w)) + u

    scale = model.mean() + 10.0 * math.sqrt(model.variance())
    bounds = _u_bounds(logf, n, scale)
    if bounds is None:
        return 0.0
    lo, hi, peak, step = bounds

    def f(u):
        return math.exp(float(logf(u)))

    points = [p for p in (peak - step, peak, peak + step) if lo < p < hi]
    val, err, info, *msg = integrate.quad(
        f, lo, hi, epsabs=0.0, epsrel=QUAD_EPSREL, limit=_QUAD_LIMIT,
        points=points, full_output=1,
    )
    if msg and err > QUAD_EPSREL * abs(val) + 1e-300:
        raise NumericalFailure(f"quadrature failed for n={n}: {msg[0]}", index=n)
    return val


def forward_continuous(model: IntensityModel, n_max: int) -> PhotonPMF:
    """Photon statistics of a continuous intensity model, by adaptive quadrature.

    Integration runs in u = ln W, which tames heavy right tails and the
    W -> 0 end alike.  Point-mass components are evaluated exactly.
    """
    if n_max < 0:
        raise DomainError("n_max must be non-negative")
    n = np.arange(n_max + 1)
    probs = np.zeros(n_max + 1)
    for weight, part in model.components():
        if weight == 0:
            continue
        if isinstance(part, PointMass):
            if part.w == 0:
                contrib = (n == 0).astype(float)
            else:
                contrib = np.exp(log_poisson_weight(part.w, n))
        else:
            contrib = np.array([_continuous_element(part, int(k)) for k in n])
        probs += weight * contrib
    return PhotonPMF.from_probs(probs)

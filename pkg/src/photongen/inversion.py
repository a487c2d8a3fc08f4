"""Inverting photon statistics into a modulator level table.

The target p_0..p_nmax and the normalisation condition form an
``(n_max + 2) x n_levels`` linear system in the level probabilities, which
is solved under non-negativity with the Lawson-Hanson active-set NNLS.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .distributions import (
    N_LEVELS,
    STEP_DB,
    DomainError,
    LevelTable,
    PhotonPMF,
)
from .mandel import NumericalFailure, build_design_matrix

__all__ = [
    "EXACT_THRESHOLD",
    "InversionResult",
    "nnls",
    "invert_statistics",
    "scan_wmax",
    "load_program",
]

EXACT_THRESHOLD = 1e-9
SUPPORT_THRESHOLD = 1e-12


def _lstsq(a, b):
    # gelsy: complete orthogonal factorisation with column pivoting
    return scipy.linalg.lstsq(a, b, lapack_driver="gelsy", check_finite=False)[0]


def nnls(A, b, maxiter=None, tol=None):
    """Solve ``min ||A x - b||_2`` subject to ``x >= 0``.

    Lawson & Hanson's active-set method.  Ties when choosing the next
    variable to free go to the lowest column index, so the output is
    deterministic.

    Parameters
    ----------
    A : array_like, shape (m, n)
    b : array_like, shape (m,)
    maxiter : int, optional
        Cap on outer iterations, default ``3 * n``.
    tol : float, optional
        Dual-feasibility tolerance on the gradient ``A.T @ (b - A x)``.  By
        default it scales with the current residual norm, which bounds the
        round-off in the computed gradient.

    Returns
    -------
    x : ndarray, shape (n,)
    rnorm : float
        Euclidean norm of the residual ``A x - b``.

    Raises
    ------
    NumericalFailure
        If the outer-iteration cap is exceeded.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if b.shape != (m,):
        raise ValueError(f"rhs has shape {b.shape}, expected ({m},)")
    if maxiter is None:
        maxiter = 3 * n
    eps = np.finfo(float).eps
    a_scale = max(1.0, float(np.max(np.abs(A), initial=0.0)))
    # below this the residual is round-off and further pivots only add noise
    floor = 100.0 * eps * max(1.0, float(np.linalg.norm(b)))

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    blocked = np.zeros(n, dtype=bool)
    r = b.copy()
    w = A.T @ r
    outer = 0
    while True:
        rnorm = float(np.linalg.norm(r))
        if rnorm <= floor:
            break
        dual_tol = tol if tol is not None else 10.0 * eps * max(m, n) * a_scale * rnorm
        free = ~passive & ~blocked
        if not free.any() or np.max(w[free]) <= dual_tol:
            break
        outer += 1
        if outer > maxiter:
            raise NumericalFailure(f"NNLS did not converge in {maxiter} outer iterations")
        cand = np.flatnonzero(free)
        j = int(cand[np.argmax(w[cand])])
        passive[j] = True

        z = np.zeros(n)
        z[passive] = _lstsq(A[:, passive], b)
        if z[j] <= 0.0:
            # round-off made the new column useless; skip it until x moves
            passive[j] = False
            blocked[j] = True
            continue

        while np.any(z[passive] <= 0.0):
            neg = passive & (z <= 0.0)
            alpha = np.min(x[neg] / (x[neg] - z[neg]))
            x = x + alpha * (z - x)
            passive &= x > 0.0
            # the variable(s) that hit the bound leave the passive set exactly
            passive[neg & (x <= np.finfo(float).tiny)] = False
            x[~passive] = 0.0
            z = np.zeros(n)
            if passive.any():
                z[passive] = _lstsq(A[:, passive], b)
        x = z
        blocked[:] = False
        r = b - A @ x
        w = A.T @ r

    return x, float(np.linalg.norm(A @ x - b))


@dataclass(frozen=True)
class InversionResult:
    table: LevelTable
    residual_norm: float
    n_max: int
    threshold: float = EXACT_THRESHOLD

    @property
    def exact(self) -> bool:
        return self.residual_norm < self.threshold

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.table.probs > 0)

    @property
    def support_size(self) -> int:
        return int(self.support.size)

    def to_dict(self) -> dict:
        return {
            "w_max": self.table.w_max,
            "step_db": self.table.step_db,
            "n_max": self.n_max,
            "levels": self.table.levels.tolist(),
            "probs": self.table.probs.tolist(),
            "residual_norm": self.residual_norm,
            "support": self.support.tolist(),
            "exact": self.exact,
        }

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def load_program(path) -> LevelTable:
    """Read the level table back from a modulation-program JSON file."""
    data = json.loads(Path(path).read_text())
    return LevelTable(data["w_max"], data["probs"], data.get("step_db", STEP_DB))


def invert_statistics(
    target: PhotonPMF,
    w_max: float,
    norm_weight: float = 1.0,
    n_levels: int = N_LEVELS,
    step_db: float = STEP_DB,
    threshold: float = EXACT_THRESHOLD,
) -> InversionResult:
    """Find level probabilities reproducing ``target`` for n <= target.n_max.

    The target's tail mass is not part of the system; only p_0..p_nmax and
    the normalisation row are constrained.  ``exact=False`` in the result is
    not an error.
    """
    if not w_max > 0:
        raise DomainError("w_max must be positive")
    n_max = target.n_max
    probe = LevelTable(w_max, np.full(n_levels, 1.0 / n_levels), step_db)
    design = build_design_matrix(probe, n_max, norm_weight)
    rhs = np.concatenate((target.probs, [norm_weight]))
    x, _ = nnls(design.matrix, rhs)
    total = math.fsum(x)
    if total <= 0:
        # all-zero target; any single level is as good as another
        x = np.zeros(n_levels)
        x[0] = 1.0
        total = 1.0
    probs = x / total
    table = LevelTable(w_max, probs, step_db)
    residual = float(np.linalg.norm(design.matrix @ probs - rhs))
    return InversionResult(table, residual, n_max, threshold)


def scan_wmax(
    target: PhotonPMF,
    w_lo: float,
    w_hi: float,
    steps: int,
    **kwargs,
) -> tuple[InversionResult, float]:
    """Invert on a geometric grid of ``w_max`` and keep the best result.

    Every exact solution counts as a tie, and ties go to the smallest
    ``w_max`` (the detector is least saturated there).  When no grid point
    is exact the smallest residual wins.
    """
    if not 0 < w_lo < w_hi:
        raise DomainError("need 0 < w_lo < w_hi")
    if steps < 2:
        raise DomainError("need at least two scan steps")
    best = None
    for w_max in np.geomspace(w_lo, w_hi, steps):
        res = invert_statistics(target, float(w_max), **kwargs)
        if res.exact:
            return res, float(w_max)
        if best is None or res.residual_norm < best.residual_norm:
            best = res
    return best, best.table.w_max

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from ballprob.bounds import BoundReport, comparison_bound
from ballprob.configure import InversionConfig, SearchConfig
from ballprob.errors import DomainError
from ballprob.quadform import QuadFormLaw, cdf, density, from_gaussian
from ballprob.spectrum import Spectrum, regime

log = logging.getLogger("BP.metrics")


@dataclass
class ComparisonResult:
    """Kolmogorov distance between two ball-probability CDFs next to the bound that controls it."""

    distance: float
    argmax_x: float
    bound: BoundReport
    ratio: float

    def to_record(self) -> dict:
        return {
            "distance": self.distance,
            "argmax_x": self.argmax_x,
            "ratio": self.ratio,
            "bound": self.bound.to_record(),
        }


def pair_config(law_x: QuadFormLaw, law_y: QuadFormLaw) -> InversionConfig:
    """Default config for evaluating two laws together, the stricter tolerance wins."""
    return InversionConfig(
        abs_tol=min(InversionConfig.for_law(law_x).abs_tol, InversionConfig.for_law(law_y).abs_tol)
    )


def _refine(
    objective: Callable[[float], float],
    grid: np.ndarray,
    values: np.ndarray,
    tol: float,
    search: SearchConfig,
) -> Tuple[float, float]:
    # grid incumbent, then bounded Brent searches on shrinking brackets around it
    i = int(np.argmax(values))
    best_x, best = float(grid[i]), float(values[i])
    lo, hi = float(grid[max(i - 1, 0)]), float(grid[min(i + 1, grid.size - 1)])
    for round_ in range(search.refine_rounds):
        if hi <= lo:
            break
        res = optimize.minimize_scalar(
            lambda x: -objective(x),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-10 * max(1.0, abs(hi)), "maxiter": search.golden_maxiter},
        )
        improvement = -float(res.fun) - best
        if improvement > 0:
            best, best_x = -float(res.fun), float(res.x)
        if improvement < tol:
            log.debug(f"Refinement stopped after round {round_ + 1}, improvement {improvement:.3e}.")
            break
        width = (hi - lo) / 4
        lo, hi = max(float(grid[0]), best_x - width), min(float(grid[-1]), best_x + width)
    return best, best_x


def kolmogorov_distance(
    law_x: QuadFormLaw,
    law_y: QuadFormLaw,
    cfg: Optional[InversionConfig] = None,
    search: Optional[SearchConfig] = None,
) -> Tuple[float, float]:
    """``sup_x |P(X <= x) - P(Y <= x)|`` over the squared radius ``x``.

    Returns
    -------
        float
            the distance
        float
            the squared radius attaining it

    Raises
    ------
        NumericalError
            if a grid or refinement evaluation misses ``cfg.abs_tol``
    """
    cfg = cfg or pair_config(law_x, law_y)
    search = search or SearchConfig()
    lo = min(law_x.offset, law_y.offset)
    hi = max(law_x.mean + search.std_span * law_x.std, law_y.mean + search.std_span * law_y.std)
    if hi <= lo:
        # both laws are point masses
        return (0.0 if law_x.offset == law_y.offset else 1.0), lo
    grid = np.linspace(lo, hi, search.grid_size)
    fx = cdf(law_x, grid, cfg)
    fy = cdf(law_y, grid, cfg)

    def gap(x: float) -> float:
        return abs(cdf(law_x, x, cfg) - cdf(law_y, x, cfg))

    distance, argmax_x = _refine(gap, grid, np.abs(fx - fy), cfg.abs_tol, search)
    return min(1.0, distance), argmax_x


def band_probability(law: QuadFormLaw, x: float, eps: float, cfg: Optional[InversionConfig] = None) -> float:
    """``P(x < X < x + eps)``."""
    if eps < 0:
        raise DomainError(f"Band width must be nonnegative, got {eps}.")
    if eps == 0:
        return 0.0
    lower, upper = cdf(law, np.array([x, x + eps]), cfg)
    return float(np.clip(upper - lower, 0.0, 1.0))


def sup_band(
    law: QuadFormLaw, eps: float, cfg: Optional[InversionConfig] = None, search: Optional[SearchConfig] = None
) -> Tuple[float, float]:
    """Largest ``eps``-band probability over ``x >= 0`` and its location; inversion failures propagate."""
    if eps < 0:
        raise DomainError(f"Band width must be nonnegative, got {eps}.")
    if eps == 0:
        return 0.0, law.offset
    cfg = cfg or InversionConfig.for_law(law)
    search = search or SearchConfig()
    lo = max(0.0, law.offset - eps)
    hi = max(lo + eps, law.mean + search.std_span * law.std)
    grid = np.linspace(lo, hi, search.grid_size)
    values = cdf(law, np.concatenate([grid, grid + eps]), cfg)
    bands = np.clip(values[grid.size :] - values[: grid.size], 0.0, 1.0)

    def band(x: float) -> float:
        lower, upper = cdf(law, np.array([x, x + eps]), cfg)
        return float(upper - lower)

    prob, argmax_x = _refine(band, grid, bands, cfg.abs_tol, search)
    return float(np.clip(prob, 0.0, 1.0)), argmax_x


def sup_density(
    law: QuadFormLaw, cfg: Optional[InversionConfig] = None, search: Optional[SearchConfig] = None
) -> Tuple[float, float]:
    """Maximum of the density of ``law`` and its location."""
    cfg = cfg or InversionConfig.for_law(law)
    search = search or SearchConfig()
    lo = max(law.offset, law.mean - search.std_span * law.std)
    hi = law.mean + search.std_span * law.std
    # the first node sits one grid step inside the support
    grid = np.linspace(lo, hi, search.grid_size + 1)[1:] if lo == law.offset else np.linspace(lo, hi, search.grid_size)
    values = density(law, grid, cfg)

    def dens(x: float) -> float:
        return density(law, x, cfg)

    return _refine(dens, grid, values, cfg.abs_tol, search)


def compare(
    sx: Spectrum,
    sy: Spectrum,
    shift: Optional[Sequence[float]] = None,
    cfg: Optional[InversionConfig] = None,
    same_shift: bool = False,
    search: Optional[SearchConfig] = None,
) -> ComparisonResult:
    """Distance between ``||xi - a||^2`` and ``||eta||^2`` (or ``||eta - a||^2``) with its bound."""
    shift = np.zeros(len(sx)) if shift is None else np.asarray(shift, dtype=float).reshape(-1)
    law_x = from_gaussian(sx, shift)
    law_y = from_gaussian(sy, shift if same_shift else None)
    distance, argmax_x = kolmogorov_distance(law_x, law_y, cfg, search)
    bound = comparison_bound(sx, sy, float(np.sum(shift**2)), same_shift=same_shift)
    ratio = distance / bound.value if 0 < bound.value < math.inf else 0.0
    log.debug(f"{regime(sx)}/{regime(sy)}: distance {distance:.3e}, bound {bound.value:.3e}, ratio {ratio:.3e}.")
    return ComparisonResult(distance=distance, argmax_x=argmax_x, bound=bound, ratio=ratio)

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import integrate, optimize, stats

from ballprob.bounds import density_nonuniform_bound, nonuniform_product
from ballprob.bp_types import ExperimentName, Verdict
from ballprob.configure import (
    C_EMP_BAND,
    C_EMP_COMPARISON,
    C_EMP_DENSITY,
    C_HOLDER,
    IDENTITY_SCALING_INTERVAL,
    CorpusConfig,
    InversionConfig,
    SearchConfig,
)
from ballprob.corpus import Instance, generate
from ballprob.errors import ConditionError, DomainError, NumericalError
from ballprob.metrics import ComparisonResult, band_probability, compare, sup_band, sup_density
from ballprob.quadform import cdf, density_grid, from_gaussian
from ballprob.spectrum import Spectrum, kappa, make_spectrum, regime, tail_norms
from ballprob.utils import parallel_map

log = logging.getLogger("BP.analysis")


@dataclass
class ExperimentRecord:
    """Outcome of one reproduced construction: what was observed against the inequality it must satisfy.

    ``direction`` reads ``"upper"`` for observed <= constant * bound + tol, ``"lower"`` for
    observed >= bound and ``"between"`` for lower_bound <= observed <= bound.
    """

    name: ExperimentName
    inputs: Dict[str, float]
    observed: float
    bound: float
    direction: str = "upper"
    lower_bound: Optional[float] = None
    constant: float = 1.0
    tol: float = 0.0
    extra: Dict[str, float] = field(default_factory=dict)

    @property
    def verdict(self) -> Verdict:
        if self.direction == "lower":
            ok = self.observed >= self.bound
        elif self.direction == "between":
            ok = self.lower_bound <= self.observed <= self.bound
        else:
            ok = self.observed <= self.constant * self.bound + self.tol
        return "pass" if ok else "fail"

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "inputs": dict(self.inputs),
            "observed": self.observed,
            "bound": self.bound,
            "direction": self.direction,
            "lower_bound": self.lower_bound,
            "constant": self.constant,
            "tol": self.tol,
            "verdict": self.verdict,
            **({"extra": dict(self.extra)} if self.extra else {}),
        }


class HolderProduct(NamedTuple):
    integral: float
    tau: float
    q: np.ndarray
    holder_rhs: float


def h_integral(a: float) -> float:
    """``H(a) = int_0^inf (1 + t^2)^(-(a + 1/2)) dt``.

    With ``t = tan(pi/2 - u)`` the integral becomes ``int_0^(pi/2) sin(u)^(2a - 1) du``, integrated with the
    algebraic endpoint weight ``u^(2a - 1)``.
    """
    if not a > 0:
        raise DomainError(f"H(a) needs a > 0, got {a}.")
    power = 2.0 * a - 1.0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        value, err = integrate.quad(
            lambda u: np.sinc(u / np.pi) ** power,
            0.0,
            np.pi / 2,
            weight="alg",
            wvar=(power, 0.0),
            epsabs=1e-14,
            epsrel=1e-13,
        )
    if caught and err > 1e-10:
        raise NumericalError(f"H({a}) quadrature did not converge: {caught[0].message}", err_est=err)
    return float(value)


def h_integral_small_a(a: float) -> ExperimentRecord:
    """``a H(a) <= 1.5 H(1)`` on ``0 < a <= 1``."""
    if not 0 < a <= 1:
        raise DomainError(f"The small-a estimate needs 0 < a <= 1, got {a}.")
    return ExperimentRecord(
        name="h-integral", inputs={"a": a}, observed=a * h_integral(a), bound=1.5 * h_integral(1.0)
    )


def h_integral_lower_branch(a: float) -> ExperimentRecord:
    """``sqrt(a) H(a) <= sqrt(2) H(1)`` on ``a >= 1``."""
    if not a >= 1:
        raise DomainError(f"The large-a estimate needs a >= 1, got {a}.")
    return ExperimentRecord(
        name="h-integral",
        inputs={"a": a},
        observed=math.sqrt(a) * h_integral(a),
        bound=math.sqrt(2.0) * h_integral(1.0),
    )


def holder_product_integral(s: Spectrum) -> HolderProduct:
    """``int_0^inf prod_j (1 + lambda_j^2 t^2)^(-1/4) dt`` with the exponents of its Hölder bound.

    ``tau`` solves ``sum_j lambda_j^2 / (4 tau + 2 lambda_j^2) = 1`` and ``q_j = 4 tau / lambda_j^2 + 2``.
    ``holder_rhs = prod_j (H(tau / lambda_j^2) / lambda_j)^(1 / q_j)`` dominates the integral.

    Raises
    ------
        ConditionError
            unless ``3 lambda_1^2 <= Lambda_1^2``
    """
    if regime(s) != "HighDim":
        raise ConditionError("The Hölder product estimate needs 3*lambda1^2 <= Lambda1^2.", which="s")
    lam = s.values[s.values > 0]
    lam_sq = lam**2
    total = tail_norms(s).lambda1_sq

    def excess(tau: float) -> float:
        return float(np.sum(lam_sq / (4.0 * tau + 2.0 * lam_sq))) - 1.0

    tau = optimize.bisect(excess, 0.0, total / 4.0, xtol=1e-15 * total, rtol=1e-12, maxiter=500)
    q = 4.0 * tau / lam_sq + 2.0

    def integrand(t: float) -> float:
        return float(np.exp(-0.25 * np.sum(np.log1p(lam_sq * t * t))))

    integral, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=1e-12, epsrel=1e-10, limit=200)
    rhs = float(np.prod([(h_integral(tau / l2) / l) ** (1.0 / qj) for l, l2, qj in zip(lam, lam_sq, q)]))
    return HolderProduct(integral=float(integral), tau=float(tau), q=q, holder_rhs=rhs)


def r3_lower_bound(
    lam1: float, lam2: float, lam3: float, eps: float, cfg: Optional[InversionConfig] = None
) -> ExperimentRecord:
    """Perturb the third eigenvalue by ``1 + eps`` and compare ball probabilities at squared radius ``2 lam3``.

    The volume argument gives the lower bound
    ``eps lam3 / (16 sqrt(lam1 lam2)) exp(-lam3/lam1 - lam3/lam2)``.
    """
    if not 0 < eps < 1:
        raise DomainError(f"eps must lie in (0, 1), got {eps}.")
    if min(lam1, lam2, lam3) <= 0:
        raise DomainError("All three eigenvalues must be positive.")
    law_x = from_gaussian(make_spectrum([lam1, lam2, lam3]))
    law_y = from_gaussian(make_spectrum([lam1, lam2, lam3 * (1.0 + eps)]))
    radius_sq = 2.0 * lam3
    observed = abs(cdf(law_x, radius_sq, cfg) - cdf(law_y, radius_sq, cfg))
    delta = eps * lam3
    lower = delta / (16.0 * math.sqrt(lam1 * lam2)) * math.exp(-lam3 / lam1 - lam3 / lam2)
    return ExperimentRecord(
        name="r3-lower-bound",
        inputs={"lam1": lam1, "lam2": lam2, "lam3": lam3, "eps": eps},
        observed=observed,
        bound=lower,
        direction="lower",
        extra={"radius_sq": radius_sq, "nuclear_diff": delta},
    )


def one_dim_bounds(lam_x: float, lam_y: float) -> ExperimentRecord:
    """Sandwich the one-dimensional distance ``sup_x 2 (Phi(x/sqrt(lo)) - Phi(x/sqrt(hi)))``.

    The upper envelope bounds the integrand by its value at the outer limit and maximizes
    ``x exp(-x^2 / (2 hi))``; the lower envelope evaluates the chain at ``x = sqrt(lo)``.
    """
    if not (lam_x > 0 and lam_y > 0):
        raise DomainError("Both variances must be positive.")
    if lam_x == lam_y:
        raise DomainError("The two variances must differ.")
    lo, hi = sorted((lam_x, lam_y))
    delta = hi - lo
    scale = math.sqrt(lo * hi) * (math.sqrt(lo) + math.sqrt(hi))

    def gap(x: float) -> float:
        return 2.0 * (stats.norm.cdf(x / math.sqrt(lo)) - stats.norm.cdf(x / math.sqrt(hi)))

    res = optimize.minimize_scalar(
        lambda x: -gap(x), bounds=(0.0, 10.0 * math.sqrt(hi)), method="bounded", options={"xatol": 1e-12}
    )
    observed = -float(res.fun)
    upper = delta / scale * math.sqrt(hi / math.e)
    lower = 2.0 * delta * math.sqrt(lo) * math.exp(-0.5) / (math.sqrt(2.0 * math.pi) * scale)
    argmax = math.sqrt(lo * hi * math.log(hi / lo) / delta)
    return ExperimentRecord(
        name="one-dim",
        inputs={"lam_x": lam_x, "lam_y": lam_y},
        observed=observed,
        bound=upper,
        direction="between",
        lower_bound=lower,
        extra={"argmax_radius": float(res.x), "argmax_radius_exact": argmax},
    )


def degenerate_band(eps: float, cfg: Optional[InversionConfig] = None) -> ExperimentRecord:
    """Band probability of ``Z^2`` at zero, ``2 Phi(sqrt(eps)) - 1``, against ``sqrt(eps) / (2 sqrt(pi))``."""
    if not 0 < eps <= math.log(2.0):
        raise DomainError(f"eps must lie in (0, log 2], got {eps}.")
    observed = math.erf(math.sqrt(eps / 2.0))
    law = from_gaussian(make_spectrum([1.0, 0.0]))
    return ExperimentRecord(
        name="degenerate-band",
        inputs={"eps": eps},
        observed=observed,
        bound=math.sqrt(eps) / (2.0 * math.sqrt(math.pi)),
        direction="lower",
        extra={"observed_inversion": band_probability(law, 0.0, eps, cfg)},
    )


def ratio_sweep(
    corpus_seed: int,
    n_instances: int,
    cfg: Optional[InversionConfig] = None,
    threads: Optional[int] = None,
) -> List[ComparisonResult]:
    """Compare every instance of the seeded corpus; results come back in instance order."""
    if n_instances < 1:
        raise DomainError(f"n_instances must be at least 1, got {n_instances}.")
    log.info(f"Ratio sweep over {n_instances} instances (seed {corpus_seed}).")
    return compare_instances(generate(CorpusConfig(seed=corpus_seed, n_instances=n_instances)), cfg, threads)


def compare_instances(
    instances: Sequence[Instance], cfg: Optional[InversionConfig] = None, threads: Optional[int] = None
) -> List[ComparisonResult]:
    return parallel_map(lambda inst: compare(inst.sx, inst.sy, inst.shift, cfg), instances, threads)


def sweep_frame(instances: Sequence[Instance], results: Sequence[ComparisonResult]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "instance_id": [inst.instance_id for inst in instances],
            "regime_x": [inst.regime_x for inst in instances],
            "regime_y": [inst.regime_y for inst in instances],
            "distance": [r.distance for r in results],
            "bound": [r.bound.value for r in results],
            "ratio": [r.ratio for r in results],
        }
    )


def identity_density_scaling(
    ps: Iterable[int], cfg: Optional[InversionConfig] = None, threads: Optional[int] = None
) -> pd.DataFrame:
    """``sup_x density(identity_p) * sqrt(p)`` for each ``p``, checked against the frozen interval."""
    lower, upper = IDENTITY_SCALING_INTERVAL
    search = SearchConfig(grid_size=128)

    def row(p: int) -> dict:
        if p < 2:
            raise DomainError(f"The density needs p >= 2, got {p}.")
        law = from_gaussian(make_spectrum(np.ones(p)))
        value, argmax = sup_density(law, cfg, search)
        scaled = value * math.sqrt(p)
        return {"p": p, "sup_density": value, "argmax_x": argmax, "scaled": scaled, "ok": lower <= scaled <= upper}

    return pd.DataFrame(parallel_map(row, list(ps), threads))


def nonuniform_density_check(
    instances: Sequence[Instance],
    cfg: Optional[InversionConfig] = None,
    n_points: int = 200,
    threads: Optional[int] = None,
) -> pd.DataFrame:
    """Density of every shifted law against its Gaussian-tail bound with ``lambda = tr``, on a grid."""

    def rows(inst: Instance) -> pd.DataFrame:
        law = inst.law_x()
        span = law.mean + 8.0 * law.std - law.offset
        xs = law.offset + span * np.arange(1, n_points + 1) / n_points
        dens, err = density_grid(law, xs, cfg)
        bound = np.array([density_nonuniform_bound(law, x) for x in xs])
        return pd.DataFrame(
            {
                "instance_id": inst.instance_id,
                "x": xs,
                "density": dens,
                "err_est": err,
                "bound": bound,
                "product": nonuniform_product(law),
                "ok": dens <= bound + err,
            }
        )

    return pd.concat(parallel_map(rows, instances, threads), ignore_index=True)


def band_suite(
    instances: Sequence[Instance],
    eps_list: Sequence[float] = (0.01, 0.1, 0.5),
    cfg: Optional[InversionConfig] = None,
    threads: Optional[int] = None,
) -> pd.DataFrame:
    """``sup_band(eps) / (kappa * eps)`` for the shifted law of every instance."""

    def rows(inst: Instance) -> List[dict]:
        law = inst.law_x()
        k = kappa(inst.sx)
        out = []
        for eps in eps_list:
            prob, argmax = sup_band(law, eps, cfg)
            out.append(
                {
                    "instance_id": inst.instance_id,
                    "regime": inst.regime_x,
                    "eps": eps,
                    "sup_band": prob,
                    "argmax_x": argmax,
                    "kappa": k,
                    "ratio": prob / (k * eps),
                }
            )
        return out

    nested = parallel_map(rows, instances, threads)
    return pd.DataFrame([r for group in nested for r in group])


def calibrate(frame: pd.DataFrame, column: str = "ratio", by: Optional[str] = None) -> pd.Series:
    """Largest observed ratio, overall and per group, i.e. the smallest admissible empirical constant."""
    overall = pd.Series({"all": float(frame[column].max())})
    if by is None:
        return overall
    return pd.concat([overall, frame.groupby(by)[column].max()])


def calibration_run(
    instances: Sequence[Instance],
    eps_list: Sequence[float] = (0.01, 0.1, 0.5),
    cfg: Optional[InversionConfig] = None,
    threads: Optional[int] = None,
) -> pd.DataFrame:
    """Largest observed ratio behind each frozen empirical constant, next to the committed value.

    ``comparison`` is distance over the comparison bound, ``band`` is ``sup_band / (kappa * eps)`` and
    ``density`` is ``sup_x density / kappa``, all on the shifted laws of ``instances``.
    """
    if not instances:
        raise DomainError("The calibration run needs at least one instance.")
    results = compare_instances(instances, cfg, threads)
    bands = band_suite(instances, eps_list, cfg, threads)

    def density_ratio(inst: Instance) -> float:
        return sup_density(inst.law_x(), cfg)[0] / kappa(inst.sx)

    densities = parallel_map(density_ratio, instances, threads)
    observed = {
        "comparison": max(r.ratio for r in results),
        "band": float(calibrate(bands)["all"]),
        "density": max(densities),
    }
    frozen = {"comparison": C_EMP_COMPARISON, "band": C_EMP_BAND, "density": C_EMP_DENSITY}
    rows = [
        {
            "constant": name,
            "observed_max": value,
            "frozen": frozen[name],
            "margin": frozen[name] / value if value > 0 else math.inf,
            "ok": value <= frozen[name],
        }
        for name, value in observed.items()
    ]
    log.info(f"Calibration over {len(instances)} instances: {observed}.")
    return pd.DataFrame(rows)


def holder_suite(instances: Sequence[Instance]) -> pd.DataFrame:
    """``Lambda_1`` times the Hölder product integral for every case-1 spectrum of the corpus."""
    rows = []
    for inst in instances:
        for s in (inst.sx, inst.sy):
            if regime(s) != "HighDim":
                continue
            res = holder_product_integral(s)
            scaled = res.integral * tail_norms(s).Lambda1
            rows.append({"instance_id": inst.instance_id, "scaled": scaled, "ok": scaled <= C_HOLDER})
    return pd.DataFrame(rows, columns=["instance_id", "scaled", "ok"])
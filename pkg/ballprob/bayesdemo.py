from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy import linalg, stats

from ballprob.analysis import ExperimentRecord
from ballprob.bounds import pinsker_baseline
from ballprob.configure import C_EMP_BAYES, DEFAULT_SEED, InversionConfig
from ballprob.errors import ConditionError, DomainError
from ballprob.quadform import QuadFormLaw, cdf, from_gaussian, quantile, sample
from ballprob.spectrum import Spectrum, check_symmetric, nuclear_diff, schatten_norm, spectrum_of_matrix
from ballprob.utils import load_json

log = logging.getLogger("BP.bayesdemo")

RESIDUAL_TOL = 1e-8
PSD_TOL = 1e-10
# eigenvalues below this fraction of the largest one are treated as exact zeros
RANK_TOL = 1e-12
MC_BLOCK = 10_000


@dataclass
class LinearGaussianModel:
    """``Y = Psi^T theta + eps`` with ``eps ~ N(0, noise_var I_n)``.

    Parameters
    ----------
        design : np.ndarray
            ``p x n`` design ``Psi``
        noise_var : float
            noise variance ``sigma^2``
        response : np.ndarray, optional
            observed ``n``-vector ``Y``
        truth : np.ndarray, optional
            mean response ``f*``, needed by the coverage experiment
    """

    design: np.ndarray
    noise_var: float
    response: Optional[np.ndarray] = None
    truth: Optional[np.ndarray] = None

    def __post_init__(self):
        self.design = np.atleast_2d(np.asarray(self.design, dtype=float))
        if not (math.isfinite(self.noise_var) and self.noise_var > 0):
            raise DomainError(f"noise_var must be positive, got {self.noise_var}.")
        n = self.n
        for name in ("response", "truth"):
            value = getattr(self, name)
            if value is None:
                continue
            value = np.asarray(value, dtype=float).reshape(-1)
            if value.size != n:
                raise DomainError(f"{name} has length {value.size}, the design has {n} columns.")
            setattr(self, name, value)

    @property
    def p(self) -> int:
        return self.design.shape[0]

    @property
    def n(self) -> int:
        return self.design.shape[1]

    def synthesize_response(self, seed: int = DEFAULT_SEED) -> "LinearGaussianModel":
        """Copy of the model with ``Y = f* + sigma * noise``; ``f*`` defaults to ``Psi^T theta`` with standard normal ``theta``."""
        truth_seed, noise_seed = np.random.SeedSequence(seed).spawn(2)
        truth = self.truth
        if truth is None:
            truth = self.design.T @ np.random.default_rng(truth_seed).standard_normal(self.p)
        noise = np.random.default_rng(noise_seed).standard_normal(self.n)
        return LinearGaussianModel(
            design=self.design, noise_var=self.noise_var, response=truth + math.sqrt(self.noise_var) * noise, truth=truth
        )


@dataclass
class Posterior:
    mean: np.ndarray
    precision: np.ndarray
    covariance: np.ndarray


def synthetic_design(
    n: int,
    p: int,
    seed: int = DEFAULT_SEED,
    decay: float = 1.0,
    singular_values: Optional[np.ndarray] = None,
) -> np.ndarray:
    """``p x n`` design ``U diag(s) V^T`` with random orthogonal factors and ``s_j = j^(-decay) sqrt(n)``."""
    if not 1 <= p <= n:
        raise DomainError(f"Need 1 <= p <= n, got p={p}, n={n}.")
    if singular_values is None:
        s = np.arange(1, p + 1, dtype=float) ** (-decay) * math.sqrt(n)
    else:
        s = np.asarray(singular_values, dtype=float).reshape(-1)
        if s.size != p or np.any(s < 0):
            raise DomainError(f"Expected {p} nonnegative singular values, got {s}.")
    u_seed, v_seed = np.random.SeedSequence(seed).spawn(2)
    U = stats.ortho_group.rvs(p, random_state=np.random.default_rng(u_seed)) if p > 1 else np.ones((1, 1))
    V, _ = np.linalg.qr(np.random.default_rng(v_seed).standard_normal((n, p)))
    return (U * s) @ V.T


def _as_matrix(G_sq: Union[np.ndarray, List[float]], p: int, name: str) -> np.ndarray:
    G = np.asarray(G_sq, dtype=float)
    if G.ndim <= 1:
        G = np.diag(np.broadcast_to(G, (p,)))
    G = check_symmetric(G, name)
    if G.shape[0] != p:
        raise DomainError(f"{name} has dimension {G.shape[0]}, expected {p}.")
    return G


def posterior(model: LinearGaussianModel, G_sq: np.ndarray, seed: int = DEFAULT_SEED) -> Posterior:
    """Gaussian posterior of ``theta`` under the prior ``N(0, G^-2)``.

    ``mean = (Psi Psi^T + sigma^2 G^2)^-1 Psi Y`` and ``precision = sigma^-2 Psi Psi^T + G^2``. A missing
    response is synthesized from ``seed``.

    Raises
    ------
        DomainError
            when ``Psi Psi^T + sigma^2 G^2`` is singular
    """
    if model.response is None:
        model = model.synthesize_response(seed)
    G_sq = _as_matrix(G_sq, model.p, "G_sq")
    gram = model.design @ model.design.T
    system = gram + model.noise_var * G_sq
    rhs = model.design @ model.response
    try:
        factor = linalg.cho_factor(system)
    except linalg.LinAlgError as err:
        raise DomainError(f"Posterior system is singular: {err}") from err
    mean = linalg.cho_solve(factor, rhs)
    residual = float(np.linalg.norm(system @ mean - rhs))
    if residual > RESIDUAL_TOL * max(float(np.linalg.norm(rhs)), 1.0):
        raise DomainError(f"Posterior system is numerically singular, residual {residual:.3e}.")
    covariance = model.noise_var * linalg.cho_solve(factor, np.eye(model.p))
    return Posterior(mean=mean, precision=gram / model.noise_var + G_sq, covariance=0.5 * (covariance + covariance.T))


def _law(S: np.ndarray, a: Optional[np.ndarray] = None) -> Tuple[Spectrum, np.ndarray]:
    s, shift = spectrum_of_matrix(S, a)
    values = s.values.copy()
    if values.size and values[0] > 0:
        values[values < RANK_TOL * values[0]] = 0.0
    return Spectrum(values), shift


def credible_radius(
    sigma_G: Union[Spectrum, np.ndarray], alpha: float, cfg: Optional[InversionConfig] = None
) -> float:
    """Radius ``r`` with ``P(||xi_G|| >= r) = alpha`` for ``xi_G ~ N(0, Sigma_G)``."""
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}.")
    s = sigma_G if isinstance(sigma_G, Spectrum) else _law(sigma_G)[0]
    return math.sqrt(quantile(from_gaussian(s), 1.0 - alpha, cfg))


def _exceedance(law: QuadFormLaw, radius_sq: float, cfg: Optional[InversionConfig]) -> Tuple[float, float]:
    cfg = cfg or InversionConfig.for_law(law)
    return 1.0 - float(cdf(law, radius_sq, cfg)), cfg.abs_tol


def _monte_carlo(law: QuadFormLaw, radius_sq: float, n_mc: int, seed: int) -> dict:
    hits = float(np.mean(sample(law, n_mc, seed) > radius_sq))
    return {"mc_exceedance": hits, "mc_std": math.sqrt(hits * (1.0 - hits) / n_mc)}


def _psd_gap(M: np.ndarray) -> float:
    w = linalg.eigvalsh(M)
    return float(w.min()) if w.size else 0.0


def prior_impact(
    model: LinearGaussianModel,
    G_sq: np.ndarray,
    G1_sq: np.ndarray,
    W: Optional[np.ndarray] = None,
    alpha: float = 0.05,
    cfg: Optional[InversionConfig] = None,
    seed: int = DEFAULT_SEED,
    strict: bool = True,
    n_mc: int = 0,
) -> ExperimentRecord:
    """Credibility of the ``G``-credible ball under the ``G1`` posterior against its prior-impact bound.

    ``observed = |P(||xi_G1 + a|| >= r_G) - alpha|`` with ``a = W (mean_G1 - mean_G)``, compared with
    ``(tr Sigma_G1 - tr Sigma_G + ||a||^2) / ||Sigma_G||_Fr``. The Pinsker value is reported next to it.

    Raises
    ------
        ConditionError
            if ``G^2 - G1^2`` is not positive semidefinite and ``strict`` is set
    """
    if model.response is None:
        model = model.synthesize_response(seed)
    p = model.p
    G_sq = _as_matrix(G_sq, p, "G_sq")
    G1_sq = _as_matrix(G1_sq, p, "G1_sq")
    W = np.eye(p) if W is None else np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[1] != p:
        raise DomainError(f"W has {W.shape[1]} columns, expected {p}.")

    post_g, post_g1 = posterior(model, G_sq), posterior(model, G1_sq)
    sigma_g = W @ post_g.covariance @ W.T
    sigma_g1 = W @ post_g1.covariance @ W.T
    a = W @ (post_g1.mean - post_g.mean)
    r_g = credible_radius(sigma_g, alpha, cfg)

    spec_g, _ = _law(sigma_g)
    spec_g1, shift = _law(sigma_g1, a)
    ordered = _psd_gap(G_sq - G1_sq) >= -PSD_TOL * max(1.0, float(np.max(np.abs(G_sq))))
    if ordered:
        spread = spec_g1.trace - spec_g.trace
    elif strict:
        raise ConditionError("G_sq - G1_sq is not positive semidefinite.", which="G1_sq")
    else:
        log.warning("G_sq - G1_sq is not positive semidefinite, using the eigenvalue l1 difference.")
        spread = nuclear_diff(spec_g, spec_g1)

    law = from_gaussian(spec_g1, shift)
    exceed, tol = _exceedance(law, r_g**2, cfg)
    shift_sq = float(np.sum(a**2))
    frob = schatten_norm(sigma_g, 2)
    rhs = (spread + shift_sq) / frob if frob > 0 else math.inf
    if spread + shift_sq == 0:
        rhs = 0.0
    try:
        pinsker = pinsker_baseline(sigma_g, sigma_g1, a, whiten=sigma_g1)
    except DomainError as err:
        log.debug(f"Pinsker baseline undefined: {err}")
        pinsker = math.inf

    extra = {
        "radius": r_g,
        "exceedance": exceed,
        "spectral_term": spread,
        "shift_norm_sq": shift_sq,
        "frobenius": frob,
        "pinsker": pinsker,
        "psd_ordered": float(ordered),
        "ratio": abs(exceed - alpha) / rhs if 0 < rhs < math.inf else 0.0,
    }
    if n_mc > 0:
        extra.update(_monte_carlo(law, r_g**2, n_mc, seed))
    return ExperimentRecord(
        name="prior-impact",
        inputs={"alpha": alpha, "p": p, "n": model.n, "noise_var": model.noise_var},
        observed=abs(exceed - alpha),
        bound=rhs,
        constant=C_EMP_BAYES,
        tol=2.0 * tol,
        extra=extra,
    )


def hat_operator(model: LinearGaussianModel, G_sq: np.ndarray) -> np.ndarray:
    """``Pi_G = Psi^T (Psi Psi^T + sigma^2 G^2)^-1 Psi``."""
    G_sq = _as_matrix(G_sq, model.p, "G_sq")
    system = model.design @ model.design.T + model.noise_var * G_sq
    try:
        factor = linalg.cho_factor(system)
    except linalg.LinAlgError as err:
        raise DomainError(f"Posterior system is singular: {err}") from err
    Pi = model.design.T @ linalg.cho_solve(factor, model.design)
    return 0.5 * (Pi + Pi.T)


def _coverage_monte_carlo(
    model: LinearGaussianModel, Pi: np.ndarray, A: np.ndarray, radius: float, n_mc: int, seed: int
) -> dict:
    # full replications: fresh noise, posterior mean, is f* outside the credible ball
    rng = np.random.default_rng(seed)
    sigma = math.sqrt(model.noise_var)
    misses = 0
    done = 0
    while done < n_mc:
        m = min(MC_BLOCK, n_mc - done)
        Y = model.truth + sigma * rng.standard_normal((m, model.n))
        resid = (Y @ Pi.T - model.truth) @ A.T
        misses += int(np.count_nonzero(np.sum(resid**2, axis=1) > radius**2))
        done += m
    hits = misses / n_mc
    return {"mc_exceedance": hits, "mc_std": math.sqrt(hits * (1.0 - hits) / n_mc)}


def np_bayes_coverage(
    model: LinearGaussianModel,
    G_sq: np.ndarray,
    A: Optional[np.ndarray] = None,
    alpha: float = 0.05,
    cfg: Optional[InversionConfig] = None,
    n_mc: int = 0,
    seed: int = DEFAULT_SEED,
) -> ExperimentRecord:
    """Frequentist miscoverage of the credible ellipsoid ``{f : ||A (f - Pi_G Y)|| <= r_G}``.

    ``observed = |P(||xi - a|| > r_G) - alpha|`` with ``a = A (I - Pi_G) f*`` and ``xi ~ N(0, sigma^2 A Pi_G^2 A^T)``,
    compared with ``(tr Sigma_G - tr Sigma + ||a||^2) / ||Sigma||_Fr`` where ``Sigma_G = sigma^2 A Pi_G A^T``.
    """
    if model.truth is None:
        raise DomainError("The coverage experiment needs the true mean response.")
    n = model.n
    A = np.eye(n) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] != n:
        raise DomainError(f"A has {A.shape[1]} columns, expected {n}.")
    Pi = hat_operator(model, G_sq)
    a = A @ (model.truth - Pi @ model.truth)
    sigma = model.noise_var * A @ Pi @ Pi @ A.T
    sigma_g = model.noise_var * A @ Pi @ A.T
    r_g = credible_radius(sigma_g, alpha, cfg)

    spec, shift = _law(0.5 * (sigma + sigma.T), a)
    spec_g, _ = _law(0.5 * (sigma_g + sigma_g.T))
    gap = _psd_gap(sigma_g - sigma)
    ordered = gap >= -PSD_TOL * max(1.0, spec_g.lambda1)
    if not ordered:
        log.warning(f"Sigma_G - Sigma has eigenvalue {gap:.3e}, the trace identity does not apply.")
    spread = spec_g.trace - spec.trace
    law = from_gaussian(spec, shift)
    exceed, tol = _exceedance(law, r_g**2, cfg)
    shift_sq = float(np.sum(a**2))
    frob = schatten_norm(sigma, 2)
    rhs = (spread + shift_sq) / frob if frob > 0 else math.inf
    extra = {
        "radius": r_g,
        "exceedance": exceed,
        "spectral_term": spread,
        "nuclear_diff": nuclear_diff(spec, spec_g),
        "shift_norm_sq": shift_sq,
        "frobenius": frob,
        "psd_ordered": float(ordered),
        "ratio": abs(exceed - alpha) / rhs if 0 < rhs < math.inf else 0.0,
    }
    if n_mc > 0:
        extra.update(_coverage_monte_carlo(model, Pi, A, r_g, n_mc, seed))
    return ExperimentRecord(
        name="np-bayes-coverage",
        inputs={"alpha": alpha, "p": model.p, "n": n, "noise_var": model.noise_var},
        observed=abs(exceed - alpha),
        bound=rhs,
        constant=C_EMP_BAYES,
        tol=2.0 * tol,
        extra=extra,
    )


def bootstrap_terminal(
    Sigma: np.ndarray,
    n_boot: int,
    a: Optional[np.ndarray] = None,
    alpha: float = 0.05,
    cfg: Optional[InversionConfig] = None,
    seed: int = DEFAULT_SEED,
) -> ExperimentRecord:
    """Level error of a bootstrap quantile built from an empirical covariance.

    ``z`` is the ``1 - alpha`` quantile of ``||xi_b||^2`` with ``xi_b ~ N(0, Sigma_b)`` and ``Sigma_b`` the
    empirical covariance of ``n_boot`` draws from ``N(0, Sigma)``. ``observed = |P(||xi + a||^2 > z) - alpha|``
    is compared with ``(||Sigma - Sigma_b||_1 + ||a||^2) / ||Sigma||_Fr``.
    """
    Sigma = check_symmetric(Sigma, "Sigma")
    p = Sigma.shape[0]
    if n_boot < 2:
        raise DomainError(f"n_boot must be at least 2, got {n_boot}.")
    a = np.zeros(p) if a is None else np.asarray(a, dtype=float).reshape(-1)
    spec, basis_shift = _law(Sigma, a)
    rng = np.random.default_rng(seed)
    draws = rng.multivariate_normal(np.zeros(p), Sigma, size=n_boot, method="eigh")
    sigma_b = draws.T @ draws / n_boot
    spec_b, _ = _law(sigma_b)
    z = quantile(from_gaussian(spec_b), 1.0 - alpha, cfg)
    exceed, tol = _exceedance(from_gaussian(spec, basis_shift), z, cfg)
    spread = schatten_norm(Sigma - sigma_b, 1)
    shift_sq = float(np.sum(a**2))
    frob = schatten_norm(Sigma, 2)
    rhs = (spread + shift_sq) / frob if frob > 0 else math.inf
    try:
        pinsker = pinsker_baseline(Sigma, sigma_b, a)
    except DomainError as err:
        log.debug(f"Pinsker baseline undefined: {err}")
        pinsker = math.inf
    return ExperimentRecord(
        name="bootstrap-terminal",
        inputs={"alpha": alpha, "p": p, "n_boot": n_boot},
        observed=abs(exceed - alpha),
        bound=rhs,
        constant=C_EMP_BAYES,
        tol=2.0 * tol,
        extra={"quantile": z, "exceedance": exceed, "schatten1_diff": spread, "shift_norm_sq": shift_sq, "pinsker": pinsker},
    )


@dataclass
class Scenario:
    """Seeded Bayesian demo, as read from ``{"n", "p", "sigma2", "design_seed", "G_spec", "G1_spec", "alpha"}``.

    ``G_spec`` and ``G1_spec`` hold the diagonals of ``G^2`` and ``G1^2``.
    """

    n: int
    p: int
    sigma2: float
    design_seed: int = DEFAULT_SEED
    G_spec: List[float] = field(default_factory=list)
    G1_spec: List[float] = field(default_factory=list)
    alpha: float = 0.05
    decay: float = 1.0

    def __post_init__(self):
        if not 1 <= self.p <= self.n:
            raise DomainError(f"Need 1 <= p <= n, got p={self.p}, n={self.n}.")
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}.")
        if not 0 < self.alpha < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}.")
        self.G_spec = list(np.broadcast_to(np.asarray(self.G_spec or [1.0], dtype=float), (self.p,)))
        self.G1_spec = list(np.broadcast_to(np.asarray(self.G1_spec or self.G_spec, dtype=float), (self.p,)))

    def model(self) -> LinearGaussianModel:
        design = synthetic_design(self.n, self.p, self.design_seed, self.decay)
        return LinearGaussianModel(design=design, noise_var=self.sigma2).synthesize_response(self.design_seed + 1)


def load_scenario(source: Union[str, os.PathLike, dict]) -> Scenario:
    obj = source if isinstance(source, dict) else load_json(source)
    known = {"n", "p", "sigma2", "design_seed", "G_spec", "G1_spec", "alpha", "decay"}
    unknown = set(obj) - known
    if unknown:
        raise DomainError(f"Unknown scenario fields {sorted(unknown)}.")
    missing = {"n", "p", "sigma2"} - set(obj)
    if missing:
        raise DomainError(f"Scenario is missing {sorted(missing)}.")
    return Scenario(**obj)


def run_scenario(
    scenario: Scenario, cfg: Optional[InversionConfig] = None, n_mc: int = 0, seed: int = DEFAULT_SEED
) -> List[ExperimentRecord]:
    """Prior impact and coverage records of one scenario."""
    model = scenario.model()
    log.info(f"Bayes scenario n={scenario.n}, p={scenario.p}, sigma2={scenario.sigma2:g}, alpha={scenario.alpha:g}.")
    return [
        prior_impact(
            model, scenario.G_spec, scenario.G1_spec, alpha=scenario.alpha, cfg=cfg, seed=seed, strict=False, n_mc=n_mc
        ),
        np_bayes_coverage(model, scenario.G_spec, alpha=scenario.alpha, cfg=cfg, n_mc=n_mc, seed=seed),
    ]


def ill_conditioned_scenario(seed: int = DEFAULT_SEED) -> Tuple[LinearGaussianModel, np.ndarray, np.ndarray]:
    """Three-parameter model whose ``Sigma_G`` is nearly singular in one direction.

    ``Psi Psi^T`` has eigenvalues ``(10, 5, 1e-3)``, ``G^2 = diag(1, 1, 1e6)`` and ``G1^2 = diag(0.5, 0.5, 1)``.
    """
    design = synthetic_design(3, 3, seed, singular_values=np.sqrt([10.0, 5.0, 1e-3]))
    model = LinearGaussianModel(design=design, noise_var=1.0).synthesize_response(seed)
    return model, np.diag([1.0, 1.0, 1e6]), np.diag([0.5, 0.5, 1.0])

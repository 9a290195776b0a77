from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import integrate, optimize

from ballprob.bp_types import InversionKind
from ballprob.configure import InversionConfig
from ballprob.errors import DomainError, NumericalError
from ballprob.spectrum import Spectrum

log = logging.getLogger("BP.quadform")

ArrayLike = Union[float, Sequence[float], np.ndarray]


@dataclass(frozen=True, eq=False)
class QuadFormLaw:
    """Law of ``||xi - a||^2``, i.e. ``offset + sum_j weights_j (Z_j - noncentrality_j)^2``.

    Only positive weights are stored. Coordinates of zero variance are folded into ``offset``.
    """

    weights: Spectrum
    noncentrality: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        delta = np.array(self.noncentrality, dtype=float).reshape(-1)
        if delta.shape[0] != len(self.weights):
            raise DomainError(
                f"Got {delta.shape[0]} noncentralities for {len(self.weights)} weights, lengths must agree."
            )
        if np.any(self.weights.values <= 0):
            raise DomainError("QuadFormLaw stores positive weights only, fold zero weights into the offset.")
        if not np.all(np.isfinite(delta)):
            raise DomainError("Noncentralities must be finite.")
        if not (math.isfinite(self.offset) and self.offset >= 0):
            raise DomainError(f"Offset must be finite and nonnegative, got {self.offset}.")
        delta.setflags(write=False)
        object.__setattr__(self, "noncentrality", delta)
        object.__setattr__(self, "offset", float(self.offset))

    def __repr__(self) -> str:
        return f"QuadFormLaw(weights={self.weights}, noncentrality={list(self.noncentrality)}, offset={self.offset:g})"

    @property
    def n_weights(self) -> int:
        return len(self.weights)

    @property
    def mean(self) -> float:
        return self.offset + float(np.sum(self.weights.values * (1.0 + self.noncentrality**2)))

    @property
    def variance(self) -> float:
        return float(np.sum(2.0 * self.weights.values**2 * (1.0 + 2.0 * self.noncentrality**2)))

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def shift_norm_sq(self) -> float:
        """``||a||^2`` recovered from the noncentralities and the offset."""
        return self.offset + float(np.sum(self.weights.values * self.noncentrality**2))

    def scale(self, factor: float) -> "QuadFormLaw":
        """Law of ``factor * X``."""
        return QuadFormLaw(self.weights.scale(factor), self.noncentrality, self.offset * factor)

    def with_extra_weights(self, extra: Sequence[float]) -> "QuadFormLaw":
        """Add independent central coordinates with the given positive weights."""
        extra = np.asarray(extra, dtype=float).reshape(-1)
        if np.any(extra <= 0):
            raise DomainError("Extra weights must be positive.")
        return _law_from_pairs(
            np.concatenate([self.weights.values, extra]),
            np.concatenate([self.noncentrality, np.zeros(extra.size)]),
            self.offset,
        )


def _law_from_pairs(weights: np.ndarray, delta: np.ndarray, offset: float) -> QuadFormLaw:
    order = np.argsort(-weights, kind="stable")
    return QuadFormLaw(Spectrum(weights[order]), delta[order], offset)


@dataclass(frozen=True)
class TailBound:
    """Probability bound for the coordinates discarded by :func:`truncate`.

    ``tail(eps)`` bounds the probability that the discarded part of ``||xi - a||^2`` exceeds
    ``radius(eps) = 2 (eps^2 + discarded_shift_sq)``.
    """

    discarded_trace: float
    discarded_shift_sq: float

    def __call__(self, eps: float) -> float:
        if self.discarded_trace <= 0:
            return 0.0
        return min(1.0, 2.0 * math.exp(-(eps**2) / (2.0 * self.discarded_trace)))

    def radius(self, eps: float) -> float:
        if self.discarded_trace <= 0 and self.discarded_shift_sq <= 0:
            return 0.0
        return 2.0 * (eps**2 + self.discarded_shift_sq)


def from_gaussian(s: Spectrum, shift: Optional[Sequence[float]] = None) -> QuadFormLaw:
    """Law of ``||xi - a||^2`` for a centered Gaussian ``xi`` with spectrum ``s``.

    Parameters
    ----------
        s : Spectrum
            covariance eigenvalues
        shift : array-like, optional
            coordinates of ``a`` in the eigenbasis of ``s``, zero padded. Entries beyond the
            spectrum belong to zero-variance directions.

    Returns
    -------
        QuadFormLaw
            ``delta_j = a_j / sqrt(lambda_j)`` for positive weights, ``offset`` collects ``a_j^2``
            of all zero-variance coordinates
    """
    n = len(s)
    shift = np.zeros(n) if shift is None else np.asarray(shift, dtype=float).reshape(-1)
    if not np.all(np.isfinite(shift)):
        raise DomainError("Shift entries must be finite.")
    beyond = float(np.sum(shift[n:] ** 2))
    a = np.zeros(n)
    a[: min(n, shift.size)] = shift[:n]
    positive = s.values > 0
    weights = s.values[positive]
    return QuadFormLaw(
        Spectrum(weights),
        a[positive] / np.sqrt(weights),
        float(np.sum(a[~positive] ** 2)) + beyond,
    )


def _log_cf_centered(law: QuadFormLaw, t: np.ndarray) -> np.ndarray:
    tl = np.multiply.outer(t, law.weights.values)
    z = 1.0 - 2j * tl
    return np.sum(-0.5 * np.log(z) + 1j * tl * law.noncentrality**2 / z, axis=-1)


def cf(law: QuadFormLaw, t: ArrayLike) -> Union[complex, np.ndarray]:
    """Characteristic function ``E exp(i t X)``, vectorized over ``t``."""
    t_arr = np.asarray(t, dtype=float)
    value = np.exp(_log_cf_centered(law, t_arr) + 1j * t_arr * law.offset)
    return complex(value) if np.ndim(t) == 0 else value


def cf_modulus_bound(law: QuadFormLaw, t: ArrayLike) -> Union[float, np.ndarray]:
    """``prod_j (1 + 4 lambda_j^2 t^2)^(-1/4)``, an upper bound of ``|cf(law, t)|``."""
    t_arr = np.asarray(t, dtype=float)
    value = np.exp(-0.25 * np.sum(np.log1p(4.0 * np.multiply.outer(t_arr**2, law.weights.values**2)), axis=-1))
    return float(value) if np.ndim(t) == 0 else value


class _FourierInverter:
    """Midpoint-rule Gil-Pelaez inversion on a fixed range of shifted points ``(x_lo, x_hi]``.

    Nodes are ``t_k = (k + 1/2) h``. The step ``h = 2 pi / L`` keeps the aliasing error below
    ``P(Y > L - x_hi)``, bounded by a Chernoff estimate. The number of nodes is the smaller of the
    cut-off where the modulus bound integrates below ``abs_tol / 2`` and the cut-off where the
    oscillating remainder, estimated by summation by parts, does.
    """

    def __init__(self, law: QuadFormLaw, cfg: InversionConfig, kind: InversionKind, x_lo: float, x_hi: float):
        self.law = law
        self.cfg = cfg
        self.kind = kind
        lam = law.weights.values
        self.log_c = np.cumsum(-0.5 * np.log(2.0 * lam))
        self.orders = np.arange(1, lam.size + 1)

        alias_tol = cfg.abs_tol / 4
        if kind == "density":
            alias_tol *= min(1.0, 2.0 * lam[0])
        span = self._chernoff_span(alias_tol)
        self.step = 2.0 * math.pi / (span + 2.0 * x_hi)
        self.alias_err = cfg.abs_tol / 4

        trunc_tol = cfg.abs_tol / 2
        sin_lo = math.sin(0.5 * self.step * x_lo)
        # an underflowing sine leaves only the modulus cut-off
        log_sin = math.log(sin_lo) if sin_lo > 0 else -math.inf
        log_cut = min(self._log_cutoff_modulus(trunc_tol), self._log_cutoff_oscillatory(trunc_tol, log_sin))
        cap = cfg.max_freq if cfg.max_freq is not None else cfg.max_terms * self.step
        if log_cut > math.log(cap):
            log.debug(f"Truncation frequency exp({log_cut:.3g}) capped at {cap:.3e}.")
            t_cut = cap
        else:
            t_cut = math.exp(log_cut)
        self.n_terms = max(1, int(math.ceil(t_cut / self.step)))
        self.t_max = self.n_terms * self.step

    def _chernoff_span(self, tol: float) -> float:
        lam = self.law.weights.values
        mu = 0.25 / lam[0]
        r = 1.0 - 2.0 * mu * lam
        log_mgf = float(np.sum(-0.5 * np.log(r) + mu * lam * self.law.noncentrality**2 / r))
        return (log_mgf - math.log(tol)) / mu

    def _log_cutoff_modulus(self, tol: float) -> float:
        m = self.orders
        if self.kind == "cdf":
            return float(np.min((2.0 / m) * (math.log(2.0) + self.log_c - np.log(m) - math.log(math.pi * tol))))
        usable = m >= 3
        if not np.any(usable):
            return math.inf
        m, log_c = m[usable], self.log_c[usable]
        e = m / 2.0 - 1.0
        return float(np.min((log_c - math.log(math.pi * tol) - np.log(e)) / e))

    def _log_cutoff_oscillatory(self, tol: float, log_sin: float) -> float:
        m = self.orders
        rhs = self.log_c + math.log(self.step) - math.log(math.pi * tol) - log_sin
        if self.kind == "cdf":
            return float(np.min(rhs / (m / 2.0 + 1.0)))
        return float(np.min(rhs * (2.0 / m)))

    def _modulus_tail(self) -> float:
        m = self.orders
        T = self.t_max
        if self.kind == "cdf":
            return float(np.min(np.exp(self.log_c - (m / 2.0) * math.log(T)) * (2.0 / m))) / math.pi
        usable = m >= 3
        if not np.any(usable):
            return math.inf
        e = m[usable] / 2.0 - 1.0
        return float(np.min(np.exp(self.log_c[usable] - e * math.log(T)) / e)) / math.pi

    def error(self, xs: np.ndarray) -> np.ndarray:
        weight = self.step / self.t_max if self.kind == "cdf" else self.step
        amplitude = cf_modulus_bound(self.law, self.t_max) * weight / math.pi
        with np.errstate(divide="ignore", invalid="ignore"):
            oscillatory = amplitude / np.abs(np.sin(0.5 * self.step * xs))
        return self.alias_err + np.fmin(oscillatory, self._modulus_tail())

    def evaluate(self, xs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        total = np.zeros(xs.shape[0])
        block = max(16, self.cfg.block_size // max(1, xs.shape[0]))
        for start in range(0, self.n_terms, block):
            k = np.arange(start, min(self.n_terms, start + block)) + 0.5
            t = k * self.step
            phi = np.exp(_log_cf_centered(self.law, t))
            arg = np.multiply.outer(xs, t)
            if self.kind == "cdf":
                # Im(phi e^{-itx}) / k
                total += np.cos(arg) @ (phi.imag / k) - np.sin(arg) @ (phi.real / k)
            else:
                # Re(phi e^{-itx})
                total += np.cos(arg) @ phi.real + np.sin(arg) @ phi.imag
        if self.kind == "cdf":
            values = 0.5 - total / math.pi
        else:
            values = self.step * total / math.pi
        return values, self.error(xs)


def _coordinate_density_root(lam: float, a: float, u: np.ndarray) -> np.ndarray:
    # sqrt(u) times the density of lam * (Z - a / sqrt(lam))^2 at u
    r = np.sqrt(u)
    return (np.exp(-((r - a) ** 2) / (2 * lam)) + np.exp(-((r + a) ** 2) / (2 * lam))) / (2 * math.sqrt(2 * math.pi * lam))


def _density_two_weights(law: QuadFormLaw, ys: np.ndarray, cfg: InversionConfig) -> Tuple[np.ndarray, np.ndarray]:
    # convolution of the two coordinate densities, both carry an inverse square root singularity
    (l1, l2), (d1, d2) = law.weights.values, law.noncentrality
    a1, a2 = abs(d1) * math.sqrt(l1), abs(d2) * math.sqrt(l2)
    values = np.empty_like(ys)
    errors = np.empty_like(ys)
    for i, y in enumerate(ys):

        def integrand(u, y=y):
            return _coordinate_density_root(l1, a1, y - u) * _coordinate_density_root(l2, a2, u)

        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", integrate.IntegrationWarning)
            values[i], errors[i] = integrate.quad(
                integrand, 0.0, y, weight="alg", wvar=(-0.5, -0.5), epsabs=cfg.abs_tol / 10, limit=cfg.quad_limit
            )
        if caught:
            log.debug(f"Convolution quadrature at y={y:g}: {caught[0].message}")
    return values, errors


def _invert(
    law: QuadFormLaw, x: ArrayLike, cfg: Optional[InversionConfig], kind: InversionKind, strict: bool
) -> Tuple[np.ndarray, np.ndarray]:
    cfg = cfg or InversionConfig.for_law(law)
    xs = np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1)
    if not np.all(np.isfinite(xs)):
        raise DomainError("Evaluation points must be finite.")
    ys = xs - law.offset
    values = np.zeros_like(ys)
    errors = np.zeros_like(ys)
    if kind == "density" and law.n_weights < 2:
        raise DomainError(f"The density needs at least two positive weights, the law has {law.n_weights}.")
    if law.n_weights == 0:
        values[ys >= 0] = 1.0
        return values, errors

    inside = ys > 0
    if np.any(inside):
        y_in = ys[inside]
        if kind == "density" and law.n_weights == 2:
            v, e = _density_two_weights(law, y_in, cfg)
        else:
            inverter = _FourierInverter(law, cfg, kind, float(y_in.min()), float(y_in.max()))
            log.debug(f"{kind} inversion with {inverter.n_terms} nodes, step {inverter.step:.3e}.")
            v, e = inverter.evaluate(y_in)
        values[inside], errors[inside] = v, e
    if kind == "density" and law.n_weights == 2:
        at_zero = ys == 0
        lam = law.weights.values
        values[at_zero] = math.exp(-0.5 * float(np.sum(law.noncentrality**2))) / (2 * math.sqrt(lam[0] * lam[1]))

    if kind == "cdf":
        values = np.clip(values, 0.0, 1.0)
    else:
        values = np.maximum(values, 0.0)
    if strict:
        check_tolerance(errors, cfg, kind)
    return values, errors


def check_tolerance(errors: ArrayLike, cfg: InversionConfig, kind: InversionKind) -> None:
    """Raise :class:`NumericalError` when some error estimate exceeds ``cfg.abs_tol``."""
    errors = np.asarray(errors, dtype=float)
    if errors.size and np.any(errors > cfg.abs_tol):
        worst = float(np.max(errors))
        raise NumericalError(
            f"{kind} inversion reached error estimate {worst:.3e} > abs_tol={cfg.abs_tol:g}, "
            "increase max_terms or loosen the tolerance.",
            err_est=worst,
        )


def _shape_like(x: ArrayLike, values: np.ndarray):
    return float(values[0]) if np.ndim(x) == 0 else values.reshape(np.shape(x))


def cdf(law: QuadFormLaw, x: ArrayLike, cfg: Optional[InversionConfig] = None):
    """``P(X <= x)`` by Fourier inversion, vectorized over ``x``.

    Raises
    ------
        NumericalError
            if the error estimate at some point exceeds ``cfg.abs_tol``
    """
    values, _ = _invert(law, x, cfg, "cdf", strict=True)
    return _shape_like(x, values)


def density(law: QuadFormLaw, x: ArrayLike, cfg: Optional[InversionConfig] = None):
    """Density of ``X`` at ``x``; requires at least two positive weights."""
    values, _ = _invert(law, x, cfg, "density", strict=True)
    return _shape_like(x, values)


def cdf_grid(law: QuadFormLaw, xs: ArrayLike, cfg: Optional[InversionConfig] = None) -> Tuple[np.ndarray, np.ndarray]:
    """CDF values and error estimates on a grid, without raising on loose points."""
    return _invert(law, xs, cfg, "cdf", strict=False)


def density_grid(
    law: QuadFormLaw, xs: ArrayLike, cfg: Optional[InversionConfig] = None
) -> Tuple[np.ndarray, np.ndarray]:
    return _invert(law, xs, cfg, "density", strict=False)


def exp_smoothed_density(law: QuadFormLaw, weight: float, x: ArrayLike, cfg: Optional[InversionConfig] = None):
    """Density of ``X + E`` with ``E`` exponential of mean ``2 * weight`` independent of ``X``.

    Its characteristic function is ``(1 - 2 i t weight)^(-1) cf(law, t)``, the law of ``weight``
    times a central chi-square with two degrees of freedom.
    """
    return density(law.with_extra_weights([weight, weight]), x, cfg)


def evaluate(law: QuadFormLaw, xs: ArrayLike, cfg: Optional[InversionConfig] = None) -> pd.DataFrame:
    """Table of ``x``, ``cdf``, ``density`` and ``err_est`` rows; density is NaN below two weights."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    cdf_values, cdf_err = cdf_grid(law, xs, cfg)
    if law.n_weights >= 2:
        dens_values, dens_err = density_grid(law, xs, cfg)
    else:
        dens_values, dens_err = np.full_like(xs, np.nan), np.zeros_like(xs)
    return pd.DataFrame(
        {"x": xs, "cdf": cdf_values, "density": dens_values, "err_est": np.maximum(cdf_err, dens_err)}
    )


def quantile(law: QuadFormLaw, p: float, cfg: Optional[InversionConfig] = None) -> float:
    """Smallest ``x`` with ``cdf(law, x) = p``, found by Brent's method.

    Raises
    ------
        DomainError
            unless ``0 < p < 1``
        NumericalError
            if no bracket is found
    """
    if not 0 < p < 1:
        raise DomainError(f"Quantile level must lie in (0, 1), got {p}.")
    if law.n_weights == 0:
        return law.offset
    cfg = cfg or InversionConfig.for_law(law)

    def excess(x: float) -> float:
        values, _ = _invert(law, x, cfg, "cdf", strict=False)
        return float(values[0]) - p

    hi = law.mean + 10.0 * law.std
    for _ in range(60):
        if excess(hi) >= 0:
            break
        hi = law.offset + 2.0 * (hi - law.offset)
    else:
        raise NumericalError(f"Could not bracket the {p}-quantile.")
    root = optimize.brentq(excess, law.offset, hi, xtol=1e-3 * cfg.abs_tol * law.std, maxiter=200)
    _, err = _invert(law, root, cfg, "cdf", strict=False)
    if err[0] > cfg.abs_tol:
        raise NumericalError(f"Quantile {p} located with cdf error estimate {err[0]:.3e}.", err_est=float(err[0]))
    return float(root)


def sample(law: QuadFormLaw, n: int, seed: int) -> np.ndarray:
    """``n`` independent draws of ``X`` from a generator owned by this call."""
    if n < 1:
        raise DomainError(f"Sample size must be at least 1, got {n}.")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, law.n_weights))
    return law.offset + np.square(z - law.noncentrality) @ law.weights.values


def truncate(law: QuadFormLaw, m: int) -> Tuple[QuadFormLaw, TailBound]:
    """Keep the ``m`` largest weights and bound what the remaining coordinates can add."""
    if m < 1:
        raise DomainError(f"Truncation level must be at least 1, got {m}.")
    lam, delta = law.weights.values, law.noncentrality
    kept = QuadFormLaw(Spectrum(lam[:m]), delta[:m], law.offset)
    tail = TailBound(
        discarded_trace=float(np.sum(lam[m:])),
        discarded_shift_sq=float(np.sum(lam[m:] * delta[m:] ** 2)),
    )
    return kept, tail

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from ballprob.bp_types import FormulaId, Ingredients
from ballprob.errors import ConditionError, DomainError
from ballprob.quadform import QuadFormLaw
from ballprob.spectrum import (
    Spectrum,
    check_symmetric,
    kappa,
    nuclear_diff,
    regime,
    schatten_norm,
    spectrum_of_matrix,
    tail_norms,
)

log = logging.getLogger("BP.bounds")

PD_TOL = 1e-12


@dataclass
class BoundReport:
    """Constant-free right-hand side of a bound together with the terms it was built from.

    Parameters
    ----------
        value : float
            the raw right-hand side, ``inf`` when a prefactor degenerates
        ingredients : dict
            named terms, ``value`` is recomputable from them
        formula_id : str
            which bound was evaluated
        condition_ok : bool
            whether the hypothesis of the bound holds
    """

    value: float
    ingredients: Ingredients = field(default_factory=dict)
    formula_id: FormulaId = "comparison"
    condition_ok: bool = True

    def to_record(self) -> dict:
        return {
            "formula_id": self.formula_id,
            "value": self.value,
            "ingredients": dict(self.ingredients),
            "condition_ok": self.condition_ok,
        }


def _product(prefactor: float, spread: float) -> float:
    # identical operands give distance zero even when the prefactor is infinite
    if spread == 0:
        return 0.0
    return prefactor * spread


def _check_shift(shift_norm_sq: float) -> float:
    if not (math.isfinite(shift_norm_sq) and shift_norm_sq >= 0):
        raise DomainError(f"shift_norm_sq must be finite and nonnegative, got {shift_norm_sq}.")
    return float(shift_norm_sq)


def comparison_bound(sx: Spectrum, sy: Spectrum, shift_norm_sq: float, same_shift: bool = False) -> BoundReport:
    """``(kappa(sx) + kappa(sy)) * (||lambda_x - lambda_y||_1 + ||a||^2)``.

    ``same_shift`` marks the variant where both balls are centered at ``a``; the right-hand side is
    the same.
    """
    q = _check_shift(shift_norm_sq)
    kx, ky = kappa(sx), kappa(sy)
    l1 = nuclear_diff(sx, sy)
    return BoundReport(
        value=_product(kx + ky, l1 + q),
        ingredients={"kappa_x": kx, "kappa_y": ky, "nuclear_diff": l1, "shift_norm_sq": q},
        formula_id="comparison_same_shift" if same_shift else "comparison",
    )


def comparison_bound_lambda12(sx: Spectrum, sy: Spectrum, shift_norm_sq: float) -> BoundReport:
    """Comparison bound with ``(Lambda_1 Lambda_2)^(-1/2)`` in place of kappa."""
    q = _check_shift(shift_norm_sq)

    def prefactor(s: Spectrum) -> float:
        norms = tail_norms(s)
        denom = norms.Lambda1 * norms.Lambda2
        return float("inf") if denom <= 0 else 1.0 / math.sqrt(denom)

    px, py = prefactor(sx), prefactor(sy)
    l1 = nuclear_diff(sx, sy)
    return BoundReport(
        value=_product(px + py, l1 + q),
        ingredients={"prefactor_x": px, "prefactor_y": py, "nuclear_diff": l1, "shift_norm_sq": q},
        formula_id="comparison_lambda12",
    )


def comparison_bound_frobenius(sx: Spectrum, sy: Spectrum, shift_norm_sq: float) -> BoundReport:
    """High-dimensional form ``(1/||S_x||_Fr + 1/||S_y||_Fr) * (l1 + ||a||^2)``.

    Raises
    ------
        ConditionError
            unless ``3 ||S||^2 <= ||S||_Fr^2`` for both operators
    """
    q = _check_shift(shift_norm_sq)
    for name, s in (("sx", sx), ("sy", sy)):
        if regime(s) != "HighDim":
            norms = tail_norms(s)
            raise ConditionError(
                f"{name} violates 3*lambda1^2 <= Lambda1^2 ({3 * s.lambda1 ** 2:g} > {norms.lambda1_sq:g}).",
                which=name,
            )
    fx, fy = tail_norms(sx).Lambda1, tail_norms(sy).Lambda1
    l1 = nuclear_diff(sx, sy)
    return BoundReport(
        value=_product(1.0 / fx + 1.0 / fy, l1 + q),
        ingredients={"frobenius_x": fx, "frobenius_y": fy, "nuclear_diff": l1, "shift_norm_sq": q},
        formula_id="comparison_frobenius",
    )


def comparison_bound_nuclear(Sx: np.ndarray, Sy: np.ndarray, shift_norm_sq: float) -> BoundReport:
    """Comparison bound with the Schatten-1 norm ``||S_x - S_y||_1`` of the full matrices."""
    q = _check_shift(shift_norm_sq)
    sx, _ = spectrum_of_matrix(Sx)
    sy, _ = spectrum_of_matrix(Sy)
    kx, ky = kappa(sx), kappa(sy)
    l1 = schatten_norm(np.asarray(Sx, dtype=float) - np.asarray(Sy, dtype=float), 1)
    return BoundReport(
        value=_product(kx + ky, l1 + q),
        ingredients={
            "kappa_x": kx,
            "kappa_y": ky,
            "schatten1_diff": l1,
            "nuclear_diff": nuclear_diff(sx, sy),
            "shift_norm_sq": q,
        },
        formula_id="comparison_nuclear",
    )


def _inverse_sqrt(S: np.ndarray, name: str) -> np.ndarray:
    S = check_symmetric(S, name)
    w, V = linalg.eigh(S)
    if w.size == 0 or w.min() <= PD_TOL * max(1.0, float(np.max(np.abs(w)))):
        raise DomainError(f"{name} must be strictly positive definite, smallest eigenvalue {w.min():.3e}.")
    return (V / np.sqrt(w)) @ V.T


def relative_deviation(Sx: np.ndarray, Sy: np.ndarray) -> np.ndarray:
    """``S_x^(-1/2) S_y S_x^(-1/2) - I``."""
    root = _inverse_sqrt(Sx, "sx_full")
    Sy = check_symmetric(Sy, "sy_full")
    M = root @ Sy @ root
    return 0.5 * (M + M.T) - np.eye(M.shape[0])


def comparison_bound_operator(Sx: np.ndarray, Sy: np.ndarray, shift_norm_sq: float) -> BoundReport:
    """Comparison bound with ``tr(S_x) * ||S_x^(-1/2) S_y S_x^(-1/2) - I||`` as spectral term."""
    q = _check_shift(shift_norm_sq)
    dev = schatten_norm(relative_deviation(Sx, Sy), np.inf)
    sx, _ = spectrum_of_matrix(Sx)
    sy, _ = spectrum_of_matrix(Sy)
    kx, ky = kappa(sx), kappa(sy)
    spread = sx.trace * dev
    return BoundReport(
        value=_product(kx + ky, spread + q),
        ingredients={"kappa_x": kx, "kappa_y": ky, "trace_x": sx.trace, "operator_deviation": dev, "shift_norm_sq": q},
        formula_id="comparison_operator",
    )


def anticoncentration_bound(s: Spectrum, eps: float) -> BoundReport:
    """``kappa(s) * eps``, controlling ``P(x < ||xi - a||^2 < x + eps)`` uniformly in ``x`` and ``a``."""
    if not eps > 0:
        raise DomainError(f"Band width must be positive, got {eps}.")
    k = kappa(s)
    return BoundReport(value=k * eps, ingredients={"kappa": k, "eps": float(eps)}, formula_id="anticoncentration")


def density_uniform_bound(s: Spectrum) -> BoundReport:
    k = kappa(s)
    return BoundReport(value=k, ingredients={"kappa": k}, formula_id="density_uniform")


def density_two_dim_bound(s: Spectrum) -> BoundReport:
    """``(2 sqrt(lambda_1 lambda_2))^(-1)``, an exact bound of the density of ``||xi - a||^2``."""
    denom = 2.0 * math.sqrt(s.lambda1 * s.lambda2)
    value = float("inf") if denom <= 0 else 1.0 / denom
    return BoundReport(
        value=value, ingredients={"lambda1": s.lambda1, "lambda2": s.lambda2}, formula_id="density_two_dim"
    )


def nonuniform_product(law: QuadFormLaw, lambda_free: Optional[float] = None) -> float:
    """``prod_{j>=3} (1 - lambda_j / lambda)^(-1/2)``; at most ``sqrt(e)`` for ``lambda = tr``."""
    lam = law.weights.values
    lam_free = _lambda_free(law, lambda_free)
    return float(np.exp(-0.5 * np.sum(np.log1p(-lam[2:] / lam_free))))


def _lambda_free(law: QuadFormLaw, lambda_free: Optional[float]) -> float:
    lam = law.weights.values
    if lambda_free is None:
        return float(np.sum(lam))
    if lam.size and not lambda_free > lam[0]:
        raise DomainError(f"lambda_free={lambda_free} must exceed lambda_1={lam[0]}.")
    return float(lambda_free)


def density_nonuniform_bound(law: QuadFormLaw, x: float, lambda_free: Optional[float] = None) -> float:
    """Gaussian-tail bound of the density of ``||xi - a||^2`` at ``x``.

    ``exp(-(sqrt(x) - ||a||)^2 / (2 lambda)) / sqrt(2 lambda_1 lambda_2) * prod_{j>=3} (1 - lambda_j/lambda)^(-1/2)``
    for any ``lambda > lambda_1``, by default the trace.
    """
    lam = law.weights.values
    if lam.size < 2:
        return float("inf")
    lam_free = _lambda_free(law, lambda_free)
    if not lam_free > lam[0]:
        return float("inf")
    root = math.sqrt(max(x, 0.0))
    exponent = -((root - math.sqrt(law.shift_norm_sq)) ** 2) / (2.0 * lam_free)
    return math.exp(exponent) / math.sqrt(2.0 * lam[0] * lam[1]) * nonuniform_product(law, lam_free)


def pinsker_baseline(
    Sx: np.ndarray, Sy: np.ndarray, a: Sequence[float], whiten: Optional[np.ndarray] = None
) -> float:
    """``(||S_x^(-1/2) S_y S_x^(-1/2) - I||_Fr + ||W^(-1/2) a||) / 2`` with ``W = S_x`` by default.

    Raises
    ------
        DomainError
            when ``S_x`` (or ``whiten``) is singular
    """
    frob = float(np.linalg.norm(relative_deviation(Sx, Sy), "fro"))
    root = _inverse_sqrt(Sx if whiten is None else whiten, "sx_full" if whiten is None else "whiten")
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size != root.shape[0]:
        raise DomainError(f"Shift has length {a.size}, matrix has dimension {root.shape[0]}.")
    return 0.5 * (frob + float(np.linalg.norm(root @ a)))

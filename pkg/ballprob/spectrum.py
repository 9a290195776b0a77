from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from ballprob.bp_types import RegimeTag
from ballprob.errors import DomainError

log = logging.getLogger("BP.spectrum")

SYMMETRY_TOL = 1e-10
CLAMP_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Nonincreasing nonnegative eigenvalue sequence of a covariance operator.

    Use :func:`make_spectrum` to build one from unsorted input.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise DomainError("Spectrum entries must be finite.")
        if np.any(values < 0):
            raise DomainError("Spectrum entries must be nonnegative.")
        if np.any(np.diff(values) > 0):
            raise DomainError("Spectrum entries must be nonincreasing, use make_spectrum to sort.")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Spectrum):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())

    def __repr__(self) -> str:
        return f"Spectrum({', '.join(f'{v:g}' for v in self.values)})"

    @property
    def lambda1(self) -> float:
        return float(self.values[0]) if len(self) > 0 else 0.0

    @property
    def lambda2(self) -> float:
        return float(self.values[1]) if len(self) > 1 else 0.0

    @property
    def trace(self) -> float:
        return float(np.sum(self.values))

    @property
    def n_positive(self) -> int:
        return int(np.count_nonzero(self.values > 0))

    def scale(self, factor: float) -> "Spectrum":
        if not factor > 0:
            raise DomainError(f"Scale factor must be positive, got {factor}.")
        return Spectrum(self.values * factor)


class TailNorms(NamedTuple):
    lambda1_sq: float
    lambda2_sq: float

    @property
    def Lambda1(self) -> float:
        return float(np.sqrt(self.lambda1_sq))

    @property
    def Lambda2(self) -> float:
        return float(np.sqrt(self.lambda2_sq))


def make_spectrum(values: Union[Sequence[float], np.ndarray]) -> Spectrum:
    """Sort eigenvalues nonincreasingly and wrap them as a :class:`Spectrum`.

    Raises
    ------
        DomainError
            for empty input, non-finite or negative entries
    """
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise DomainError("A spectrum needs at least one eigenvalue.")
    if not np.all(np.isfinite(arr)):
        raise DomainError("Spectrum entries must be finite.")
    if np.any(arr < 0):
        raise DomainError(f"Covariance eigenvalues must be nonnegative, got min {arr.min()}.")
    return Spectrum(np.sort(arr)[::-1])


def check_symmetric(S: np.ndarray, name: str = "S") -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DomainError(f"{name} must be a square matrix, got shape {S.shape}.")
    if not np.all(np.isfinite(S)):
        raise DomainError(f"{name} has non-finite entries.")
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    if S.size and np.max(np.abs(S - S.T)) > SYMMETRY_TOL * scale:
        raise DomainError(f"{name} is not symmetric.")
    return 0.5 * (S + S.T)


def spectrum_of_matrix(
    S: np.ndarray, a: Optional[Sequence[float]] = None
) -> Tuple[Spectrum, np.ndarray]:
    """Eigen-decompose a symmetric PSD matrix and rotate a shift into its eigenbasis.

    Parameters
    ----------
        S : np.ndarray
            symmetric positive semidefinite ``p x p`` matrix
        a : array-like, optional
            shift vector of length ``p``, zero by default

    Returns
    -------
        Spectrum
            eigenvalues in nonincreasing order
        np.ndarray
            shift coordinates aligned with the returned eigenvalues
    """
    S = check_symmetric(S)
    p = S.shape[0]
    a = np.zeros(p) if a is None else np.asarray(a, dtype=float).reshape(-1)
    if a.shape[0] != p:
        raise DomainError(f"Shift has length {a.shape[0]}, matrix has dimension {p}.")
    w, V = linalg.eigh(S)
    norm = float(np.max(np.abs(w))) if p else 0.0
    if np.any(w < -CLAMP_TOL * norm):
        raise DomainError(f"Matrix is not positive semidefinite, smallest eigenvalue {w.min():.3e}.")
    if np.any(w < 0):
        log.debug(f"Clamping {np.count_nonzero(w < 0)} tiny negative eigenvalues to 0.")
    w = np.clip(w, 0.0, None)
    order = np.argsort(-w, kind="stable")
    return Spectrum(w[order]), (V.T @ a)[order]


def tail_norms(s: Spectrum) -> TailNorms:
    sq = np.square(s.values)
    total = float(np.sum(sq))
    return TailNorms(lambda1_sq=total, lambda2_sq=total - float(sq[0]) if len(sq) else 0.0)


def regime(s: Spectrum) -> RegimeTag:
    """Which branch of the piecewise definition of kappa applies to ``s``."""
    norms = tail_norms(s)
    if 3 * s.lambda1**2 <= norms.lambda1_sq:
        return "HighDim"
    if 3 * s.lambda2**2 <= norms.lambda2_sq:
        return "Spike"
    return "TwoDim"


def kappa(s: Spectrum) -> float:
    """Dimension-free density scale of a Gaussian element with covariance spectrum ``s``.

    Returns ``1/Lambda_1`` when ``3 lambda_1^2 <= Lambda_1^2``, ``(lambda_1 Lambda_2)^(-1/2)`` when only
    the second tail satisfies ``3 lambda_2^2 <= Lambda_2^2`` and ``(lambda_1 lambda_2)^(-1/2)`` otherwise.
    A zero denominator yields ``inf``.

    Raises
    ------
        DomainError
            for the zero operator
    """
    if s.lambda1 <= 0:
        raise DomainError("kappa is undefined for the zero covariance operator.")
    norms = tail_norms(s)
    tag = regime(s)
    if tag == "HighDim":
        denom = norms.lambda1_sq
    elif tag == "Spike":
        denom = s.lambda1 * norms.Lambda2
    else:
        denom = s.lambda1 * s.lambda2
    if denom <= 0:
        log.debug(f"kappa of {s} is infinite ({tag} with vanishing tail).")
        return float("inf")
    return float(1.0 / np.sqrt(denom))


def nuclear_diff(sx: Spectrum, sy: Spectrum) -> float:
    """l1 distance of two sorted spectra, the shorter one padded with zeros."""
    n = max(len(sx), len(sy))
    x = np.zeros(n)
    y = np.zeros(n)
    x[: len(sx)] = sx.values
    y[: len(sy)] = sy.values
    return float(np.sum(np.abs(x - y)))


def schatten_norm(S: np.ndarray, p: Union[int, float] = 1) -> float:
    """Schatten-p norm of a symmetric matrix for ``p`` in {1, 2, inf}."""
    w = np.abs(linalg.eigvalsh(check_symmetric(S)))
    if p == 1:
        return float(np.sum(w))
    if p == 2:
        return float(np.sqrt(np.sum(w**2)))
    if p == np.inf:
        return float(np.max(w)) if w.size else 0.0
    raise DomainError(f"Unsupported Schatten order {p}, use 1, 2 or inf.")


def effective_rank(s: Spectrum) -> float:
    """``tr(S) / ||S||``."""
    if s.lambda1 <= 0:
        raise DomainError("Effective rank is undefined for the zero operator.")
    return s.trace / s.lambda1


def from_json(obj: Union[str, dict]) -> Tuple[Spectrum, np.ndarray]:
    """Parse an instance object ``{"spectrum": [..], "shift": [..]}``.

    A ``"covariance"`` matrix may replace ``"spectrum"``; the shift is then rotated into the
    eigenbasis. The returned shift always has the length of the spectrum, padded with zeros.
    """
    if isinstance(obj, str):
        obj = json.loads(obj)
    shift = np.asarray(obj.get("shift") or [], dtype=float).reshape(-1)
    if "covariance" in obj:
        S = np.asarray(obj["covariance"], dtype=float)
        full = np.zeros(S.shape[0])
        if shift.size > full.size:
            raise DomainError("Shift is longer than the covariance dimension.")
        full[: shift.size] = shift
        return spectrum_of_matrix(S, full)
    if "spectrum" not in obj:
        raise DomainError('Instance needs a "spectrum" or "covariance" entry.')
    raw = np.asarray(obj["spectrum"], dtype=float).reshape(-1)
    s = make_spectrum(raw)
    if shift.size > raw.size:
        raise DomainError("Shift is longer than the spectrum.")
    full = np.zeros(raw.size)
    full[: shift.size] = shift
    # shift coordinates follow their eigenvalues through the sort
    order = np.argsort(-raw, kind="stable")
    return s, full[order]


def to_json(s: Spectrum, shift: Optional[Iterable[float]] = None) -> dict:
    record = {"spectrum": [float(v) for v in s.values]}
    if shift is not None:
        record["shift"] = [float(v) for v in shift]
    return record

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ballprob.bp_types import RegimeTag
from ballprob.configure import CorpusConfig
from ballprob.quadform import QuadFormLaw, from_gaussian
from ballprob.spectrum import Spectrum, make_spectrum, regime

log = logging.getLogger("BP.corpus")

REGIMES: List[RegimeTag] = ["HighDim", "Spike", "TwoDim"]


@dataclass(frozen=True, eq=False)
class Instance:
    """One comparison problem: ``||xi - a||^2`` against ``||eta||^2``."""

    instance_id: int
    sx: Spectrum
    sy: Spectrum
    shift: np.ndarray

    @property
    def regime_x(self) -> RegimeTag:
        return regime(self.sx)

    @property
    def regime_y(self) -> RegimeTag:
        return regime(self.sy)

    @property
    def shift_norm_sq(self) -> float:
        return float(np.sum(self.shift**2))

    def law_x(self) -> QuadFormLaw:
        return from_gaussian(self.sx, self.shift)

    def law_y(self) -> QuadFormLaw:
        return from_gaussian(self.sy)

    def to_record(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "x": {"spectrum": list(self.sx.values), "shift": list(self.shift)},
            "y": {"spectrum": list(self.sy.values)},
        }


def _dimension(rng: np.random.Generator, cfg: CorpusConfig, lo: int, hi: Optional[int] = None) -> int:
    low = max(cfg.dim_range[0], lo)
    high = min(cfg.dim_range[1], hi) if hi is not None else cfg.dim_range[1]
    if low > high:
        low = high = min(max(cfg.dim_range[0], lo), cfg.dim_range[1])
    return int(rng.integers(low, high + 1))


def _draw_values(rng: np.random.Generator, tag: RegimeTag, cfg: CorpusConfig) -> np.ndarray:
    if tag == "HighDim":
        p = _dimension(rng, cfg, 4)
        return rng.uniform(0.5, 1.0, p)
    if tag == "Spike":
        p = _dimension(rng, cfg, 6)
        return np.concatenate([[rng.uniform(3.0, 6.0)], rng.uniform(0.4, 0.5, p - 1)])
    p = _dimension(rng, cfg, 2, 5)
    first = rng.uniform(1.0, 2.0)
    second = first * rng.uniform(0.3, 1.0)
    return np.concatenate([[first, second], second * rng.uniform(0.01, 0.15, p - 2)])


def draw_spectrum(rng: np.random.Generator, tag: RegimeTag, cfg: Optional[CorpusConfig] = None) -> Spectrum:
    """Random spectrum of the requested regime, scaled by a log-uniform factor in [0.1, 10]."""
    cfg = cfg or CorpusConfig()
    for _ in range(cfg.max_attempts):
        s = make_spectrum(_draw_values(rng, tag, cfg))
        if regime(s) == tag:
            break
    else:
        log.warning(f"No {tag} spectrum found in {cfg.max_attempts} draws, keeping a {regime(s)} one.")
    return s.scale(10.0 ** rng.uniform(-1.0, 1.0))


def draw_instance(instance_id: int, rng: np.random.Generator, cfg: CorpusConfig) -> Instance:
    sx = draw_spectrum(rng, REGIMES[instance_id % len(REGIMES)], cfg)
    if rng.uniform() < cfg.perturb_prob:
        sy = make_spectrum(sx.values * (1.0 + rng.uniform(-0.2, 0.2, len(sx))))
    else:
        sy = draw_spectrum(rng, REGIMES[int(rng.integers(len(REGIMES)))], cfg)
    # small shifts are favored so that the spectral term is not always swamped
    fraction = rng.uniform(*cfg.shift_fraction) ** 2
    direction = rng.standard_normal(len(sx))
    direction /= np.linalg.norm(direction)
    shift = direction * np.sqrt(fraction * 2.0 * sx.trace)
    return Instance(instance_id=instance_id, sx=sx, sy=sy, shift=shift)


def generate(cfg: Optional[CorpusConfig] = None) -> List[Instance]:
    """Deterministic regime-stratified corpus; instance ``i`` only depends on the ``i``-th spawned seed."""
    cfg = cfg or CorpusConfig()
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_instances)
    return [draw_instance(i, np.random.default_rng(seed), cfg) for i, seed in enumerate(seeds)]

"""Closed-form detectability criteria and the overlap score."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .sampler import EnsembleParams


@dataclass(frozen=True)
class Threshold:
    lhs: float
    rhs: float

    @property
    def detectable(self) -> bool:
        return self.lhs > self.rhs

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    def __iter__(self):
        yield from (self.lhs, self.rhs, self.detectable)


def known_param_threshold(params: EnsembleParams) -> Threshold:
    """BP detectability when the true parameters are known:
    ``sqrt(sum |dc_a|^2 / P_a)`` against ``2 sqrt(c)``."""
    lhs = np.sqrt(np.sum(params.delta_c**2 / params.fractions))
    return Threshold(float(lhs), 2 * np.sqrt(params.total_degree))


def em_threshold(params: EnsembleParams) -> Threshold:
    """EM detectability from a symmetric corner start:
    ``sum P_a |x_a - 1/2|`` against ``1 / (2 sqrt(c))``."""
    lhs = np.sum(params.fractions * np.abs(params.x - 0.5))
    return Threshold(float(lhs), 1 / (2 * np.sqrt(params.total_degree)))


def em_threshold_delta_form(params: EnsembleParams) -> Threshold:
    """Same boundary written as ``sum |dc_a|`` against ``2 sqrt(c)``."""
    return Threshold(float(np.sum(np.abs(params.delta_c))), 2 * np.sqrt(params.total_degree))


def single_label_threshold(params: EnsembleParams, alpha: int) -> Threshold:
    """Detectability using only label ``alpha``: ``|dc_a|`` against ``2 sqrt(c_a)``."""
    a = alpha - 1
    return Threshold(float(abs(params.delta_c[a])), 2 * np.sqrt(params.mean_degrees[a]))


def infeasibility_region(params: EnsembleParams, dropped: int = 2) -> bool:
    """True when EM fails on the full graph but succeeds once label ``dropped`` is discarded."""
    if params.num_labels < 2:
        return False
    if em_threshold(params).detectable:
        return False
    keep = [a for a in range(params.num_labels) if a != dropped - 1]
    reduced = EnsembleParams(tuple(params.c[keep]), tuple(params.x[keep]))
    return em_threshold(reduced).detectable


@dataclass(frozen=True)
class PhaseVerdict:
    known_param: Threshold
    em_symmetric_init: Threshold
    per_label_alone: tuple[Threshold, ...]
    infeasible: bool

    @property
    def known_param_detectable(self) -> bool:
        return self.known_param.detectable

    @property
    def em_detectable(self) -> bool:
        return self.em_symmetric_init.detectable

    def as_dict(self) -> dict:
        out = {
            "known_param_detectable": self.known_param.detectable,
            "known_param_margin": self.known_param.margin,
            "em_detectable": self.em_symmetric_init.detectable,
            "em_margin": self.em_symmetric_init.margin,
            "infeasible": self.infeasible,
        }
        for a, t in enumerate(self.per_label_alone, start=1):
            out[f"label{a}_alone_detectable"] = t.detectable
            out[f"label{a}_alone_margin"] = t.margin
        return out


def phase_verdict(params: EnsembleParams) -> PhaseVerdict:
    alone = tuple(single_label_threshold(params, a) for a in range(1, params.num_labels + 1))
    return PhaseVerdict(known_param_threshold(params), em_threshold(params), alone, infeasibility_region(params))


def hard_assignment(inferred: np.ndarray) -> np.ndarray:
    """Argmax of ``(N, q)`` marginals; an exact tie goes to the first module."""
    inferred = np.asarray(inferred)
    if inferred.ndim == 1:
        return inferred.astype(np.int64)
    return np.argmax(inferred, axis=1)


def overlap(inferred: np.ndarray, planted: np.ndarray, num_modules: int = 2) -> float:
    """Agreement above chance, maximized over module relabelings, scaled to [0, 1]."""
    guess = hard_assignment(inferred)
    planted = np.asarray(planted, dtype=np.int64)
    if guess.shape != planted.shape:
        raise ValueError(f"inferred has {guess.shape[0]} vertices, planted has {planted.shape[0]}")
    q = num_modules
    best = max(np.mean(np.asarray(perm)[guess] == planted) for perm in permutations(range(q)))
    return float(max(0.0, (best - 1 / q) / (1 - 1 / q)))

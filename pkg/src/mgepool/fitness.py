"""Fitness scoring for candidate models: quality, diversity, and their
gamma-weighted combination."""

from __future__ import annotations

from dataclasses import dataclass

from . import adversarial
from .errors import ConfigRangeError
from .nn import Dataset, evaluate_accuracy

CRITERION_KINDS = ("accuracy", "robust_accuracy", "transfer_accuracy")


@dataclass(frozen=True)
class Criterion:
    """One scoring rule: plain accuracy, white-box FGSM robust accuracy at a
    fixed attack strength, or accuracy on an alternate dataset."""

    kind: str
    dataset: Dataset
    attack_eps: float = None

    def __post_init__(self):
        if self.kind not in CRITERION_KINDS:
            raise ConfigRangeError(f"unknown criterion kind {self.kind!r}")
        if self.kind == "robust_accuracy":
            if self.attack_eps is None or self.attack_eps <= 0:
                raise ConfigRangeError("robust_accuracy requires attack_eps > 0")


@dataclass(frozen=True)
class FitnessConfig:
    base: Criterion
    extra: Criterion = None
    gamma: float = 1.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigRangeError("gamma must be >= 0")


def criterion_score(spec, params, crit: Criterion) -> float:
    if crit.kind == "robust_accuracy":
        return adversarial.robust_accuracy(spec, params, crit.dataset, crit.attack_eps)
    return evaluate_accuracy(spec, params, crit.dataset)


def quality_fitness(spec, candidates, base_criterion: Criterion) -> float:
    """Mean base-criterion score over a candidate set."""
    if not candidates:
        raise ConfigRangeError("candidate set is empty")
    return sum(criterion_score(spec, c.params, base_criterion) for c in candidates) / len(candidates)


def diversity_fitness(spec, candidates, extra_criterion: Criterion) -> float:
    """Mean additional-criterion score over a candidate set."""
    if not candidates:
        raise ConfigRangeError("candidate set is empty")
    return sum(criterion_score(spec, c.params, extra_criterion) for c in candidates) / len(candidates)


def combined_fitness(f_q: float, f_d: float, gamma: float) -> float:
    if gamma < 0:
        raise ConfigRangeError("gamma must be >= 0")
    return f_q + gamma * f_d

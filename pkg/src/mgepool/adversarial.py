"""FGSM attack generation and the cross-model transfer experiment.

Inputs live in [0, 1]; perturbed features are always clipped back into
that range after the signed step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigRangeError
from .nn import forward, input_gradient


@dataclass
class AdvExample:
    original: np.ndarray
    perturbed: np.ndarray
    label: int
    eps: float
    source_id: str = "base"
    target: int = None


@dataclass
class TransferRow:
    model_id: str
    clean_accuracy: float
    untargeted_success: float
    targeted_success: float = None


@dataclass
class TransferReport:
    rows: list
    eps: float
    n_examples: int

    def to_text(self):
        lines = ["model_id\tclean\tuntargeted\ttargeted"]
        for r in self.rows:
            tgt = "-" if r.targeted_success is None else f"{r.targeted_success:.4f}"
            lines.append(f"{r.model_id}\t{r.clean_accuracy:.4f}\t"
                         f"{r.untargeted_success:.4f}\t{tgt}")
        return "\n".join(lines) + "\n"


def fgsm_batch(spec, params, features, labels, eps, targets=None):
    """Signed-gradient step on a batch; clipped to [0, 1].

    Untargeted: ascend the loss at the true label. Targeted: descend the
    loss at the target label.
    """
    if eps < 0:
        raise ConfigRangeError("eps must be >= 0")
    x = np.asarray(features, dtype=np.float64)
    if targets is None:
        g = input_gradient(spec, params, x, labels)
        perturbed = x + eps * np.sign(g)
    else:
        g = input_gradient(spec, params, x, targets)
        perturbed = x - eps * np.sign(g)
    return np.clip(perturbed, 0.0, 1.0)


def fgsm(spec, params, example, label, eps, target=None, source_id="base") -> AdvExample:
    """Single-example FGSM; sign(0) contributes no perturbation."""
    x = np.asarray(example, dtype=np.float64)
    perturbed = fgsm_batch(spec, params, x[None], np.asarray([label]), eps,
                           None if target is None else np.asarray([target]))[0]
    return AdvExample(x, perturbed, int(label), eps, source_id, target)


def robust_accuracy(spec, params, dataset, eps) -> float:
    """Accuracy on white-box FGSM-perturbed examples at strength eps."""
    if eps < 0:
        raise ConfigRangeError("eps must be >= 0")
    correct = 0
    batch = 512
    for start in range(0, len(dataset), batch):
        x = dataset.features[start:start + batch]
        y = dataset.labels[start:start + batch]
        adv = fgsm_batch(spec, params, x, y, eps)
        pred = forward(spec, params, adv).argmax(axis=1)
        correct += int((pred == y).sum())
    return correct / len(dataset)


def transfer_matrix(spec, source_params, pool, dataset, eps, n_examples=100,
                    targeted=True) -> TransferReport:
    """Attack the source model, test every pool member on the examples.

    pool is a list of (model_id, ParamSet). Targets default to
    (true label + 1) mod classes. The first n_examples of the dataset are
    used, deterministically.
    """
    if not pool:
        raise ConfigRangeError("pool is empty")
    n = min(n_examples, len(dataset))
    x = dataset.features[:n]
    y = dataset.labels[:n]
    adv_u = fgsm_batch(spec, source_params, x, y, eps)
    adv_t = None
    targets = None
    if targeted:
        targets = (y + 1) % dataset.classes
        adv_t = fgsm_batch(spec, source_params, x, y, eps, targets=targets)
    rows = []
    for model_id, params in pool:
        clean = float((forward(spec, params, x).argmax(axis=1) == y).mean())
        pred_u = forward(spec, params, adv_u).argmax(axis=1)
        untargeted = float((pred_u != y).mean())
        row = TransferRow(str(model_id), clean, untargeted)
        if targeted:
            pred_t = forward(spec, params, adv_t).argmax(axis=1)
            row.targeted_success = float((pred_t == targets).mean())
        rows.append(row)
    return TransferReport(rows, eps, n)

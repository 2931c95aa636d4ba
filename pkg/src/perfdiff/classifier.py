"""Pairwise comparison head over two tree encodings.

A single linear layer on the concatenation [z_i, z_j] with a sigmoid
output. Probability >= threshold decides label 1: the second program is
faster or equivalent (ties included).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EPS = 1e-12


@dataclass
class ClassifierParams:
    weight: np.ndarray          # (2d,)
    bias: np.ndarray            # scalar, shape ()

    @property
    def d(self) -> int:
        return self.weight.shape[0] // 2


def init_classifier(d: int) -> ClassifierParams:
    """Zero initialization: every pair starts at probability 0.5."""
    return ClassifierParams(weight=np.zeros(2 * d), bias=np.zeros(()))


def pair_logit(params: ClassifierParams, z_i: np.ndarray, z_j: np.ndarray) -> float:
    if z_i.shape != z_j.shape or 2 * z_i.shape[0] != params.weight.shape[0]:
        raise ValueError(
            f"encoding lengths {z_i.shape[0]}/{z_j.shape[0]} do not match "
            f"classifier width {params.weight.shape[0]}"
        )
    d = z_i.shape[0]
    return float(params.weight[:d] @ z_i + params.weight[d:] @ z_j + params.bias)


def predict_pair(params: ClassifierParams, z_i: np.ndarray, z_j: np.ndarray) -> float:
    """Probability that the second program is faster or equivalent."""
    logit = pair_logit(params, z_i, z_j)
    if logit >= 0:
        return 1.0 / (1.0 + math.exp(-logit))
    e = math.exp(logit)
    return e / (1.0 + e)


def decide(probability: float, threshold: float = 0.5) -> int:
    return 1 if probability >= threshold else 0


def bce_loss(p: float, y: int) -> tuple[float, float]:
    """Binary cross-entropy and its gradient w.r.t. the pre-sigmoid logit.

    p is clamped to [EPS, 1-EPS] inside the logs, so the loss is always
    finite; the logit gradient is exactly p - y.
    """
    q = min(max(p, EPS), 1.0 - EPS)
    loss = -(y * math.log(q) + (1 - y) * math.log(1.0 - q))
    return loss, p - y

"""Fixed-step gradient descent over the total loss.

Weights start at all-ones (every dimension treated equally) and follow
plain full-batch descent at a fixed learning rate.  Hinge losses under a
fixed step can overshoot, so the lowest-loss iterate seen is the one
returned; the reported loss is therefore never above the loss at the
all-ones start.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import FeatureStore, HyperParams, Triplet
from .loss import DEFAULT_VARIANT, LossReport, LossVariant, TripletTerms


class DivergenceError(RuntimeError):
    """Raised when the loss turns non-finite during descent."""

    def __init__(self, iteration: int):
        super().__init__(f"non-finite loss at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class LearnResult:
    w: np.ndarray
    final: LossReport
    iters_used: int
    converged: bool


def learn(
    store: FeatureStore,
    triplets: Sequence[Triplet],
    hp: HyperParams,
    variant: LossVariant = DEFAULT_VARIANT,
) -> LearnResult:
    """Minimize the total loss over the given triplets.

    Stops early when the loss change between consecutive iterations drops
    below ``hp.tol`` or the loss reaches exactly zero; otherwise runs the
    full ``hp.max_iters`` budget and reports ``converged=False``.
    Deterministic: identical inputs give bit-identical weights.
    """
    terms = TripletTerms(store, triplets)
    w = np.ones(store.dim, dtype=np.float64)

    lt, reg, grad = terms.value_and_grad(w, variant, hp)
    total = lt + hp.lam * reg
    best_w = w.copy()
    best = (total, lt, reg)
    if total == 0.0:
        return LearnResult(best_w, LossReport(lt, reg, total), 0, True)

    prev_total = total
    iters_used = hp.max_iters
    converged = False
    for it in range(1, hp.max_iters + 1):
        w = w - hp.learning_rate * grad
        lt, reg, grad = terms.value_and_grad(w, variant, hp)
        total = lt + hp.lam * reg
        if not math.isfinite(total):
            raise DivergenceError(it)
        if total < best[0]:
            best_w = w.copy()
            best = (total, lt, reg)
        if total == 0.0 or abs(prev_total - total) < hp.tol:
            iters_used = it
            converged = True
            break
        prev_total = total

    total, lt, reg = best
    return LearnResult(best_w, LossReport(lt, reg, total), iters_used, converged)

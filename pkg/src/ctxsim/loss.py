"""Triplet hinge losses, the unit-norm regularizer, and analytic gradients.

Distances are always squared Euclidean after reweighting:
D_ab(w) = sum_j w_j^2 (a_j - b_j)^2.  Three loss variants are supported:

* SINGLE_MARGIN:    max(0, D_qp - D_qn + alpha)
* TWO_MARGIN:       max(0, D_qp - alpha_p) + max(0, alpha_n - D_qn)
* TWO_MARGIN_FULL:  TWO_MARGIN plus max(0, alpha_n - D_pn)   (the default)

The regularizer sum_{i in q,p,n} (||diag(w) x_i||^2 - 1)^2 keeps reweighted
rows near unit length.  Everything here is a pure function of its inputs;
the subgradient of a hinge at its boundary is taken as 0, so the zero-loss
fixed point is stable.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import FeatureStore, HyperParams, Triplet, check_triplet


class LossVariant(enum.Enum):
    SINGLE_MARGIN = "single-margin"
    TWO_MARGIN = "two-margin"
    TWO_MARGIN_FULL = "two-margin-full"


DEFAULT_VARIANT = LossVariant.TWO_MARGIN_FULL


@dataclass(frozen=True)
class LossReport:
    """Loss components: total = triplet_loss + lam * reg_loss."""

    triplet_loss: float
    reg_loss: float
    total: float


class TripletTerms:
    """Squared differences precomputed once per triplet set.

    None of these arrays depend on w, so a gradient-descent loop only pays
    for a handful of matrix-vector products per iteration.
    """

    def __init__(self, store: FeatureStore, triplets: Sequence[Triplet]):
        if len(triplets) == 0:
            raise ValueError("triplet list must be non-empty")
        n = len(store)
        for t in triplets:
            check_triplet(t, n)
        idx = np.asarray(triplets, dtype=np.intp)
        v = store.vectors
        q, p, ng = v[idx[:, 0]], v[idx[:, 1]], v[idx[:, 2]]
        self.dim = store.dim
        self.qp2 = (q - p) ** 2  # (T, d)
        self.qn2 = (q - ng) ** 2
        self.pn2 = (p - ng) ** 2
        # Squared coordinates of all three roles, flattened to (3T, d) for
        # the regularizer's matrix products.
        self.x2 = np.concatenate([q * q, p * p, ng * ng], axis=0)

    def _check_w(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.dim,):
            raise ValueError(f"weight vector has shape {w.shape}, expected ({self.dim},)")
        return w

    def _hinges(self, sq: np.ndarray, variant: LossVariant, hp: HyperParams):
        """Hinge arguments for each triplet under squared weights `sq`."""
        dqp = self.qp2 @ sq
        dqn = self.qn2 @ sq
        if variant is LossVariant.SINGLE_MARGIN:
            return (dqp - dqn + hp.alpha,)
        z1 = dqp - hp.alpha_p
        z2 = hp.alpha_n - dqn
        if variant is LossVariant.TWO_MARGIN:
            return z1, z2
        dpn = self.pn2 @ sq
        return z1, z2, hp.alpha_n - dpn

    def value(self, w: np.ndarray, variant: LossVariant, hp: HyperParams) -> tuple[float, float]:
        """(summed triplet loss, summed regularizer) at w."""
        w = self._check_w(w)
        sq = w * w
        lt = sum(float(np.maximum(z, 0.0).sum()) for z in self._hinges(sq, variant, hp))
        norms = self.x2 @ sq - 1.0
        return lt, float(norms @ norms)

    def value_and_grad(
        self, w: np.ndarray, variant: LossVariant, hp: HyperParams
    ) -> tuple[float, float, np.ndarray]:
        """Loss components and the gradient of triplet + lam * reg at w.

        d D_ab / d w_j = 2 w_j (a_j - b_j)^2; an active hinge contributes
        the derivative of its argument, an inactive or boundary hinge
        contributes nothing.
        """
        w = self._check_w(w)
        sq = w * w
        zs = self._hinges(sq, variant, hp)
        lt = sum(float(np.maximum(z, 0.0).sum()) for z in zs)

        if variant is LossVariant.SINGLE_MARGIN:
            active = (zs[0] > 0.0).astype(np.float64)
            coef = active @ (self.qp2 - self.qn2)
        else:
            coef = (zs[0] > 0.0).astype(np.float64) @ self.qp2
            coef -= (zs[1] > 0.0).astype(np.float64) @ self.qn2
            if variant is LossVariant.TWO_MARGIN_FULL:
                coef -= (zs[2] > 0.0).astype(np.float64) @ self.pn2
        grad = 2.0 * w * coef

        norms = self.x2 @ sq - 1.0
        reg = float(norms @ norms)
        if hp.lam != 0.0:
            grad += hp.lam * 4.0 * w * (norms @ self.x2)
        return lt, reg, grad


def triplet_loss(
    variant: LossVariant,
    w: np.ndarray,
    store: FeatureStore,
    t: Triplet,
    hp: HyperParams,
) -> float:
    """Hinge loss of a single triplet under the given variant."""
    lt, _ = TripletTerms(store, [t]).value(w, variant, hp)
    return lt


def reg_loss(w: np.ndarray, store: FeatureStore, t: Triplet) -> float:
    """Unit-norm regularizer summed over the triplet's three rows."""
    _, reg = TripletTerms(store, [t]).value(w, DEFAULT_VARIANT, HyperParams())
    return reg


def total_loss(
    variant: LossVariant,
    w: np.ndarray,
    store: FeatureStore,
    triplets: Sequence[Triplet],
    hp: HyperParams,
) -> LossReport:
    """Triplet loss and regularizer summed over a set of triplets."""
    lt, reg = TripletTerms(store, triplets).value(w, variant, hp)
    return LossReport(triplet_loss=lt, reg_loss=reg, total=lt + hp.lam * reg)


def gradient(
    variant: LossVariant,
    w: np.ndarray,
    store: FeatureStore,
    triplets: Sequence[Triplet],
    hp: HyperParams,
) -> np.ndarray:
    """Analytic gradient of the total loss with respect to w."""
    _, _, g = TripletTerms(store, triplets).value_and_grad(w, variant, hp)
    return g


def score(
    w: np.ndarray,
    store: FeatureStore,
    q: int,
    p: int,
    n: int,
    hp: HyperParams,
) -> float:
    """How badly w fits the triplet (q, p, n): lower is better.

    Defined as the full two-margin loss of the triplet under fixed w, by
    delegation rather than a reimplementation.
    """
    return triplet_loss(LossVariant.TWO_MARGIN_FULL, w, store, Triplet(q, p, n), hp)

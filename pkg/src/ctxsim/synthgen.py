"""Synthetic benchmark generator with planted category/attribute structure.

Feature space is split into three dimension blocks: the category block
carries a per-category prototype, the attribute block a per-attribute
prototype, and the noise block carries nothing.  An image of combination
(c, a) is the concatenated prototypes plus isotropic Gaussian noise,
L2-normalized.  The block boundaries are exported so tests can check that
learned weights land on the planted dimensions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FeatureStore


@dataclass(frozen=True)
class GenSpec:
    n_categories: int = 4
    n_attributes: int = 4
    per_combo: int = 20
    dim_category: int = 16
    dim_attribute: int = 16
    dim_noise: int = 32
    noise_sigma: float = 0.15
    seed: int = 0
    # (category, attribute) combinations to leave out, mimicking datasets
    # where implausible pairings are removed.
    dropped_combos: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        for name in ("n_categories", "n_attributes"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be >= 2")
        if self.per_combo < 1:
            raise ValueError("per_combo must be >= 1")
        for name in ("dim_category", "dim_attribute"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.dim_noise < 0:
            raise ValueError("dim_noise must be >= 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        for c, a in self.dropped_combos:
            if not (0 <= c < self.n_categories and 0 <= a < self.n_attributes):
                raise ValueError(f"dropped_combos entry ({c}, {a}) out of range")

    @property
    def dim(self) -> int:
        return self.dim_category + self.dim_attribute + self.dim_noise

    def kept_combos(self) -> list[tuple[int, int]]:
        dropped = set(self.dropped_combos)
        combos = [
            (c, a)
            for c in range(self.n_categories)
            for a in range(self.n_attributes)
            if (c, a) not in dropped
        ]
        if not combos:
            raise ValueError("dropped_combos removes every combination")
        return combos


def _sphere(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """n points drawn uniformly from the unit sphere in R^d."""
    pts = rng.normal(size=(n, d))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def generate(spec: GenSpec) -> tuple[FeatureStore, dict[str, list[int]]]:
    """Build the labeled store and the block map for `spec`.

    The block map gives half-open [start, stop) column ranges for the
    "category", "attribute", and "noise" dimension groups.  Generation is
    a pure function of the spec: same spec, bit-identical store.
    """
    rng = np.random.default_rng(spec.seed)
    cat_protos = _sphere(rng, spec.n_categories, spec.dim_category)
    attr_protos = _sphere(rng, spec.n_attributes, spec.dim_attribute)

    combos = spec.kept_combos()
    n = len(combos) * spec.per_combo
    vectors = np.zeros((n, spec.dim), dtype=np.float64)
    cats = np.zeros(n, dtype=np.int64)
    attrs = np.zeros(n, dtype=np.int64)
    ids = []
    row = 0
    a_stop = spec.dim_category + spec.dim_attribute
    for c, a in combos:
        for _ in range(spec.per_combo):
            v = vectors[row]
            v[: spec.dim_category] = cat_protos[c]
            v[spec.dim_category : a_stop] = attr_protos[a]
            if spec.noise_sigma > 0:
                v += rng.normal(scale=spec.noise_sigma, size=spec.dim)
            cats[row] = c
            attrs[row] = a
            ids.append(f"img{row:05d}")
            row += 1

    store = FeatureStore.from_arrays(ids, vectors, cats, attrs)
    groups = {
        "category": [0, spec.dim_category],
        "attribute": [spec.dim_category, a_stop],
        "noise": [a_stop, spec.dim],
    }
    return store, groups

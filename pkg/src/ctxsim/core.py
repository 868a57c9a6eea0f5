"""Feature store, shared domain types, and the reweighted distance primitive.

Features are ingested as row vectors, L2-normalized, and never mutated
afterwards.  All arithmetic is float64: the finite-difference gradient
checks used throughout the test suite are meaningless in float32.
"""
from __future__ import annotations

import csv
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

# Binary feature-file magic (see `save_features` / `load_features`).
MAGIC = b"CTXSIMF1"

# Every stored row must be unit-norm within this tolerance.
NORM_TOL = 1e-6

# Rows whose norm is already this close to 1 are stored as-is instead of
# being divided by ~1.0; this keeps load -> save round-trips bit-exact
# while still renormalizing anything meaningfully off unit length.
_UNIT_SKIP = 1e-9


class Triplet(NamedTuple):
    """(query, positive, negative) row indices into a FeatureStore."""

    q: int
    p: int
    n: int


def check_triplet(t: Triplet, n_rows: int) -> None:
    """Validate index bounds and pairwise distinctness of a triplet."""
    if not (0 <= t.q < n_rows and 0 <= t.p < n_rows and 0 <= t.n < n_rows):
        raise ValueError(f"triplet {t} has indices outside [0, {n_rows})")
    if t.q == t.p or t.q == t.n or t.p == t.n:
        raise ValueError(f"triplet {t} repeats an index")


@dataclass(frozen=True)
class HyperParams:
    """All tunable knobs, with the documented defaults.

    alpha is the margin of the single-margin loss variant; alpha_p/alpha_n
    are the pull-in and push-out margins of the two-margin variants; lam
    weights the unit-norm regularizer.  theta1/theta2/m/min_cluster_size
    drive the discovery pipeline.
    """

    alpha: float = 1.0
    alpha_p: float = 0.5
    alpha_n: float = 2.0
    lam: float = 1.0
    learning_rate: float = 0.1
    max_iters: int = 200
    tol: float = 1e-6
    theta1: float = 1.1
    theta2: float = 1.0
    m: int = 10
    min_cluster_size: int = 30

    def __post_init__(self) -> None:
        if not self.alpha_p >= 0:
            raise ValueError("alpha_p must be >= 0")
        if not self.alpha_n >= 0:
            raise ValueError("alpha_n must be >= 0")
        if not self.alpha_p < self.alpha_n:
            raise ValueError("alpha_p must be strictly smaller than alpha_n")
        if not self.lam >= 0:
            raise ValueError("lam must be >= 0")
        # 0 is allowed so that a zero step size provably leaves the
        # initial weights untouched.
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if not self.theta1 > 0:
            raise ValueError("theta1 must be > 0")
        if not self.theta2 > 0:
            raise ValueError("theta2 must be > 0")
        if self.m < 1:
            raise ValueError("m must be a positive integer")
        if self.min_cluster_size < 1:
            raise ValueError("min_cluster_size must be a positive integer")


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FeatureStore:
    """Immutable collection of N unit-norm d-dimensional feature rows.

    ``categories``/``attributes`` are optional per-row integer labels;
    retrieval and clustering evaluation need them, weight learning never
    reads them.  Safe for unsynchronized shared reads.
    """

    ids: tuple[str, ...]
    vectors: np.ndarray  # (N, d) float64, rows unit-norm
    categories: np.ndarray | None = None  # (N,) int64
    attributes: np.ndarray | None = None  # (N,) int64

    @classmethod
    def from_arrays(
        cls,
        ids: Sequence[str],
        vectors: np.ndarray,
        categories: Sequence[int] | None = None,
        attributes: Sequence[int] | None = None,
    ) -> "FeatureStore":
        """Validate, normalize, and freeze raw arrays into a store."""
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[1] < 1:
            raise ValueError("vectors must be a non-empty (N, d) array")
        if len(ids) != vectors.shape[0]:
            raise ValueError(
                f"{len(ids)} ids for {vectors.shape[0]} feature rows"
            )
        ids = tuple(str(s) for s in ids)
        seen: set[str] = set()
        for s in ids:
            if s in seen:
                raise ValueError(f"duplicate id {s!r}")
            seen.add(s)
        if not np.all(np.isfinite(vectors)):
            bad = int(np.argwhere(~np.isfinite(vectors).all(axis=1))[0, 0])
            raise ValueError(f"non-finite value in row for id {ids[bad]!r}")

        norms = np.linalg.norm(vectors, axis=1)
        if np.any(norms == 0.0):
            bad = int(np.argmax(norms == 0.0))
            raise ValueError(f"zero-norm feature row for id {ids[bad]!r}")
        vectors = vectors.copy()
        off = np.abs(norms - 1.0) > _UNIT_SKIP
        if np.any(off):
            vectors[off] /= norms[off, None]

        cats = attrs = None
        if (categories is None) != (attributes is None):
            raise ValueError("categories and attributes must be given together")
        if categories is not None:
            cats = _freeze(np.asarray(categories, dtype=np.int64))
            attrs = _freeze(np.asarray(attributes, dtype=np.int64))
            if cats.shape != (len(ids),) or attrs.shape != (len(ids),):
                raise ValueError("label arrays must have one entry per row")
        return cls(ids=ids, vectors=_freeze(vectors), categories=cats, attributes=attrs)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.categories is not None

    def require_labels(self) -> None:
        if not self.has_labels:
            raise ValueError("this operation needs (category, attribute) labels")

    @property
    def _index(self) -> dict[str, int]:
        # Lazily built id -> row map; cached on the instance dict, which
        # frozen dataclasses still allow.
        cached = self.__dict__.get("_index_cache")
        if cached is None:
            cached = {s: i for i, s in enumerate(self.ids)}
            self.__dict__["_index_cache"] = cached
        return cached

    def index_of(self, image_id: str) -> int:
        try:
            return self._index[image_id]
        except KeyError:
            raise ValueError(f"unknown image id {image_id!r}") from None

    def row(self, i: int) -> np.ndarray:
        return self.vectors[i]

    def with_labels(
        self, categories: Sequence[int], attributes: Sequence[int]
    ) -> "FeatureStore":
        return FeatureStore.from_arrays(self.ids, self.vectors, categories, attributes)


def reweighted_sqdist(w: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Squared Euclidean distance after per-dimension reweighting.

    Returns sum_j w_j^2 (a_j - b_j)^2, i.e. the squared distance between
    diag(w) @ a and diag(w) @ b.
    """
    w = np.asarray(w, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not (w.shape == a.shape == b.shape):
        raise ValueError(
            f"dimension mismatch: w{w.shape}, a{a.shape}, b{b.shape}"
        )
    d = a - b
    return float(np.dot(w * w, d * d))


def derive_seed(seed: int, label: str) -> int:
    """Deterministic per-stage sub-seed for a named pipeline stage."""
    mixed = np.random.SeedSequence([seed, zlib.crc32(label.encode("utf-8"))])
    return int(mixed.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def load_features(path: str | Path, fmt: str = "bin") -> FeatureStore:
    """Read a feature file ("bin" or "csv") into a normalized store."""
    path = Path(path)
    if fmt == "bin":
        return _read_bin(path)
    if fmt == "csv":
        return _read_csv(path)
    raise ValueError(f"unknown feature format {fmt!r}")


def save_features(store: FeatureStore, path: str | Path, fmt: str = "bin") -> None:
    path = Path(path)
    if fmt == "bin":
        _write_bin(store, path)
    elif fmt == "csv":
        _write_csv(store, path)
    else:
        raise ValueError(f"unknown feature format {fmt!r}")


def _write_bin(store: FeatureStore, path: Path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", store.dim, len(store)))
        for s in store.ids:
            raw = s.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(store.vectors, dtype="<f8").tobytes())


def _read_bin(path: Path) -> FeatureStore:
    blob = path.read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: bad magic, not a feature binary")
    offset = len(MAGIC)
    dim, n = struct.unpack_from("<II", blob, offset)
    offset += 8
    if dim < 1:
        raise ValueError(f"{path}: header dimension must be positive")
    ids = []
    for _ in range(n):
        (ln,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        ids.append(blob[offset : offset + ln].decode("utf-8"))
        offset += ln
    expected = n * dim * 8
    if len(blob) - offset != expected:
        raise ValueError(
            f"{path}: expected {expected} bytes of vector data, "
            f"found {len(blob) - offset}"
        )
    vectors = np.frombuffer(blob, dtype="<f8", count=n * dim, offset=offset)
    return FeatureStore.from_arrays(ids, vectors.reshape(n, dim))


def _write_csv(store: FeatureStore, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for s, row in zip(store.ids, store.vectors):
            writer.writerow([s] + [repr(float(x)) for x in row])


def _read_csv(path: Path) -> FeatureStore:
    ids: list[str] = []
    rows: list[list[float]] = []
    dim = None
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec:
                continue
            if len(rec) < 2:
                raise ValueError(f"{path}:{lineno}: row has no feature fields")
            if dim is None:
                dim = len(rec) - 1
            elif len(rec) - 1 != dim:
                raise ValueError(
                    f"{path}:{lineno}: expected {dim} fields, got {len(rec) - 1}"
                )
            try:
                values = [float(x) for x in rec[1:]]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed numeric field") from None
            ids.append(rec[0])
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: empty feature file")
    return FeatureStore.from_arrays(ids, np.array(rows, dtype=np.float64))


def load_labels(path: str | Path) -> dict[str, tuple[int, int]]:
    """Read an `id<TAB>category<TAB>attribute` TSV into a mapping."""
    path = Path(path)
    labels: dict[str, tuple[int, int]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
            image_id, cat, attr = parts
            if image_id in labels:
                raise ValueError(f"{path}:{lineno}: duplicate id {image_id!r}")
            try:
                labels[image_id] = (int(cat), int(attr))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer label") from None
    return labels


def attach_labels(store: FeatureStore, path: str | Path) -> FeatureStore:
    """Return a copy of `store` carrying the labels read from `path`.

    The label file must cover exactly the store's ids.
    """
    labels = load_labels(path)
    missing = [s for s in store.ids if s not in labels]
    if missing:
        raise ValueError(f"labels missing for ids: {', '.join(missing[:5])}")
    extra = set(labels) - set(store.ids)
    if extra:
        raise ValueError(f"labels for unknown ids: {', '.join(sorted(extra)[:5])}")
    cats = [labels[s][0] for s in store.ids]
    attrs = [labels[s][1] for s in store.ids]
    return store.with_labels(cats, attrs)


def save_labels(store: FeatureStore, path: str | Path) -> None:
    store.require_labels()
    with open(path, "w") as fh:
        for s, c, a in zip(store.ids, store.categories, store.attributes):
            fh.write(f"{s}\t{int(c)}\t{int(a)}\n")

"""Feature subsets, candidate-layer construction, and neuron selection.

A hidden neuron is identified with the set of input features it is meant
to detect jointly.  Layer depth ``l`` holds sets of cardinality ``2**l``;
a depth-``l`` set is the disjoint union of two depth-``(l-1)`` sets that
survived the previous selection.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_FEATURES = 128


class SelectionEmpty(RuntimeError):
    """No candidate neuron passed the selection rule; training cannot proceed."""


@dataclass(frozen=True)
class FeatureSet:
    """Immutable bitset over input features (at most ``MAX_FEATURES`` wide)."""

    mask: int

    def __post_init__(self) -> None:
        if self.mask < 0 or self.mask >> MAX_FEATURES:
            raise ValueError(f"feature index out of range (supported width {MAX_FEATURES})")

    @classmethod
    def of(cls, *indices: int) -> "FeatureSet":
        return cls.from_indices(indices)

    @classmethod
    def from_indices(cls, indices: Iterable[int]) -> "FeatureSet":
        mask = 0
        for i in indices:
            if i < 0 or i >= MAX_FEATURES:
                raise ValueError(f"feature index {i} out of range [0, {MAX_FEATURES})")
            mask |= 1 << i
        return cls(mask)

    def members(self) -> tuple[int, ...]:
        m, out = self.mask, []
        while m:
            low = m & -m
            out.append(low.bit_length() - 1)
            m ^= low
        return tuple(out)

    def cardinality(self) -> int:
        return self.mask.bit_count()

    def union(self, other: "FeatureSet") -> "FeatureSet":
        return FeatureSet(self.mask | other.mask)

    def isdisjoint(self, other: "FeatureSet") -> bool:
        return not (self.mask & other.mask)

    def issubset(self, other: "FeatureSet") -> bool:
        return self.mask & other.mask == self.mask

    def __contains__(self, index: int) -> bool:
        return bool(self.mask >> index & 1)

    # Lexicographic order on the sorted member tuple; this is the canonical
    # neuron ordering used for tie-breaks and array layouts.
    def sort_key(self) -> tuple[int, ...]:
        return self.members()

    def __lt__(self, other: "FeatureSet") -> bool:
        return self.members() < other.members()

    def __repr__(self) -> str:
        return "FeatureSet" + repr(self.members())


@dataclass(frozen=True)
class LayerCatalog:
    """Candidate neurons of one hidden depth, with their designated parent pairs.

    ``prev`` is the selected previous layer in canonical order; each
    candidate's experts are exactly these neurons.  ``parent_index`` rows
    give the positions of the two designated parents inside ``prev``.
    """

    depth: int
    prev: tuple[FeatureSet, ...]
    candidates: tuple[FeatureSet, ...]
    parents: Mapping[FeatureSet, tuple[FeatureSet, FeatureSet]] = field(repr=False)
    parent_index: np.ndarray = field(repr=False)  # (n_candidates, 2) int

    def __len__(self) -> int:
        return len(self.candidates)


def build_candidates(prev_selected: Sequence[FeatureSet]) -> LayerCatalog:
    """Form the next layer: one candidate per distinct disjoint union of two
    previous-layer sets.

    Several parent pairs can produce the same union; the candidate keeps one
    canonical pair, the lexicographically smallest, so that its
    coincidence-gain target is unambiguous.
    """
    if not prev_selected:
        raise ValueError("previous layer is empty")
    cards = {s.cardinality() for s in prev_selected}
    if len(cards) != 1:
        raise ValueError(f"previous layer mixes cardinalities {sorted(cards)}")
    if len(set(prev_selected)) != len(prev_selected):
        raise ValueError("previous layer contains duplicate sets")
    prev = tuple(sorted(prev_selected))
    depth_card = next(iter(cards)) * 2

    best_pair: dict[FeatureSet, tuple[FeatureSet, FeatureSet]] = {}
    for a_idx in range(len(prev)):
        for b_idx in range(a_idx + 1, len(prev)):
            a, b = prev[a_idx], prev[b_idx]
            if not a.isdisjoint(b):
                continue
            union = a.union(b)
            pair = (a, b)  # a < b by construction
            cur = best_pair.get(union)
            if cur is None or (pair[0].sort_key(), pair[1].sort_key()) < (
                cur[0].sort_key(),
                cur[1].sort_key(),
            ):
                best_pair[union] = pair

    candidates = tuple(sorted(best_pair))
    pos = {s: i for i, s in enumerate(prev)}
    parent_index = np.array(
        [[pos[best_pair[c][0]], pos[best_pair[c][1]]] for c in candidates], dtype=np.intp
    ).reshape(len(candidates), 2)
    assert all(c.cardinality() == depth_card for c in candidates)
    depth = depth_card.bit_length() - 1
    return LayerCatalog(
        depth=depth, prev=prev, candidates=candidates, parents=best_pair, parent_index=parent_index
    )


def _as_rate_matrix(
    rates: Mapping[object, np.ndarray] | np.ndarray, n_candidates: int
) -> np.ndarray:
    if isinstance(rates, Mapping):
        mat = np.asarray([np.asarray(v, dtype=float) for _, v in sorted(rates.items(), key=lambda kv: str(kv[0]))])
    else:
        mat = np.asarray(rates, dtype=float)
    if mat.ndim != 2 or mat.shape[1] != n_candidates:
        raise ValueError(f"rate matrix must be (natures, {n_candidates}), got {mat.shape}")
    return mat


def select_threshold(
    catalog: LayerCatalog,
    rates: Mapping[object, np.ndarray] | np.ndarray,
    s_l: float,
) -> list[int]:
    """Keep every candidate whose empirical rate reaches ``s_l`` on at least
    one presented nature.  Returns candidate indices in canonical order."""
    if not 0 < s_l <= 1:
        raise ValueError(f"selection threshold must be in (0, 1], got {s_l}")
    mat = _as_rate_matrix(rates, len(catalog))
    keep = np.flatnonzero(mat.max(axis=0) >= s_l)
    if keep.size == 0:
        raise SelectionEmpty(
            f"no candidate at depth {catalog.depth} reached rate {s_l} on any nature "
            f"(best observed {mat.max():.6f})"
        )
    return list(keep)


def select_top_n(
    catalog: LayerCatalog,
    rates: Mapping[object, np.ndarray] | np.ndarray,
    n: int,
) -> list[int]:
    """Keep the ``n`` candidates with the largest max-over-natures rate.

    Ties break toward the lexicographically smaller feature set.  Asking for
    more candidates than exist keeps them all and records a warning.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    mat = _as_rate_matrix(rates, len(catalog))
    if n >= len(catalog):
        if n > len(catalog):
            warnings.warn(
                f"requested {n} neurons but only {len(catalog)} candidates exist; keeping all",
                stacklevel=2,
            )
        return list(range(len(catalog)))
    scores = mat.max(axis=0)
    order = sorted(range(len(catalog)), key=lambda i: (-scores[i], catalog.candidates[i].sort_key()))
    return sorted(order[:n])


def is_valid_chain(layers: Sequence[Sequence[FeatureSet]]) -> bool:
    """Check that each depth-``l`` set splits into two disjoint sets present at
    depth ``l-1``, all the way down to singletons at depth 0."""
    if not layers:
        return True
    if any(s.cardinality() != 1 for s in layers[0]):
        return False
    for depth in range(1, len(layers)):
        prev = set(layers[depth - 1])
        for s in layers[depth]:
            if s.cardinality() != 2**depth:
                return False
            halves = [p for p in prev if p.issubset(s)]
            if not any(
                a.isdisjoint(b) and a.union(b) == s
                for i, a in enumerate(halves)
                for b in halves[i + 1 :]
            ):
                return False
    return True

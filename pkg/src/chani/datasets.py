"""Datasets: the synthetic colored-shapes generator and handwritten-digits
ingestion, plus presentation schedules.

A *nature* fixes the input firing rates exactly; presenting the same nature
twice reuses the same rate vector.  For the synthetic data the nine natures
are the shape/color combinations; for digits every image is its own nature
with per-pixel rates proportional to darkness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from chani.dynamics import RngStream

SHAPES = ("circle", "square", "triangle")
COLORS = ("blue", "red", "green")
SHAPE_FEATURES = FEATURES = SHAPES + COLORS  # input feature order: shapes then colors

DIGITS_PIXELS = 64
DIGITS_MAX_LEVEL = 16
DIGITS_EXPECTED_RECORDS = 1797


@dataclass(frozen=True)
class FiringProfile:
    """Input firing rates of one nature, with its class label."""

    nature_id: str | int
    rates: np.ndarray
    class_label: int
    independent: bool = True  # inputs spike independently of one another

    def __post_init__(self) -> None:
        rates = np.asarray(self.rates, dtype=float)
        if rates.ndim != 1 or np.any(rates < 0) or np.any(rates > 1):
            raise ValueError(f"nature {self.nature_id!r}: rates must lie in [0, 1]")
        object.__setattr__(self, "rates", rates)


@dataclass(frozen=True)
class SyntheticSpec:
    """Colored-shapes generator: spike probability and which labeling task."""

    p: float = 0.5
    task: int = 1

    def __post_init__(self) -> None:
        if not 0 < self.p <= 1:
            raise ValueError(f"p must be in (0, 1], got {self.p}")
        if self.task not in (1, 2):
            raise ValueError(f"task must be 1 or 2, got {self.task}")


def _nature_name(shape: str, color: str) -> str:
    return f"{color}_{shape}"


# Task 1: class 0 is every circle.  Task 2: classes are unions of
# shape/color pairs that no single feature can separate.
_TASK2_CLASS0 = {
    _nature_name("circle", "blue"),
    _nature_name("triangle", "blue"),
    _nature_name("square", "red"),
    _nature_name("circle", "green"),
    _nature_name("square", "green"),
}


def shapes_profiles(spec: SyntheticSpec) -> list[FiringProfile]:
    """The nine shape/color natures.  Each spikes its shape feature and its
    color feature independently at rate ``p``; the other four inputs stay
    silent."""
    profiles = []
    for si, shape in enumerate(SHAPES):
        for ci, color in enumerate(COLORS):
            rates = np.zeros(len(FEATURES))
            rates[si] = spec.p
            rates[len(SHAPES) + ci] = spec.p
            name = _nature_name(shape, color)
            if spec.task == 1:
                label = 0 if shape == "circle" else 1
            else:
                label = 0 if name in _TASK2_CLASS0 else 1
            profiles.append(FiringProfile(nature_id=name, rates=rates, class_label=label))
    return profiles


def bias_example_classes() -> dict[str, int]:
    """Class assignment used by the low-bias counterexample: class 0 is every
    square or blue object except the blue square; class 1 is the rest."""
    labels = {}
    for shape in SHAPES:
        for color in COLORS:
            name = _nature_name(shape, color)
            in_zero = (shape == "square" or color == "blue") and not (
                shape == "square" and color == "blue"
            )
            labels[name] = 0 if in_zero else 1
    return labels


@dataclass(frozen=True)
class DigitsSource:
    """Where and how to read the digits corpus (text, 64 pixels + label per line)."""

    path: str | Path
    split: float = 0.8
    split_seed: int = 0
    scale: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.split < 1:
            raise ValueError(f"split fraction must be in (0, 1), got {self.split}")
        if self.scale <= 0:
            raise ValueError(f"rate scale must be positive, got {self.scale}")


def parse_digits_file(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Parse the digits text format: per line, 64 integer pixels in [0, 16]
    then an integer label in [0, 9], any whitespace or commas between."""
    pixels, labels = [], []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != DIGITS_PIXELS + 1:
                raise ValueError(
                    f"{path}:{lineno}: expected {DIGITS_PIXELS + 1} fields, got {len(parts)}"
                )
            try:
                row = [int(x) for x in parts]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-integer field ({exc})") from exc
            px, label = row[:-1], row[-1]
            if any(v < 0 or v > DIGITS_MAX_LEVEL for v in px):
                raise ValueError(f"{path}:{lineno}: pixel value outside [0, {DIGITS_MAX_LEVEL}]")
            if not 0 <= label <= 9:
                raise ValueError(f"{path}:{lineno}: label {label} outside [0, 9]")
            pixels.append(px)
            labels.append(label)
    if not pixels:
        raise ValueError(f"{path}: no records")
    return np.asarray(pixels, dtype=float), np.asarray(labels, dtype=int)


def load_digits(source: DigitsSource) -> tuple[list[FiringProfile], list[FiringProfile]]:
    """Read the corpus, turn each image into a nature (rate = scale * pixel/16,
    clipped to [0, 1]), and split train/test deterministically by seed."""
    pixels, labels = parse_digits_file(source.path)
    rates = np.clip(source.scale * pixels / DIGITS_MAX_LEVEL, 0.0, 1.0)
    n = len(labels)
    order = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=source.split_seed))
    ).permutation(n)
    n_train = int(n * source.split)
    mk = lambda i: FiringProfile(nature_id=int(i), rates=rates[i], class_label=int(labels[i]))
    train = [mk(i) for i in sorted(order[:n_train].tolist())]
    test = [mk(i) for i in sorted(order[n_train:].tolist())]
    return train, test


def write_digits_file(path: str | Path) -> int:
    """Produce the digits text file from the bundled scikit-learn corpus.

    Only needed once, to materialize the dataset; the core never imports
    scikit-learn.
    """
    try:
        from sklearn.datasets import load_digits as _sk_load
    except ImportError as exc:  # pragma: no cover
        raise RuntimeError(
            "scikit-learn is required to fetch the digits corpus "
            "(pip install scikit-learn), or provide the text file yourself"
        ) from exc
    bunch = _sk_load()
    data = np.asarray(bunch.data, dtype=int)
    labels = np.asarray(bunch.target, dtype=int)
    with open(path, "w", encoding="ascii") as fh:
        for row, label in zip(data, labels):
            fh.write(" ".join(str(v) for v in row.tolist()) + f" {label}\n")
    return len(labels)


@dataclass
class Schedule:
    """Ordered presentation list for one training round.

    ``items`` are indices into the round's profile list; ``class_counts``
    are precomputed from the full schedule so gain normalizations are
    exact, not estimated online.
    """

    items: np.ndarray
    class_counts: dict[int, int]
    balanced: bool
    epoch_length: int = field(default=0)

    def __len__(self) -> int:
        return int(self.items.size)

    @classmethod
    def build(cls, labels: Sequence[int], items: np.ndarray, epoch_length: int) -> "Schedule":
        items = np.asarray(items, dtype=np.intp)
        counts: dict[int, int] = {}
        for idx in items.tolist():
            counts[labels[idx]] = counts.get(labels[idx], 0) + 1
        per_nature = np.bincount(items, minlength=len(labels))
        balanced = bool(per_nature.max() == per_nature.min())
        return cls(items=items, class_counts=counts, balanced=balanced, epoch_length=epoch_length)


def balanced_schedule(
    profiles: Sequence[FiringProfile], repetitions: int, rng: RngStream, key: tuple[int, ...]
) -> Schedule:
    """``repetitions`` independent random permutations of the nature list,
    concatenated: every nature appears exactly ``repetitions`` times."""
    if not profiles:
        raise ValueError("nature list is empty")
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    n = len(profiles)
    items = np.concatenate([rng.permutation(key + (r,), n) for r in range(repetitions)])
    return Schedule.build([p.class_label for p in profiles], items, epoch_length=n)


def schedule_of_length(
    profiles: Sequence[FiringProfile], count: int, rng: RngStream, key: tuple[int, ...]
) -> Schedule:
    """Arbitrary-length schedule: full random epochs plus a partial epoch.

    Per-nature counts differ by at most one; the schedule is flagged
    unbalanced whenever ``count`` is not a multiple of the nature count.
    """
    if not profiles:
        raise ValueError("nature list is empty")
    if count < 1:
        raise ValueError(f"presentation count must be >= 1, got {count}")
    n = len(profiles)
    reps = -(-count // n)
    items = np.concatenate([rng.permutation(key + (r,), n) for r in range(reps)])[:count]
    return Schedule.build([p.class_label for p in profiles], items, epoch_length=n)

"""Closed-form oracle for the network's limit behavior.

Everything here is computed analytically from the nature profiles, never
from simulation: joint spike rates of feature sets, the target layers that
selection should converge to, the limit weights, the discrepancy measures
used to score classification ability, class decomposability, VC dimension
by exhaustive shattering, and the low-bias counterexample.

All computations assume independent input neurons (the only shipped case);
profiles flagged as dependent are rejected loudly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from chani.datasets import FEATURES, FiringProfile, SyntheticSpec, bias_example_classes, shapes_profiles
from chani.topology import FeatureSet, build_candidates

_ATOL = 1e-12


# ---------------------------------------------------------------------------
# joint spike rates ("how often does this feature set co-fire")
# ---------------------------------------------------------------------------

def joint_rate(subset: FeatureSet, profile: FiringProfile) -> float:
    """Probability that all input neurons of the set spike together at one
    step: the product of their rates (empty set: 1)."""
    if not profile.independent:
        raise ValueError("joint rates are only defined for independent-input profiles")
    out = 1.0
    for i in subset.members():
        out *= profile.rates[i]
    return out


def empirical_joint_rate(spikes: np.ndarray, rows: Sequence[int]) -> float:
    """Fraction of steps at which all the given rows of a spike block are 1."""
    rows = list(rows)
    if not rows:
        return 1.0
    prod = spikes[rows[0]].astype(np.float64)
    for r in rows[1:]:
        prod = prod * spikes[r]
    return float(prod.mean())


def class_labels(profiles: Sequence[FiringProfile]) -> list[int]:
    return sorted({p.class_label for p in profiles})


def rate_matrix(sets: Sequence[FeatureSet], profiles: Sequence[FiringProfile]) -> np.ndarray:
    """Joint rates arranged as (sets, natures)."""
    return np.array([[joint_rate(s, p) for p in profiles] for s in sets], dtype=float).reshape(
        len(sets), len(profiles)
    )


@dataclass(frozen=True)
class CorrelationTable:
    """Joint rates per (set, nature) with per-class and overall averages."""

    sets: tuple[FeatureSet, ...]
    natures: tuple[object, ...]
    per_object: np.ndarray  # (sets, natures)
    overall: np.ndarray  # (sets,)
    per_class: np.ndarray  # (sets, classes)
    classes: tuple[int, ...]

    @classmethod
    def build(cls, sets: Sequence[FeatureSet], profiles: Sequence[FiringProfile]) -> "CorrelationTable":
        mat = rate_matrix(sets, profiles)
        ks = class_labels(profiles)
        per_class = np.stack(
            [mat[:, [i for i, p in enumerate(profiles) if p.class_label == k]].mean(axis=1) for k in ks],
            axis=1,
        ) if sets else np.zeros((0, len(ks)))
        return cls(
            sets=tuple(sets),
            natures=tuple(p.nature_id for p in profiles),
            per_object=mat,
            overall=mat.mean(axis=1) if sets else np.zeros(0),
            per_class=per_class,
            classes=tuple(ks),
        )


# ---------------------------------------------------------------------------
# target layers and limit weights
# ---------------------------------------------------------------------------

def selection_margin(depth: int, threshold: float) -> float:
    """A depth-``depth`` set enters the target layer only if some nature's
    joint rate strictly exceeds ``2**(2**depth - 1) * threshold``."""
    return float(2 ** (2**depth - 1) * threshold)


def target_layers(
    profiles: Sequence[FiringProfile], thresholds: Sequence[float]
) -> list[list[FeatureSet]]:
    """Exact recursion for the layers the pruning phases aim at.

    Depth 0 is the input singletons; each next depth keeps the disjoint
    unions whose joint rate clears the depth's margin for at least one
    nature.
    """
    n = profiles[0].rates.size
    layers: list[list[FeatureSet]] = [[FeatureSet.of(i) for i in range(n)]]
    for depth, s in enumerate(thresholds, start=1):
        if not 0 < s <= 1:
            raise ValueError(f"threshold for depth {depth} must be in (0, 1], got {s}")
        if not layers[-1]:
            layers.append([])
            continue
        catalog = build_candidates(layers[-1])
        margin = selection_margin(depth, s)
        kept = [
            c
            for c in catalog.candidates
            if any(joint_rate(c, p) > margin for p in profiles)
        ]
        layers.append(sorted(kept))
    return layers


def ideal_rate_factor(depth: int) -> float:
    """Spike-rate attenuation of an ideal depth-``depth`` layer: a neuron
    fires at this multiple of its feature set's joint rate (``2**(1-2**l)``)."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    return float(2.0 ** (1 - 2**depth))


def feature_discrepancies(
    sets: Sequence[FeatureSet], profiles: Sequence[FiringProfile]
) -> np.ndarray:
    """How much each feature set's joint rate singles out each class:
    class-k average minus the mean of the other classes' averages.
    Returned as (sets, classes)."""
    table = CorrelationTable.build(sets, profiles)
    k = len(table.classes)
    if k < 2:
        raise ValueError("feature discrepancy needs at least two classes")
    per = table.per_class
    others = (per.sum(axis=1, keepdims=True) - per) / (k - 1)
    return per - others


@dataclass(frozen=True)
class LimitModel:
    """The deterministic network the training converges to: target layers,
    half/half hidden weights on each neuron's designated parents, and
    per-class uniform output weights on the discrepancy argmax."""

    layers: tuple[tuple[FeatureSet, ...], ...]  # depth 0..L
    classes: tuple[int, ...]
    output_support: tuple[tuple[FeatureSet, ...], ...]  # per class
    output_weights: np.ndarray  # (classes, |last layer|)
    discrepancies: np.ndarray  # (|last layer|, classes)

    @property
    def last_layer(self) -> tuple[FeatureSet, ...]:
        return self.layers[-1]

    def hidden_weight_matrix(self, depth: int) -> np.ndarray:
        """Limit weights of the depth-``depth`` layer over the layer below:
        1/2 on each designated parent, 0 elsewhere."""
        prev, cur = self.layers[depth - 1], self.layers[depth]
        pos = {s: i for i, s in enumerate(prev)}
        w = np.zeros((len(cur), len(prev)))
        for r, s in enumerate(cur):
            halves = [p for p in prev if p.issubset(s)]
            placed = False
            for i, a in enumerate(halves):
                for b in halves[i + 1 :]:
                    if a.isdisjoint(b) and a.union(b) == s:
                        w[r, pos[a]] = w[r, pos[b]] = 0.5
                        placed = True
                        break
                if placed:
                    break
            if not placed:
                raise ValueError(f"{s} has no disjoint parent pair at depth {depth - 1}")
        return w


def limit_output_weights(
    last_layer: Sequence[FeatureSet], profiles: Sequence[FiringProfile]
) -> tuple[np.ndarray, list[list[FeatureSet]], np.ndarray]:
    """Per class: the argmax set of the feature discrepancy and the uniform
    weights on it.  Returns (weights (K, n_sets), support sets, disc matrix)."""
    disc = feature_discrepancies(last_layer, profiles)
    ks = class_labels(profiles)
    weights = np.zeros((len(ks), len(last_layer)))
    supports: list[list[FeatureSet]] = []
    for col, _ in enumerate(ks):
        top = disc[:, col].max()
        idx = np.flatnonzero(np.isclose(disc[:, col], top, rtol=0.0, atol=_ATOL))
        weights[col, idx] = 1.0 / idx.size
        supports.append([last_layer[i] for i in idx])
    return weights, supports, disc


def build_limit_model(
    profiles: Sequence[FiringProfile], thresholds: Sequence[float]
) -> LimitModel:
    layers = target_layers(profiles, thresholds)
    if not layers[-1]:
        raise ValueError("last target layer is empty; no limit model exists")
    weights, supports, disc = limit_output_weights(layers[-1], profiles)
    return LimitModel(
        layers=tuple(tuple(l) for l in layers),
        classes=tuple(class_labels(profiles)),
        output_support=tuple(tuple(s) for s in supports),
        output_weights=weights,
        discrepancies=disc,
    )


# ---------------------------------------------------------------------------
# discrepancy measures
# ---------------------------------------------------------------------------

def ideal_activity(
    q: np.ndarray, sets: Sequence[FeatureSet], profiles: Sequence[FiringProfile]
) -> np.ndarray:
    """Expected mean activity of output neurons wired with weights ``q`` to an
    ideal layer of unit constant: (classes', natures) = q @ joint rates."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    return q @ rate_matrix(sets, profiles)


def ideal_discrepancy(
    q_by_class: np.ndarray, sets: Sequence[FeatureSet], profiles: Sequence[FiringProfile]
) -> float:
    """Average own-class advantage of output neurons connected to an ideal
    layer: for each class, on its own natures, how much its neuron's expected
    activity exceeds the other neurons', nested-averaged class by class."""
    ks = class_labels(profiles)
    if len(ks) < 2:
        raise ValueError("ideal discrepancy needs at least two classes")
    act = ideal_activity(q_by_class, sets, profiles)  # (K, natures)
    if act.shape[0] != len(ks):
        raise ValueError("one weight row per class is required")
    per_class = []
    for row, k in enumerate(ks):
        own = [i for i, p in enumerate(profiles) if p.class_label == k]
        diffs = [
            float(np.mean(act[row, own] - act[other, own]))
            for other in range(len(ks))
            if other != row
        ]
        per_class.append(float(np.mean(diffs)))
    return float(np.mean(per_class))


def max_ideal_discrepancy(
    sets: Sequence[FeatureSet], profiles: Sequence[FiringProfile]
) -> float:
    """Largest ideal discrepancy over all weight families.

    The objective is linear in each class's weight row, so the maximum over
    the product of simplices sits at one vertex per class: the best single
    feature set per class, scored by its feature discrepancy.
    """
    disc = feature_discrepancies(sets, profiles)
    return float(disc.max(axis=0).mean())


def class_discrepancies_fixed(
    q_by_class: np.ndarray, presyn_rates: np.ndarray, labels: Sequence[int]
) -> dict[int, float]:
    """Recorded-activity discrepancy of a fixed weight family: per class, on
    its own presentations, its neuron's mean activity minus each other
    neuron's, averaged over the other neurons."""
    q = np.asarray(q_by_class, dtype=float)
    act = q @ np.asarray(presyn_rates, dtype=float).T  # (K, presentations)
    ks = sorted(set(labels))
    labels = np.asarray(labels)
    out: dict[int, float] = {}
    for row, k in enumerate(ks):
        own = labels == k
        if not own.any():
            raise ValueError(f"class {k} never presented")
        diffs = [
            float((act[row, own] - act[other, own]).mean())
            for other in range(len(ks))
            if other != row
        ]
        out[k] = float(np.mean(diffs))
    return out


def selectivity_discrepancies(activity_by_class: np.ndarray) -> tuple[np.ndarray, float]:
    """Discrepancies from a (neuron, presented-class) mean-activity matrix:
    diagonal minus the mean of the off-diagonal row entries; the network
    value is the class average.  This is the form a training trajectory
    accumulates online."""
    a = np.asarray(activity_by_class, dtype=float)
    k = a.shape[0]
    if a.shape != (k, k) or k < 2:
        raise ValueError("need a square (class, class) activity matrix with k >= 2")
    off = (a.sum(axis=1) - np.diag(a)) / (k - 1)
    per_class = np.diag(a) - off
    return per_class, float(per_class.mean())


# ---------------------------------------------------------------------------
# class decomposition and strong feasibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecompositionResult:
    success: bool
    p: float | None
    equal_cardinality: bool
    e_sets: dict[int, tuple[FeatureSet, ...]] = field(default_factory=dict)
    uncovered: dict[int, tuple[object, ...]] = field(default_factory=dict)


def activation_sets(
    sets: Sequence[FeatureSet], profiles: Sequence[FiringProfile]
) -> tuple[float | None, list[frozenset[int]]]:
    """Under binary correlations, the set of natures activating each feature
    set, plus the shared nonzero rate (None if rates are not two-valued)."""
    mat = rate_matrix(sets, profiles)
    nonzero = mat[mat > _ATOL]
    if nonzero.size == 0:
        return None, [frozenset() for _ in sets]
    p = float(nonzero[0])
    if not np.allclose(nonzero, p, rtol=0.0, atol=1e-9):
        return None, []
    activators = [frozenset(np.flatnonzero(mat[i] > _ATOL).tolist()) for i in range(len(sets))]
    return p, activators


def check_class_decomposition(
    last_layer: Sequence[FeatureSet], profiles: Sequence[FiringProfile]
) -> DecompositionResult:
    """Search for per-class families of feature sets whose activator natures
    union to exactly the class.

    The maximal candidate family per class is every set whose activators all
    lie inside the class; a class decomposes if and only if that family
    covers it.  Natures left uncovered are returned as witnesses.
    """
    p, activators = activation_sets(last_layer, profiles)
    if p is None:
        return DecompositionResult(success=False, p=None, equal_cardinality=False)
    cards = {len(a) for a in activators}
    equal_card = len(cards) == 1
    ks = class_labels(profiles)
    e_sets: dict[int, tuple[FeatureSet, ...]] = {}
    uncovered: dict[int, tuple[object, ...]] = {}
    ok = True
    for k in ks:
        members = frozenset(i for i, pr in enumerate(profiles) if pr.class_label == k)
        family = [i for i, act in enumerate(activators) if act and act <= members]
        covered = frozenset().union(*(activators[i] for i in family)) if family else frozenset()
        e_sets[k] = tuple(last_layer[i] for i in family)
        missing = sorted(members - covered)
        uncovered[k] = tuple(profiles[i].nature_id for i in missing)
        ok = ok and not missing
    return DecompositionResult(
        success=ok, p=p, equal_cardinality=equal_card, e_sets=e_sets, uncovered=uncovered
    )


def is_strong_feasible(
    q_by_class: np.ndarray, sets: Sequence[FeatureSet], profiles: Sequence[FiringProfile]
) -> bool:
    """Sign condition on the ideal activities: each class neuron's expected
    activity is strictly positive exactly on its own natures."""
    act = ideal_activity(q_by_class, sets, profiles)
    ks = class_labels(profiles)
    for row, k in enumerate(ks):
        for col, prof in enumerate(profiles):
            positive = act[row, col] > _ATOL
            if positive != (prof.class_label == k):
                return False
    return True


def exists_strong_feasible(
    sets: Sequence[FeatureSet], profiles: Sequence[FiringProfile], support_cap: int = 20
) -> bool:
    """Brute-force existence check, independent of the decomposition search:
    enumerate every support per class and test uniform weights on it via the
    sign condition.  Valid because positivity of a nonnegative mixture only
    depends on its support."""
    if len(sets) > support_cap:
        raise ValueError(f"support enumeration capped at {support_cap} sets, got {len(sets)}")
    ks = class_labels(profiles)
    mat = rate_matrix(sets, profiles)
    for k in ks:
        members = np.array([p.class_label == k for p in profiles])
        found = False
        for r in range(1, len(sets) + 1):
            for combo in itertools.combinations(range(len(sets)), r):
                pos = mat[list(combo)].sum(axis=0) > _ATOL
                if np.array_equal(pos, members):
                    found = True
                    break
            if found:
                break
        if not found:
            return False
    return True


# ---------------------------------------------------------------------------
# VC dimension by exhaustive shattering
# ---------------------------------------------------------------------------

def _activations_by_object(sets: Sequence[FeatureSet], n_features: int) -> list[int]:
    """For every binary object (bitmask over features), the bitmask of layer
    neurons it activates (a neuron fires iff its whole set is present)."""
    acts = []
    for obj in range(1 << n_features):
        a = 0
        for j, s in enumerate(sets):
            if s.mask & obj == s.mask:
                a |= 1 << j
        acts.append(a)
    return acts


def shatterable(objects: Sequence[int], sets: Sequence[FeatureSet], n_features: int) -> bool:
    """Exhaustive shattering check for the union-of-detectors hypothesis class.

    A label pattern is realizable iff the neurons untouched by the negative
    objects cover every positive object (the maximal allowed detector set is
    the only candidate worth checking).
    """
    acts = _activations_by_object(sets, n_features)
    obj_acts = [acts[o] for o in objects]
    for pattern in range(1 << len(objects)):
        forbidden = 0
        for i, a in enumerate(obj_acts):
            if not pattern >> i & 1:
                forbidden |= a
        allowed = ~forbidden
        if any(pattern >> i & 1 and not (a & allowed) for i, a in enumerate(obj_acts)):
            return False
    return True


def witness_objects(sets: Sequence[FeatureSet]) -> list[int]:
    """One object per neuron carrying exactly its feature set; within a layer
    of equal-cardinality sets each such object activates only its neuron."""
    return [s.mask for s in sets]


def vc_shatter(sets: Sequence[FeatureSet], n_features: int) -> int:
    """Size of the largest shatterable object set (exhaustive search).

    Shattering this class is equivalent to giving each chosen object a
    private detector no other chosen object touches (unions of detectors are
    monotone, so only the singleton label patterns bind).  The search walks
    that characterization; the witness construction finds a full-size set
    first, so typical instances terminate immediately at the ``len(sets)``
    cap.
    """
    if n_features > 16:
        raise ValueError("exhaustive shattering is capped at 16 features")
    if not sets:
        return 0
    acts = _activations_by_object(sets, n_features)
    activators: list[list[int]] = [[] for _ in sets]
    for obj, a in enumerate(acts):
        for j in range(len(sets)):
            if a >> j & 1:
                activators[j].append(obj)
    for j in range(len(sets)):
        activators[j].sort(key=lambda o: acts[o].bit_count())

    cap = min(len(sets), 1 << n_features)
    best = 0

    def dfs(j: int, chosen_objs: list[int], used_neurons: int, touched: int) -> None:
        nonlocal best
        best = max(best, len(chosen_objs))
        if best >= cap or j >= len(sets) or len(chosen_objs) + (len(sets) - j) <= best:
            return
        for obj in activators[j]:
            # privacy both ways: the new object must not touch any already
            # assigned detector, and nobody already chosen may touch this one
            if acts[obj] & used_neurons or touched >> j & 1 or obj in chosen_objs:
                continue
            chosen_objs.append(obj)
            dfs(j + 1, chosen_objs, used_neurons | (1 << j), touched | acts[obj])
            chosen_objs.pop()
            if best >= cap:
                return
        dfs(j + 1, chosen_objs, used_neurons, touched)

    dfs(0, [], 0, 0)
    return best


# ---------------------------------------------------------------------------
# low-bias counterexample
# ---------------------------------------------------------------------------

def hidden_pair_limit_activity(nu: float, r1: float, r2: float) -> float:
    """Stationary spike rate of a depth-1 neuron with limit weights (1/2 on
    each parent) and bias ``nu``, when its parents fire independently at
    ``r1`` and ``r2``: both-parents events pass ``1 - nu``, single-parent
    events pass ``(1/2 - nu)_+``."""
    both = r1 * r2
    one = r1 * (1.0 - r2) + (1.0 - r1) * r2
    return both * min(1.0, 1.0 - nu) + one * max(0.0, 0.5 - nu)


@dataclass(frozen=True)
class BiasCounterexampleResult:
    nu: float
    input_rate: float
    pair_sets: tuple[FeatureSet, ...]
    gain_targets: np.ndarray  # (pairs, classes): limit per-class gain drivers
    output_support: tuple[tuple[FeatureSet, ...], ...]
    limit_activity: np.ndarray  # (classes, natures)
    predicted: dict[str, int]
    truth: dict[str, int]
    misclassified: tuple[str, ...]

    @property
    def blue_square_activity(self) -> dict[int, float]:
        col = list(self.truth).index("blue_square")
        return {k: float(self.limit_activity[k, col]) for k in range(self.limit_activity.shape[0])}

    @property
    def blue_square_correct(self) -> bool:
        return "blue_square" not in self.misclassified


def nu_counterexample(nu: float, input_rate: float = 0.5) -> BiasCounterexampleResult:
    """Predicted limit classification of the nine colored shapes under the
    square-or-blue-except-blue-square labeling, for a hidden bias ``nu``.

    Builds the limit one-hidden-layer model analytically: pair-neuron rates
    from the two-parent closed form, per-class selectivity of each pair
    neuron, uniform output weights on each class's argmax, then argmax
    classification of every nature (ties to the smallest class index).
    """
    if not 0 <= nu <= 1:
        raise ValueError(f"nu must be in [0, 1], got {nu}")
    if not 0 < input_rate <= 1:
        raise ValueError(f"input rate must be in (0, 1], got {input_rate}")
    labels = bias_example_classes()
    base = shapes_profiles(SyntheticSpec(p=input_rate, task=1))
    profiles = [
        FiringProfile(p.nature_id, p.rates, labels[str(p.nature_id)]) for p in base
    ]
    # target pairs do not depend on nu; any margin below the pair rate works
    pairs = target_layers(profiles, [input_rate**2 / 4.0])[1]
    act = np.array(
        [
            [
                hidden_pair_limit_activity(
                    nu, p.rates[s.members()[0]], p.rates[s.members()[1]]
                )
                for p in profiles
            ]
            for s in pairs
        ]
    )
    ks = class_labels(profiles)
    # per-class limit gain driver of each pair neuron: own-class mean rate
    # minus the mean over other classes of their class-mean rates
    targets = np.zeros((len(pairs), len(ks)))
    for col, k in enumerate(ks):
        own = [i for i, p in enumerate(profiles) if p.class_label == k]
        rest_means = [
            act[:, [i for i, p in enumerate(profiles) if p.class_label == other]].mean(axis=1)
            for other in ks
            if other != k
        ]
        targets[:, col] = act[:, own].mean(axis=1) - np.mean(rest_means, axis=0)
    weights = np.zeros((len(ks), len(pairs)))
    support = []
    for col in range(len(ks)):
        top = targets[:, col].max()
        idx = np.flatnonzero(np.isclose(targets[:, col], top, rtol=0.0, atol=_ATOL))
        weights[col, idx] = 1.0 / idx.size
        support.append(tuple(pairs[i] for i in idx))
    out_act = weights @ act  # (classes, natures)
    predicted, truth, wrong = {}, {}, []
    for col, p in enumerate(profiles):
        scores = out_act[:, col]
        label = int(np.flatnonzero(np.isclose(scores, scores.max(), rtol=0.0, atol=_ATOL))[0])
        predicted[str(p.nature_id)] = label
        truth[str(p.nature_id)] = p.class_label
        if label != p.class_label:
            wrong.append(str(p.nature_id))
    return BiasCounterexampleResult(
        nu=nu,
        input_rate=input_rate,
        pair_sets=tuple(pairs),
        gain_targets=targets,
        output_support=tuple(support),
        limit_activity=out_act,
        predicted=predicted,
        truth=truth,
        misclassified=tuple(wrong),
    )


# ---------------------------------------------------------------------------
# assumption audits (preflight checks for the theory-comparison tests)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditResult:
    name: str
    passed: bool
    details: tuple[str, ...] = ()


def audit_decreasing_correlation(
    profiles: Sequence[FiringProfile], sets: Sequence[FeatureSet]
) -> AuditResult:
    """Strictly losing correlation when any feature is added to a set that
    co-fires at all (checked over the given sets)."""
    n = profiles[0].rates.size
    failures = []
    for s in sets:
        base = float(np.mean([joint_rate(s, p) for p in profiles]))
        if base <= _ATOL:
            continue
        for i in range(n):
            if i in s:
                continue
            grown = float(np.mean([joint_rate(s.union(FeatureSet.of(i)), p) for p in profiles]))
            if not grown < base:
                failures.append(f"{s} + feature {i}: {grown} !< {base}")
    return AuditResult("decreasing-correlation", not failures, tuple(failures))


def audit_sparse_features(
    profiles: Sequence[FiringProfile],
    layers: Sequence[Sequence[FeatureSet]],
    thresholds: Sequence[float],
) -> AuditResult:
    """Per nature, at most half of each target layer co-fires; and every
    candidate union left out of a target layer sits strictly below the
    depth's selection margin on every nature."""
    failures = []
    for depth, layer in enumerate(layers):
        if not layer:
            continue
        for p in profiles:
            active = sum(1 for s in layer if joint_rate(s, p) > _ATOL)
            if active > len(layer) / 2:
                failures.append(
                    f"depth {depth}, nature {p.nature_id!r}: {active}/{len(layer)} sets co-fire"
                )
    for depth in range(1, len(layers)):
        if not layers[depth - 1]:
            continue
        margin = selection_margin(depth, thresholds[depth - 1])
        member = set(layers[depth])
        for c in build_candidates(list(layers[depth - 1])).candidates:
            if c in member:
                continue
            for p in profiles:
                if not joint_rate(c, p) < margin:
                    failures.append(
                        f"depth {depth}: excluded {c} reaches {joint_rate(c, p)} >= {margin} "
                        f"on {p.nature_id!r}"
                    )
    return AuditResult("sparse-features", not failures, tuple(failures))


def audit_binary_correlations(
    profiles: Sequence[FiringProfile], last_layer: Sequence[FeatureSet]
) -> AuditResult:
    """All nonzero joint rates of the last layer share one value, and every
    set is carried by the same number of natures."""
    p, activators = activation_sets(last_layer, profiles)
    if p is None:
        return AuditResult("binary-correlations", False, ("nonzero joint rates are not all equal",))
    cards = sorted({len(a) for a in activators})
    if len(cards) != 1:
        return AuditResult(
            "binary-correlations", False, (f"activator counts differ across sets: {cards}",)
        )
    return AuditResult("binary-correlations", True, (f"shared rate {p}, {cards[0]} natures per set",))


def run_audits(
    profiles: Sequence[FiringProfile], thresholds: Sequence[float]
) -> list[AuditResult]:
    layers = target_layers(profiles, thresholds)
    check_sets = [s for layer in layers for s in layer]
    if len(layers) > 1 and layers[-2]:
        check_sets += list(build_candidates(list(layers[-2])).candidates)
    results = [
        audit_decreasing_correlation(profiles, check_sets),
        audit_sparse_features(profiles, layers, thresholds),
        audit_binary_correlations(profiles, layers[-1]) if layers[-1] else AuditResult(
            "binary-correlations", False, ("last target layer is empty",)
        ),
    ]
    return results

"""Layer-by-layer training: coincidence gains, weight updates, pruning, and
the full round orchestration.

Every rule is local.  A hidden candidate's forecaster reads only its own
presynaptic layer's spikes (its gain is the three-way coincidence rate of
its two designated parents with each expert); an output neuron's forecaster
reads its presynaptic rates plus the presented class, never the other
output neurons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from chani.aggregation import AggregatorSpec, LedgerBank
from chani.datasets import FiringProfile, Schedule, balanced_schedule, schedule_of_length
from chani.dynamics import (
    PHASE_SCHEDULE,
    PHASE_SELECT,
    PHASE_TRAIN,
    RngStream,
    SpikeBlock,
    simulate_cascade,
    simulate_candidate_layer,
)
from chani.topology import FeatureSet, LayerCatalog, build_candidates, select_threshold, select_top_n

MODEL_FORMAT = "chani-model 1"


def hidden_gain(block_prev: SpikeBlock | np.ndarray, parent_rows: tuple[int, int], expert_row: int) -> float:
    """Gain of one expert for one candidate: the fraction of steps at which
    the candidate's two designated parents and the expert all spike."""
    spikes = block_prev.spikes if isinstance(block_prev, SpikeBlock) else block_prev
    a, b = parent_rows
    prod = spikes[a].astype(np.float64) * spikes[b] * spikes[expert_row]
    return float(prod.mean())


def hidden_gains(block_prev: SpikeBlock | np.ndarray, parent_index: np.ndarray) -> np.ndarray:
    """All candidates' expert gains at once: (candidates, experts).

    Row ``c`` equals ``mean_t parent1_t * parent2_t * expert_t`` for every
    expert of the presynaptic layer.
    """
    spikes = block_prev.spikes if isinstance(block_prev, SpikeBlock) else block_prev
    pair = (spikes[parent_index[:, 0]] * spikes[parent_index[:, 1]]).astype(np.float64)
    return pair @ spikes.T.astype(np.float64) / spikes.shape[1]


def output_gain(
    rate: float,
    presented_class: int,
    target_class: int,
    class_counts: dict[int, int],
    n_classes: int,
    total: int,
    alpha: float = 1.0,
) -> float:
    """Class-signed gain of one presynaptic expert for one output neuron:
    its mean rate, scaled up by the inverse frequency of the presented
    class, positive for the neuron's own class and split negatively across
    the others.  ``alpha`` rescales direct input-neuron experts."""
    if class_counts.get(presented_class, 0) <= 0:
        raise ValueError(f"class {presented_class} has zero scheduled presentations")
    factor = total / class_counts[presented_class]
    if presented_class == target_class:
        return alpha * rate * factor
    return -alpha * rate * factor / (n_classes - 1)


def output_gains(
    rates: np.ndarray,
    presented_class_idx: int,
    class_counts_by_idx: np.ndarray,
    total: int,
    n_hidden_experts: int | None = None,
    alpha: float = 1.0,
) -> np.ndarray:
    """Vectorized per-class gain matrix (classes, experts) for one
    presentation.  When the expert vector is hidden-then-input, the input
    block is rescaled by ``alpha``."""
    k = class_counts_by_idx.size
    sign = np.full(k, -1.0 / (k - 1))
    sign[presented_class_idx] = 1.0
    factor = total / class_counts_by_idx[presented_class_idx]
    eff = np.asarray(rates, dtype=float).copy()
    if n_hidden_experts is not None:
        eff[n_hidden_experts:] *= alpha
    return factor * np.outer(sign, eff)


@dataclass
class TrainedLayer:
    sets: tuple[FeatureSet, ...]
    weights: np.ndarray  # (len(sets), len(previous layer))


@dataclass
class TrainedModel:
    """Frozen network: selected hidden layers with their weights, output
    weights, and enough metadata to resimulate."""

    n_inputs: int
    nu: float
    classes: tuple[int, ...]
    layers: list[TrainedLayer]
    output_weights: np.ndarray  # (K, experts); experts = last layer [+ inputs]
    output_reads_inputs: bool = False
    beta: float = 1.0
    config_echo: str = ""

    def hidden_weight_stack(self) -> list[np.ndarray]:
        return [layer.weights for layer in self.layers]

    # -- text serialization (decimal, shortest round-trip) ------------------

    def to_text(self) -> str:
        lines = [MODEL_FORMAT]
        if self.config_echo:
            for cfg_line in self.config_echo.strip().splitlines():
                lines.append(f"config {cfg_line}")
        lines.append(f"inputs {self.n_inputs}")
        lines.append(f"nu {self.nu!r}")
        lines.append(f"beta {self.beta!r}")
        lines.append(f"classes {' '.join(str(k) for k in self.classes)}")
        lines.append(f"output_reads_inputs {int(self.output_reads_inputs)}")
        for depth, layer in enumerate(self.layers, start=1):
            lines.append(f"layer {depth} {len(layer.sets)}")
            for s, row in zip(layer.sets, layer.weights):
                ws = " ".join(repr(float(v)) for v in row)
                lines.append(f"set {s.mask:x} {ws}")
        lines.append(f"output {self.output_weights.shape[0]} {self.output_weights.shape[1]}")
        for row in self.output_weights:
            lines.append("w " + " ".join(repr(float(v)) for v in row))
        lines.append("end")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TrainedModel":
        lines = text.strip().splitlines()
        if not lines or lines[0] != MODEL_FORMAT:
            raise ValueError("not a recognized model file")
        it = iter(lines[1:])
        echo: list[str] = []
        fields: dict[str, str] = {}
        layers: list[TrainedLayer] = []
        output_rows: list[list[float]] = []
        pending_sets: list[FeatureSet] = []
        pending_weights: list[list[float]] = []
        out_shape: tuple[int, int] | None = None

        def flush_layer() -> None:
            if pending_sets:
                layers.append(
                    TrainedLayer(tuple(pending_sets), np.array(pending_weights, dtype=float))
                )
                pending_sets.clear()
                pending_weights.clear()

        for line in it:
            head, _, rest = line.partition(" ")
            if head == "config":
                echo.append(rest)
            elif head in ("inputs", "nu", "beta", "classes", "output_reads_inputs"):
                fields[head] = rest
            elif head == "layer":
                flush_layer()
            elif head == "set":
                mask_hex, _, ws = rest.partition(" ")
                pending_sets.append(FeatureSet(int(mask_hex, 16)))
                pending_weights.append([float(v) for v in ws.split()])
            elif head == "output":
                flush_layer()
                k, e = rest.split()
                out_shape = (int(k), int(e))
            elif head == "w":
                output_rows.append([float(v) for v in rest.split()])
            elif head == "end":
                break
            else:
                raise ValueError(f"unrecognized model line: {line!r}")
        if out_shape is None or len(output_rows) != out_shape[0]:
            raise ValueError("model file missing or truncated output section")
        return cls(
            n_inputs=int(fields["inputs"]),
            nu=float(fields["nu"]),
            classes=tuple(int(v) for v in fields["classes"].split()),
            layers=layers,
            output_weights=np.array(output_rows, dtype=float),
            output_reads_inputs=bool(int(fields["output_reads_inputs"])),
            beta=float(fields["beta"]),
            config_echo="\n".join(echo),
        )


@dataclass(frozen=True)
class SelectionRule:
    """Which pruning mode a hidden round applies."""

    mode: str  # "threshold" | "top_n"
    thresholds: tuple[float, ...] = ()
    counts: tuple[int, ...] = ()

    def for_depth(self, depth: int) -> float | int:
        seq = self.thresholds if self.mode == "threshold" else self.counts
        if not seq:
            raise ValueError(f"selection rule has no parameter for depth {depth}")
        return seq[depth - 1] if depth - 1 < len(seq) else seq[-1]


@dataclass
class HiddenRoundResult:
    catalog: LayerCatalog
    selected: list[int]
    all_weights: np.ndarray  # every candidate, frozen
    bank: LedgerBank
    selection_rates: np.ndarray  # (selection natures, candidates)
    schedule: Schedule
    weight_trajectory: list[np.ndarray] = field(default_factory=list)


def train_hidden_layer(
    depth: int,
    prev_sets: Sequence[FeatureSet],
    frozen_stack: list[np.ndarray],
    profiles: Sequence[FiringProfile],
    schedule: Schedule,
    aggregator: AggregatorSpec,
    selection: SelectionRule,
    selection_items: Sequence[int],
    T: int,
    nu: float,
    rng: RngStream,
    keep_trajectory: bool = False,
) -> HiddenRoundResult:
    """One hidden round: train every candidate of the depth simultaneously on
    the schedule, then run the selection phase and prune.

    Candidates do not spike while training; their gains read the previous
    layer only.  They spike for the first time during selection, under their
    frozen end-of-round weights.
    """
    catalog = build_candidates(prev_sets)
    if len(catalog) == 0:
        raise ValueError(f"no candidates at depth {depth} (no disjoint parent pairs)")
    n_prev = len(catalog.prev)
    agg = aggregator.resolve(
        n_experts=n_prev, n_rounds=len(schedule), n_natures=len(profiles), output=False
    )
    bank = LedgerBank.zeros(len(catalog), n_prev)
    weights = np.full((len(catalog), n_prev), 1.0 / n_prev)
    trajectory: list[np.ndarray] = []
    for m, prof_idx in enumerate(schedule.items.tolist()):
        blocks = simulate_cascade(
            profiles[prof_idx].rates, frozen_stack, nu, T, rng, key=(depth, PHASE_TRAIN, m)
        )
        gains = hidden_gains(blocks[-1], catalog.parent_index)
        bank.accumulate(gains, weights)
        weights = agg.weights(bank.expert_gains, bank.forecaster_gains)
        if keep_trajectory:
            trajectory.append(weights.copy())

    rates = np.empty((len(selection_items), len(catalog)))
    for row, prof_idx in enumerate(selection_items):
        block = simulate_candidate_layer(
            profiles[prof_idx].rates,
            frozen_stack,
            weights,
            nu,
            T,
            rng,
            key=(depth, PHASE_SELECT, row),
        )
        rates[row] = block.rates()
    rule = selection.for_depth(depth)
    if selection.mode == "threshold":
        selected = select_threshold(catalog, rates, float(rule))
    else:
        selected = select_top_n(catalog, rates, int(rule))
    return HiddenRoundResult(
        catalog=catalog,
        selected=selected,
        all_weights=weights,
        bank=bank,
        selection_rates=rates,
        schedule=schedule,
        weight_trajectory=trajectory,
    )


@dataclass
class OutputRoundResult:
    weights: np.ndarray  # (K, experts), frozen
    bank: LedgerBank
    schedule: Schedule
    activity_by_class: np.ndarray  # (K, K) trajectory mean activities
    class_counts_by_idx: np.ndarray
    weight_trajectory: list[np.ndarray] = field(default_factory=list)


def train_output(
    frozen_stack: list[np.ndarray],
    profiles: Sequence[FiringProfile],
    classes: Sequence[int],
    schedule: Schedule,
    aggregator: AggregatorSpec,
    T: int,
    nu: float,
    rng: RngStream,
    alpha: float | None = None,
    beta: float = 1.0,
    epoch_hook: Callable[[int, np.ndarray, np.ndarray], None] | None = None,
    keep_trajectory: bool = False,
    round_index: int | None = None,
) -> OutputRoundResult:
    """The final round: each class neuron independently aggregates its
    presynaptic experts under the class-signed gain rule.

    With ``alpha`` set, direct input connections join the expert set
    (hidden experts first, inputs after), their gains scaled by ``alpha``
    and their drive scaled by ``beta``.  ``epoch_hook`` fires after each
    full pass of the schedule's epoch length with the current weights.
    """
    n_classes = len(classes)
    if n_classes < 2:
        raise ValueError("need at least two classes")
    class_to_idx = {k: i for i, k in enumerate(classes)}
    counts = np.zeros(n_classes)
    for k, c in schedule.class_counts.items():
        if k not in class_to_idx:
            raise ValueError(f"scheduled class {k} is not an output neuron")
        counts[class_to_idx[k]] = c
    if np.any(counts == 0):
        missing = [k for k, i in class_to_idx.items() if counts[i] == 0]
        raise ValueError(f"classes never presented in the schedule: {missing}")

    depth = round_index if round_index is not None else len(frozen_stack) + 1
    n_hidden = frozen_stack[-1].shape[0] if frozen_stack else profiles[0].rates.size
    variant = alpha is not None
    n_experts = n_hidden + (profiles[0].rates.size if variant else 0)
    agg = aggregator.resolve(
        n_experts=n_experts, n_rounds=len(schedule), n_natures=len(profiles), output=True
    )
    bank = LedgerBank.zeros(n_classes, n_experts)
    weights = np.full((n_classes, n_experts), 1.0 / n_experts)
    activity_sums = np.zeros((n_classes, n_classes))
    seen = np.zeros(n_classes)
    trajectory: list[np.ndarray] = []
    total = len(schedule)
    for m, prof_idx in enumerate(schedule.items.tolist()):
        prof = profiles[prof_idx]
        blocks = simulate_cascade(prof.rates, frozen_stack, nu, T, rng, key=(depth, PHASE_TRAIN, m))
        presyn = blocks[-1].rates()
        if variant:
            presyn = np.concatenate([presyn, blocks[0].rates()])
        c_idx = class_to_idx[prof.class_label]
        gains = output_gains(
            presyn,
            c_idx,
            counts,
            total,
            n_hidden_experts=n_hidden if variant else None,
            alpha=alpha if variant else 1.0,
        )
        # trajectory discrepancy bookkeeping: mean conditional drive of each
        # class neuron under the weights it actually used at this step
        drive = presyn.copy()
        if variant:
            drive[n_hidden:] *= beta
        activity_sums[:, c_idx] += weights @ drive
        seen[c_idx] += 1
        bank.accumulate(gains, weights)
        weights = agg.weights(bank.expert_gains, bank.forecaster_gains)
        if keep_trajectory:
            trajectory.append(weights.copy())
        if epoch_hook is not None and schedule.epoch_length and (m + 1) % schedule.epoch_length == 0:
            running = activity_sums / np.where(seen > 0, seen, 1.0)[None, :]
            epoch_hook((m + 1) // schedule.epoch_length, weights, running)
    activity = activity_sums / np.where(counts > 0, counts, 1.0)[None, :]
    return OutputRoundResult(
        weights=weights,
        bank=bank,
        schedule=schedule,
        activity_by_class=activity,
        class_counts_by_idx=counts,
        weight_trajectory=trajectory,
    )


@dataclass
class TrainDiagnostics:
    hidden_rounds: list[HiddenRoundResult]
    output_round: OutputRoundResult


@dataclass(frozen=True)
class TrainPlan:
    """Everything one full training needs besides the data and the seed."""

    n_layers: int
    T: int
    nu: float
    hidden_epochs: int | None  # balanced epochs over the nature set
    hidden_presentations: int | None  # raw presentation count (partial epochs)
    output_presentations: int
    hidden_agg: tuple[AggregatorSpec, ...]
    output_agg: AggregatorSpec
    selection: SelectionRule
    selection_sample: int | None  # None: every nature once, in canonical order
    alpha: float | None = None
    beta: float = 1.0

    def __post_init__(self) -> None:
        if not 0 <= self.nu < 1:
            raise ValueError(f"nu must be in [0, 1), got {self.nu}")
        if self.T < 1 or self.output_presentations < 1:
            raise ValueError("T and the output presentation count must be >= 1")
        if self.n_layers > 0 and (self.hidden_epochs is None) == (self.hidden_presentations is None):
            raise ValueError("give exactly one of hidden_epochs / hidden_presentations")
        if self.n_layers > 0 and len(self.hidden_agg) < self.n_layers:
            raise ValueError("one hidden aggregator per layer is required")
        if self.alpha is not None and self.n_layers == 0:
            raise ValueError("extra input connections require at least one hidden layer")


def hidden_schedule(
    plan: TrainPlan, profiles: Sequence[FiringProfile], depth: int, rng: RngStream
) -> Schedule:
    if plan.hidden_epochs is not None:
        return balanced_schedule(profiles, plan.hidden_epochs, rng, key=(depth, PHASE_SCHEDULE))
    return schedule_of_length(profiles, plan.hidden_presentations, rng, key=(depth, PHASE_SCHEDULE))


def selection_items(plan: TrainPlan, profiles: Sequence[FiringProfile], depth: int, rng: RngStream) -> list[int]:
    if plan.selection_sample is None or plan.selection_sample >= len(profiles):
        return list(range(len(profiles)))
    perm = rng.permutation((depth, PHASE_SCHEDULE, 1), len(profiles))
    return sorted(perm[: plan.selection_sample].tolist())


def run_chani(
    plan: TrainPlan,
    profiles: Sequence[FiringProfile],
    rng: RngStream,
    epoch_hook: Callable[[int, TrainedModel, np.ndarray], None] | None = None,
    config_echo: str = "",
    keep_trajectory: bool = False,
) -> tuple[TrainedModel, TrainDiagnostics]:
    """Full training: the hidden rounds bottom-up, then the output round.

    With zero hidden layers the output neurons aggregate the inputs
    directly.  ``epoch_hook`` receives a frozen snapshot model after each
    output-round epoch.
    """
    n_inputs = profiles[0].rates.size
    classes = tuple(sorted({p.class_label for p in profiles}))
    frozen: list[np.ndarray] = []
    trained_layers: list[TrainedLayer] = []
    prev_sets: list[FeatureSet] = [FeatureSet.of(i) for i in range(n_inputs)]
    hidden_results: list[HiddenRoundResult] = []
    for depth in range(1, plan.n_layers + 1):
        sched = hidden_schedule(plan, profiles, depth, rng)
        sel_items = selection_items(plan, profiles, depth, rng)
        result = train_hidden_layer(
            depth,
            prev_sets,
            frozen,
            profiles,
            sched,
            plan.hidden_agg[depth - 1],
            plan.selection,
            sel_items,
            plan.T,
            plan.nu,
            rng,
            keep_trajectory=keep_trajectory,
        )
        hidden_results.append(result)
        sel_sets = tuple(result.catalog.candidates[i] for i in result.selected)
        sel_weights = result.all_weights[result.selected]
        trained_layers.append(TrainedLayer(sets=sel_sets, weights=sel_weights))
        frozen.append(sel_weights)
        prev_sets = list(sel_sets)

    out_round_index = plan.n_layers + 1
    out_sched_profiles = profiles
    if plan.output_presentations % len(profiles) == 0:
        out_sched = balanced_schedule(
            out_sched_profiles,
            plan.output_presentations // len(profiles),
            rng,
            key=(out_round_index, PHASE_SCHEDULE),
        )
    else:
        out_sched = schedule_of_length(
            out_sched_profiles, plan.output_presentations, rng, key=(out_round_index, PHASE_SCHEDULE)
        )

    snapshot_hook = None
    if epoch_hook is not None:

        def snapshot_hook(epoch: int, weights: np.ndarray, activity: np.ndarray) -> None:
            model = TrainedModel(
                n_inputs=n_inputs,
                nu=plan.nu,
                classes=classes,
                layers=trained_layers,
                output_weights=weights.copy(),
                output_reads_inputs=plan.alpha is not None,
                beta=plan.beta if plan.alpha is not None else 1.0,
                config_echo=config_echo,
            )
            epoch_hook(epoch, model, activity)

    out = train_output(
        frozen,
        profiles,
        classes,
        out_sched,
        plan.output_agg,
        plan.T,
        plan.nu,
        rng,
        alpha=plan.alpha,
        beta=plan.beta if plan.alpha is not None else 1.0,
        epoch_hook=snapshot_hook,
        keep_trajectory=keep_trajectory,
        round_index=out_round_index,
    )
    model = TrainedModel(
        n_inputs=n_inputs,
        nu=plan.nu,
        classes=classes,
        layers=trained_layers,
        output_weights=out.weights,
        output_reads_inputs=plan.alpha is not None,
        beta=plan.beta if plan.alpha is not None else 1.0,
        config_echo=config_echo,
    )
    return model, TrainDiagnostics(hidden_rounds=hidden_results, output_round=out)


@dataclass(frozen=True)
class Classification:
    label: int
    spike_counts: np.ndarray
    tie: bool


def classify(
    model: TrainedModel,
    profile: FiringProfile,
    T: int,
    rng: RngStream,
    key: tuple[int, ...],
    dump_to=None,
) -> Classification:
    """Present one object to the frozen network and report the class whose
    neuron spiked the most (ties to the smallest class index, flagged)."""
    blocks = simulate_cascade(
        profile.rates,
        model.hidden_weight_stack(),
        model.nu,
        T,
        rng,
        key=key,
        output_weights=model.output_weights,
        beta=model.beta,
        output_reads_inputs=model.output_reads_inputs,
    )
    if dump_to is not None:
        from chani.dynamics import dump_spike_block

        dump_spike_block(blocks, dump_to)
    counts = blocks[-1].spikes.sum(axis=1)
    top = counts.max()
    winners = np.flatnonzero(counts == top)
    return Classification(
        label=model.classes[int(winners[0])], spike_counts=counts, tie=winners.size > 1
    )

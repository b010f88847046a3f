"""Discrete-time Hawkes spike generation.

Input neurons emit i.i.d. Bernoulli spikes at nature-determined rates.
Each non-input neuron spikes at step ``t`` with a conditional probability
computed from the previous step's activity of its presynaptic layer only
(one-step lag, no recurrence, no inhibition, no self-interaction):

* hidden neuron: ``(w . x_prev - nu)_+`` with ``w`` a probability vector;
* output neuron: ``w . x_prev`` (plain), or the hidden part plus a
  down-scaled direct input part when extra input connections are enabled.

All randomness flows through counter-based keyed streams, so simulating
neurons, presentations, or runs in any order or on any number of workers
yields bit-identical spike histories.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Phase codes used inside stream keys.
PHASE_TRAIN = 0
PHASE_SELECT = 1
PHASE_SCHEDULE = 2
PHASE_EVAL = 3


class RngStream:
    """Deterministic uniform-variate streams addressed by integer key tuples.

    Identical ``(master_seed, key)`` always yields the identical block of
    uniforms; distinct keys give statistically independent streams (Philox
    keyed through ``SeedSequence``).  A block's layout is fixed
    (neuron-major, time-minor), so the draw consumed by one (neuron, step)
    cell never depends on evaluation order.
    """

    def __init__(self, master_seed: int, base_key: tuple[int, ...] = ()):
        if master_seed < 0:
            raise ValueError("master seed must be non-negative")
        self.master_seed = int(master_seed)
        self.base_key = tuple(int(k) for k in base_key)

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.master_seed, self.base_key + tuple(int(k) for k in key))

    def generator(self, key: tuple[int, ...]) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=self.base_key + tuple(int(k) for k in key)
        )
        return np.random.Generator(np.random.Philox(seq))

    def uniforms(self, key: tuple[int, ...], shape: tuple[int, ...]) -> np.ndarray:
        return self.generator(key).random(shape)

    def permutation(self, key: tuple[int, ...], n: int) -> np.ndarray:
        return self.generator(key).permutation(n)


@dataclass
class SpikeBlock:
    """Binary activity of one layer over one presentation: (neurons, T)."""

    layer: int
    spikes: np.ndarray

    @property
    def T(self) -> int:
        return self.spikes.shape[1]

    def rates(self) -> np.ndarray:
        return self.spikes.mean(axis=1)


def simulate_input(rates: np.ndarray, T: int, rng: RngStream, key: tuple[int, ...]) -> SpikeBlock:
    """Independent Bernoulli spike trains, one row per input neuron."""
    rates = np.asarray(rates, dtype=float)
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if rates.ndim != 1 or np.any(rates < 0) or np.any(rates > 1):
        raise ValueError("input rates must be a vector with entries in [0, 1]")
    u = rng.uniforms(key + (0,), (rates.size, T))
    return SpikeBlock(layer=0, spikes=(u < rates[:, None]).astype(np.uint8))


def hidden_intensity(w: np.ndarray, x_prev: np.ndarray, nu: float) -> float:
    """Conditional spike probability of a hidden neuron given the previous
    step's presynaptic activity: ``(w . x_prev - nu)_+``.

    ``w`` lies in the simplex so the value never exceeds 1.
    """
    w = np.asarray(w, dtype=float)
    x_prev = np.asarray(x_prev, dtype=float)
    if w.shape != x_prev.shape:
        raise ValueError("weight and activity vectors differ in length")
    return float(max(0.0, w @ x_prev - nu))


def output_intensity(
    w: np.ndarray,
    x_prev: np.ndarray,
    beta: float = 1.0,
    input_slice: slice | None = None,
) -> float:
    """Conditional spike probability of an output neuron.

    Plain form: ``w . x_prev`` over the last hidden layer.  With extra input
    connections, ``x_prev`` concatenates hidden then input activity,
    ``input_slice`` marks the input block, and that part is scaled by
    ``beta``.  Clamped to [0, 1] as a guard against misconfigured variants.
    """
    w = np.asarray(w, dtype=float)
    x = np.asarray(x_prev, dtype=float)
    if w.shape != x.shape:
        raise ValueError("weight and activity vectors differ in length")
    if input_slice is None:
        val = w @ x
    else:
        scale = np.ones_like(w)
        scale[input_slice] = beta
        val = (w * scale) @ x
    return float(min(1.0, max(0.0, val)))


def _downstream_spikes(
    weights: np.ndarray,
    prev_spikes: np.ndarray,
    nu: float,
    uniforms: np.ndarray,
) -> np.ndarray:
    """Spikes of a frozen feed-forward layer over a whole presentation.

    The layer reads only the previous layer's column ``t-1``, so its
    conditional intensities for every ``t`` follow from one matrix product;
    column 0 is all-zero by the starting convention.
    """
    lam = weights @ prev_spikes
    if nu:
        lam -= nu
    np.clip(lam, 0.0, 1.0, out=lam)
    shifted = np.empty_like(lam)
    shifted[:, 0] = 0.0
    shifted[:, 1:] = lam[:, :-1]
    return (uniforms < shifted).astype(np.uint8)


def simulate_cascade(
    input_rates: np.ndarray,
    hidden_weights: Sequence[np.ndarray],
    nu: float,
    T: int,
    rng: RngStream,
    key: tuple[int, ...],
    output_weights: np.ndarray | None = None,
    beta: float = 1.0,
    output_reads_inputs: bool = False,
) -> list[SpikeBlock]:
    """Simulate one presentation through the full frozen stack.

    Returns blocks bottom-up: input, each hidden layer, and (when output
    weights are given) the output layer.  Layer ``i`` consumes the stream
    key ``key + (i,)``; every (neuron, step) cell consumes its draw whether
    or not the neuron can spike there.
    """
    blocks = [simulate_input(input_rates, T, rng, key)]
    for depth, w in enumerate(hidden_weights, start=1):
        if w.shape[0] == 0:
            raise ValueError(f"hidden layer {depth} is empty")
        u = rng.uniforms(key + (depth,), (w.shape[0], T))
        spikes = _downstream_spikes(w, blocks[-1].spikes, nu, u)
        blocks.append(SpikeBlock(layer=depth, spikes=spikes))
    if output_weights is not None:
        depth = len(hidden_weights) + 1
        if output_reads_inputs:
            n_hidden = output_weights.shape[1] - blocks[0].spikes.shape[0]
            lam = (
                output_weights[:, :n_hidden] @ blocks[-1].spikes
                + beta * (output_weights[:, n_hidden:] @ blocks[0].spikes)
            )
        else:
            lam = output_weights @ blocks[-1].spikes
        np.clip(lam, 0.0, 1.0, out=lam)
        shifted = np.empty_like(lam)
        shifted[:, 0] = 0.0
        shifted[:, 1:] = lam[:, :-1]
        u = rng.uniforms(key + (depth,), lam.shape)
        blocks.append(SpikeBlock(layer=depth, spikes=(u < shifted).astype(np.uint8)))
    return blocks


def simulate_candidate_layer(
    input_rates: np.ndarray,
    hidden_weights: Sequence[np.ndarray],
    candidate_weights: np.ndarray,
    nu: float,
    T: int,
    rng: RngStream,
    key: tuple[int, ...],
) -> SpikeBlock:
    """Simulate the frozen stack plus one candidate layer on top (the
    selection-phase law) and return the candidate block only."""
    blocks = simulate_cascade(input_rates, hidden_weights, nu, T, rng, key)
    depth = len(hidden_weights) + 1
    u = rng.uniforms(key + (depth,), (candidate_weights.shape[0], T))
    spikes = _downstream_spikes(candidate_weights, blocks[-1].spikes, nu, u)
    return SpikeBlock(layer=depth, spikes=spikes)


def dump_spike_block(blocks: Sequence[SpikeBlock], path) -> None:
    """Write one presentation's spikes as plain-text rows ``layer,neuron,t``."""
    with open(path, "w", encoding="ascii") as fh:
        for block in blocks:
            neurons, steps = np.nonzero(block.spikes)
            for n, t in zip(neurons.tolist(), steps.tolist()):
                fh.write(f"{block.layer},{n},{t + 1}\n")

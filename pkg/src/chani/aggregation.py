"""Expert-aggregation forecasters: exponentially and polynomially weighted
averages, cumulative gain ledgers, and regret accounting.

Every postsynaptic neuron runs its own forecaster over its presynaptic
neurons (the experts).  Ledgers store raw cumulative gains; weights are a
pure function of the ledger, so the two aggregation rules can be swapped
freely per layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class GainLedger:
    """Cumulative gains of one forecaster: per-expert totals, the forecaster's
    own aggregated total, and the number of accumulated rounds."""

    expert_gains: np.ndarray
    forecaster_gain: float = 0.0
    rounds: int = 0

    def __post_init__(self) -> None:
        self.expert_gains = np.asarray(self.expert_gains, dtype=float)
        if self.expert_gains.ndim != 1 or self.expert_gains.size < 1:
            raise ValueError("expert_gains must be a non-empty vector")

    @classmethod
    def zeros(cls, n_experts: int) -> "GainLedger":
        return cls(np.zeros(n_experts))

    @property
    def n_experts(self) -> int:
        return self.expert_gains.size


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite {what}")


def ewa_weights(ledger: GainLedger | np.ndarray, eta: float) -> np.ndarray:
    """Exponentially weighted distribution over experts.

    ``w_e = exp(eta * G_e) / sum_e' exp(eta * G_e')``, computed with
    max-subtraction: ``eta * G`` can reach several hundred, which would
    overflow a naive exponential.  Accepts a ledger or a 1D/2D array of
    cumulative gains (2D: one forecaster per row).
    """
    gains = ledger.expert_gains if isinstance(ledger, GainLedger) else np.asarray(ledger, dtype=float)
    if not math.isfinite(eta) or eta <= 0:
        raise ValueError(f"EWA learning rate must be finite and > 0, got {eta}")
    _check_finite(gains, "cumulative gains")
    scaled = eta * gains
    scaled = scaled - scaled.max(axis=-1, keepdims=True)
    w = np.exp(scaled)
    return w / w.sum(axis=-1, keepdims=True)


def pwa_weights(
    ledger: GainLedger | np.ndarray, b: float, forecaster_gain: float | np.ndarray | None = None
) -> np.ndarray:
    """Polynomially weighted distribution over experts.

    ``w_e ∝ (G_e - G)_+ ** (b - 1)`` where ``G`` is the forecaster's own
    cumulative gain.  When no expert is ahead of the forecaster all
    numerators vanish; the uniform distribution is returned then, matching
    the uniform initialization of the learning rule.
    """
    if not math.isfinite(b) or b < 2:
        raise ValueError(f"PWA exponent must be finite and >= 2, got {b}")
    if isinstance(ledger, GainLedger):
        gains, fore = ledger.expert_gains, ledger.forecaster_gain
    else:
        gains = np.asarray(ledger, dtype=float)
        if forecaster_gain is None:
            raise ValueError("forecaster_gain is required when passing a raw gain array")
        fore = forecaster_gain
    _check_finite(gains, "cumulative gains")
    fore = np.asarray(fore, dtype=float)
    _check_finite(fore, "forecaster gain")
    lead = np.clip(gains - fore[..., None], 0.0, None) ** (b - 1.0)
    total = lead.sum(axis=-1, keepdims=True)
    n = gains.shape[-1]
    uniform = np.full_like(lead, 1.0 / n)
    with np.errstate(invalid="ignore"):
        w = np.where(total > 0, lead / np.where(total > 0, total, 1.0), uniform)
    return w


def accumulate(ledger: GainLedger, gains: np.ndarray, weights: np.ndarray) -> GainLedger:
    """Add one round of gains: experts receive their gains componentwise, the
    forecaster receives the weighted aggregate.  Mutates and returns the ledger."""
    gains = np.asarray(gains, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if gains.shape != (ledger.n_experts,) or weights.shape != (ledger.n_experts,):
        raise ValueError(
            f"dimension mismatch: ledger has {ledger.n_experts} experts, "
            f"gains {gains.shape}, weights {weights.shape}"
        )
    _check_finite(gains, "gains")
    ledger.expert_gains += gains
    ledger.forecaster_gain += float(weights @ gains)
    ledger.rounds += 1
    return ledger


def regret(ledger: GainLedger) -> float:
    """Best fixed-expert cumulative gain minus the forecaster's.

    The maximum over probability vectors of ``q . G`` is attained at a
    vertex of the simplex, so this is ``max_e G_e - G``.
    """
    if ledger.rounds < 1:
        raise ValueError("regret is undefined before any round was accumulated")
    return float(ledger.expert_gains.max() - ledger.forecaster_gain)


def recommended_eta_hidden(n_experts: int, n_rounds: int) -> float:
    """Learning rate ``sqrt(8 ln(n_experts) / n_rounds)`` used by the
    theoretical regime for hidden-layer forecasters."""
    if n_experts < 2:
        raise ValueError(f"need at least 2 experts for a positive rate, got {n_experts}")
    if n_rounds < 1:
        raise ValueError(f"n_rounds must be >= 1, got {n_rounds}")
    return math.sqrt(8.0 * math.log(n_experts) / n_rounds)


def recommended_eta_output(n_natures: int, n_experts: int, n_rounds: int) -> float:
    """Learning rate ``(1/n_natures) * sqrt(2 ln(n_experts) / n_rounds)`` used
    by the theoretical regime for output forecasters."""
    if n_natures < 1:
        raise ValueError(f"n_natures must be >= 1, got {n_natures}")
    if n_experts < 2:
        raise ValueError(f"need at least 2 experts for a positive rate, got {n_experts}")
    if n_rounds < 1:
        raise ValueError(f"n_rounds must be >= 1, got {n_rounds}")
    return math.sqrt(2.0 * math.log(n_experts) / n_rounds) / n_natures


@dataclass(frozen=True)
class AggregatorSpec:
    """Which aggregation rule a layer runs, with its parameter.

    ``eta`` may be the string ``"theory"``; the trainer then substitutes the
    recommended rate for the layer's expert count and round count.
    """

    kind: str  # "ewa" | "pwa"
    eta: float | str = "theory"
    b: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in ("ewa", "pwa"):
            raise ValueError(f"unknown aggregator kind {self.kind!r}")
        if self.kind == "ewa" and not isinstance(self.eta, str):
            if not math.isfinite(self.eta) or self.eta <= 0:
                raise ValueError(f"EWA requires eta > 0, got {self.eta}")
        if self.kind == "pwa" and (not math.isfinite(self.b) or self.b < 2):
            raise ValueError(f"PWA requires b >= 2, got {self.b}")

    def resolve(self, n_experts: int, n_rounds: int, n_natures: int, output: bool) -> "AggregatorSpec":
        """Replace a "theory" rate with its numeric value for this layer."""
        if self.kind == "pwa" or not isinstance(self.eta, str):
            return self
        if self.eta != "theory":
            raise ValueError(f"unknown eta preset {self.eta!r}")
        eta = (
            recommended_eta_output(n_natures, n_experts, n_rounds)
            if output
            else recommended_eta_hidden(n_experts, n_rounds)
        )
        return AggregatorSpec(kind=self.kind, eta=eta, b=self.b)

    def weights(self, gains: np.ndarray, forecaster_gain: np.ndarray | float) -> np.ndarray:
        if self.kind == "ewa":
            return ewa_weights(gains, float(self.eta))
        return pwa_weights(gains, self.b, forecaster_gain)


@dataclass
class LedgerBank:
    """Cumulative gains for a whole layer of forecasters at once.

    Row ``f`` is forecaster ``f``'s per-expert totals; vectorizes what a
    per-neuron loop over ``GainLedger`` objects would do.
    """

    expert_gains: np.ndarray  # (n_forecasters, n_experts)
    forecaster_gains: np.ndarray = field(default=None)  # type: ignore[assignment]
    rounds: int = 0

    def __post_init__(self) -> None:
        self.expert_gains = np.asarray(self.expert_gains, dtype=float)
        if self.forecaster_gains is None:
            self.forecaster_gains = np.zeros(self.expert_gains.shape[0])

    @classmethod
    def zeros(cls, n_forecasters: int, n_experts: int) -> "LedgerBank":
        return cls(np.zeros((n_forecasters, n_experts)))

    def accumulate(self, gains: np.ndarray, weights: np.ndarray) -> None:
        if gains.shape != self.expert_gains.shape or weights.shape != self.expert_gains.shape:
            raise ValueError("gain/weight matrix shape mismatch")
        self.expert_gains += gains
        self.forecaster_gains += np.einsum("fe,fe->f", weights, gains)
        self.rounds += 1

    def ledger(self, f: int) -> GainLedger:
        return GainLedger(
            self.expert_gains[f].copy(), float(self.forecaster_gains[f]), self.rounds
        )

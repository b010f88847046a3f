"""CHANI: a discrete-time Hawkes spiking network trained by local expert aggregation.

The package has three faces:

* a trainer (`chani.training`) that grows hidden layers of coincidence
  detectors, prunes them, and trains a rate-coded output layer, all with
  purely local learning rules;
* an analytic oracle (`chani.analysis`) that computes the closed-form
  limits the trained network should approach (target layers, limit
  weights, discrepancies, VC dimension, the low-bias counterexample);
* an experiment runner and CLI (`chani.runner`, `chani.cli`) that
  reproduce the reference classification experiments at desk scale.
"""

from chani.aggregation import (
    AggregatorSpec,
    GainLedger,
    accumulate,
    ewa_weights,
    pwa_weights,
    recommended_eta_hidden,
    recommended_eta_output,
    regret,
)
from chani.topology import FeatureSet, LayerCatalog, SelectionEmpty, build_candidates

__all__ = [
    "AggregatorSpec",
    "GainLedger",
    "accumulate",
    "ewa_weights",
    "pwa_weights",
    "recommended_eta_hidden",
    "recommended_eta_output",
    "regret",
    "FeatureSet",
    "LayerCatalog",
    "SelectionEmpty",
    "build_candidates",
]

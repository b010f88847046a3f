"""Experiment execution: runs, sweeps, oracle reports, and the
theory-verification suite.

A command produces, under its output directory:

* ``models/run_NNN.txt``   one frozen model per run (decimal text);
* ``metrics.csv``          one record per (run, evaluation epoch);
* ``summary.json``         aggregates, including wall times.

Model and metrics files are pure functions of (config, master seed): the
per-run streams are derived from the master seed by run index, results are
collected and written in run order, and wall times live only in the
summary.  Re-running any subset of runs reproduces the same bytes at any
worker count.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from chani import analysis
from chani.config import ConfigError, ExperimentConfig
from chani.datasets import (
    DigitsSource,
    FiringProfile,
    SyntheticSpec,
    load_digits,
    shapes_profiles,
)
from chani.dynamics import PHASE_EVAL, RngStream
from chani.training import TrainedModel, classify, run_chani

METRICS_HEADER = (
    "run",
    "epoch",
    "accuracy",
    "per_class_accuracy",
    "ties",
    "network_discrepancy",
    "selected_counts",
)


@dataclass
class MetricsRecord:
    run: int
    epoch: int
    accuracy: float
    per_class: tuple[float, ...]
    ties: int
    network_discrepancy: float
    selected_counts: tuple[int, ...]
    wall_time: float  # seconds since run start; reported in the summary only

    def csv_row(self) -> list[str]:
        return [
            str(self.run),
            str(self.epoch),
            repr(self.accuracy),
            "|".join(repr(v) for v in self.per_class),
            str(self.ties),
            repr(self.network_discrepancy),
            "|".join(str(c) for c in self.selected_counts),
        ]


def load_profiles(cfg: ExperimentConfig) -> tuple[list[FiringProfile], list[FiringProfile]]:
    """Training and test natures for a config.  The synthetic natures serve
    both roles (test presentations just redraw spikes)."""
    if cfg.dataset_kind == "synthetic":
        profiles = shapes_profiles(SyntheticSpec(p=cfg.p, task=cfg.task))
        return profiles, profiles
    source = DigitsSource(
        path=cfg.digits_path, split=cfg.split, split_seed=cfg.split_seed, scale=cfg.scale
    )
    return load_digits(source)


def _test_items(cfg: ExperimentConfig, test_profiles: list[FiringProfile]) -> list[int]:
    if cfg.dataset_kind == "synthetic":
        return [i % len(test_profiles) for i in range(cfg.test_objects)]
    return list(range(len(test_profiles)))


def evaluate(
    model: TrainedModel,
    test_profiles: list[FiringProfile],
    items: list[int],
    T: int,
    rng: RngStream,
    epoch: int,
    dump_dir: Path | None = None,
) -> tuple[float, tuple[float, ...], int]:
    """Accuracy over test presentations, per-class accuracies, and tie count."""
    eval_round = len(model.layers) + 1
    correct_by_class: dict[int, int] = {k: 0 for k in model.classes}
    total_by_class: dict[int, int] = {k: 0 for k in model.classes}
    ties = 0
    for i, idx in enumerate(items):
        prof = test_profiles[idx]
        dump = None
        if dump_dir is not None:
            dump = dump_dir / f"eval_epoch{epoch}_obj{i}.txt"
        result = classify(model, prof, T, rng, key=(eval_round, PHASE_EVAL, epoch, i), dump_to=dump)
        total_by_class[prof.class_label] = total_by_class.get(prof.class_label, 0) + 1
        if result.label == prof.class_label:
            correct_by_class[prof.class_label] = correct_by_class.get(prof.class_label, 0) + 1
        ties += int(result.tie)
    total = sum(total_by_class.values())
    correct = sum(correct_by_class.values())
    per_class = tuple(
        correct_by_class[k] / total_by_class[k] if total_by_class[k] else 0.0
        for k in model.classes
    )
    return correct / total, per_class, ties


@dataclass
class RunOutput:
    run: int
    model_text: str
    records: list[MetricsRecord]
    final_accuracy: float
    wall_time: float


def run_single(cfg: ExperimentConfig, run_idx: int, dump_dir: Path | None = None) -> RunOutput:
    """One independent realization: train, evaluate per cadence, always
    evaluate the final frozen model."""
    started = time.perf_counter()
    train_profiles, test_profiles = load_profiles(cfg)
    items = _test_items(cfg, test_profiles)
    rng = RngStream(cfg.seed, base_key=(run_idx,))
    records: list[MetricsRecord] = []

    def record(epoch: int, model: TrainedModel, activity: np.ndarray, eval_key_epoch: int) -> None:
        acc, per_class, ties = evaluate(
            model, test_profiles, items, cfg.T, rng, eval_key_epoch, dump_dir=dump_dir
        )
        _, net_disc = analysis.selectivity_discrepancies(activity)
        records.append(
            MetricsRecord(
                run=run_idx,
                epoch=epoch,
                accuracy=acc,
                per_class=per_class,
                ties=ties,
                network_discrepancy=net_disc,
                selected_counts=tuple(len(layer.sets) for layer in model.layers),
                wall_time=time.perf_counter() - started,
            )
        )

    def hook(epoch: int, model: TrainedModel, activity: np.ndarray) -> None:
        if cfg.eval_every > 0 and epoch % cfg.eval_every == 0:
            record(epoch, model, activity, eval_key_epoch=epoch)

    plan = cfg.plan()
    model, diag = run_chani(
        plan, train_profiles, rng, epoch_hook=hook, config_echo=cfg.to_text()
    )
    sched = diag.output_round.schedule
    epoch_len = max(1, sched.epoch_length)
    final_epoch = -(-len(sched) // epoch_len)  # partial epochs count
    complete_epochs = len(sched) // epoch_len
    recorded_final = (
        records
        and records[-1].epoch == complete_epochs
        and complete_epochs == final_epoch
    )
    if not recorded_final:
        record(
            final_epoch,
            model,
            diag.output_round.activity_by_class,
            eval_key_epoch=final_epoch + 1,
        )
    return RunOutput(
        run=run_idx,
        model_text=model.to_text(),
        records=records,
        final_accuracy=records[-1].accuracy,
        wall_time=time.perf_counter() - started,
    )


def _worker(cfg_text: str, run_idx: int, dump_dir: str | None) -> RunOutput:
    cfg = ExperimentConfig.from_text(cfg_text)
    return run_single(cfg, run_idx, Path(dump_dir) if dump_dir else None)


def run_experiment(
    cfg: ExperimentConfig, out_dir: str | Path, workers: int = 1
) -> dict:
    """Execute all runs of a config and write models, metrics, and summary."""
    out = Path(out_dir)
    (out / "models").mkdir(parents=True, exist_ok=True)
    dump_dir = None
    if cfg.dump_spikes:
        dump_dir = out / "spikes"
        dump_dir.mkdir(exist_ok=True)
    cfg_text = cfg.to_text()
    (out / "config.cfg").write_text(cfg_text, encoding="utf-8")

    outputs: list[RunOutput] = []
    if workers <= 1 or cfg.runs == 1:
        for r in range(cfg.runs):
            outputs.append(run_single(cfg, r, dump_dir))
    else:
        with ProcessPoolExecutor(max_workers=min(workers, cfg.runs)) as pool:
            futures = [
                pool.submit(_worker, cfg_text, r, str(dump_dir) if dump_dir else None)
                for r in range(cfg.runs)
            ]
            outputs = [f.result() for f in futures]
    outputs.sort(key=lambda o: o.run)

    for o in outputs:
        (out / "models" / f"run_{o.run:03d}.txt").write_text(o.model_text, encoding="ascii")
    with open(out / "metrics.csv", "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for o in outputs:
            for rec in o.records:
                writer.writerow(rec.csv_row())

    finals = [o.final_accuracy for o in outputs]
    summary = {
        "runs": cfg.runs,
        "final_accuracies": finals,
        "mean_final_accuracy": float(np.mean(finals)),
        "quantile_05": float(np.quantile(finals, 0.05)),
        "quantile_95": float(np.quantile(finals, 0.95)),
        "total_ties": int(sum(rec.ties for o in outputs for rec in o.records)),
        "selected_counts": [list(o.records[-1].selected_counts) for o in outputs],
        "wall_times": [o.wall_time for o in outputs],
    }
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="ascii"
    )
    return summary


def run_sweep(
    cfg: ExperimentConfig, axis: str, values: list[str], out_dir: str | Path, workers: int = 1
) -> list[dict]:
    """One full experiment per axis value; aggregates final accuracies."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for raw in values:
        try:
            point_cfg = cfg.with_value(axis, raw)
        except ConfigError as exc:
            raise ConfigError(f"sweep axis {axis!r}: {exc}") from exc
        label = raw.replace("/", "_").replace(",", "_")
        summary = run_experiment(point_cfg, out / f"{axis.replace('.', '_')}_{label}", workers)
        rows.append(
            {
                "axis": axis,
                "value": raw,
                "runs": summary["runs"],
                "mean_final_accuracy": summary["mean_final_accuracy"],
                "quantile_05": summary["quantile_05"],
                "quantile_95": summary["quantile_95"],
            }
        )
    with open(out / "sweep.csv", "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["axis", "value", "runs", "mean_final_accuracy", "quantile_05", "quantile_95"])
        for row in rows:
            writer.writerow(
                [
                    row["axis"],
                    row["value"],
                    str(row["runs"]),
                    repr(row["mean_final_accuracy"]),
                    repr(row["quantile_05"]),
                    repr(row["quantile_95"]),
                ]
            )
    return rows


# ---------------------------------------------------------------------------
# oracle report
# ---------------------------------------------------------------------------

def _set_name(s, feature_names) -> str:
    return "{" + ",".join(feature_names[i] for i in s.members()) + "}"


def oracle_report(cfg: ExperimentConfig) -> dict:
    """Closed-form targets for a threshold-mode config: target layers, limit
    weights, discrepancies, decomposition, audits, and (synthetic) the
    bias sweep."""
    if cfg.layers > 0 and cfg.select_mode != "threshold":
        raise ConfigError(
            "oracle: closed-form target layers require threshold selection "
            "(top_n has no analytic pruning target)"
        )
    train_profiles, _ = load_profiles(cfg)
    if cfg.dataset_kind == "synthetic":
        from chani.datasets import FEATURES

        names = list(FEATURES)
    else:
        names = [f"px{i:02d}" for i in range(train_profiles[0].rates.size)]
    thresholds = list(cfg.thresholds)[: cfg.layers]
    layers = analysis.target_layers(train_profiles, thresholds)
    report: dict = {
        "dataset": cfg.dataset_kind,
        "depth": cfg.layers,
        "target_layers": [
            {"depth": d, "sets": [_set_name(s, names) for s in layer]}
            for d, layer in enumerate(layers)
        ],
        "ideal_rate_factors": [analysis.ideal_rate_factor(d) for d in range(cfg.layers + 1)],
    }
    audits = analysis.run_audits(train_profiles, thresholds)
    report["audits"] = [
        {"name": a.name, "passed": a.passed, "details": list(a.details)} for a in audits
    ]
    if layers[-1]:
        weights, supports, disc = analysis.limit_output_weights(layers[-1], train_profiles)
        ks = analysis.class_labels(train_profiles)
        report["feature_discrepancies"] = {
            _set_name(s, names): {str(k): float(disc[i, j]) for j, k in enumerate(ks)}
            for i, s in enumerate(layers[-1])
        }
        report["limit_output_support"] = {
            str(k): [_set_name(s, names) for s in supports[j]] for j, k in enumerate(ks)
        }
        report["limit_ideal_discrepancy"] = analysis.ideal_discrepancy(
            weights, layers[-1], train_profiles
        )
        report["max_ideal_discrepancy"] = analysis.max_ideal_discrepancy(
            layers[-1], train_profiles
        )
        decomp = analysis.check_class_decomposition(layers[-1], train_profiles)
        report["class_decomposition"] = {
            "success": decomp.success,
            "shared_rate": decomp.p,
            "equal_cardinality": decomp.equal_cardinality,
            "families": {
                str(k): [_set_name(s, names) for s in v] for k, v in decomp.e_sets.items()
            },
            "uncovered": {str(k): list(map(str, v)) for k, v in decomp.uncovered.items()},
        }
        if len(layers[-1]) <= 16:
            report["strong_feasible_exists"] = analysis.exists_strong_feasible(
                layers[-1], train_profiles
            )
    if cfg.dataset_kind == "synthetic":
        sweep = []
        for nu in (0.0, 0.25, 0.4, 0.49, 0.5):
            res = analysis.nu_counterexample(nu, cfg.p)
            sweep.append(
                {
                    "nu": nu,
                    "misclassified": list(res.misclassified),
                    "blue_square_correct": res.blue_square_correct,
                }
            )
        report["bias_counterexample"] = sweep
    return report


# ---------------------------------------------------------------------------
# verification suite
# ---------------------------------------------------------------------------

@dataclass
class VerifyCheck:
    name: str
    passed: bool
    detail: str


def run_verify(
    cfg: ExperimentConfig,
    runs: int = 40,
    min_match: float = 0.95,
    hidden_tol: float = 0.1,
    output_tol: float = 0.15,
    slack: float = 0.05,
    workers: int = 1,
) -> list[VerifyCheck]:
    """Train at verification scale and compare against the analytic limits:
    selected layers vs target layers, hidden weights vs the half/half limit,
    output weights vs the uniform-argmax limit, and the trained network
    discrepancy against the attenuated best ideal discrepancy minus slack."""
    if cfg.select_mode != "threshold":
        raise ConfigError("verify: requires threshold selection (analytic targets)")
    train_profiles, _ = load_profiles(cfg)
    thresholds = list(cfg.thresholds)[: cfg.layers]
    limit = analysis.build_limit_model(train_profiles, thresholds)
    gamma = analysis.ideal_rate_factor(cfg.layers)
    best_ideal = analysis.max_ideal_discrepancy(limit.last_layer, train_profiles)

    matches = 0
    hidden_dists: list[float] = []
    output_dists: list[float] = []
    discrepancies: list[float] = []
    plan = cfg.plan()
    for r in range(runs):
        rng = RngStream(cfg.seed, base_key=(r,))
        model, diag = run_chani(plan, train_profiles, rng)
        matched = len(model.layers) == cfg.layers and all(
            tuple(model.layers[d].sets) == limit.layers[d + 1] for d in range(cfg.layers)
        )
        matches += int(matched)
        _, net_disc = analysis.selectivity_discrepancies(diag.output_round.activity_by_class)
        discrepancies.append(net_disc)
        if matched:
            worst = 0.0
            for d in range(1, cfg.layers + 1):
                target = limit.hidden_weight_matrix(d)
                dist = np.linalg.norm(model.layers[d - 1].weights - target, axis=1).max()
                worst = max(worst, float(dist))
            hidden_dists.append(worst)
            output_dists.append(
                float(np.linalg.norm(model.output_weights - limit.output_weights, axis=1).max())
            )

    checks = [
        VerifyCheck(
            "selected-layers-match-targets",
            matches / runs >= min_match,
            f"{matches}/{runs} runs matched (need >= {min_match:.0%})",
        )
    ]
    if hidden_dists:
        worst_hidden = max(hidden_dists)
        checks.append(
            VerifyCheck(
                "hidden-weights-near-limit",
                worst_hidden <= hidden_tol,
                f"max l2 distance {worst_hidden:.4f} (tolerance {hidden_tol})",
            )
        )
        worst_output = max(output_dists)
        checks.append(
            VerifyCheck(
                "output-weights-near-limit",
                worst_output <= output_tol,
                f"max l2 distance {worst_output:.4f} (tolerance {output_tol})",
            )
        )
    else:
        checks.append(VerifyCheck("hidden-weights-near-limit", False, "no matched runs"))
        checks.append(VerifyCheck("output-weights-near-limit", False, "no matched runs"))
    mean_disc = float(np.mean(discrepancies))
    bound = gamma * best_ideal - slack
    checks.append(
        VerifyCheck(
            "network-discrepancy-exceeds-ideal-bound",
            mean_disc >= bound,
            f"mean trained discrepancy {mean_disc:.4f} >= {gamma:.4f}*{best_ideal:.4f} - {slack} = {bound:.4f}",
        )
    )
    return checks

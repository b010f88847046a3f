"""Experiment configuration: a flat key-value text format with dotted keys.

Grammar (one assignment per line)::

    key.subkey = value      # trailing comments allowed
    # full-line comments and blank lines are ignored

Values are typed per key (int, float, string, bool, comma list).  Parsing
is strict: unknown keys, missing required keys, and out-of-range values
all raise ``ConfigError`` naming the offending key.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from chani.aggregation import AggregatorSpec
from chani.training import SelectionRule, TrainPlan


class ConfigError(ValueError):
    """A configuration field failed validation."""


def _parse_scalar(key: str, raw: str, kind: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "float_or_theory":
            return raw if raw == "theory" else float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from exc


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class ExperimentConfig:
    # dataset
    dataset_kind: str = "synthetic"  # synthetic | digits
    task: int = 1
    p: float = 0.5
    digits_path: str = ""
    split: float = 0.8
    split_seed: int = 0
    scale: float = 1.0
    # network
    layers: int = 1
    nu: float = 0.5
    # training lengths
    T: int = 2000
    hidden_epochs: int | None = None
    hidden_presentations: int | None = None
    n_output: int = 360
    selection_sample: int | None = None
    # aggregation
    hidden_kind: str = "ewa"
    hidden_eta: tuple = ("theory",)
    hidden_b: float = 2.0
    output_kind: str = "ewa"
    output_eta: float | str = "theory"
    output_b: float = 2.0
    # selection
    select_mode: str = "threshold"
    thresholds: tuple = (0.1,)
    top_n: tuple = ()
    # extra-connections variant
    alpha: float | None = None
    beta: float = 0.25
    # runs
    runs: int = 1
    seed: int = 0
    # evaluation
    eval_every: int = 1
    test_objects: int = 99
    # outputs
    dump_spikes: bool = False

    # ------------------------------------------------------------------
    def validate(self) -> "ExperimentConfig":
        if self.dataset_kind not in ("synthetic", "digits"):
            raise ConfigError(f"dataset.kind: expected synthetic|digits, got {self.dataset_kind!r}")
        if self.dataset_kind == "synthetic":
            if self.task not in (1, 2):
                raise ConfigError(f"dataset.task: expected 1 or 2, got {self.task}")
            if not 0 < self.p <= 1:
                raise ConfigError(f"dataset.p: must be in (0, 1], got {self.p}")
        else:
            if not self.digits_path:
                raise ConfigError("dataset.path: required for the digits dataset")
            if not 0 < self.split < 1:
                raise ConfigError(f"dataset.split: must be in (0, 1), got {self.split}")
        if self.layers < 0:
            raise ConfigError(f"network.layers: must be >= 0, got {self.layers}")
        if not 0 <= self.nu < 1:
            raise ConfigError(f"network.nu: must be in [0, 1), got {self.nu}")
        if self.T < 1:
            raise ConfigError(f"train.t: must be >= 1, got {self.T}")
        if self.n_output < 1:
            raise ConfigError(f"train.n: must be >= 1, got {self.n_output}")
        if self.layers > 0:
            given = (self.hidden_epochs is not None) + (self.hidden_presentations is not None)
            if given != 1:
                raise ConfigError(
                    "train.hidden_epochs / train.hidden_presentations: give exactly one"
                )
            if self.hidden_epochs is not None and self.hidden_epochs < 1:
                raise ConfigError("train.hidden_epochs: must be >= 1")
            if self.hidden_presentations is not None and self.hidden_presentations < 1:
                raise ConfigError("train.hidden_presentations: must be >= 1")
            if self.select_mode not in ("threshold", "top_n"):
                raise ConfigError(
                    f"select.mode: expected threshold|top_n, got {self.select_mode!r}"
                )
            if self.select_mode == "threshold":
                if not self.thresholds:
                    raise ConfigError("select.thresholds: required in threshold mode")
                if any(not 0 < s <= 1 for s in self.thresholds):
                    raise ConfigError(f"select.thresholds: entries must be in (0, 1]")
            else:
                if not self.top_n:
                    raise ConfigError("select.n: required in top_n mode")
                if any(n < 1 for n in self.top_n):
                    raise ConfigError("select.n: entries must be >= 1")
        for kind, b, where in (
            (self.hidden_kind, self.hidden_b, "agg.hidden"),
            (self.output_kind, self.output_b, "agg.output"),
        ):
            if kind not in ("ewa", "pwa"):
                raise ConfigError(f"{where}.kind: expected ewa|pwa, got {kind!r}")
            if kind == "pwa" and b < 2:
                raise ConfigError(f"{where}.b: PWA requires b >= 2, got {b}")
        for eta in self.hidden_eta:
            if not isinstance(eta, str) and eta <= 0:
                raise ConfigError(f"agg.hidden.eta: rates must be positive, got {eta}")
        if not isinstance(self.output_eta, str) and self.output_eta <= 0:
            raise ConfigError(f"agg.output.eta: must be positive, got {self.output_eta}")
        if self.alpha is not None:
            if self.layers == 0:
                raise ConfigError("variant.alpha: extra connections require network.layers >= 1")
            if self.alpha <= 0:
                raise ConfigError(f"variant.alpha: must be positive, got {self.alpha}")
            if not 0 <= self.beta <= 1:
                raise ConfigError(f"variant.beta: must be in [0, 1], got {self.beta}")
        if self.runs < 1:
            raise ConfigError(f"run.runs: must be >= 1, got {self.runs}")
        if self.seed < 0:
            raise ConfigError(f"run.seed: must be >= 0, got {self.seed}")
        if self.eval_every < 0:
            raise ConfigError(f"eval.every: must be >= 0, got {self.eval_every}")
        if self.dataset_kind == "synthetic" and self.test_objects < 1:
            raise ConfigError(f"eval.test_objects: must be >= 1, got {self.test_objects}")
        return self

    # ------------------------------------------------------------------
    def plan(self) -> TrainPlan:
        """Translate into the trainer's plan object."""
        self.validate()
        etas = list(self.hidden_eta) or ["theory"]
        while len(etas) < self.layers:
            etas.append(etas[-1])
        hidden_agg = tuple(
            AggregatorSpec(kind=self.hidden_kind, eta=etas[i], b=self.hidden_b)
            for i in range(self.layers)
        )
        output_agg = AggregatorSpec(kind=self.output_kind, eta=self.output_eta, b=self.output_b)
        selection = SelectionRule(
            mode=self.select_mode,
            thresholds=tuple(float(s) for s in self.thresholds),
            counts=tuple(int(n) for n in self.top_n),
        )
        return TrainPlan(
            n_layers=self.layers,
            T=self.T,
            nu=self.nu,
            hidden_epochs=self.hidden_epochs,
            hidden_presentations=self.hidden_presentations,
            output_presentations=self.n_output,
            hidden_agg=hidden_agg,
            output_agg=output_agg,
            selection=selection,
            selection_sample=self.selection_sample,
            alpha=self.alpha,
            beta=self.beta,
        )

    # ------------------------------------------------------------------
    def to_text(self) -> str:
        lines = [
            f"dataset.kind = {self.dataset_kind}",
        ]
        if self.dataset_kind == "synthetic":
            lines += [f"dataset.task = {self.task}", f"dataset.p = {_fmt(self.p)}"]
        else:
            lines += [
                f"dataset.path = {self.digits_path}",
                f"dataset.split = {_fmt(self.split)}",
                f"dataset.split_seed = {self.split_seed}",
                f"dataset.scale = {_fmt(self.scale)}",
            ]
        lines += [
            f"network.layers = {self.layers}",
            f"network.nu = {_fmt(self.nu)}",
            f"train.t = {self.T}",
        ]
        if self.hidden_epochs is not None:
            lines.append(f"train.hidden_epochs = {self.hidden_epochs}")
        if self.hidden_presentations is not None:
            lines.append(f"train.hidden_presentations = {self.hidden_presentations}")
        lines.append(f"train.n = {self.n_output}")
        if self.selection_sample is not None:
            lines.append(f"train.selection_sample = {self.selection_sample}")
        lines += [
            f"agg.hidden.kind = {self.hidden_kind}",
            f"agg.hidden.eta = {_fmt(self.hidden_eta)}",
            f"agg.hidden.b = {_fmt(self.hidden_b)}",
            f"agg.output.kind = {self.output_kind}",
            f"agg.output.eta = {_fmt(self.output_eta)}",
            f"agg.output.b = {_fmt(self.output_b)}",
        ]
        if self.layers > 0:
            lines.append(f"select.mode = {self.select_mode}")
            if self.select_mode == "threshold":
                lines.append(f"select.thresholds = {_fmt(self.thresholds)}")
            else:
                lines.append(f"select.n = {_fmt(self.top_n)}")
        if self.alpha is not None:
            lines += [f"variant.alpha = {_fmt(self.alpha)}", f"variant.beta = {_fmt(self.beta)}"]
        lines += [
            f"run.runs = {self.runs}",
            f"run.seed = {self.seed}",
            f"eval.every = {self.eval_every}",
        ]
        if self.dataset_kind == "synthetic":
            lines.append(f"eval.test_objects = {self.test_objects}")
        lines.append(f"out.dump_spikes = {_fmt(self.dump_spikes)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        pairs: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
            key, _, raw = stripped.partition("=")
            key, raw = key.strip(), raw.strip()
            if key in pairs:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            pairs[key] = raw
        return cls.from_pairs(pairs)

    @classmethod
    def from_pairs(cls, pairs: dict[str, str]) -> "ExperimentConfig":
        kw: dict = {}
        consume = pairs.copy()

        def take(key: str, kind: str, default=None, list_of: str | None = None):
            if key not in consume:
                return default
            raw = consume.pop(key)
            if list_of is not None:
                return tuple(_parse_scalar(key, part.strip(), list_of) for part in raw.split(","))
            return _parse_scalar(key, raw, kind)

        kw["dataset_kind"] = take("dataset.kind", "str", "synthetic")
        kw["task"] = take("dataset.task", "int", 1)
        kw["p"] = take("dataset.p", "float", 0.5)
        kw["digits_path"] = take("dataset.path", "str", "")
        kw["split"] = take("dataset.split", "float", 0.8)
        kw["split_seed"] = take("dataset.split_seed", "int", 0)
        kw["scale"] = take("dataset.scale", "float", 1.0)
        kw["layers"] = take("network.layers", "int", 1)
        kw["nu"] = take("network.nu", "float", 0.5)
        kw["T"] = take("train.t", "int", 2000)
        kw["hidden_epochs"] = take("train.hidden_epochs", "int")
        kw["hidden_presentations"] = take("train.hidden_presentations", "int")
        kw["n_output"] = take("train.n", "int", 360)
        kw["selection_sample"] = take("train.selection_sample", "int")
        kw["hidden_kind"] = take("agg.hidden.kind", "str", "ewa")
        kw["hidden_eta"] = take("agg.hidden.eta", "", ("theory",), list_of="float_or_theory")
        kw["hidden_b"] = take("agg.hidden.b", "float", 2.0)
        kw["output_kind"] = take("agg.output.kind", "str", "ewa")
        kw["output_eta"] = take("agg.output.eta", "float_or_theory", "theory")
        kw["output_b"] = take("agg.output.b", "float", 2.0)
        kw["select_mode"] = take("select.mode", "str", "threshold")
        kw["thresholds"] = take("select.thresholds", "", (0.1,), list_of="float")
        kw["top_n"] = take("select.n", "", (), list_of="int")
        kw["alpha"] = take("variant.alpha", "float")
        kw["beta"] = take("variant.beta", "float", 0.25)
        kw["runs"] = take("run.runs", "int", 1)
        kw["seed"] = take("run.seed", "int", 0)
        kw["eval_every"] = take("eval.every", "int", 1)
        kw["test_objects"] = take("eval.test_objects", "int", 99)
        kw["dump_spikes"] = take("out.dump_spikes", "bool", False)
        if consume:
            raise ConfigError(f"unknown keys: {', '.join(sorted(consume))}")
        return cls(**kw).validate()

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def with_value(self, key: str, raw_value: str) -> "ExperimentConfig":
        """Return a copy with one dotted key replaced (used by sweeps)."""
        pairs: dict[str, str] = {}
        for line in self.to_text().splitlines():
            k, _, v = line.partition("=")
            pairs[k.strip()] = v.strip()
        pairs[key] = raw_value
        return ExperimentConfig.from_pairs(pairs)

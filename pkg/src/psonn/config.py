"""Experiment configuration files.

A config is an INI file. ``[experiment]`` names the dataset and model,
``[split]`` the holdout protocol, and one section per model kind holds that
model's hyperparameters. Every key is validated and unknown keys are
rejected; error messages name the offending ``section.key``.

Example::

    [experiment]
    dataset = data/Medicaldataset.csv
    model = psonn
    seed = 7

    [psonn]
    iterations = 700
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError

MODEL_KINDS = ("psonn", "bpnn", "tree", "forest", "nb")
NORMALIZE_MODES = ("train-only", "full", "off")

# model kind -> default training fraction of its holdout protocol
DEFAULT_TRAIN_FRACTION = {"psonn": 0.8, "bpnn": 0.7, "tree": 0.7, "forest": 0.7, "nb": 0.7}


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if not parts:
        raise ValueError("empty list")
    return tuple(int(p) for p in parts)


def _opt_int(text: str) -> int | None:
    return None if text.strip().lower() in ("none", "") else int(text)


def _choice(*options):
    def parse(text: str) -> str:
        value = text.strip().lower()
        if value not in options:
            raise ValueError(f"must be one of {', '.join(options)}; got {text!r}")
        return value
    return parse


def _positive(x) -> bool:
    return x > 0


def _at_least_one(x) -> bool:
    return x >= 1


def _non_negative(x) -> bool:
    return x >= 0


def _finite(x) -> bool:
    return math.isfinite(x)


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any = None
    check: Callable[[Any], bool] | None = None
    rule: str = ""


_HIDDEN = Key(_int_list, (5, 5), lambda t: all(s >= 1 for s in t), "all sizes >= 1")

SCHEMA: dict[str, dict[str, Key]] = {
    "experiment": {
        "dataset": Key(str),
        "model": Key(_choice(*MODEL_KINDS)),
        "seed": Key(int, 0),
        "normalize": Key(_choice(*NORMALIZE_MODES), "train-only"),
        "output_dir": Key(str, "runs"),
    },
    "split": {
        "train_fraction": Key(float, None, lambda f: 0.0 < f < 1.0, "in (0, 1)"),
        "shuffle": Key(_bool, True),
        "stratified": Key(_bool, False),
        "seed": Key(int, None),
    },
    "psonn": {
        "hidden": _HIDDEN,
        "swarm_size": Key(int, 50, _at_least_one, ">= 1"),
        "inertia": Key(float, 0.729, _finite, "finite"),
        "cognitive": Key(float, 1.49445, _finite, "finite"),
        "social": Key(float, 1.49445, _finite, "finite"),
        "low": Key(float, -10.0, _finite, "finite"),
        "high": Key(float, 10.0, _finite, "finite"),
        "vmax": Key(float, 4.0, _positive, "> 0"),
        "iterations": Key(int, 700, _at_least_one, ">= 1"),
        "fitness": Key(_choice("mse", "errors"), "mse"),
        "threshold": Key(float, 0.5, lambda t: 0.0 <= t <= 1.0, "in [0, 1]"),
    },
    "bpnn": {
        "hidden": _HIDDEN,
        "learning_rate": Key(float, 0.5, _positive, "> 0"),
        "epochs": Key(int, 500, _at_least_one, ">= 1"),
        "init_scale": Key(float, 0.5, _positive, "> 0"),
        "threshold": Key(float, 0.5, lambda t: 0.0 <= t <= 1.0, "in [0, 1]"),
    },
    "tree": {
        "max_depth": Key(_opt_int, None, lambda d: d is None or d >= 0, ">= 0 or none"),
        "min_samples_leaf": Key(int, 1, _at_least_one, ">= 1"),
    },
    "forest": {
        "n_trees": Key(int, 100, _at_least_one, ">= 1"),
        "feature_subset": Key(_opt_int, None, lambda k: k is None or k >= 1, ">= 1"),
        "bootstrap": Key(_bool, True),
        "max_depth": Key(_opt_int, None, lambda d: d is None or d >= 0, ">= 0 or none"),
        "min_samples_leaf": Key(int, 1, _at_least_one, ">= 1"),
    },
    "nb": {
        "binary": Key(_choice("gaussian", "bernoulli"), "gaussian"),
    },
}

REQUIRED = {("experiment", "dataset"), ("experiment", "model")}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: Path
    model: str
    seed: int = 0
    normalize: str = "train-only"
    output_dir: Path = Path("runs")
    train_fraction: float = 0.7
    shuffle: bool = True
    stratified: bool = False
    split_seed: int = 0
    params: dict = field(default_factory=dict)

    def echo(self) -> dict:
        """Config as plain JSON data; the output directory is left out."""
        return {
            "dataset": str(self.dataset),
            "model": self.model,
            "seed": self.seed,
            "normalize": self.normalize,
            "split": {"train_fraction": self.train_fraction, "shuffle": self.shuffle,
                      "stratified": self.stratified, "seed": self.split_seed},
            "params": {k: list(v) if isinstance(v, tuple) else v
                       for k, v in sorted(self.params.items())},
        }

    def with_params(self, **changes) -> ExperimentConfig:
        return replace(self, params={**self.params, **changes})


def _parse_value(section: str, key: str, raw: Any) -> Any:
    spec = SCHEMA[section][key]
    where = f"{section}.{key}"
    if isinstance(raw, str):
        try:
            value = spec.parse(raw)
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    else:
        value = raw
    if spec.check is not None and not spec.check(value):
        raise ConfigError(f"{where}: value {raw!r} out of range ({spec.rule})")
    return value


def config_from_mapping(mapping: dict[str, dict[str, Any]],
                        base_dir: Path | None = None) -> ExperimentConfig:
    """Validate a ``{section: {key: value}}`` mapping and fill in defaults.

    Values may be strings (as read from a file) or already-typed Python
    values. Relative dataset and output paths resolve against ``base_dir``.
    """
    for section, entries in mapping.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]; expected one of "
                              f"{', '.join(SCHEMA)}")
        for key in entries:
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}: unknown key; valid keys are "
                                  f"{', '.join(SCHEMA[section])}")
    for section, key in sorted(REQUIRED):
        if key not in mapping.get(section, {}):
            raise ConfigError(f"{section}.{key}: missing required key")

    values: dict[str, dict[str, Any]] = {}
    for section, keys in SCHEMA.items():
        given = mapping.get(section, {})
        values[section] = {
            key: _parse_value(section, key, given[key]) if key in given else spec.default
            for key, spec in keys.items()
        }

    exp, spl = values["experiment"], values["split"]
    model = exp["model"]
    base = base_dir or Path.cwd()
    dataset = Path(exp["dataset"])
    output_dir = Path(exp["output_dir"])
    if not dataset.is_absolute():
        dataset = base / dataset
    if not output_dir.is_absolute():
        output_dir = base / output_dir

    params = dict(values.get(model, {}))
    if model == "psonn" and not params["low"] < params["high"]:
        raise ConfigError(f"psonn.low: must be below psonn.high "
                          f"({params['low']} >= {params['high']})")
    fraction = spl["train_fraction"]
    return ExperimentConfig(
        dataset=dataset.resolve(),
        model=model,
        seed=exp["seed"],
        normalize=exp["normalize"],
        output_dir=output_dir,
        train_fraction=DEFAULT_TRAIN_FRACTION[model] if fraction is None else fraction,
        shuffle=spl["shuffle"],
        stratified=spl["stratified"],
        split_seed=exp["seed"] if spl["seed"] is None else spl["seed"],
        params=params,
    )


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep key case so typos are reported verbatim
    try:
        with path.open(encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    mapping = {s: dict(parser.items(s)) for s in parser.sections()}
    return config_from_mapping(mapping, base_dir=path.parent)


def make_config(dataset: str | Path, model: str, **sections) -> ExperimentConfig:
    """Build a config in code, e.g. ``make_config(p, "psonn", psonn={"iterations": 50})``.

    Keyword ``experiment`` entries other than dataset/model are accepted too.
    """
    mapping = {k: dict(v) for k, v in sections.items()}
    mapping.setdefault("experiment", {}).update(dataset=str(dataset), model=model)
    return config_from_mapping(mapping)

"""Experiment pipelines: single runs, PSONN epoch sweeps, model comparison.

Each run writes three files to its output directory:

``result.json``
    config echo, train/test summaries, split indices and training traces.
    Contains no timing, so equal (config, seed) pairs give identical bytes.
``model.json``
    the trained model plus the normalizer it was trained behind.
``report.txt``
    Weka-style text reports for both folds.
"""

from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import baselines, metrics
from .config import ExperimentConfig, make_config
from .dataset import (
    Dataset, NormalizationParams, SplitSpec, apply_normalizer, fit_normalizer,
    load_dataset, split_indices,
)
from .errors import ConfigError, DataError, PipelineError, PsonnError
from .neural_net import BackpropConfig, Network, Topology, backprop_train
from .pso import SwarmConfig, train_psonn

logger = logging.getLogger(__name__)

MODEL_ORDER = ("psonn", "tree", "forest", "bpnn", "nb")
MODEL_TITLES = {
    "psonn": "PSO-trained neural network",
    "bpnn": "Backpropagation neural network",
    "tree": "Decision tree",
    "forest": "Random forest",
    "nb": "Naive Bayes",
}


@dataclass
class ExperimentResult:
    config: dict
    train: metrics.EvaluationSummary
    test: metrics.EvaluationSummary
    train_indices: list[int]
    test_indices: list[int]
    n_features: int = 0
    duration_s: float = 0.0
    model_path: Path | None = None
    trace: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "n_features": self.n_features,
            "train": self.train.to_dict(),
            "test": self.test.to_dict(),
            "split": {"train_indices": self.train_indices,
                      "test_indices": self.test_indices},
            "model_file": self.model_path.name if self.model_path else None,
            "trace": self.trace,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


@contextmanager
def _stage(name: str):
    """Tag any failure inside the block with the pipeline stage it came from."""
    try:
        yield
    except PipelineError:
        raise
    except (PsonnError, ValueError, OSError, ArithmeticError) as exc:
        raise PipelineError(name, exc) from exc


def _prepare(cfg: ExperimentConfig):
    with _stage("load"):
        if not cfg.dataset.is_file():
            raise DataError(f"dataset not found: {cfg.dataset}")
        data = load_dataset(cfg.dataset)
    with _stage("split"):
        spec = SplitSpec(cfg.train_fraction, cfg.split_seed, cfg.shuffle, cfg.stratified)
        train_idx, test_idx = split_indices(len(data), spec, data.labels)
    return data, train_idx, test_idx


def _normalize(cfg: ExperimentConfig, data: Dataset, train_idx):
    with _stage("normalize"):
        if cfg.normalize == "off":
            return None, data
        fitted_on = data if cfg.normalize == "full" else data.subset(train_idx)
        params = fit_normalizer(fitted_on)
        return params, apply_normalizer(data, params)


def train_model(cfg: ExperimentConfig, train: Dataset):
    """Train the configured model kind; returns ``(model, trace)``."""
    p = cfg.params
    if cfg.model == "psonn":
        topology = Topology.with_hidden(train.n_features, p["hidden"])
        swarm = SwarmConfig(
            swarm_size=p["swarm_size"], inertia=p["inertia"], cognitive=p["cognitive"],
            social=p["social"], low=p["low"], high=p["high"], vmax=p["vmax"],
            iterations=p["iterations"], seed=cfg.seed,
        )
        net, result = train_psonn(topology, train, swarm, fitness=p["fitness"],
                                  return_result=True)
        net = replace(net, threshold=p["threshold"])
        return net, {"best_fitness": result.best_fitness,
                     "fitness_history": result.fitness_history}
    if cfg.model == "bpnn":
        topology = Topology.with_hidden(train.n_features, p["hidden"])
        bp = BackpropConfig(learning_rate=p["learning_rate"], epochs=p["epochs"],
                            seed=cfg.seed, init_scale=p["init_scale"])
        net, losses = backprop_train(topology, train, bp, return_history=True)
        return replace(net, threshold=p["threshold"]), {"loss_history": losses}
    if cfg.model == "tree":
        tree = baselines.train_tree(
            train, baselines.TreeConfig(p["max_depth"], p["min_samples_leaf"]))
        return tree, {"depth": tree.depth(), "leaves": tree.n_leaves()}
    if cfg.model == "forest":
        forest = baselines.train_forest(
            train, p["n_trees"], p["feature_subset"], cfg.seed,
            baselines.TreeConfig(p["max_depth"], p["min_samples_leaf"]),
            bootstrap=p["bootstrap"],
        )
        return forest, {"n_trees": len(forest.trees)}
    if cfg.model == "nb":
        return baselines.train_nb(train, p["binary"]), {}
    raise ConfigError(f"unknown model kind {cfg.model!r}")


def _threshold(model) -> float:
    return model.threshold if isinstance(model, Network) else 0.5


def _summaries(model, train: Dataset, test: Dataset):
    prior = float(np.mean(train.labels)) if len(train) else 0.5
    thr = _threshold(model)
    train_sum = metrics.evaluate(train.labels, model.predict_proba(train.features), prior, thr)
    test_sum = metrics.evaluate(test.labels, model.predict_proba(test.features), prior, thr)
    return train_sum, test_sum


_MODEL_TYPES = {
    "psonn": Network, "bpnn": Network, "tree": baselines.DecisionTree,
    "forest": baselines.RandomForest, "nb": baselines.NaiveBayesModel,
}


def model_document(kind: str, model, normalizer: NormalizationParams | None,
                   feature_names: Sequence[str]) -> dict:
    return {
        "kind": kind,
        "feature_names": list(feature_names),
        "normalizer": normalizer.to_dict() if normalizer else None,
        "model": model.to_dict(),
    }


def load_model(path: str | Path):
    """Read a ``model.json``; returns ``(kind, model, normalizer)``."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        kind = doc["kind"]
        model = _MODEL_TYPES[kind].from_dict(doc["model"])
        norm = doc.get("normalizer")
        return kind, model, NormalizationParams.from_dict(norm) if norm else None
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise DataError(f"cannot load model from {path}: {exc}") from exc


def render_run_report(cfg_echo: dict, result: ExperimentResult) -> str:
    model = cfg_echo["model"]
    head = (f"{MODEL_TITLES[model]} ({model}), "
            f"train {len(result.train_indices)} / test {len(result.test_indices)}, "
            f"normalize={cfg_echo['normalize']}, seed={cfg_echo['seed']}")
    return "\n".join([
        head, "",
        metrics.render_report(result.train, "--- training fold ---"),
        metrics.render_report(result.test, "--- test fold ---"),
    ])


def _write_outputs(out: Path, result: ExperimentResult, model_doc: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "model.json").write_text(json.dumps(model_doc, indent=2) + "\n", encoding="utf-8")
    result.model_path = out / "model.json"
    (out / "result.json").write_text(result.to_json(), encoding="utf-8")
    (out / "report.txt").write_text(render_run_report(result.config, result), encoding="utf-8")


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """load -> encode -> split -> normalize -> train -> evaluate -> persist."""
    start = time.perf_counter()
    data, train_idx, test_idx = _prepare(cfg)
    normalizer, scaled = _normalize(cfg, data, train_idx)
    train, test = scaled.subset(train_idx), scaled.subset(test_idx)
    with _stage("train"):
        model, trace = train_model(cfg, train)
    with _stage("evaluate"):
        train_sum, test_sum = _summaries(model, train, test)
    result = ExperimentResult(
        config=cfg.echo(),
        train=train_sum,
        test=test_sum,
        train_indices=[int(i) for i in train_idx],
        test_indices=[int(i) for i in test_idx],
        n_features=data.n_features,
        trace=trace,
    )
    if write:
        with _stage("persist"):
            doc = model_document(cfg.model, model, normalizer, data.feature_names)
            _write_outputs(cfg.output_dir, result, doc)
    result.duration_s = time.perf_counter() - start
    logger.info("%s finished in %.2fs: test accuracy %.4f",
                cfg.model, result.duration_s, test_sum.accuracy)
    return result


def evaluate_saved(cfg: ExperimentConfig, model_path: str | Path) -> ExperimentResult:
    """Re-evaluate a saved model on the folds its config describes."""
    kind, model, normalizer = load_model(model_path)
    if kind != cfg.model:
        raise ConfigError(f"model file holds a {kind!r} model but config says {cfg.model!r}")
    data, train_idx, test_idx = _prepare(cfg)
    with _stage("normalize"):
        scaled = apply_normalizer(data, normalizer) if normalizer else data
    with _stage("evaluate"):
        train_sum, test_sum = _summaries(model, scaled.subset(train_idx), scaled.subset(test_idx))
    return ExperimentResult(cfg.echo(), train_sum, test_sum,
                            [int(i) for i in train_idx], [int(i) for i in test_idx],
                            n_features=data.n_features, model_path=Path(model_path))


def _run_all(configs: Sequence[ExperimentConfig], workers: int | None, tolerate: bool = False):
    """Run configs, keeping input order regardless of scheduling."""

    def run(cfg):
        try:
            return run_experiment(cfg)
        except PipelineError as exc:
            if not tolerate:
                raise
            logger.warning("%s failed: %s", cfg.model, exc)
            return exc

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, configs))
    return [run(c) for c in configs]


# --------------------------------------------------------------------------
# epoch sweep
# --------------------------------------------------------------------------


def epoch_sweep(cfg: ExperimentConfig, epochs: Sequence[int] = (200, 500, 700),
                workers: int | None = None) -> list[ExperimentResult]:
    """One PSONN run per epoch budget, written under ``epochs_<n>/``."""
    if cfg.model != "psonn":
        raise ConfigError(f"epoch sweep needs model = psonn, got {cfg.model!r}")
    epochs = list(epochs)
    if not epochs:
        raise ConfigError("epoch sweep needs at least one epoch value")
    if any(int(e) < 1 for e in epochs):
        raise ConfigError(f"epoch values must be >= 1, got {epochs}")
    configs = [
        replace(cfg.with_params(iterations=int(e)), output_dir=cfg.output_dir / f"epochs_{e}")
        for e in epochs
    ]
    results = _run_all(configs, workers)
    if cfg.output_dir:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        (cfg.output_dir / "sweep.txt").write_text(
            render_sweep_table(results), encoding="utf-8")
    return results


def render_sweep_table(results: Sequence[ExperimentResult]) -> str:
    cols = ("ID", "# of epochs", "# of features", "# of observations",
            "# of hidden layers", "MAE", "RMSE")
    lines = []
    for phase, acc_name in (("train", "Training accuracy"), ("test", "Testing accuracy")):
        header = (*cols, acc_name)
        rows = []
        for i, r in enumerate(results, 1):
            s = r.train if phase == "train" else r.test
            hidden = len(r.config["params"]["hidden"])
            rows.append((str(i), str(r.config["params"]["iterations"]), str(r.n_features),
                         str(s.total), str(hidden), metrics._num(s.mae),
                         metrics._num(s.rmse), f"{100 * s.accuracy:.2f}%"))
        widths = [max(len(h), *(len(row[k]) for row in rows)) for k, h in enumerate(header)]
        lines.append(f"{'Train' if phase == 'train' else 'Test'} phase")
        lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip())
        lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
        lines.append("")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# model comparison
# --------------------------------------------------------------------------


@dataclass
class ComparisonRow:
    model: str
    protocol: str
    train_accuracy: float | None
    test_accuracy: float | None
    error: str | None = None


def compare_models(dataset: str | Path, seed: int = 0, output_dir: str | Path = "compare",
                   workers: int | None = None,
                   overrides: dict[str, dict] | None = None) -> list[ComparisonRow]:
    """Run all five models, each under its own holdout protocol, and rank them.

    The PSO network uses an 80/20 split and the other four 70/30. All models
    normalize on the training fold and share ``seed``. ``overrides`` maps a
    model kind to extra entries for its config section.
    """
    out = Path(output_dir)
    overrides = overrides or {}
    configs = []
    for kind in MODEL_ORDER:
        sections = {"experiment": {"seed": seed, "output_dir": str(out / kind)}}
        if overrides.get(kind):
            sections[kind] = dict(overrides[kind])
        configs.append(make_config(dataset, kind, **sections))
    outcomes = _run_all(configs, workers, tolerate=True)

    rows = []
    for cfg, res in zip(configs, outcomes):
        protocol = f"{round(cfg.train_fraction * 100)}/{round((1 - cfg.train_fraction) * 100)}"
        if isinstance(res, Exception):
            rows.append(ComparisonRow(cfg.model, protocol, None, None, str(res)))
        else:
            rows.append(ComparisonRow(cfg.model, protocol,
                                      res.train.accuracy, res.test.accuracy))
    rank = {k: i for i, k in enumerate(MODEL_ORDER)}
    rows.sort(key=lambda r: (r.test_accuracy is None, -(r.test_accuracy or 0.0), rank[r.model]))

    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.txt").write_text(render_comparison(rows, seed), encoding="utf-8")
    (out / "comparison.json").write_text(
        json.dumps({"seed": seed, "rows": [r.__dict__ for r in rows]}, indent=2) + "\n",
        encoding="utf-8")
    return rows


def render_comparison(rows: Sequence[ComparisonRow], seed: int) -> str:
    lines = [
        f"Model comparison (seed {seed}). Each model runs under its own holdout",
        "protocol: psonn 80/20, the others 70/30; features min-max normalized on",
        "the training fold. Folds are drawn from one seed and do not recover the",
        "original study's partition.",
        "",
        f"{'rank':<6}{'model':<8}{'split':<8}{'train acc':>12}{'test acc':>12}",
    ]
    for i, r in enumerate(rows, 1):
        if r.error is not None:
            lines.append(f"{i:<6}{r.model:<8}{r.protocol:<8}{'failed':>12}{'':>12}  {r.error}")
        else:
            lines.append(f"{i:<6}{r.model:<8}{r.protocol:<8}"
                         f"{100 * r.train_accuracy:>11.4f}%{100 * r.test_accuracy:>11.4f}%")
    return "\n".join(lines) + "\n"

"""Feedforward sigmoid network with a flat parameter layout.

Parameters live in one flat vector so that a swarm optimizer can treat a
network as a point in R^d. The canonical layout is: every weight matrix in
layer order, then every bias vector in layer order. The weight matrix between
layers ``i`` and ``i+1`` has shape ``(size_i, size_{i+1})`` and is stored
row-major, so a layer computes ``sigmoid(a @ W + b)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .dataset import Dataset
from .errors import ConfigError, DataError

# largest double below 1; keeps the output inside the open interval
_OUT_HI = 1.0 - 2.0 ** -53
_OUT_LO = np.finfo(np.float64).tiny


def sigmoid(z):
    return expit(z)


@dataclass(frozen=True)
class Topology:
    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ConfigError(f"topology needs at least 2 layers, got {sizes}")
        if any(s < 1 for s in sizes):
            raise ConfigError(f"layer sizes must be positive, got {sizes}")
        object.__setattr__(self, "layer_sizes", sizes)

    @classmethod
    def with_hidden(cls, n_inputs: int, hidden: Sequence[int] = (5, 5)) -> Topology:
        return cls((n_inputs, *hidden, 1))

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_hidden_layers(self) -> int:
        return len(self.layer_sizes) - 2

    @property
    def shapes(self) -> list[tuple[int, int]]:
        s = self.layer_sizes
        return [(s[i], s[i + 1]) for i in range(len(s) - 1)]


def param_count(topology: Topology) -> int:
    return sum(a * b + b for a, b in topology.shapes)


def _split_params(topology: Topology, v: np.ndarray):
    """Views of the weight matrices and bias vectors inside ``v``.

    ``v`` may carry leading batch axes; the parameter axis is last.
    """
    lead = v.shape[:-1]
    weights, biases = [], []
    pos = 0
    for a, b in topology.shapes:
        weights.append(v[..., pos:pos + a * b].reshape(*lead, a, b))
        pos += a * b
    for _, b in topology.shapes:
        biases.append(v[..., pos:pos + b])
        pos += b
    return weights, biases


@dataclass(frozen=True, eq=False)
class Network:
    topology: Topology
    params: np.ndarray
    threshold: float = 0.5
    activation: str = field(default="sigmoid")

    def __post_init__(self):
        p = np.array(self.params, dtype=np.float64).reshape(-1)
        expected = param_count(self.topology)
        if p.shape[0] != expected:
            raise DataError(
                f"parameter vector has length {p.shape[0]}, "
                f"topology {list(self.topology.layer_sizes)} needs {expected}"
            )
        if not np.all(np.isfinite(p)):
            raise DataError("non-finite network parameter")
        if self.activation != "sigmoid":
            raise ConfigError(f"unsupported activation {self.activation!r}")
        p.setflags(write=False)
        object.__setattr__(self, "params", p)

    @property
    def weights(self) -> list[np.ndarray]:
        return _split_params(self.topology, self.params)[0]

    @property
    def biases(self) -> list[np.ndarray]:
        return _split_params(self.topology, self.params)[1]

    def predict_proba(self, features) -> np.ndarray:
        return forward_batch(self, features)

    def predict(self, features) -> np.ndarray:
        return (self.predict_proba(features) >= self.threshold).astype(np.int64)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (self.topology == other.topology
                and np.array_equal(self.params, other.params)
                and self.threshold == other.threshold)

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "topology": list(self.topology.layer_sizes),
            "activation": self.activation,
            "threshold": float(self.threshold).hex(),
            "params": [float(v).hex() for v in self.params],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Network:
        return cls(
            Topology(tuple(d["topology"])),
            np.array([float.fromhex(v) for v in d["params"]]),
            threshold=float.fromhex(d["threshold"]),
            activation=d.get("activation", "sigmoid"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> Network:
        return cls.from_dict(json.loads(text))


def flatten(network: Network) -> np.ndarray:
    return network.params.copy()


def unflatten(topology: Topology, v) -> Network:
    return Network(topology, v)


def _check_inputs(topology: Topology, x: np.ndarray) -> None:
    if x.shape[-1] != topology.n_inputs:
        raise DataError(
            f"input has {x.shape[-1]} features, network expects {topology.n_inputs}"
        )


def _activations(weights, biases, x):
    acts = [x]
    a = x
    for w, b in zip(weights, biases):
        a = sigmoid(a @ w + b)
        acts.append(a)
    return acts


def forward_batch(network: Network, features) -> np.ndarray:
    """Output probabilities for every row of ``features``, shape ``(n,)``."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    _check_inputs(network.topology, x)
    w, b = _split_params(network.topology, network.params)
    out = _activations(w, b, x)[-1][:, 0]
    return np.clip(out, _OUT_LO, _OUT_HI)


def forward(network: Network, features) -> float:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("forward takes one feature vector; use forward_batch")
    return float(forward_batch(network, x[None, :])[0])


def forward_population(topology: Topology, population, features) -> np.ndarray:
    """Evaluate many parameter vectors at once.

    ``population`` has shape ``(p, param_count)``; the result has shape
    ``(p, n)`` with one row of output probabilities per parameter vector.
    """
    pop = np.atleast_2d(np.asarray(population, dtype=np.float64))
    x = np.asarray(features, dtype=np.float64)
    _check_inputs(topology, x)
    weights, biases = _split_params(topology, pop)
    a = np.broadcast_to(x, (pop.shape[0], *x.shape))
    for w, b in zip(weights, biases):
        a = sigmoid(np.matmul(a, w) + b[:, None, :])
    return np.clip(a[..., 0], _OUT_LO, _OUT_HI)


def predict_label(network: Network, features, threshold: float = 0.5) -> int:
    # ties go to the positive class
    return int(forward(network, features) >= threshold)


def mse_loss(network: Network, data: Dataset) -> float:
    if len(data) == 0:
        raise DataError("mse_loss needs at least one record")
    err = forward_batch(network, data.features) - data.labels
    return float(np.mean(err * err))


def gradient(network: Network, data: Dataset) -> np.ndarray:
    """Gradient of ``mse_loss`` with respect to the flat parameter vector."""
    if len(data) == 0:
        raise DataError("gradient needs at least one record")
    x = data.features
    _check_inputs(network.topology, x)
    n = x.shape[0]
    weights, biases = _split_params(network.topology, network.params)
    acts = _activations(weights, biases, x)
    out = acts[-1]
    # d(mean sq err)/d(out), then through the output sigmoid
    delta = (2.0 / n) * (out - data.labels[:, None]) * out * (1.0 - out)
    grad_w = [None] * len(weights)
    grad_b = [None] * len(weights)
    for layer in range(len(weights) - 1, -1, -1):
        a_prev = acts[layer]
        grad_w[layer] = a_prev.T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer:
            delta = (delta @ weights[layer].T) * a_prev * (1.0 - a_prev)
    return np.concatenate([g.ravel() for g in grad_w] + [g.ravel() for g in grad_b])


@dataclass(frozen=True)
class BackpropConfig:
    learning_rate: float = 0.5
    epochs: int = 500
    seed: int = 0
    init_scale: float = 0.5

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not self.init_scale > 0:
            raise ConfigError(f"init_scale must be > 0, got {self.init_scale}")


def init_params(topology: Topology, seed: int, scale: float = 0.5) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-scale, scale, size=param_count(topology))


def backprop_train(topology: Topology, train: Dataset, cfg: BackpropConfig,
                   return_history: bool = False):
    """Full-batch gradient descent on the mean squared error.

    With ``return_history`` the result is ``(network, losses)`` where
    ``losses[k]`` is the training loss before epoch ``k`` and the last entry
    is the loss of the returned network.
    """
    if len(train) == 0:
        raise DataError("cannot train on an empty dataset")
    params = init_params(topology, cfg.seed, cfg.init_scale)
    history = []
    for _ in range(cfg.epochs):
        net = Network(topology, params)
        if return_history:
            history.append(mse_loss(net, train))
        params = params - cfg.learning_rate * gradient(net, train)
    net = Network(topology, params)
    if return_history:
        history.append(mse_loss(net, train))
        return net, history
    return net

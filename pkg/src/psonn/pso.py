"""Global-best particle swarm optimization and the PSO-trained network.

Each iteration moves every particle with the inertia-weighted velocity rule

    v <- w*v + c1*r1*(pbest - x) + c2*r2*(gbest - x)
    x <- x + v

where ``r1`` and ``r2`` are fresh uniform draws per component. Velocities are
clamped to ``[-vmax, vmax]`` and positions to the search box. Personal and
global bests move only on strict improvement.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .dataset import Dataset
from .errors import ConfigError, DataError, TrainingError
from .neural_net import Network, Topology, forward_population, param_count


@dataclass(frozen=True)
class SwarmConfig:
    swarm_size: int = 50
    inertia: float = 0.729
    cognitive: float = 1.49445
    social: float = 1.49445
    low: float = -10.0
    high: float = 10.0
    vmax: float = 4.0
    iterations: int = 700
    seed: int = 0

    def __post_init__(self):
        if self.swarm_size < 1:
            raise ConfigError(f"swarm_size must be >= 1, got {self.swarm_size}")
        if not self.low < self.high:
            raise ConfigError(f"position bounds need low < high, got "
                              f"[{self.low}, {self.high}]")
        if not self.vmax > 0:
            raise ConfigError(f"vmax must be > 0, got {self.vmax}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")


@dataclass(frozen=True)
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    pbest_position: np.ndarray
    pbest_fitness: float


@dataclass(eq=False)
class SwarmState:
    """Swarm held as stacked arrays, one row per particle.

    The generator is part of the state: the next ``step`` draws from it.
    """

    positions: np.ndarray
    velocities: np.ndarray
    pbest_positions: np.ndarray
    pbest_fitness: np.ndarray
    gbest_position: np.ndarray
    gbest_fitness: float
    iteration: int
    rng: np.random.Generator

    @property
    def particles(self) -> list[Particle]:
        return [
            Particle(self.positions[i].copy(), self.velocities[i].copy(),
                     self.pbest_positions[i].copy(), float(self.pbest_fitness[i]))
            for i in range(self.positions.shape[0])
        ]


@dataclass(eq=False)
class OptimizeResult:
    best_position: np.ndarray
    best_fitness: float
    fitness_history: list[float]
    config: SwarmConfig

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "best_position": [float(v).hex() for v in self.best_position],
            "best_fitness": float(self.best_fitness).hex(),
            "fitness_history": [float(v).hex() for v in self.fitness_history],
        }

    @classmethod
    def from_dict(cls, d: dict) -> OptimizeResult:
        return cls(
            np.array([float.fromhex(v) for v in d["best_position"]]),
            float.fromhex(d["best_fitness"]),
            [float.fromhex(v) for v in d["fitness_history"]],
            SwarmConfig(**d["config"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


Objective = Callable[[np.ndarray], float]


def _evaluate(fitness, positions, vectorized, workers):
    if vectorized:
        values = np.asarray(fitness(positions), dtype=np.float64).reshape(-1)
        if values.shape[0] != positions.shape[0]:
            raise TrainingError(
                f"vectorized objective returned {values.shape[0]} values "
                f"for {positions.shape[0]} particles"
            )
    elif workers and workers > 1:
        # map() yields in submission order, so reduction stays in particle order
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = np.fromiter(pool.map(fitness, positions), dtype=np.float64,
                                 count=positions.shape[0])
    else:
        values = np.array([float(fitness(p)) for p in positions], dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        i = int(bad[0])
        raise TrainingError(f"particle {i} has non-finite fitness {values[i]}")
    return values


def init_swarm(cfg: SwarmConfig, dim: int, fitness: Objective, *,
               vectorized: bool = False, workers: int | None = None) -> SwarmState:
    if dim < 1:
        raise ConfigError(f"search dimension must be >= 1, got {dim}")
    rng = np.random.default_rng(cfg.seed)
    n = cfg.swarm_size
    positions = rng.uniform(cfg.low, cfg.high, size=(n, dim))
    velocities = rng.uniform(-cfg.vmax, cfg.vmax, size=(n, dim))
    values = _evaluate(fitness, positions, vectorized, workers)
    best = int(np.argmin(values))
    return SwarmState(
        positions=positions,
        velocities=velocities,
        pbest_positions=positions.copy(),
        pbest_fitness=values,
        gbest_position=positions[best].copy(),
        gbest_fitness=float(values[best]),
        iteration=0,
        rng=rng,
    )


def step(state: SwarmState, cfg: SwarmConfig, fitness: Objective, *,
         vectorized: bool = False, workers: int | None = None) -> SwarmState:
    """Advance the swarm by one iteration and return the new state."""
    x, v = state.positions, state.velocities
    pbest, gbest = state.pbest_positions, state.gbest_position
    r1 = state.rng.random(x.shape)
    r2 = state.rng.random(x.shape)
    v = (cfg.inertia * v
         + cfg.cognitive * r1 * (pbest - x)
         + cfg.social * r2 * (gbest - x))
    np.clip(v, -cfg.vmax, cfg.vmax, out=v)
    x = np.clip(x + v, cfg.low, cfg.high)

    values = _evaluate(fitness, x, vectorized, workers)
    improved = values < state.pbest_fitness
    pbest = np.where(improved[:, None], x, pbest)
    pbest_fitness = np.where(improved, values, state.pbest_fitness)

    best = int(np.argmin(pbest_fitness))
    if pbest_fitness[best] < state.gbest_fitness:
        gbest, gbest_fitness = pbest[best].copy(), float(pbest_fitness[best])
    else:
        gbest, gbest_fitness = state.gbest_position, state.gbest_fitness
    return SwarmState(x, v, pbest, pbest_fitness, gbest, gbest_fitness,
                      state.iteration + 1, state.rng)


def optimize(cfg: SwarmConfig, dim: int, fitness: Objective, *,
             vectorized: bool = False, workers: int | None = None,
             callback: Callable[[SwarmState], None] | None = None) -> OptimizeResult:
    """Minimize ``fitness`` over the box ``[low, high]^dim``.

    ``fitness_history[0]`` is the best initial fitness and entry ``k`` the
    global best after ``k`` iterations. With ``vectorized=True`` the objective
    receives the whole ``(swarm_size, dim)`` position matrix and returns one
    value per row.
    """
    state = init_swarm(cfg, dim, fitness, vectorized=vectorized, workers=workers)
    history = [state.gbest_fitness]
    if callback is not None:
        callback(state)
    for _ in range(cfg.iterations):
        state = step(state, cfg, fitness, vectorized=vectorized, workers=workers)
        history.append(state.gbest_fitness)
        if callback is not None:
            callback(state)
    return OptimizeResult(state.gbest_position.copy(), state.gbest_fitness, history, cfg)


FITNESS_KINDS = ("mse", "errors")


def psonn_objective(topology: Topology, train: Dataset, kind: str = "mse"):
    """Vectorized training-set objective over a population of flat parameters."""
    if kind not in FITNESS_KINDS:
        raise ConfigError(f"fitness must be one of {FITNESS_KINDS}, got {kind!r}")
    x = train.features
    y = train.labels.astype(np.float64)

    def objective(population: np.ndarray) -> np.ndarray:
        out = forward_population(topology, population, x)
        if kind == "mse":
            err = out - y
            return np.mean(err * err, axis=1)
        return np.count_nonzero((out >= 0.5) != (y == 1), axis=1).astype(np.float64)

    return objective


def train_psonn(topology: Topology, train: Dataset, cfg: SwarmConfig, *,
                fitness: str = "mse", return_result: bool = False):
    """Train a network by letting the swarm search its flat parameter vector.

    Returns the network decoded from the global best position, or
    ``(network, OptimizeResult)`` when ``return_result`` is set.
    """
    if len(train) == 0:
        raise DataError("cannot train on an empty dataset")
    if topology.n_inputs != train.n_features:
        raise DataError(f"topology expects {topology.n_inputs} inputs, "
                        f"dataset has {train.n_features} features")
    objective = psonn_objective(topology, train, fitness)
    result = optimize(cfg, param_count(topology), objective, vectorized=True)
    network = Network(topology, result.best_position)
    if return_result:
        return network, result
    return network

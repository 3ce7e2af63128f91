import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psonn.dataset import SplitSpec, apply_normalizer, fit_normalizer, make_blobs, split
from psonn.errors import ConfigError, TrainingError
from psonn.neural_net import Topology, mse_loss, param_count
from psonn.pso import OptimizeResult, SwarmConfig, init_swarm, optimize, step, train_psonn


def sphere(x):
    return float(np.sum(x * x))


def check_state(state, cfg):
    assert np.all(state.positions >= cfg.low) and np.all(state.positions <= cfg.high)
    assert np.all(np.abs(state.velocities) <= cfg.vmax)
    best = int(np.argmin(state.pbest_fitness))
    assert state.gbest_fitness == state.pbest_fitness[best]
    assert np.array_equal(state.gbest_position, state.pbest_positions[best])


class TestConfig:
    @pytest.mark.parametrize("kw", [{"swarm_size": 0}, {"low": 1, "high": 1},
                                    {"vmax": 0}, {"iterations": 0}])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            SwarmConfig(**kw)


class TestInit:
    def test_same_seed_same_state(self):
        cfg = SwarmConfig(swarm_size=10, seed=5)
        a, b = init_swarm(cfg, 4, sphere), init_swarm(cfg, 4, sphere)
        assert a.positions.tobytes() == b.positions.tobytes()
        assert a.velocities.tobytes() == b.velocities.tobytes()

    def test_within_bounds(self):
        cfg = SwarmConfig(swarm_size=1000, low=-2, high=3, vmax=0.5, seed=1)
        state = init_swarm(cfg, 3, sphere)
        check_state(state, cfg)
        assert np.array_equal(state.pbest_positions, state.positions)

    def test_particles_view(self):
        state = init_swarm(SwarmConfig(swarm_size=3), 2, sphere)
        p = state.particles[1]
        assert p.pbest_fitness == sphere(p.pbest_position)


class TestStep:
    def test_frozen_without_coefficients(self):
        cfg = SwarmConfig(swarm_size=5, inertia=0, cognitive=0, social=0, seed=2)
        s1 = step(init_swarm(cfg, 3, sphere), cfg, sphere)
        assert np.all(s1.velocities == 0)
        s2 = step(s1, cfg, sphere)
        assert np.array_equal(s2.positions, s1.positions)

    def test_particle_at_its_bests_stops(self):
        cfg = SwarmConfig(swarm_size=1, inertia=0, seed=3)
        state = init_swarm(cfg, 2, sphere)
        # a lone particle is its own pbest and gbest
        assert np.all(step(state, cfg, sphere).velocities == 0)

    def test_non_finite_fitness_names_particle(self):
        cfg = SwarmConfig(swarm_size=4, seed=0)
        calls = {"n": 0}

        def f(x):
            calls["n"] += 1
            return float("nan") if calls["n"] == 7 else 1.0

        state = init_swarm(cfg, 2, f)
        with pytest.raises(TrainingError, match="particle 2"):
            step(state, cfg, f)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 6),
           st.lists(st.floats(-5, 5), min_size=6, max_size=6))
    def test_invariants_on_random_objectives(self, seed, dim, centre):
        c = np.array(centre[:dim])
        scale = np.linspace(1, 4, dim)

        def f(x):
            return float(np.sum(scale * np.abs(x - c)) + np.sin(x.sum()))

        cfg = SwarmConfig(swarm_size=7, low=-3, high=3, vmax=1.5, seed=seed)
        state = init_swarm(cfg, dim, f)
        for _ in range(15):
            before = state.gbest_fitness
            state = step(state, cfg, f)
            assert state.gbest_fitness <= before
            check_state(state, cfg)
            for i in range(cfg.swarm_size):
                assert state.pbest_fitness[i] == f(state.pbest_positions[i])


class TestOptimize:
    def test_sphere(self):
        cfg = SwarmConfig(swarm_size=20, iterations=200, low=-5, high=5, seed=0)
        assert optimize(cfg, 2, sphere).best_fitness < 1e-4

    def test_constant_objective(self):
        res = optimize(SwarmConfig(swarm_size=5, iterations=20), 3, lambda x: 2.5)
        assert res.best_fitness == 2.5
        assert res.fitness_history == [2.5] * 21

    def test_shifted_parabola(self):
        cfg = SwarmConfig(swarm_size=20, iterations=100, seed=4)
        res = optimize(cfg, 1, lambda x: float((x[0] - 3.0) ** 2))
        assert abs(res.best_position[0] - 3.0) < 0.01

    def test_history_monotone(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=5)
        res = optimize(SwarmConfig(swarm_size=15, iterations=80, seed=1), 5,
                       lambda x: float(np.sum((x - a) ** 2) + np.cos(3 * x).sum()))
        h = res.fitness_history
        assert all(b <= a for a, b in zip(h, h[1:]))

    def test_median_drop_over_seeds(self):
        firsts, lasts = [], []
        for seed in range(20):
            res = optimize(SwarmConfig(swarm_size=20, iterations=200, low=-5, high=5,
                                       seed=seed), 2, sphere)
            firsts.append(res.fitness_history[0])
            lasts.append(res.fitness_history[-1])
        assert np.median(firsts) / np.median(lasts) >= 1e4

    def test_threaded_evaluation_is_identical(self):
        cfg = SwarmConfig(swarm_size=12, iterations=30, seed=8)
        seq = optimize(cfg, 4, sphere)
        par = optimize(cfg, 4, sphere, workers=4)
        vec = optimize(cfg, 4, lambda p: np.sum(p * p, axis=1), vectorized=True)
        assert seq.to_json() == par.to_json() == vec.to_json()

    def test_json_round_trip(self):
        res = optimize(SwarmConfig(swarm_size=4, iterations=5), 3, sphere)
        back = OptimizeResult.from_dict(json.loads(res.to_json()))
        assert back.to_json() == res.to_json()
        assert back.config == res.config


class TestTrainPsonn:
    def _blobs(self, seed):
        data = make_blobs(100, seed=seed)
        train, test = split(data, SplitSpec(0.7, seed=seed))
        p = fit_normalizer(train)
        return apply_normalizer(train, p), apply_normalizer(test, p)

    def test_separable_blobs(self):
        train, test = self._blobs(0)
        net = train_psonn(Topology((2, 5, 5, 1)), train,
                          SwarmConfig(swarm_size=30, iterations=200, seed=0))
        assert np.mean(net.predict(train.features) == train.labels) == 1.0
        assert np.mean(net.predict(test.features) == test.labels) == 1.0

    def test_best_fitness_is_training_mse(self):
        train, _ = self._blobs(1)
        topo = Topology((2, 3, 3, 1))
        net, res = train_psonn(topo, train, SwarmConfig(swarm_size=10, iterations=20),
                               return_result=True)
        assert len(res.best_position) == param_count(topo)
        assert mse_loss(net, train) == pytest.approx(res.best_fitness, rel=1e-12)

    def test_error_count_fitness(self):
        train, _ = self._blobs(2)
        net, res = train_psonn(Topology((2, 5, 5, 1)), train,
                               SwarmConfig(swarm_size=20, iterations=50), fitness="errors",
                               return_result=True)
        assert res.best_fitness == np.count_nonzero(net.predict(train.features) != train.labels)

    def test_input_size_must_match(self):
        train, _ = self._blobs(0)
        with pytest.raises(ValueError):
            train_psonn(Topology((8, 5, 5, 1)), train, SwarmConfig(iterations=1))

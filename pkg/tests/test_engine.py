import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import adaboost
from parboost.core import Hypothesis, LabeledSample, Table, WeightDistribution, learning_rate
from parboost.engine import (
    EngineConfig,
    RoundPool,
    boost_step,
    certify_margins,
    exp_loss_relative_error,
    pool_size_for_rounds,
    rounds_for_margin,
    run,
    select_advantaged,
)
from parboost.errors import ParameterError, ResourceError
from parboost.weak import WeakLearnerSpec, plant_vote_instance


def pool_of(rows, sample):
    trained = [(Hypothesis(Table(r)), 0.0, np.asarray(r, dtype=np.int8)) for r in rows]
    return RoundPool.from_trained(0, 1, trained)


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        dict(gamma=0.5, p=1, R=1, t=1),
        dict(gamma=0.1, p=0, R=1, t=1),
        dict(gamma=0.1, p=1, R=2, t=1),
        dict(gamma=0.1, p=1, R=2, t=3),
        dict(gamma=0.1, p=1, R=1, t=1, n=0),
        dict(gamma=0.1, p=1, R=1, t=1, parallelism=0),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterError):
            EngineConfig(**kwargs)

    def test_budget(self):
        inst = plant_vote_instance(m=10, class_size=4, voters=1, gamma_star=0.5, seed=0)
        conf = EngineConfig(gamma=0.1, p=10, R=1, t=10, max_weak_calls=99)
        with pytest.raises(ResourceError):
            run(conf, inst.sample, inst.weak_learner())


class TestSelect:
    def setup_method(self):
        self.sample = LabeledSample.indexed([1, 1, 1, 1, 1])
        self.D = WeightDistribution(np.array([0.42, 0.03, 0.05, 0.45, 0.05]))
        self.rows = [
            [1, 1, -1, -1, 1],  # loss 0.50
            [1, 1, 1, -1, 1],  # loss 0.45
            [-1, 1, 1, 1, 1],  # loss 0.42
            [1, 1, -1, -1, -1],  # loss 0.55
        ]

    def test_boundary_inclusive(self):
        pool = pool_of(self.rows, self.sample)
        assert len(pool) == 8
        assert select_advantaged(pool, self.D, self.sample, 0.2) is None
        h, adv = select_advantaged(pool, self.D, self.sample, 0.16)
        assert h.predict(self.sample.points).tolist() == self.rows[2]
        assert adv == pytest.approx(0.08)

    def test_concept_in_pool(self):
        pool = pool_of([[1, 1, 1, 1, 1], [1, -1, 1, 1, 1]], self.sample)
        h, adv = select_advantaged(pool, self.D, self.sample, 0.3)
        assert adv == 0.5

    def test_balanced_pair(self):
        sample = LabeledSample.indexed([1, 1])
        pool = pool_of([[1, -1]], sample)
        assert select_advantaged(pool, WeightDistribution.uniform(2), sample, 1e-6) is None

    def test_first_found_flag(self):
        pool = pool_of(self.rows, self.sample)
        h, adv = select_advantaged(pool, self.D, self.sample, 0.05, first_found=True)
        assert h.predict(self.sample.points).tolist() == self.rows[1]
        h, _ = select_advantaged(pool, self.D, self.sample, 0.05)
        assert h.predict(self.sample.points).tolist() == self.rows[2]

    def test_provenance(self):
        pool = pool_of(self.rows, self.sample)
        assert pool.provenance[0] == (0, 1, 0, False)
        assert pool.provenance[4] == (0, 1, 0, True)
        assert np.array_equal(pool.predictions[4], -pool.predictions[0])


class TestBoostStep:
    def test_zero_alpha(self):
        s = LabeledSample.indexed([1, -1])
        D = WeightDistribution.uniform(2)
        new, z = boost_step(D, Hypothesis(Table([1, 1])), 0.0, s)
        assert new is D and z == 1.0

    def test_perfect_hypothesis(self):
        s = LabeledSample.indexed([1, -1])
        a = learning_rate(0.1)
        new, z = boost_step(WeightDistribution.uniform(2), Hypothesis(Table([1, -1])), a, s)
        assert np.allclose(new.weights, 0.5)
        assert z == pytest.approx(math.exp(-a), abs=1e-15)
        assert z == pytest.approx(0.904534, abs=1e-6)

    def test_minimal_advantage_hits_z_bound(self):
        s = LabeledSample.indexed([1, 1])
        gamma = 0.2
        D = WeightDistribution(np.array([0.6, 0.4]))
        h = Hypothesis(Table([1, -1]))  # loss 0.4 = 1/2 - gamma/2
        _, z = boost_step(D, h, learning_rate(gamma), s)
        assert z == pytest.approx(math.sqrt(1 - gamma**2), abs=1e-15)
        assert abs(z - 0.9797959) <= 1e-6


def small_run(seed, m=60, p=6, R=2, t=4, parallelism=1, **kw):
    inst = plant_vote_instance(m=m, class_size=12, voters=3, gamma_star=0.2, seed=seed)
    conf = EngineConfig(gamma=0.1, p=p, R=R, t=t, n=40, seed=seed, parallelism=parallelism, **kw)
    g, tr = run(conf, inst.sample, inst.weak_learner(0.1))
    return inst, conf, g, tr


class TestRun:
    def test_realizable_one_step(self):
        s = LabeledSample(np.array([[0.0], [1.0], [2.0], [3.0]]), [-1, -1, 1, 1])
        g, tr = run(EngineConfig(gamma=0.2, p=1, R=1, t=1, n=8), s, WeakLearnerSpec("stump", 0.2))
        assert tr.steps[0].accepted and tr.steps[0].alpha > 0
        assert np.all(certify_margins(g, s, 0.2, tr).min_margin == 1.0)

    def test_trace_shape_and_accounting(self):
        _, conf, g, tr = small_run(1, p=5, R=3, t=6)
        assert len(tr.steps) == conf.p * conf.R
        assert tr.weak_calls == conf.p * conf.t
        assert len(tr.snapshots) == conf.p * conf.R + 1
        a = learning_rate(conf.gamma)
        for s in tr.steps:
            assert s.alpha in (0.0, a)
            if s.alpha == 0.0:
                assert s.z == 1.0
        assert [s.step for s in tr.steps] == list(range(1, 16))
        assert g.normalizer == pytest.approx(a * sum(s.accepted for s in tr.steps))

    def test_round_start_sampling(self, monkeypatch):
        import parboost.engine as engine

        seen = []
        real = engine.draw_subsample

        def spy(D, n, rng):
            seen.append(np.array(D, copy=True))
            return real(D, n, rng)

        monkeypatch.setattr(engine, "draw_subsample", spy)
        _, conf, _, tr = small_run(2, p=3, R=2, t=4)
        assert len(seen) == conf.p * conf.t
        for k in range(conf.p):
            start = tr.distribution(k * conf.R + 1)
            for D in seen[k * conf.t:(k + 1) * conf.t]:
                assert np.array_equal(D, start)

    @pytest.mark.parametrize("workers", [4, 16])
    def test_parallelism_does_not_change_the_trace(self, workers):
        _, _, g1, t1 = small_run(3, p=6, R=2, t=8)
        _, _, g2, t2 = small_run(3, p=6, R=2, t=8, parallelism=workers)
        assert t1.steps == t2.steps
        for a, b in zip(t1.snapshots, t2.snapshots):
            assert np.array_equal(a, b)
        assert g1 == g2

    def test_replay_without_snapshots(self):
        _, _, _, with_snap = small_run(4)
        _, _, _, replay = small_run(4, store_snapshots=False)
        assert replay.snapshots is None
        for ell in range(1, len(with_snap.steps) + 2):
            assert np.array_equal(with_snap.distribution(ell), replay.distribution(ell))

    def test_degenerate_run(self):
        s = LabeledSample(np.array([[0.0], [0.0]]), [1, -1])
        g, tr = run(EngineConfig(gamma=0.1, p=2, R=1, t=2, n=4), s, WeakLearnerSpec("stump", 0.1))
        assert g.degenerate and g.degenerate_run
        rep = certify_margins(g, s, 0.1, tr)
        assert rep.degenerate and rep.min_margin is None and not rep.margin_certified
        assert all(st.z == 1.0 for st in tr.steps)

    @given(st.integers(0, 10_000), st.sampled_from([1, 2, 3]), st.integers(1, 6))
    def test_exp_loss_identity(self, seed, R, p):
        _, conf, g, tr = small_run(seed, m=30, p=p, R=R, t=2 * R)
        assert exp_loss_relative_error(tr) <= 1e-9
        rep = certify_margins(g, LabeledSample.indexed(tr.labels), conf.gamma, tr) if not g.degenerate else None
        if rep is not None:
            assert rep.z_bound_ok and rep.exp_loss_ok

    def test_full_sample_mode_is_adaboost(self):
        inst = plant_vote_instance(m=10, class_size=6, voters=3, gamma_star=0.2, seed=5)
        conf = EngineConfig(gamma=0.1, p=15, R=1, t=1, full_sample=True)
        _, tr = run(conf, inst.sample, inst.weak_learner(0.1))
        ref, _ = adaboost(inst.sample.labels, inst.hclass.tables, 0.1, 15)
        for ell, d in enumerate(ref, start=1):
            assert np.max(np.abs(tr.distribution(ell) - np.array(d))) <= 1e-12


class TestCertify:
    def test_counting_bound_at_threshold(self):
        inst = plant_vote_instance(m=200, class_size=16, voters=5, gamma_star=0.2, seed=8)
        R = 2
        p = rounds_for_margin(200, 0.1, R)
        g, tr = run(EngineConfig(gamma=0.1, p=p, R=R, t=4 * R, seed=1), inst.sample, inst.weak_learner(0.1))
        rep = certify_margins(g, inst.sample, 0.1, tr)
        assert rep.exp_loss_ok and rep.z_bound_ok
        if rep.all_rounds_ok:
            assert rep.count_bound < 1 and rep.below_count == 0 and rep.count_bound_ok

    def test_formulas(self):
        assert rounds_for_margin(1000, 0.1, 5) == 553
        assert rounds_for_margin(1000, 0.1, 1) == 2764
        assert pool_size_for_rounds(1, 1, 0.1) == math.ceil(math.exp(16)) * 3
        assert pool_size_for_rounds(5, 4, 0.1) > 10**100
        with pytest.raises(ParameterError):
            pool_size_for_rounds(1, 1, 1.0)

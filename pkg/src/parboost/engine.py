"""Parallel weak-to-strong booster.

Each of the ``p`` rounds has two phases:

1. *Bagging.*  ``t`` weak-learner calls run as independent tasks.  Call
   ``(r, j)`` trains on ``n`` points drawn from the round-start distribution
   ``D_{kR+1}``.  The ``t/R`` hypotheses of sub-round ``r``, together with
   their negations, form the pool for step ``kR + r``.
2. *Boosting.*  ``R`` sequential reweighting steps.  Step ``kR + r`` accepts
   a pool member with loss at most ``1/2 - gamma/2`` under the current
   distribution and applies the fixed learning rate; otherwise the step is
   inert (``alpha = 0``, ``Z = 1``).

Every task derives its random stream from ``(seed, k, r, j)``, so results do
not depend on the number of workers or on scheduling order.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .approximation import draw_subsample, subsample_size
from .core import (
    BOUNDARY_TOL,
    BoostTrace,
    Hypothesis,
    LabeledSample,
    LinearClassifier,
    StepRecord,
    WeightDistribution,
    as_weights,
    learning_rate,
    margins,
    reweight,
)
from .errors import ParameterError, ResourceError
from .weak import WeakLearnerSpec

log = logging.getLogger(__name__)

#: Default ceiling on weak-learner calls for a single run.
DEFAULT_CALL_BUDGET = 20_000_000


@dataclass(frozen=True)
class EngineConfig:
    gamma: float
    p: int
    R: int
    t: int
    n: Optional[int] = None
    seed: int = 0
    parallelism: int = 1
    c_n: float = 1.0
    #: accept the first advantaged pool member instead of the best one
    first_found: bool = False
    #: debug mode: every call sees the whole training set weighted by D_{kR+1}
    full_sample: bool = False
    store_snapshots: bool = True
    max_weak_calls: int = DEFAULT_CALL_BUDGET

    def __post_init__(self) -> None:
        if not 0 < self.gamma < 0.5:
            raise ParameterError(f"gamma must lie in (0, 1/2), got {self.gamma!r}")
        if self.p < 1 or self.R < 1:
            raise ParameterError("p and R must be at least 1")
        if self.t < self.R:
            raise ParameterError(f"t = {self.t} must be at least R = {self.R}")
        if self.t % self.R:
            raise ParameterError(f"R = {self.R} must divide t = {self.t}")
        if self.n is not None and self.n < 1:
            raise ParameterError("n must be at least 1")
        if self.parallelism < 1:
            raise ParameterError("parallelism must be at least 1")

    @property
    def calls_per_subround(self) -> int:
        return self.t // self.R


@dataclass
class RoundPool:
    """Candidates for step ``kR + r``: ``t/R`` trained hypotheses, then their negations."""

    k: int
    r: int
    hypotheses: list[Hypothesis]
    provenance: list[tuple[int, int, int, bool]]
    predictions: np.ndarray
    weak_advantages: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.hypotheses)

    @classmethod
    def from_trained(cls, k: int, r: int, trained: list[tuple[Hypothesis, float, np.ndarray]]):
        hyps = [h for h, _, _ in trained] + [-h for h, _, _ in trained]
        prov = [(k, r, j, False) for j in range(len(trained))]
        prov += [(k, r, j, True) for j in range(len(trained))]
        preds = np.vstack([pr for _, _, pr in trained])
        return cls(k, r, hyps, prov, np.vstack([preds, -preds]), [a for _, a, _ in trained])

    def losses(self, D, labels: np.ndarray) -> np.ndarray:
        return (self.predictions != labels).astype(np.float64) @ as_weights(D)


def _select(losses: np.ndarray, gamma: float, first_found: bool) -> Optional[int]:
    threshold = 0.5 - gamma / 2 + BOUNDARY_TOL
    if first_found:
        hits = np.flatnonzero(losses <= threshold)
        return int(hits[0]) if hits.size else None
    best = int(np.argmin(losses))
    return best if losses[best] <= threshold else None


def select_advantaged(
    pool: RoundPool, D, sample: LabeledSample, gamma: float, first_found: bool = False
) -> Optional[tuple[Hypothesis, float]]:
    """Best pool member by advantage if it reaches ``gamma/2``; ties go to provenance order."""
    if len(pool) == 0:
        raise ParameterError("pool is empty")
    losses = pool.losses(D, sample.labels)
    idx = _select(losses, gamma, first_found)
    if idx is None:
        return None
    return pool.hypotheses[idx], 0.5 - float(losses[idx])


def boost_step(
    D, h: Hypothesis, alpha: float, sample: LabeledSample
) -> tuple[WeightDistribution, float]:
    """``D'(i) = D(i) exp(-alpha c(x_i) h(x_i)) / Z``; returns ``(D', Z)``."""
    w = as_weights(D)
    if w.size != sample.m:
        raise ParameterError("distribution and sample sizes differ")
    new, z = reweight(w, sample.labels * h.predict(sample.points), alpha)
    return (D if alpha == 0 and isinstance(D, WeightDistribution) else WeightDistribution(new)), z


def _task_rng(seed: int, k: int, r: int, j: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k, r, j)))


def resolve_subsample_size(config: EngineConfig, sample: LabeledSample, weak: WeakLearnerSpec) -> int:
    if config.full_sample:
        return sample.m
    if config.n is not None:
        return config.n
    return subsample_size(weak.vc_dimension(sample), config.gamma, config.c_n)


def run(
    config: EngineConfig, sample: LabeledSample, weak: WeakLearnerSpec
) -> tuple[LinearClassifier, BoostTrace]:
    """Run the booster; returns the voting classifier and the full trace."""
    calls = config.p * config.t
    if calls > config.max_weak_calls:
        raise ResourceError(
            f"p * t = {calls:.3g} weak-learner calls exceed the budget of {config.max_weak_calls}"
        )
    alpha = learning_rate(config.gamma)
    n = resolve_subsample_size(config, sample, weak)
    params = asdict(config) | {"n": n, "alpha": alpha, "m": sample.m}
    trace = BoostTrace(params=params, labels=sample.labels)
    if not config.store_snapshots:
        trace.snapshots = None
    labels = sample.labels
    per_sub = config.calls_per_subround
    w = np.full(sample.m, 1.0 / sample.m)
    if trace.snapshots is not None:
        trace.snapshots.append(w)

    def train(task: tuple[int, int, int], start: np.ndarray):
        k, r, j = task
        if config.full_sample:
            T, weights = np.arange(sample.m), start
        else:
            T, weights = draw_subsample(start, n, _task_rng(config.seed, k, r, j)), None
        h, adv = weak.train(sample, T, weights)
        return h, adv, h.predict(sample.points)

    executor = ThreadPoolExecutor(config.parallelism) if config.parallelism > 1 else None
    bag_time = step_time = 0.0
    try:
        for k in range(config.p):
            tic = time.perf_counter()
            start = w
            tasks = [(k, r, j) for r in range(config.R) for j in range(per_sub)]
            if executor is None:
                trained = [train(task, start) for task in tasks]
            else:
                trained = list(executor.map(lambda task: train(task, start), tasks))
            trace.weak_calls += len(tasks)
            trace.weak_shortfalls += sum(adv < config.gamma for _, adv, _ in trained)
            pools = [
                RoundPool.from_trained(k, r + 1, trained[r * per_sub:(r + 1) * per_sub])
                for r in range(config.R)
            ]
            toc = time.perf_counter()
            bag_time += toc - tic

            for r, pool in enumerate(pools, start=1):
                losses = pool.losses(w, labels)
                idx = _select(losses, config.gamma, config.first_found)
                accepted = idx is not None
                if not accepted:
                    idx = 0  # inert: alpha = 0 keeps D and gives Z = 1
                step_alpha = alpha if accepted else 0.0
                preds = pool.predictions[idx]
                w, z = reweight(w, labels * preds, step_alpha)
                hid, neg = trace.register(pool.hypotheses[idx])
                trace.steps.append(
                    StepRecord(
                        step=k * config.R + r,
                        round=k,
                        sub_round=r,
                        alpha=step_alpha,
                        z=z,
                        hypothesis_id=hid,
                        negated=neg,
                        accepted=accepted,
                        pool_best_advantage=0.5 - float(losses.min()),
                    )
                )
                trace.chosen_predictions.append(preds)
                if trace.snapshots is not None:
                    trace.snapshots.append(w)
            step_time += time.perf_counter() - toc
    finally:
        if executor is not None:
            executor.shutdown()

    trace.phase_seconds = {"bagging": bag_time, "boosting": step_time}
    terms = tuple((s.alpha, trace.chosen(s.step)) for s in trace.steps if s.alpha > 0)
    classifier = LinearClassifier(terms, degenerate_run=not terms)
    if not terms:
        log.warning("no step found an advantaged hypothesis; the classifier is degenerate")
    return classifier, trace


# ---------------------------------------------------------------------------
# Certification
# ---------------------------------------------------------------------------


@dataclass
class MarginReport:
    degenerate: bool
    min_margin: Optional[float]
    below_count: Optional[int]
    count_bound: float
    exp_loss_rel_error: float
    exp_loss_ok: bool
    z_bound_ok: bool
    round_products_ok: list[bool]
    count_bound_ok: Optional[bool]

    @property
    def all_rounds_ok(self) -> bool:
        return all(self.round_products_ok)

    @property
    def margin_certified(self) -> bool:
        return bool(not self.degenerate and self.below_count == 0)


def exp_loss_relative_error(trace: BoostTrace) -> float:
    """``|sum_i exp(-c sum_j alpha_j h_j) - m prod_j Z_j| / (m prod_j Z_j)``, evaluated in log space."""
    terms = trace.log_exp_terms()
    top = terms.max()
    lhs = top + math.log(np.exp(terms - top).sum())
    rhs = math.log(trace.m) + trace.log_z_product()
    return abs(math.expm1(lhs - rhs))


def certify_margins(
    g: LinearClassifier, sample: LabeledSample, gamma: float, trace: BoostTrace
) -> MarginReport:
    """Check the margin guarantee and the trace identities it rests on."""
    pR = len(trace.steps)
    count_bound = sample.m * math.exp(-pR * gamma**2 / 4)
    rel = exp_loss_relative_error(trace)
    z_cap = math.sqrt(1 - gamma**2) + 1e-12
    z_ok = all(s.z <= z_cap for s in trace.steps if s.accepted)
    target = math.exp(-gamma**2 * trace.R / 2)
    rounds_ok = [bool(prod < target) for prod in trace.round_z_products()]
    if g.degenerate:
        return MarginReport(True, None, None, count_bound, rel, rel <= 1e-9, z_ok, rounds_ok, None)
    mg = margins(g, sample)
    below = int(np.count_nonzero(mg < gamma / 8))
    count_ok = (below < count_bound) if all(rounds_ok) else None
    return MarginReport(
        degenerate=False,
        min_margin=float(mg.min()),
        below_count=below,
        count_bound=count_bound,
        exp_loss_rel_error=rel,
        exp_loss_ok=rel <= 1e-9,
        z_bound_ok=z_ok,
        round_products_ok=rounds_ok,
        count_bound_ok=count_ok,
    )


def rounds_for_margin(m: int, gamma: float, R: int) -> int:
    """Smallest ``p`` with ``p >= 4 ln(m) / (gamma^2 R)``."""
    return math.ceil(4 * math.log(m) / (gamma**2 * R))


def pool_size_for_rounds(R: int, d: float, delta: float, c_n: float = 1.0) -> int:
    """``t = R ceil(exp(16 C_n d R)) ceil(ln(R / delta))``, the sufficient pool size.

    Grows like ``exp(16 d R)``; for any ``d >= 1`` this exceeds desk-scale
    budgets, so callers should expect :class:`ResourceError` from :func:`run`.
    """
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    exponent = 16 * c_n * d * R
    size = math.ceil(math.exp(exponent)) if exponent < 700 else 10 ** math.ceil(exponent / math.log(10))
    return R * size * max(1, math.ceil(math.log(R / delta)))

"""Simulator for the lower-bound hard instance.

The domain is ``[2m]`` (0-based here), the concept is uniform on
``{-1, +1}^{2m}`` and the hypothesis matrix stacks ``p`` blocks, each made of
``R * ceil(exp(C_s d))`` uniform rows followed by ``R`` rows whose entries
agree with the concept with probability ``1/2 + C_b gamma``.

Learners talk to the weak learner only through :class:`QuerySession`, which
hands out the training sample with its labels and never reveals the concept
anywhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .approximation import draw_subsample
from .core import BOUNDARY_TOL, Hypothesis, Table, learning_rate
from .errors import ParameterError, ProtocolViolation, ResourceError

#: Largest matrix (rows * 2m entries) generate_instance will build.
DEFAULT_MEMORY_BUDGET = 200_000_000


@dataclass(frozen=True)
class AdversaryConstants:
    c_s: float = 1.0
    c_b: float = 1.0
    c_l: float = 1.0

    def __post_init__(self) -> None:
        if min(self.c_s, self.c_b, self.c_l) < 1:
            raise ParameterError("C_s, C_b and C_l must all be >= 1")


@dataclass(frozen=True, eq=False)
class HardInstance:
    m: int
    d: int
    p: int
    R: int
    gamma: float
    constants: AdversaryConstants
    concept: np.ndarray
    matrix: np.ndarray

    @property
    def domain_size(self) -> int:
        return 2 * self.m

    @property
    def bias(self) -> float:
        return self.constants.c_b * self.gamma

    @property
    def uniform_per_block(self) -> int:
        return uniform_rows_per_block(self.d, self.R, self.constants.c_s)

    @property
    def block_size(self) -> int:
        return self.uniform_per_block + self.R

    @property
    def biased_rows(self) -> np.ndarray:
        starts = np.arange(self.p) * self.block_size + self.uniform_per_block
        return (starts[:, None] + np.arange(self.R)).ravel()

    def matrix_view(self, with_concept: bool = False) -> np.ndarray:
        if not with_concept:
            return self.matrix
        return np.vstack([self.matrix, self.concept[None, :]])

    def bias_zscore(self) -> float:
        """Standardized deviation of the biased rows' agreement rate from ``1/2 + C_b gamma``."""
        rows = self.matrix[self.biased_rows]
        n = rows.size
        q = 0.5 + self.bias
        agree = np.count_nonzero(rows == self.concept)
        return (agree - n * q) / math.sqrt(n * q * (1 - q))


def uniform_rows_per_block(d: int, R: int, c_s: float = 1.0) -> int:
    return R * math.ceil(math.exp(c_s * d))


def instance_rows(p: int, R: int, d: int, c_s: float = 1.0) -> int:
    return p * (uniform_rows_per_block(d, R, c_s) + R)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def generate_instance(
    m: int,
    d: int,
    p: int,
    R: int,
    gamma: float,
    constants: AdversaryConstants = AdversaryConstants(),
    seed: Union[int, np.random.Generator] = 0,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> HardInstance:
    if m < 1 or d < 1 or p < 1 or R < 1:
        raise ParameterError("m, d, p and R must be positive")
    if not 0 < gamma < 1 / (4 * constants.c_b):
        raise ParameterError(f"gamma must lie in (0, 1/(4 C_b)) = (0, {1 / (4 * constants.c_b)})")
    rows = instance_rows(p, R, d, constants.c_s)
    if rows * 2 * m > memory_budget:
        raise ResourceError(f"hypothesis matrix of {rows} x {2 * m} exceeds the memory budget")
    rng = _rng(seed)
    signs = np.array([-1, 1], dtype=np.int8)
    concept = rng.choice(signs, size=2 * m)
    matrix = rng.choice(signs, size=(rows, 2 * m))
    instance = HardInstance(m, d, p, R, gamma, constants, concept, matrix)
    biased = instance.biased_rows
    flips = rng.random((biased.size, 2 * m)) < 0.5 - instance.bias
    matrix[biased] = np.where(flips, -concept, concept)
    matrix.setflags(write=False)
    concept.setflags(write=False)
    return instance


def draw_training_sample(instance: HardInstance, rng) -> np.ndarray:
    """``S ~ U^m`` over the domain (with repeats)."""
    return _rng(rng).integers(0, instance.domain_size, size=instance.m)


# ---------------------------------------------------------------------------
# Weak learner and query protocol
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Query:
    """``(S, c(S), D)``: listed domain indices, their labels and a distribution over the listing."""

    indices: np.ndarray
    labels: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        idx = np.asarray(self.indices, dtype=np.int64)
        lab = np.asarray(self.labels)
        w = np.asarray(self.weights, dtype=np.float64)
        if not (idx.ndim == lab.ndim == w.ndim == 1 and idx.size == lab.size == w.size > 0):
            raise ParameterError("a query lists indices, labels and weights of equal length")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
            raise ParameterError("query weights must form a distribution")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "weights", w)

    def row_losses(self, M: np.ndarray) -> np.ndarray:
        return (M[:, self.indices] != self.labels).astype(np.float64) @ self.weights


def scan_row(M: np.ndarray, query: Query, gamma: float) -> int:
    """Index of the first row with loss ``<= 1/2 - gamma`` on the query, else 0."""
    hits = np.flatnonzero(query.row_losses(M) <= 0.5 - gamma + BOUNDARY_TOL)
    return int(hits[0]) if hits.size else 0


def scan_weak_learner(M: np.ndarray, query: Query, gamma: float) -> Hypothesis:
    """The scanning weak learner: uses only the query's own labels, never the concept."""
    return Hypothesis(Table(M[scan_row(M, query, gamma)]))


class _Halt(Exception):
    pass


Responder = Callable[[Query], np.ndarray]


class QuerySession:
    """What a learner sees: its sample, the sample labels and a round-based query interface."""

    def __init__(
        self,
        sample: np.ndarray,
        labels: np.ndarray,
        responder: Responder,
        *,
        p: int,
        t: int,
        gamma: float,
        domain_size: int,
        halt_on_failure: bool = True,
    ):
        self.sample = np.asarray(sample, dtype=np.int64)
        self.sample.setflags(write=False)
        self.labels = np.asarray(labels)
        self.labels.setflags(write=False)
        self.p, self.t, self.gamma = p, t, gamma
        self.domain_size = domain_size
        self._responder = responder
        self._halt = halt_on_failure
        self.rounds_used = 0
        self.queries_made = 0
        self.halted = False

    def query(self, distributions: Sequence[np.ndarray]) -> list[np.ndarray]:
        """Issue one parallel round; each distribution weights the sample positions."""
        if self.rounds_used >= self.p:
            raise ProtocolViolation(f"learner asked for round {self.rounds_used + 1} of {self.p}")
        if len(distributions) > self.t:
            raise ProtocolViolation(f"{len(distributions)} queries in one round; limit is {self.t}")
        self.rounds_used += 1
        responses = []
        for w in distributions:
            q = Query(self.sample, self.labels, w)
            row = self._responder(q)
            self.queries_made += 1
            if self._halt and q.row_losses(row[None, :])[0] > 0.5 - self.gamma + BOUNDARY_TOL:
                self.halted = True
                raise _Halt
            responses.append(row)
        return responses


Learner = Callable[[QuerySession], np.ndarray]


@dataclass
class ExtensionResult:
    hypothesis: np.ndarray
    halted: bool
    rounds: int
    queries: int


def scanning_responder(M: np.ndarray, gamma: float) -> Responder:
    return lambda q: M[scan_row(M, q, gamma)]


def run_extension(
    learner: Learner,
    instance: HardInstance,
    sample: np.ndarray,
    t: int,
    W: Optional[Responder] = None,
) -> ExtensionResult:
    """Run ``learner`` against ``W`` (default: scanning over the matrix without the concept).

    The first response whose loss under its own query exceeds
    ``1/2 - gamma`` stops the run, and the all-(+1) hypothesis is returned.
    """
    W = W or scanning_responder(instance.matrix_view(with_concept=False), instance.gamma)
    session = QuerySession(
        sample,
        instance.concept[sample],
        W,
        p=instance.p,
        t=t,
        gamma=instance.gamma,
        domain_size=instance.domain_size,
    )
    try:
        out = np.asarray(learner(session))
    except _Halt:
        out = np.ones(instance.domain_size, dtype=np.int8)
    if out.shape != (instance.domain_size,):
        raise ProtocolViolation(f"learner returned shape {out.shape}, expected ({instance.domain_size},)")
    return ExtensionResult(out, session.halted, session.rounds_used, session.queries_made)


# ---------------------------------------------------------------------------
# Learners
# ---------------------------------------------------------------------------


def all_ones_learner(session: QuerySession) -> np.ndarray:
    return np.ones(session.domain_size, dtype=np.int8)


@dataclass
class RandomGuessLearner:
    """Known labels on the sample, fair coins everywhere else."""

    seed: int = 0

    def __call__(self, session: QuerySession) -> np.ndarray:
        rng = np.random.default_rng([self.seed, *session.sample[:4].tolist()])
        out = rng.choice(np.array([-1, 1], dtype=np.int8), size=session.domain_size)
        out[session.sample] = session.labels
        return out


@dataclass
class NaiveBoostingClient:
    """The parallel booster driven through the query protocol.

    Each round bags ``t`` subsamples from the round-start weights, sends them
    as uniform-over-subsample queries, and takes ``R`` boosting steps over
    the responses and their negations.  Outputs ``sign`` of the vote over the
    whole domain, with ``sign(0) = +1``.
    """

    R: int = 1
    n: Optional[int] = None
    seed: int = 0

    def __call__(self, session: QuerySession) -> np.ndarray:
        m = session.sample.size
        rng = np.random.default_rng([self.seed, *session.sample[:4].tolist()])
        alpha = learning_rate(session.gamma)
        n = self.n or m
        per_sub = max(1, session.t // self.R)
        w = np.full(m, 1.0 / m)
        vote = np.zeros(session.domain_size)
        labels = session.labels
        for _ in range(session.p):
            queries = []
            for _ in range(per_sub * self.R):
                counts = np.bincount(draw_subsample(w, n, rng), minlength=m)
                queries.append(counts / n)
            rows = np.asarray(session.query(queries))
            for r in range(self.R):
                block = rows[r * per_sub:(r + 1) * per_sub]
                cand = np.vstack([block, -block])
                losses = (cand[:, session.sample] != labels).astype(np.float64) @ w
                best = int(np.argmin(losses))
                if losses[best] > 0.5 - session.gamma / 2 + BOUNDARY_TOL:
                    continue
                agreement = labels * cand[best, session.sample]
                w = w * np.exp(-alpha * agreement)
                w /= w.sum()
                vote += alpha * cand[best]
        return np.where(vote >= 0, 1, -1).astype(np.int8)


def majority_decoder(instance: HardInstance, sample: np.ndarray) -> np.ndarray:
    """Maximum-likelihood guess of the concept from ``(S, c(S), H)``.

    Labels on the sample are copied; elsewhere the sign of the column sum of
    the ``pR`` biased rows is used, with ``sign(0) = +1``.
    """
    votes = instance.matrix[instance.biased_rows].sum(axis=0, dtype=np.int64)
    out = np.where(votes >= 0, 1, -1).astype(np.int8)
    out[sample] = instance.concept[sample]
    return out


def concept_learner(instance: HardInstance, sample: np.ndarray) -> np.ndarray:
    """Cheating calibration learner that returns the concept itself."""
    return np.array(instance.concept)


# ---------------------------------------------------------------------------
# Exact quantities
# ---------------------------------------------------------------------------


def coin_oracle(n: int, beta):
    """Exact error of the majority vote over ``n`` flips of a coin biased ``beta`` toward the truth.

    Ties (even ``n``) count as half an error.  A :class:`~fractions.Fraction`
    ``beta`` gives an exact rational result.
    """
    if n < 0:
        raise ParameterError("n must be non-negative")
    if not 0 <= beta < Fraction(1, 2):
        raise ParameterError("beta must lie in [0, 1/2)")
    exact = isinstance(beta, Fraction)
    half = Fraction(1, 2) if exact else 0.5
    right, wrong = half + beta, half - beta
    terms = [math.comb(n, k) * right**k * wrong ** (n - k) for k in range((n + 1) // 2)]
    if n % 2 == 0:
        terms.append(half * math.comb(n, n // 2) * right ** (n // 2) * wrong ** (n // 2))
    return sum(terms, Fraction(0)) if exact else math.fsum(terms)


def expected_unseen_fraction(m: int) -> float:
    """``E[(2m - |S|) / 2m]`` for ``S ~ U^m`` over ``[2m]``, with ``|S|`` counting distinct points."""
    return (1 - 1 / (2 * m)) ** m


def majority_exact_loss(m: int, p: int, R: int, bias: float) -> float:
    """Expected loss of :func:`majority_decoder` under the uniform distribution on ``[2m]``."""
    return expected_unseen_fraction(m) * coin_oracle(p * R, bias)


def asymptotic_floor(m: int, d: int, p: int, R: int, t: int, gamma: float, constants: AdversaryConstants) -> float:
    """``exp(-C_l C_b^2 gamma^2 R p) / (4 C_l) * (1 - exp(-m exp(-C_l C_b^2 gamma^2 R p) / (8 C_l)) - p t exp(-R d))``."""
    c_l, c_b = constants.c_l, constants.c_b
    decay = math.exp(-c_l * c_b**2 * gamma**2 * R * p)
    return decay / (4 * c_l) * (1 - math.exp(-m * decay / (8 * c_l)) - p * t * math.exp(-R * d))


def calibrate_loss_constant(ns: Sequence[int], beta: float, upper: float = 1e6) -> float:
    """Smallest ``C_l >= 1`` with ``exp(-C_l beta^2 n) / C_l <= coin_oracle(n, beta)`` for every n."""

    def ok(c: float) -> bool:
        return all(math.exp(-c * beta**2 * n) / c <= coin_oracle(n, beta) for n in ns)

    if ok(1.0):
        return 1.0
    lo, hi = 1.0, 2.0
    while not ok(hi):
        lo, hi = hi, hi * 2
        if hi > upper:
            raise ParameterError("no loss constant below the search limit fits")
    for _ in range(60):
        mid = (lo + hi) / 2
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi


# ---------------------------------------------------------------------------
# Monte-Carlo measurement
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdversaryParams:
    m: int
    d: int
    p: int
    R: int
    t: int
    gamma: float
    constants: AdversaryConstants = AdversaryConstants()

    @property
    def bias(self) -> float:
        return self.constants.c_b * self.gamma


@dataclass
class LossEstimate:
    mean: float
    half_width: float
    trials: int
    majority_exact: float
    asymptotic_floor: float
    early_halt_rate: float
    losses: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))


CalibrationLearner = Callable[[HardInstance, np.ndarray], np.ndarray]


def measure_expected_loss(
    learner: Union[Learner, CalibrationLearner],
    params: AdversaryParams,
    trials: int,
    seed: int,
    calibration: bool = False,
) -> LossEstimate:
    """Average ``loss_{c,U}`` of the learner's output over fresh ``(S, c, H)`` per trial.

    Protocol learners run inside :func:`run_extension`.  With
    ``calibration=True`` the learner is instead called as
    ``learner(instance, S)`` with direct access to the instance.
    """
    if trials < 1:
        raise ParameterError("need at least one trial")
    losses = np.empty(trials)
    halts = 0
    for trial in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))
        inst = generate_instance(
            params.m, params.d, params.p, params.R, params.gamma, params.constants, rng
        )
        S = draw_training_sample(inst, rng)
        if calibration:
            out = learner(inst, S)
        else:
            res = run_extension(learner, inst, S, params.t)
            out, halts = res.hypothesis, halts + res.halted
        losses[trial] = np.count_nonzero(out != inst.concept) / inst.domain_size
    mean = float(losses.mean())
    sd = float(losses.std(ddof=1)) if trials > 1 else 0.0
    return LossEstimate(
        mean=mean,
        half_width=1.96 * sd / math.sqrt(trials),
        trials=trials,
        majority_exact=majority_exact_loss(params.m, params.p, params.R, params.bias),
        asymptotic_floor=asymptotic_floor(
            params.m, params.d, params.p, params.R, params.t, params.gamma, params.constants
        ),
        early_halt_rate=halts / trials,
        losses=losses,
    )

"""Deterministic weak learners and instances on which they provably work.

Both learners minimize empirical error over a finite candidate set, so they
never fail silently: the achieved advantage on the training multiset is
returned to the caller and it is up to the booster to decide what to do when
it falls short of the assumed ``gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from .core import BOUNDARY_TOL, Hypothesis, LabeledSample, Stump, Table, as_labels
from .errors import ConstructionError, ParameterError


@dataclass(frozen=True, eq=False)
class HypothesisClass:
    """Finite class of extensional hypotheses, one row of ``tables`` per member.

    Member ``i`` has id ``i``; ids break ties in ERM.
    """

    tables: np.ndarray
    hypotheses: tuple[Hypothesis, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        tables = np.atleast_2d(np.asarray(self.tables))
        if tables.shape[0] == 0:
            raise ParameterError("hypothesis class is empty")
        tables = np.stack([as_labels(row) for row in tables])
        tables.setflags(write=False)
        object.__setattr__(self, "tables", tables)
        object.__setattr__(self, "hypotheses", tuple(Hypothesis(Table(row)) for row in tables))

    @classmethod
    def from_hypotheses(cls, hyps: Sequence[Hypothesis], domain_size: int) -> "HypothesisClass":
        domain = np.arange(domain_size)
        return cls(np.stack([h.predict(domain) for h in hyps]))

    def __len__(self) -> int:
        return self.tables.shape[0]

    @property
    def vc_proxy(self) -> float:
        """``log2 |H|`` (at least 1), an upper bound on the VC dimension."""
        return max(1.0, math.log2(len(self)))

    def predictions(self, sample: LabeledSample) -> np.ndarray:
        """``(|H|, m)`` matrix of predictions on the sample points."""
        return self.tables[:, sample.points[:, 0].astype(np.int64)]


def _multiset_weights(
    m: int, T: np.ndarray, weights: Optional[np.ndarray]
) -> tuple[np.ndarray, float]:
    """Aggregate a multiset of indices into per-point mass.

    Returns ``(mass, total)``; ``mass / total`` is the empirical distribution.
    With uniform weights the mass is an exact integer count, which makes the
    result independent of the order of ``T``.
    """
    T = np.asarray(T, dtype=np.int64).reshape(-1)
    if T.size == 0:
        raise ParameterError("training multiset is empty")
    if T.min() < 0 or T.max() >= m:
        raise ParameterError(f"training indices must lie in [0, {m})")
    if weights is None:
        counts = np.bincount(T, minlength=m).astype(np.float64)
        return counts, float(T.size)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.size != T.size or np.any(w < 0):
        raise ParameterError("one non-negative weight per element of T is required")
    order = np.lexsort((w, T))
    mass = np.zeros(m)
    np.add.at(mass, T[order], w[order])
    total = float(mass.sum())
    if total <= 0:
        raise ParameterError("training weights have zero total mass")
    return mass, total


def train_stump(
    sample: LabeledSample, T: Optional[Sequence[int]] = None, weights=None
) -> tuple[Hypothesis, float]:
    """Exhaustive ERM over decision stumps on the multiset ``T``.

    Candidate thresholds are ``-inf``, the midpoints between consecutive
    distinct feature values, and ``+inf``.  Ties go to the lexicographically
    smallest ``(feature, threshold, polarity)``; errors within
    ``BOUNDARY_TOL * total`` of each other count as tied.
    """
    idx = np.arange(sample.m) if T is None else np.asarray(T)
    mass, total = _multiset_weights(sample.m, idx, weights)
    live = np.flatnonzero(mass > 0)
    y = sample.labels[live]
    w = mass[live]
    pos_w = np.where(y > 0, w, 0.0)
    neg_w = np.where(y < 0, w, 0.0)
    pos_total, neg_total = pos_w.sum(), neg_w.sum()

    tol = BOUNDARY_TOL * total
    best: tuple[float, int, float, int] | None = None
    for f in range(sample.points.shape[1]):
        x = sample.points[live, f].astype(np.float64)
        values, inverse = np.unique(x, return_inverse=True)
        pos_cum = np.concatenate(([0.0], np.cumsum(np.bincount(inverse, pos_w, values.size))))
        neg_cum = np.concatenate(([0.0], np.cumsum(np.bincount(inverse, neg_w, values.size))))
        # row k: the k smallest distinct values fall at or below the threshold
        err_neg = neg_cum + (pos_total - pos_cum)  # polarity -1 predicts +1 below
        err_pos = pos_cum + (neg_total - neg_cum)  # polarity +1 predicts +1 above
        errs = np.column_stack((err_neg, err_pos)).ravel()
        flat = _first_minimum(errs, tol)
        err = float(errs[flat])
        if best is None or err < best[0] - tol:
            k, pol_slot = divmod(flat, 2)
            best = (err, f, _threshold(values, k), (-1, 1)[pol_slot])
    err, f, theta, pol = best
    return Hypothesis(Stump(f, theta, pol)), 0.5 - err / total


def _first_minimum(errs: np.ndarray, tol: float) -> int:
    return int(np.flatnonzero(errs <= errs.min() + tol)[0])


def _threshold(values: np.ndarray, k: int) -> float:
    if k == 0:
        return -math.inf
    if k == values.size:
        return math.inf
    lo, hi = float(values[k - 1]), float(values[k])
    mid = (lo + hi) / 2
    return lo if mid >= hi else mid


def train_erm(
    sample: LabeledSample, T: Sequence[int], hclass: HypothesisClass, weights=None
) -> tuple[Hypothesis, float]:
    """Empirical-error minimizer over a finite class; lowest id wins ties (to ``BOUNDARY_TOL``)."""
    if hclass is None or len(hclass) == 0:
        raise ParameterError("hypothesis class is empty")
    mass, total = _multiset_weights(sample.m, np.asarray(T), weights)
    live = np.flatnonzero(mass > 0)
    preds = hclass.predictions(sample)[:, live]
    errs = (preds != sample.labels[live]).astype(np.float64) @ mass[live]
    best = _first_minimum(errs, BOUNDARY_TOL * total)
    return hclass.hypotheses[best], 0.5 - float(errs[best]) / total


@dataclass(frozen=True)
class WeakLearnerSpec:
    """Which learner the booster calls, and the advantage the caller assumes."""

    kind: Literal["stump", "erm"]
    gamma_target: float
    hclass: Optional[HypothesisClass] = None

    def __post_init__(self) -> None:
        if self.kind not in ("stump", "erm"):
            raise ParameterError(f"unknown weak learner kind {self.kind!r}")
        if not 0 < self.gamma_target < 0.5:
            raise ParameterError("gamma_target must lie in (0, 1/2)")
        if self.kind == "erm" and (self.hclass is None or len(self.hclass) == 0):
            raise ParameterError("ERM needs a non-empty hypothesis class")

    def train(self, sample: LabeledSample, T, weights=None) -> tuple[Hypothesis, float]:
        if self.kind == "stump":
            return train_stump(sample, T, weights)
        return train_erm(sample, T, self.hclass, weights)

    def vc_dimension(self, sample: LabeledSample) -> float:
        """Reported VC-dimension proxy.

        Finite classes: ``log2 |H|``.  Stumps: ``log2`` of the number of
        distinct labelings stumps can induce on the sample,
        ``2 F (m - 1) + 2``.
        """
        if self.kind == "erm":
            return self.hclass.vc_proxy
        features = sample.points.shape[1]
        return max(1.0, math.log2(2 * features * max(sample.m - 1, 0) + 2))


# ---------------------------------------------------------------------------
# Planted-vote instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PlantedVoteInstance:
    sample: LabeledSample
    hclass: HypothesisClass
    voter_ids: np.ndarray
    vote_weights: np.ndarray
    gamma_star: float
    planted_margin: float

    def vote(self) -> np.ndarray:
        """Convex vote ``sum_i w_i h_i(x)`` at every point."""
        return self.vote_weights @ self.hclass.tables[self.voter_ids].astype(np.float64)

    def weak_learner(self, gamma: Optional[float] = None) -> WeakLearnerSpec:
        return WeakLearnerSpec("erm", self.gamma_star / 2 if gamma is None else gamma, self.hclass)


def plant_vote_instance(
    m: int,
    class_size: int,
    voters: int,
    gamma_star: float,
    seed: int,
    max_retries: int = 10_000,
    concentration: float = 1.0,
) -> PlantedVoteInstance:
    """Random tables whose convex vote labels every point with margin >= ``gamma_star``.

    For any distribution D the vote gives ``sum_i w_i E_D[c h_i] >= gamma_star``,
    so some member has loss at most ``1/2 - gamma_star/2`` and ERM over the
    class is a ``gamma_star/2``-weak learner.  Vote weights are drawn from a
    symmetric Dirichlet with the given ``concentration``; large values spread
    the weight evenly so that no single voter decides the labels.
    """
    if m <= 0 or class_size <= 0:
        raise ParameterError("m and class_size must be positive")
    if not 1 <= voters <= class_size:
        raise ParameterError("need 1 <= voters <= class_size")
    if not 0 < gamma_star <= 1:
        raise ParameterError("gamma_star must lie in (0, 1]")
    if concentration <= 0:
        raise ParameterError("concentration must be positive")
    rng = np.random.default_rng(seed)
    tables = rng.choice(np.array([-1, 1], dtype=np.int8), size=(class_size, m))
    voter_ids = np.sort(rng.choice(class_size, size=voters, replace=False))
    w = rng.dirichlet(np.full(voters, concentration)) if voters > 1 else np.ones(1)

    bad = np.flatnonzero(np.abs(w @ tables[voter_ids]) < gamma_star - BOUNDARY_TOL)
    attempts = 0
    while bad.size:
        attempts += 1
        if attempts > max_retries:
            raise ConstructionError(
                f"{bad.size} points still have vote margin below {gamma_star} after "
                f"{max_retries} resamples; gamma_star is too large for {voters} voters"
            )
        tables[:, bad] = rng.choice(np.array([-1, 1], dtype=np.int8), size=(class_size, bad.size))
        votes = w @ tables[np.ix_(voter_ids, bad)]
        bad = bad[np.abs(votes) < gamma_star - BOUNDARY_TOL]

    vote = w @ tables[voter_ids].astype(np.float64)
    labels = np.where(vote > 0, 1, -1).astype(np.int8)
    return PlantedVoteInstance(
        sample=LabeledSample.indexed(labels),
        hclass=HypothesisClass(tables),
        voter_ids=voter_ids,
        vote_weights=w,
        gamma_star=float(gamma_star),
        planted_margin=float(np.abs(vote).min()),
    )

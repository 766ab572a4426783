"""Domain types shared by the booster, the diagnostics and the adversary.

Conventions used throughout the package:

* labels and predictions are ``int8`` arrays with values in ``{-1, +1}``;
* a training set is a :class:`LabeledSample` whose ``points`` array has
  shape ``(m, f)``; extensional instances (tables over a finite domain)
  store the domain index of each point in a single integer column;
* stumps predict ``polarity`` when ``x[feature] > threshold`` and
  ``-polarity`` otherwise, so a point sitting exactly on the threshold
  gets ``-polarity``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import (
    DegenerateClassifierError,
    EvaluationError,
    NumericalError,
    ParameterError,
)

#: Slack applied to inclusive comparisons such as ``loss <= 1/2 - gamma/2``.
BOUNDARY_TOL = 1e-12

#: Allowed deviation of a normalized distribution's total mass from one.
MASS_TOL = 1e-9


def as_labels(values: Iterable[int] | np.ndarray) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ParameterError(f"labels must be one-dimensional, got shape {arr.shape}")
    if not np.all((arr == 1) | (arr == -1)):
        raise ParameterError("labels must take values in {-1, +1}")
    return arr.astype(np.int8)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WeightDistribution:
    """A probability vector over training indices ``0..m-1``."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ParameterError("a distribution needs a non-empty 1-D weight vector")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ParameterError("weights must be finite and non-negative")
        total = float(w.sum())
        if abs(total - 1.0) > MASS_TOL:
            raise ParameterError(f"weights sum to {total!r}, expected 1")
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def uniform(cls, m: int) -> "WeightDistribution":
        if m <= 0:
            raise ParameterError("m must be positive")
        return cls(np.full(m, 1.0 / m))

    @classmethod
    def from_weights(cls, weights: Sequence[float] | np.ndarray) -> "WeightDistribution":
        """Normalize arbitrary non-negative weights into a distribution."""
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ParameterError("weights must be a non-empty vector of finite non-negative reals")
        total = w.sum()
        if total <= 0:
            raise ParameterError("weights must have positive total mass")
        return cls(w / total)

    @classmethod
    def point_mass(cls, m: int, i: int) -> "WeightDistribution":
        w = np.zeros(m)
        w[i] = 1.0
        return cls(w)

    @property
    def support(self) -> np.ndarray:
        """Boolean mask of the indices carrying positive weight."""
        return self.weights > 0

    @property
    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    def __len__(self) -> int:
        return self.weights.size

    def __array__(self, dtype=None, copy=None):
        return self.weights if dtype is None else self.weights.astype(dtype)


def as_weights(D: Union[WeightDistribution, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(D, WeightDistribution):
        return D.weights
    return np.asarray(D, dtype=np.float64)


# ---------------------------------------------------------------------------
# Samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """Training set ``S = ((x_1, c(x_1)), ..., (x_m, c(x_m)))``."""

    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2:
            raise ParameterError("points must be a 2-D array (m, features)")
        labels = as_labels(self.labels)
        if labels.size == 0 or labels.size != pts.shape[0]:
            raise ParameterError(
                f"need m > 0 points with one label each, got {pts.shape[0]} points "
                f"and {labels.size} labels"
            )
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "labels", _frozen(labels))

    @classmethod
    def indexed(cls, labels: Sequence[int] | np.ndarray) -> "LabeledSample":
        """Extensional sample whose i-th point is the domain element ``i``."""
        labels = as_labels(labels)
        return cls(np.arange(labels.size, dtype=np.int64).reshape(-1, 1), labels)

    @property
    def m(self) -> int:
        return int(self.labels.size)

    def __len__(self) -> int:
        return self.m


# ---------------------------------------------------------------------------
# Hypotheses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    polarity: int = 1

    def __post_init__(self) -> None:
        if self.polarity not in (-1, 1):
            raise ParameterError("stump polarity must be -1 or +1")
        if self.feature < 0:
            raise ParameterError("feature index must be non-negative")

    def predict(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(1, -1)
        if self.feature >= pts.shape[1]:
            raise EvaluationError(
                f"stump reads feature {self.feature} but points have {pts.shape[1]} features"
            )
        above = pts[:, self.feature] > self.threshold
        return np.where(above, self.polarity, -self.polarity).astype(np.int8)

    @property
    def key(self) -> tuple:
        return ("stump", self.feature, float(self.threshold), self.polarity)


@dataclass(frozen=True, eq=False)
class Table:
    """Extensional hypothesis: an explicit prediction for every domain element."""

    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _frozen(as_labels(self.values)))

    def predict(self, points: np.ndarray) -> np.ndarray:
        idx = np.asarray(points)
        if idx.ndim == 2:
            idx = idx[:, 0]
        idx = np.atleast_1d(idx).astype(np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.values.size):
            raise EvaluationError(f"table over {self.values.size} elements indexed out of range")
        return self.values[idx]

    @property
    def key(self) -> tuple:
        return ("table", hashlib.sha1(self.values.tobytes()).hexdigest())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Table) and np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.key)


Body = Union[Stump, Table]


@dataclass(frozen=True)
class Hypothesis:
    """A ``{-1, +1}``-valued predictor, optionally negated."""

    body: Body
    negated: bool = False

    def predict(self, points: np.ndarray) -> np.ndarray:
        out = self.body.predict(points)
        return -out if self.negated else out

    def __call__(self, x) -> int:
        return evaluate(self, x)

    def __neg__(self) -> "Hypothesis":
        return Hypothesis(self.body, not self.negated)

    @property
    def key(self) -> tuple:
        return self.body.key + (self.negated,)


def evaluate(h: Hypothesis, x) -> int:
    """Evaluate ``h`` on a single point (a feature vector, or a domain index for tables)."""
    if isinstance(h.body, Table):
        pts = np.asarray([int(np.asarray(x).reshape(-1)[0])])
    else:
        pts = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return int(h.predict(pts)[0])


def weighted_loss(h: Hypothesis | np.ndarray, D, sample: LabeledSample) -> float:
    """``Pr_{i ~ D}[h(x_i) != c(x_i)]``.

    ``h`` may also be a precomputed prediction vector over the sample.
    """
    w = as_weights(D)
    preds = h.predict(sample.points) if isinstance(h, Hypothesis) else np.asarray(h)
    if w.size != sample.m or preds.size != sample.m:
        raise ParameterError(
            f"distribution over {w.size} points, sample of {sample.m}, predictions for {preds.size}"
        )
    return float(w[preds != sample.labels].sum())


def advantage(h: Hypothesis | np.ndarray, D, sample: LabeledSample) -> float:
    return 0.5 - weighted_loss(h, D, sample)


def learning_rate(gamma: float) -> float:
    """Fixed step size ``(1/2) ln((1/2 + gamma/2) / (1/2 - gamma/2))``; always in ``(0, 2 gamma)``."""
    if not (0.0 < gamma < 0.5):
        raise ParameterError(f"gamma must lie in (0, 1/2), got {gamma!r}")
    return 0.5 * math.log((0.5 + gamma / 2) / (0.5 - gamma / 2))


# ---------------------------------------------------------------------------
# Voting classifiers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearClassifier:
    """``g(x) = sum_j alpha_j h_j(x) / sum_j alpha_j``; the voting classifier is ``sign(g)``.

    ``sign(0)`` is taken to be ``+1``; correctness in the margin sense still
    requires a strictly positive margin.
    """

    terms: tuple[tuple[float, Hypothesis], ...] = ()
    degenerate_run: bool = False

    def __post_init__(self) -> None:
        terms = tuple((float(a), h) for a, h in self.terms)
        if any(a < 0 or not math.isfinite(a) for a, _ in terms):
            raise ParameterError("voting weights must be finite and non-negative")
        object.__setattr__(self, "terms", terms)

    @property
    def normalizer(self) -> float:
        return math.fsum(a for a, _ in self.terms)

    @property
    def degenerate(self) -> bool:
        return self.normalizer <= 0

    def decision(self, points: np.ndarray) -> np.ndarray:
        total = self.normalizer
        if total <= 0:
            raise DegenerateClassifierError("all voting weights are zero")
        pts = np.asarray(points)
        acc = np.zeros(pts.shape[0] if pts.ndim > 1 else pts.size, dtype=np.float64)
        for a, h in self.terms:
            if a:
                acc += a * h.predict(pts)
        return acc / total

    def predict(self, points: np.ndarray) -> np.ndarray:
        return np.where(self.decision(points) >= 0, 1, -1).astype(np.int8)


def margins(g: LinearClassifier, sample: LabeledSample) -> np.ndarray:
    """Per-point margins ``c(x) g(x)``, each in ``[-1, 1]``."""
    return sample.labels * g.decision(sample.points)


def min_margin(g: LinearClassifier, sample: LabeledSample) -> float:
    return float(margins(g, sample).min())


# ---------------------------------------------------------------------------
# Boosting trace
# ---------------------------------------------------------------------------


@dataclass
class StepRecord:
    step: int  # 1-based index l
    round: int  # k
    sub_round: int  # r, 1-based
    alpha: float
    z: float
    hypothesis_id: int
    negated: bool
    accepted: bool
    pool_best_advantage: float


@dataclass
class BoostTrace:
    """Complete record of one run of the parallel booster.

    Steps and distributions are 1-indexed the way the algorithm writes them:
    ``distribution(1)`` is the uniform start and ``distribution(pR + 1)`` the
    final reweighting.
    """

    params: dict
    labels: np.ndarray
    steps: list[StepRecord] = field(default_factory=list)
    hypotheses: list[Hypothesis] = field(default_factory=list)
    chosen_predictions: list[np.ndarray] = field(default_factory=list)
    snapshots: list[np.ndarray] | None = field(default_factory=list)
    weak_calls: int = 0
    weak_shortfalls: int = 0
    phase_seconds: dict = field(default_factory=dict)
    _ids: dict = field(default_factory=dict, repr=False)

    # -- building -----------------------------------------------------------

    def register(self, h: Hypothesis) -> tuple[int, bool]:
        """Deduplicate ``h`` by its un-negated body; returns ``(id, negated)``."""
        key = h.body.key
        if key not in self._ids:
            self._ids[key] = len(self.hypotheses)
            self.hypotheses.append(Hypothesis(h.body))
        return self._ids[key], h.negated

    # -- accessors ----------------------------------------------------------

    @property
    def gamma(self) -> float:
        return float(self.params["gamma"])

    @property
    def R(self) -> int:
        return int(self.params["R"])

    @property
    def p(self) -> int:
        return int(self.params["p"])

    @property
    def m(self) -> int:
        return int(self.labels.size)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([s.alpha for s in self.steps], dtype=np.float64)

    @property
    def zs(self) -> np.ndarray:
        return np.array([s.z for s in self.steps], dtype=np.float64)

    @property
    def predictions(self) -> np.ndarray:
        """``(pR, m)`` matrix with ``h_l(x_i)`` in row ``l - 1``."""
        if not self.chosen_predictions:
            return np.zeros((0, self.m), dtype=np.int8)
        return np.vstack(self.chosen_predictions)

    def chosen(self, step: int) -> Hypothesis:
        rec = self.steps[step - 1]
        h = self.hypotheses[rec.hypothesis_id]
        return -h if rec.negated else h

    def distribution(self, ell: int) -> np.ndarray:
        """``D_ell`` for ``1 <= ell <= pR + 1``.

        Without stored snapshots the distribution is replayed from the
        recorded steps, which reproduces the stored values bit for bit.
        """
        if not 1 <= ell <= len(self.steps) + 1:
            raise ParameterError(f"distribution index {ell} outside 1..{len(self.steps) + 1}")
        if self.snapshots:
            return self.snapshots[ell - 1]
        w = np.full(self.m, 1.0 / self.m)
        for j in range(ell - 1):
            w, _ = reweight(w, self.chosen_predictions[j] * self.labels, self.steps[j].alpha)
        return w

    def round_steps(self, k: int) -> range:
        """1-based step indices ``kR + 1 .. kR + R`` of round ``k``."""
        return range(k * self.R + 1, k * self.R + self.R + 1)

    def round_z_products(self) -> np.ndarray:
        zs = self.zs
        return np.array([np.prod(zs[k * self.R:(k + 1) * self.R]) for k in range(len(zs) // self.R)])

    def exp_loss(self) -> float:
        """``sum_i exp(-c(x_i) sum_j alpha_j h_j(x_i))`` from the recorded votes."""
        return float(np.exp(self.log_exp_terms()).sum())

    def log_exp_terms(self) -> np.ndarray:
        if not self.steps:
            return np.zeros(self.m)
        vote = self.alphas @ self.predictions.astype(np.float64)
        return -(self.labels * vote)

    def log_z_product(self) -> float:
        return math.fsum(math.log(z) for z in self.zs)


def reweight(weights: np.ndarray, agreement: np.ndarray, alpha: float) -> tuple[np.ndarray, float]:
    """One exponential reweighting: returns ``(D', Z)`` with ``D' = D exp(-alpha c h) / Z``.

    ``agreement`` is ``c(x_i) h(x_i)`` per point.  ``alpha == 0`` returns the
    input untouched and ``Z == 1`` exactly.
    """
    if alpha == 0:
        return weights, 1.0
    unnorm = weights * np.exp(-alpha * agreement)
    z = float(unnorm.sum())
    if not z > 0 or not math.isfinite(z):
        raise NumericalError(f"normalization factor Z = {z!r}")
    new = unnorm / z
    if np.count_nonzero(new) != np.count_nonzero(weights):
        raise NumericalError("a weight underflowed to zero; the support must not change")
    return new, z

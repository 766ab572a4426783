"""Bagging machinery: epsilon-approximations and weighted subsampling.

A multiset T of training indices is an epsilon-approximation for D when every
hypothesis in the class has ``|loss_D(h) - loss_T(h)| <= epsilon``, where
``loss_T`` is the loss under the uniform distribution over T counted with
multiplicity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .core import BOUNDARY_TOL, Hypothesis, LabeledSample, as_weights
from .errors import AbsoluteContinuityError, ParameterError
from .weak import HypothesisClass

HypothesisSet = Union[HypothesisClass, Sequence[Hypothesis], np.ndarray]


@dataclass(frozen=True)
class ApproxConfig:
    epsilon: float
    n: int
    c_n: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.epsilon <= 1:
            raise ParameterError("epsilon must lie in (0, 1]")
        if self.n < 1:
            raise ParameterError("subsample size must be at least 1")
        if self.c_n < 1:
            raise ParameterError("C_n must be >= 1")


@dataclass(frozen=True)
class ApproxRate:
    rate: float
    half_width: float
    trials: int


def mistake_matrix(hclass: HypothesisSet, sample: LabeledSample) -> np.ndarray:
    """``(K, m)`` boolean matrix: ``[k, i]`` is true when hypothesis k errs on point i."""
    if isinstance(hclass, HypothesisClass):
        preds = hclass.predictions(sample)
    elif isinstance(hclass, np.ndarray):
        preds = np.atleast_2d(hclass)
    else:
        if len(hclass) == 0:
            raise ParameterError("hypothesis class is empty")
        preds = np.stack([h.predict(sample.points) for h in hclass])
    if preds.shape[1] != sample.m:
        raise ParameterError("predictions do not cover the sample")
    return preds != sample.labels


def max_deviation(T, D, hclass: HypothesisSet, sample: LabeledSample) -> float:
    """``max_h |loss_D(h) - loss_T(h)|``."""
    T = np.asarray(T, dtype=np.int64).reshape(-1)
    if T.size == 0:
        raise ParameterError("T must be non-empty")
    if T.min() < 0 or T.max() >= sample.m:
        raise ParameterError(f"indices in T must lie in [0, {sample.m})")
    w = as_weights(D)
    if w.size != sample.m:
        raise ParameterError("distribution and sample sizes differ")
    mistakes = mistake_matrix(hclass, sample).astype(np.float64)
    counts = np.bincount(T, minlength=sample.m).astype(np.float64)
    loss_T = mistakes @ counts / T.size
    loss_D = mistakes @ w
    return float(np.abs(loss_D - loss_T).max())


def is_eps_approximation(T, D, hclass: HypothesisSet, sample: LabeledSample, epsilon: float) -> bool:
    return max_deviation(T, D, hclass, sample) <= epsilon + BOUNDARY_TOL


def subsample_size(d: float, gamma: float, c_n: float = 1.0) -> int:
    """``ceil(C_n d / gamma^2)``."""
    if d < 1:
        raise ParameterError("d must be >= 1")
    if not 0 < gamma < 0.5:
        raise ParameterError("gamma must lie in (0, 1/2)")
    if c_n < 1:
        raise ParameterError("C_n must be >= 1")
    x = c_n * d / gamma**2
    nearest = round(x)
    # 4 / 0.2**2 evaluates to 99.99999999999997; do not let rounding noise move the ceiling
    if abs(x - nearest) <= 1e-9 * max(1.0, x):
        return int(nearest)
    return int(math.ceil(x))


def draw_subsample(D, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. draws from D by inverse-CDF lookup; never returns a zero-weight index."""
    if n <= 0:
        raise ParameterError("subsample size must be positive")
    w = as_weights(D)
    cdf = np.cumsum(w)
    u = rng.random(n) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    # u can only reach cdf[-1] through rounding; map it to the last supported index
    last = int(np.flatnonzero(w > 0)[-1])
    return np.minimum(idx, last)


def _same_support(P: np.ndarray, Q: np.ndarray) -> bool:
    return P.shape == Q.shape and bool(np.array_equal(P > 0, Q > 0))


def empirical_approx_rate(
    D_target,
    D_source,
    hclass: HypothesisSet,
    sample: LabeledSample,
    n: int,
    epsilon: float,
    trials: int,
    seed: int,
) -> ApproxRate:
    """Monte-Carlo estimate of ``Pr_{T ~ D_source^n}[T is an epsilon-approximation for D_target]``.

    The half-width is the normal-approximation 95% interval.
    """
    target, source = as_weights(D_target), as_weights(D_source)
    if not _same_support(target, source):
        raise AbsoluteContinuityError("target and source distributions must share their support")
    if trials < 1:
        raise ParameterError("need at least one trial")
    mistakes = mistake_matrix(hclass, sample).astype(np.float64)
    loss_target = mistakes @ target
    rng = np.random.default_rng(seed)
    hits = 0
    chunk = max(1, min(trials, 2_000_000 // max(n, 1)))
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        draws = draw_subsample(source, n * size, rng).reshape(size, n)
        offsets = (np.arange(size) * sample.m)[:, None]
        counts = np.bincount((draws + offsets).ravel(), minlength=size * sample.m)
        counts = counts.reshape(size, sample.m).astype(np.float64)
        loss_T = counts @ mistakes.T / n
        dev = np.abs(loss_T - loss_target).max(axis=1)
        hits += int(np.count_nonzero(dev <= epsilon + BOUNDARY_TOL))
        done += size
    rate = hits / trials
    return ApproxRate(rate, 1.96 * math.sqrt(rate * (1 - rate) / trials), trials)


def lowkl_floor(d: float, R: int, c_n: float = 1.0) -> float:
    """Success-probability floor ``exp(-16 C_n d R)`` for a single subsample."""
    return math.exp(-16 * c_n * d * R)


"""Divergence tools and exact identities checked against a :class:`BoostTrace`.

All logarithms are natural.  ``0 ln(0/q) = 0``; positive mass of P on a zero
of Q is an error, never an infinity.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .core import BoostTrace, as_weights
from .errors import AbsoluteContinuityError, DiagnosticFailure, ParameterError

DUALITY_TOL = 1e-10
IDENTITY_TOL = 1e-8


def _pair(P, Q) -> tuple[np.ndarray, np.ndarray]:
    p, q = as_weights(P), as_weights(Q)
    if p.shape != q.shape or p.ndim != 1:
        raise ParameterError(f"distributions have shapes {p.shape} and {q.shape}")
    return p, q


def kl_divergence(P, Q) -> float:
    """``KL(P || Q) = sum_x P(x) ln(P(x) / Q(x))``; requires P << Q."""
    p, q = _pair(P, Q)
    mask = p > 0
    if np.any(q[mask] <= 0):
        raise AbsoluteContinuityError("P has mass where Q has none")
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def max_divergence(P, Q) -> float:
    """``ln sup_x P(x) / Q(x)`` over a common support."""
    p, q = _pair(P, Q)
    if not np.array_equal(p > 0, q > 0):
        raise AbsoluteContinuityError("P and Q must have the same support")
    mask = p > 0
    return float(np.log(np.max(p[mask] / q[mask])))


class DualityCertificate(NamedTuple):
    lhs: float
    rhs: float
    slack: float


def duality_certificate(P, Q, X) -> DualityCertificate:
    """``ln E_P[e^X] >= E_Q[X] - KL(Q || P)``; raises if the slack drops below ``-1e-10``."""
    p, q = _pair(P, Q)
    x = np.asarray(X, dtype=np.float64)
    if x.shape != p.shape:
        raise ParameterError("X must have one value per outcome")
    if not np.array_equal(p > 0, q > 0):
        raise AbsoluteContinuityError("P and Q must have the same support")
    mask = p > 0
    xs = x[mask]
    top = xs.max()
    lhs = float(top + np.log(np.sum(p[mask] * np.exp(xs - top))))
    rhs = float(np.sum(q[mask] * xs)) - kl_divergence(q, p)
    cert = DualityCertificate(lhs, rhs, lhs - rhs)
    if cert.slack < -DUALITY_TOL:
        raise DiagnosticFailure(f"duality formula violated: slack {cert.slack!r}")
    return cert


def duality_slack_batch(P: np.ndarray, Q: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Row-wise slack for strictly positive ``(N, k)`` batches of P, Q and X."""
    P, Q, X = (np.asarray(a, dtype=np.float64) for a in (P, Q, X))
    if np.any(P <= 0) or np.any(Q <= 0):
        raise AbsoluteContinuityError("batched certificates need full-support distributions")
    top = X.max(axis=1, keepdims=True)
    lhs = top[:, 0] + np.log(np.sum(P * np.exp(X - top), axis=1))
    kl_qp = np.sum(Q * np.log(Q / P), axis=1)
    rhs = np.sum(Q * X, axis=1) - kl_qp
    return lhs - rhs


# ---------------------------------------------------------------------------
# Trace identities
# ---------------------------------------------------------------------------


def _check_position(trace: BoostTrace, k: int, r_prime: int) -> None:
    if not 0 <= k < len(trace.steps) // trace.R:
        raise ParameterError(f"round {k} is not in the trace")
    if not 1 <= r_prime <= trace.R:
        raise ParameterError(f"step {r_prime} must lie in 1..{trace.R}")
    if trace.snapshots is not None and len(trace.snapshots) < len(trace.steps) + 1:
        raise ParameterError("trace is missing distribution snapshots")


def _round_terms(trace: BoostTrace, k: int, r_prime: int):
    """KL to round start and the two pieces of its decomposition at ``D_{kR+R'}``."""
    _check_position(trace, k, r_prime)
    base = k * trace.R
    d_start = trace.distribution(base + 1)
    d_now = trace.distribution(base + r_prime)
    kl = kl_divergence(d_now, d_start)
    earlier = [trace.steps[base + r - 1] for r in range(1, r_prime)]
    neg_log_z = -math.fsum(math.log(s.z) for s in earlier)
    corr = [float(np.dot(d_now, trace.labels * trace.chosen_predictions[s.step - 1])) for s in earlier]
    weighted = math.fsum(s.alpha * c for s, c in zip(earlier, corr))
    return kl, neg_log_z, weighted, earlier, corr


def telescoping_residual(trace: BoostTrace, k: int, r_prime: int) -> float:
    """``KL(D_{kR+R'} || D_{kR+1}) - [-ln prod_{r<R'} Z_r - sum_{r<R'} alpha_r E_{D_{kR+R'}}[c h_r]]``."""
    kl, neg_log_z, weighted, _, _ = _round_terms(trace, k, r_prime)
    return kl - (neg_log_z - weighted)


class Trichotomy(str, enum.Enum):
    LOW_KL = "LOW_KL"
    PROGRESS = "PROGRESS"
    NEGATION_ADVANTAGE = "NEGATION_ADVANTAGE"


def classify_trichotomy(
    trace: BoostTrace, k: int, r_prime: int, threshold: Optional[float] = None
) -> Trichotomy:
    """Which branch of the round analysis applies at step ``kR + R'``.

    * ``LOW_KL``: ``KL(D_{kR+R'} || D_{kR+1}) <= threshold`` (default ``4 gamma^2 R``);
    * ``PROGRESS``: otherwise, if ``-ln prod_{r<R'} Z_r > threshold / 2``;
    * ``NEGATION_ADVANTAGE``: otherwise.  Some negated earlier hypothesis
      must then have advantage above ``gamma/2`` on ``D_{kR+R'}``; if none
      does, :class:`DiagnosticFailure` is raised.
    """
    gamma, R = trace.gamma, trace.R
    if threshold is None:
        threshold = 4 * gamma**2 * R
    kl, neg_log_z, _, earlier, corr = _round_terms(trace, k, r_prime)
    if kl <= threshold:
        return Trichotomy.LOW_KL
    if neg_log_z > threshold / 2:
        return Trichotomy.PROGRESS
    # advantage of -h is -corr(h)/2
    best = max((-c / 2 for s, c in zip(earlier, corr) if s.alpha != 0), default=-math.inf)
    if not best > gamma / 2:
        raise DiagnosticFailure(
            f"round {k}, step {r_prime}: KL {kl:.6g} > {threshold:.6g} and little Z-progress, "
            f"but the best negated hypothesis only has advantage {best:.6g}"
        )
    return Trichotomy.NEGATION_ADVANTAGE


@dataclass
class KLReport:
    kl_to_round_start: list[float] = field(default_factory=list)
    max_div_forward: list[float] = field(default_factory=list)
    max_div_backward: list[float] = field(default_factory=list)
    labels: list[Trichotomy] = field(default_factory=list)
    round_residuals: list[float] = field(default_factory=list)

    def label_counts(self) -> dict[str, int]:
        return {t.value: sum(lab is t for lab in self.labels) for t in Trichotomy}

    @property
    def max_residual(self) -> float:
        return max(self.round_residuals, default=0.0)


def kl_report(trace: BoostTrace) -> KLReport:
    """Per-step divergences from the round start, residuals and trichotomy labels.

    Entry ``l - 1`` of the per-step lists describes ``D_l``, the distribution
    step ``l`` is evaluated on.
    """
    report = KLReport()
    R = trace.R
    for k in range(len(trace.steps) // R):
        start = trace.distribution(k * R + 1)
        worst = 0.0
        for r in range(1, R + 1):
            now = trace.distribution(k * R + r)
            report.kl_to_round_start.append(kl_divergence(now, start))
            report.max_div_forward.append(max_divergence(now, start))
            report.max_div_backward.append(max_divergence(start, now))
            report.labels.append(classify_trichotomy(trace, k, r))
            worst = max(worst, abs(telescoping_residual(trace, k, r)))
        report.round_residuals.append(worst)
    return report

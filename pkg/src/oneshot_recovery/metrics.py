"""Recovery scores and empirical rate fits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import stats


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreRecord:
    cosine: float
    l2_to_mux: float
    l2_to_projected_target: Optional[float] = None


def cosine_similarity(x, v):
    """``<x, v / ||v||>`` for a unit ground truth ``x``."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise MetricError("cosine similarity is undefined for a zero estimate")
    return float(np.dot(x, v) / norm)


def error_to_scaled_target(v, x, mu):
    return float(np.linalg.norm(np.asarray(v, dtype=float) - mu * np.asarray(x, dtype=float)))


def score(x, v, mu, projected_target=None):
    """Score one estimate; ``projected_target`` is ``P_G(mu x)`` under representation error."""
    extra = None
    if projected_target is not None:
        extra = float(np.linalg.norm(np.asarray(v) - projected_target))
    return ScoreRecord(cosine_similarity(x, v), error_to_scaled_target(v, x, mu), extra)


def restart_cosines(x, estimates):
    """Cosine of every nonzero restart estimate (rows of ``estimates``)."""
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    norms = np.linalg.norm(estimates, axis=1)
    keep = norms > 0
    return (estimates[keep] @ x) / norms[keep]


class RateFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float


def fit_rate_slope(points):
    """Least squares line through ``(log m, log err)``.

    ``points`` is a sequence of ``(m, err)`` pairs with at least three
    distinct ``m`` and positive errors.
    """
    pts = [(float(m), float(err)) for m, err in points]
    if len(pts) < 3:
        raise MetricError("need at least 3 points to fit a rate")
    ms = np.array([p[0] for p in pts])
    errs = np.array([p[1] for p in pts])
    if len(np.unique(ms)) != len(ms):
        raise MetricError("sample sizes must be distinct")
    if np.any(ms <= 0) or np.any(errs <= 0) or not np.all(np.isfinite(errs)):
        raise MetricError("sample sizes and errors must be positive and finite")
    fit = stats.linregress(np.log(ms), np.log(errs))
    r_squared = fit.rvalue**2 if np.ptp(np.log(errs)) > 0 else 1.0
    return RateFit(float(fit.slope), float(fit.intercept), float(r_squared), float(fit.stderr))

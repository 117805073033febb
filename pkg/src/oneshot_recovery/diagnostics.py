"""Monte Carlo checks of the concentration facts behind the one-shot estimator.

Each check draws independent ensembles (trial ``j`` uses the key
``derive_seed(seed, j)``), compares an empirical frequency with its
theoretical bound and only declares a failure when the gap exceeds three
binomial standard errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .estimators import one_shot
from .generators import LinearGenerator
from .observation import apply_bounded_corruption, best_sim_parameters, sample_ensemble
from .projection import ProjectionConfig, project
from .seeding import derive_seed

DEFAULT_DELTA = 0.01


class DiagnosticsError(ValueError):
    pass


@dataclass(frozen=True)
class DiagnosticsConfig:
    trials: int = 1000
    m: int = 200
    t: float = 1.0
    epsilon: float = 2.0
    delta: float = DEFAULT_DELTA
    probe_s: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.trials < 30:
            raise DiagnosticsError(f"need at least 30 trials, got {self.trials}")
        if self.m < 1:
            raise DiagnosticsError("m must be positive")
        for name in ("t", "epsilon", "delta"):
            if not getattr(self, name) > 0:
                raise DiagnosticsError(f"{name} must be positive")


@dataclass(frozen=True)
class FrequencyCheck:
    frequency: float
    bound: float
    stderr: float
    trials: int
    passed: bool


def binomial_se(p, trials):
    p = min(max(p, 0.0), 1.0)
    return math.sqrt(p * (1.0 - p) / trials)


def _check_trials(trials):
    if trials < 30:
        raise DiagnosticsError(f"need at least 30 trials, got {trials}")


def _trial_ensembles(model, x, m, trials, seed):
    for j in range(trials):
        yield sample_ensemble(x, m, model, derive_seed(seed, j))


def event_E_frequency(model, x, m, trials, seed, params=None):
    """Frequency of ``mean(y^2) <= 2 xi^2`` against ``1 - theta^4 / (m xi^4)``."""
    _check_trials(trials)
    params = params or best_sim_parameters(model)
    hits = 0
    for ens in _trial_ensembles(model, x, m, trials, seed):
        hits += np.mean(ens.y**2) <= 2.0 * params.xi_sq
    frequency = hits / trials
    bound = 1.0 - params.theta_4 / (m * params.xi_sq**2)
    se = binomial_se(bound, trials)
    return FrequencyCheck(frequency, bound, se, trials, bool(frequency >= bound - 3.0 * se))


def mu_hat_concentration(model, x, m, t, trials, seed, params=None):
    """Frequency of ``|mean(y_i <a_i, x>) - mu| >= t`` against ``rho^2 / (m t^2)``."""
    _check_trials(trials)
    if not t > 0:
        raise DiagnosticsError("t must be positive")
    params = params or best_sim_parameters(model)
    misses = 0
    for ens in _trial_ensembles(model, x, m, trials, seed):
        mu_hat = float(np.mean(ens.y * (ens.A @ ens.x)))
        misses += abs(mu_hat - params.mu) >= t
    frequency = misses / trials
    bound = params.rho_sq / (m * t * t)
    se = binomial_se(bound, trials)
    return FrequencyCheck(frequency, bound, se, trials, bool(frequency <= bound + 3.0 * se))


def orthogonal_projector(x):
    x = np.asarray(x, dtype=float)
    return np.eye(x.size) - np.outer(x, x)


@dataclass(frozen=True, eq=False)
class TailCheck:
    tail_frequency: float
    gaussian_prediction: float
    reference_tail: float
    threshold: float
    stderr: float
    statistics: np.ndarray
    passed: bool
    within_reference: bool


def orthogonal_tail(model, x, s, m, epsilon, trials, seed, params=None):
    """Exceedance of ``|mean(y_i <P_perp a_i, s>)| > xi ||s|| sqrt(eps / m)``.

    Given ``y`` the statistic is exactly ``N(0, (||s||^2 - <x,s>^2) sum(y^2) / m^2)``;
    ``gaussian_prediction`` averages that conditional two-sided tail over the
    trials. ``reference_tail`` is ``2 (1 - Phi(sqrt(eps)))``, the tail when
    ``s`` is orthogonal to ``x`` and ``mean(y^2) = xi^2``.
    """
    _check_trials(trials)
    s = np.asarray(s, dtype=float)
    if not np.any(s):
        raise DiagnosticsError("probe direction must be nonzero")
    params = params or best_sim_parameters(model)
    proj = orthogonal_projector(x)
    direction = proj @ s
    threshold = params.xi * np.linalg.norm(s) * math.sqrt(epsilon / m)
    orth_sq = max(float(s @ s - (np.dot(x, s)) ** 2), 0.0)
    values = np.empty(trials)
    predictions = np.empty(trials)
    for j, ens in enumerate(_trial_ensembles(model, x, m, trials, seed)):
        values[j] = ens.y @ (ens.A @ direction) / m
        sd = math.sqrt(orth_sq * float(ens.y @ ens.y)) / m
        predictions[j] = 2.0 * stats.norm.sf(threshold / sd) if sd > 0 else 0.0
    frequency = float(np.mean(np.abs(values) > threshold))
    prediction = float(np.mean(predictions))
    reference = float(2.0 * stats.norm.sf(math.sqrt(epsilon)))
    se = binomial_se(prediction, trials)
    return TailCheck(
        frequency,
        prediction,
        reference,
        float(threshold),
        se,
        values,
        bool(frequency <= prediction + 3.0 * se),
        bool(frequency <= reference + 3.0 * binomial_se(reference, trials)),
    )


@dataclass(frozen=True, eq=False)
class NoiseCurve:
    nu: np.ndarray
    mean_error: np.ndarray
    stderr: np.ndarray
    errors: np.ndarray
    inversions: int
    linear_coefficient: float
    curvature: float
    curvature_stderr: float
    curvature_significant: bool
    representation_error: float

    @property
    def passed(self) -> bool:
        return self.inversions <= 1 and not self.curvature_significant

    def rows(self):
        return [(float(v), float(e), float(se)) for v, e, se in zip(self.nu, self.mean_error, self.stderr)]


def corollary_noise_curve(model, gen, x, m, nu_grid, trials, seed, cfg=None, params=None, confidence=0.95):
    """Mean one-shot error ``||x_hat - mu x||`` as the corruption budget grows.

    Grid point ``i`` and trial ``j`` use a fresh ensemble keyed by
    ``derive_seed(seed, i, j)``, so the per-point means are independent. A
    quadratic is fitted to the means by weighted least squares with their
    sampling variances; the curvature counts as significantly positive when it
    exceeds its standard error times the one-sided normal quantile at
    ``confidence``.
    """
    _check_trials(trials)
    nu = np.asarray(nu_grid, dtype=float)
    if nu.size < 3 or np.any(nu < 0) or np.any(np.diff(nu) <= 0):
        raise DiagnosticsError("nu grid must be nonnegative, strictly ascending, with at least 3 values")
    params = params or best_sim_parameters(model)
    if cfg is None:
        cfg = ProjectionConfig(method="exact_linear") if isinstance(gen, LinearGenerator) else ProjectionConfig()
    errors = np.empty((trials, nu.size))
    for i, budget in enumerate(nu):
        for j in range(trials):
            ens = sample_ensemble(x, m, model, derive_seed(seed, i, j))
            estimate = one_shot(apply_bounded_corruption(ens, budget), gen, cfg).estimate
            errors[j, i] = np.linalg.norm(estimate - params.mu * ens.x)
    mean_error = errors.mean(axis=0)
    stderr = errors.std(axis=0, ddof=1) / math.sqrt(trials)
    inversions = int(np.sum(np.diff(mean_error) < 0))
    linear_coefficient = float(np.polyfit(nu, mean_error, 1)[0])

    design = np.vander(nu, 3)
    weights = 1.0 / np.maximum(stderr, 1e-300) ** 2
    normal = design.T @ (weights[:, None] * design)
    coef = np.linalg.solve(normal, design.T @ (weights * mean_error))
    curvature = float(coef[0])
    curvature_se = float(math.sqrt(np.linalg.inv(normal)[0, 0]))
    significant = bool(curvature > stats.norm.ppf(confidence) * curvature_se)

    target = params.mu * np.asarray(x, dtype=float)
    representation = float(np.linalg.norm(project(gen, target, cfg).w - target))
    return NoiseCurve(
        nu, mean_error, stderr, errors, inversions, linear_coefficient, curvature, curvature_se,
        significant, representation,
    )


def theoretical_rate(xi, k, lipschitz, radius, m, delta=DEFAULT_DELTA):
    """``xi sqrt(k log(L r / delta) / m)``, the order of the one-shot error bound."""
    m = np.asarray(m, dtype=float)
    return xi * np.sqrt(k * math.log(lipschitz * radius / delta) / m)

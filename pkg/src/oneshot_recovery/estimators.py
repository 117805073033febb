"""Signal estimators: the one-shot projection and its baselines.

``one_shot`` projects the back-projection ``A^T y / m`` onto the generator
range once. ``bipg`` and ``pgd`` iterate projected gradient steps with the
binary residual ``y - sign(A x)`` and the linear residual ``y - A x``.
``csgm`` fits the measurements through the generator in latent space and
``lasso_ista`` is a generator-free sparse baseline.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .generators import spectral_norm
from .projection import ProjectionConfig, latent_search, project

ESTIMATOR_KINDS = ("one_shot", "bipg", "pgd", "csgm", "lasso_ista")


class EstimatorError(ValueError):
    pass


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str
    projection: ProjectionConfig = ProjectionConfig()
    iterations: int = 30
    step_size: Union[float, str] = "one_over_m"
    shrinkage: float = 0.1
    ista_iters: int = 500

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise EstimatorError(f"unknown estimator kind {self.kind!r}")
        if self.kind in ("bipg", "pgd") and (int(self.iterations) != self.iterations or self.iterations < 1):
            raise EstimatorError(f"iterations must be a positive integer, got {self.iterations}")
        if self.step_size != "one_over_m" and not (
            isinstance(self.step_size, (int, float)) and self.step_size > 0
        ):
            raise EstimatorError(f"step_size must be positive or 'one_over_m', got {self.step_size!r}")
        if self.shrinkage < 0:
            raise EstimatorError(f"shrinkage must be nonnegative, got {self.shrinkage}")
        if int(self.ista_iters) != self.ista_iters or self.ista_iters < 1:
            raise EstimatorError(f"ista_iters must be a positive integer, got {self.ista_iters}")

    def resolved_step(self, m):
        return 1.0 / m if self.step_size == "one_over_m" else float(self.step_size)

    def as_dict(self):
        return {
            "kind": self.kind,
            "projection": self.projection.as_dict(),
            "iterations": self.iterations,
            "step_size": self.step_size,
            "shrinkage": self.shrinkage,
            "ista_iters": self.ista_iters,
        }


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    estimate: np.ndarray
    latent: Optional[np.ndarray]
    iterate_history: Optional[list]
    runtime_ms: float
    spec: dict
    seed: Optional[int]
    restart_estimates: np.ndarray = None
    projection_calls: int = 0
    projection_mode: str = "none"


def _check_dims(ensemble, gen):
    if gen is not None and gen.n != ensemble.n:
        raise EstimatorError(
            f"generator ambient dimension {gen.n} does not match ensemble dimension {ensemble.n}"
        )


def _history_value(x, ensemble, truth_scale, residual):
    if truth_scale is not None:
        return float(np.linalg.norm(x - truth_scale * ensemble.x))
    return float(np.linalg.norm(residual))


def one_shot(ensemble, gen, cfg=ProjectionConfig()):
    """``P_G(A^T y / m)``: a single projection of the back-projected observations."""
    _check_dims(ensemble, gen)
    start = time.perf_counter()
    s = (1.0 / ensemble.m) * (ensemble.A.T @ ensemble.y)
    proj = project(gen, s, cfg)
    return RecoveryResult(
        proj.w,
        proj.z,
        None,
        1000.0 * (time.perf_counter() - start),
        {"kind": "one_shot", "projection": cfg.as_dict()},
        ensemble.seed,
        restart_estimates=proj.restart_points,
        projection_calls=1,
        projection_mode=proj.mode,
    )


def _projected_iterations(ensemble, gen, spec, link, truth_scale):
    _check_dims(ensemble, gen)
    start = time.perf_counter()
    A, y, m = ensemble.A, ensemble.y, ensemble.m
    step = spec.resolved_step(m)
    x = np.zeros(ensemble.n)
    history = []
    proj = None
    for _ in range(spec.iterations):
        residual = y - link(A @ x)
        proj = project(gen, x + step * (A.T @ residual), spec.projection)
        x = proj.w
        history.append(_history_value(x, ensemble, truth_scale, y - link(A @ x)))
    return RecoveryResult(
        x,
        proj.z,
        history,
        1000.0 * (time.perf_counter() - start),
        spec.as_dict(),
        ensemble.seed,
        restart_estimates=proj.restart_points,
        projection_calls=spec.iterations,
        projection_mode=proj.mode,
    )


def bipg(ensemble, gen, spec=EstimatorSpec("bipg"), truth_scale=None):
    """Binary iterative projected gradient ``x <- P_G(x + lam A^T (y - sign(A x)))``.

    Starts from ``x = 0`` with ``sign(0) = 0``, so the first iterate is the
    one-shot estimate. ``truth_scale`` (usually ``mu``) switches the history
    to ``||x_t - truth_scale * x||``; otherwise it holds the residual norm.
    """
    y = ensemble.y
    if not np.all(np.isin(y, (-1.0, 0.0, 1.0))):
        raise EstimatorError("bipg needs binary observations in {-1, +1}")
    return _projected_iterations(ensemble, gen, spec, np.sign, truth_scale)


def pgd(ensemble, gen, spec=EstimatorSpec("pgd"), truth_scale=None):
    """Projected gradient ``x <- P_G(x + lam A^T (y - A x))`` from ``x = 0``."""
    return _projected_iterations(ensemble, gen, spec, lambda u: u, truth_scale)


def csgm(ensemble, gen, spec=EstimatorSpec("csgm")):
    """Latent least squares ``min ||A G(z) - y||^2`` over the ball by restarted Adam."""
    _check_dims(ensemble, gen)
    start = time.perf_counter()
    A, y = ensemble.A, ensemble.y
    cfg = spec.projection

    def objective_and_grad(z):
        w = gen.forward(z, strict=False)
        residual = w @ A.T - y
        return 0.5 * np.sum(residual**2, axis=1), gen.jacobian_vector_product(z, residual @ A, strict=False)

    best_z, best_values, index, _ = latent_search(gen, objective_and_grad, cfg)
    points = gen.forward(best_z, strict=False)
    return RecoveryResult(
        points[index],
        best_z[index],
        [float(2.0 * v) for v in best_values],
        1000.0 * (time.perf_counter() - start),
        spec.as_dict(),
        ensemble.seed,
        restart_estimates=points,
        projection_calls=0,
        projection_mode=cfg.mode,
    )


def soft_threshold(v, threshold):
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def lasso_objective(A, y, x, shrinkage):
    m = A.shape[0]
    return 0.5 / m * float(np.sum((A @ x - y) ** 2)) + shrinkage * float(np.sum(np.abs(x)))


def lasso_ista(ensemble, spec=EstimatorSpec("lasso_ista")):
    """ISTA on ``||A x - y||^2 / (2m) + shrinkage ||x||_1`` with step ``1 / L``.

    ``L = ||A||_2^2 / m`` comes from power iteration, inflated by 1e-6 so the
    step never exceeds the inverse smoothness constant; the history records
    the objective after every iteration.
    """
    start = time.perf_counter()
    A, y, m = ensemble.A, ensemble.y, ensemble.m
    lipschitz = spectral_norm(A) ** 2 / m * (1.0 + 1e-6)
    step = 1.0 / lipschitz
    x = np.zeros(ensemble.n)
    Aty = A.T @ y / m
    history = []
    for _ in range(spec.ista_iters):
        grad = A.T @ (A @ x) / m - Aty
        x = soft_threshold(x - step * grad, step * spec.shrinkage)
        history.append(lasso_objective(A, y, x, spec.shrinkage))
    return RecoveryResult(
        x,
        None,
        history,
        1000.0 * (time.perf_counter() - start),
        spec.as_dict(),
        ensemble.seed,
        restart_estimates=x[None, :],
    )


def run_estimator(spec, ensemble, gen=None, truth_scale=None):
    if spec.kind == "one_shot":
        return one_shot(ensemble, gen, spec.projection)
    if spec.kind == "bipg":
        return bipg(ensemble, gen, spec, truth_scale)
    if spec.kind == "pgd":
        return pgd(ensemble, gen, spec, truth_scale)
    if spec.kind == "csgm":
        return csgm(ensemble, gen, spec)
    return lasso_ista(ensemble, spec)

"""Projection of a vector onto the range of a generator.

For a linear generator the projection is a trust-region subproblem,
``min ||B z - s||^2`` subject to ``||z|| <= r``, solved exactly from the SVD
of ``B`` with a bisection on the Lagrange multiplier. For any generator the
latent search runs Adam on ``0.5 ||G(z) - s||^2`` from several random starts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .generators import LinearGenerator
from .seeding import make_rng

PROJECTION_METHODS = ("exact_linear", "latent_adam")


class ProjectionError(ValueError):
    pass


@dataclass(frozen=True)
class ProjectionConfig:
    steps: int = 100
    learning_rate: float = 0.1
    restarts: int = 10
    restart_seed: int = 0
    method: str = "latent_adam"
    strict: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.method not in PROJECTION_METHODS:
            raise ProjectionError(f"unknown projection method {self.method!r}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ProjectionError(f"steps must be a positive integer, got {self.steps}")
        if not self.learning_rate > 0:
            raise ProjectionError(f"learning_rate must be positive, got {self.learning_rate}")
        if int(self.restarts) != self.restarts or self.restarts < 1:
            raise ProjectionError(f"restarts must be a positive integer, got {self.restarts}")

    @property
    def mode(self) -> str:
        if self.method == "exact_linear":
            return "exact"
        return "strict" if self.strict else "unchecked"

    def as_dict(self):
        return {
            "method": self.method,
            "steps": self.steps,
            "learning_rate": self.learning_rate,
            "restarts": self.restarts,
            "restart_seed": self.restart_seed,
            "strict": self.strict,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
        }


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    w: np.ndarray
    z: np.ndarray
    objective: float
    per_restart_objectives: tuple
    restart_points: np.ndarray
    mode: str
    multiplier: float = 0.0
    diverged: tuple = field(default=())


def project_exact_linear(gen, s, bisection_iters=200):
    """Exact projection of ``s`` onto ``{B z : ||z|| <= r}``.

    Uses the minimum-norm least-squares solution when it lies in the ball;
    otherwise bisects on ``lam`` in ``[0, ||B^T s|| / r]`` until
    ``||(B^T B + lam I)^{-1} B^T s|| = r`` to relative accuracy 1e-10. The
    returned point sits on the feasible side of the bracket.
    """
    if not isinstance(gen, LinearGenerator):
        raise ProjectionError("exact projection needs a linear generator")
    s = np.asarray(s, dtype=float)
    if s.shape != (gen.n,):
        raise ProjectionError(f"vector has shape {s.shape}, expected ({gen.n},)")
    r = gen.radius
    U, sv, Vt = np.linalg.svd(gen.matrix, full_matrices=False)
    coeffs = U.T @ s
    rank_tol = sv.max(initial=0.0) * max(gen.matrix.shape) * np.finfo(float).eps
    active = sv > rank_tol

    def latent(lam):
        scale = np.where(active, sv / np.where(active, sv**2 + lam, 1.0), 0.0)
        return Vt.T @ (scale * coeffs)

    lam = 0.0
    z = latent(0.0)
    if np.linalg.norm(z) > r:
        lo = 0.0
        hi = np.linalg.norm(sv * coeffs) / r
        z = latent(hi)
        for _ in range(bisection_iters):
            mid = 0.5 * (lo + hi)
            z_mid = latent(mid)
            if np.linalg.norm(z_mid) > r:
                lo = mid
            else:
                hi, z = mid, z_mid
            if abs(np.linalg.norm(z) - r) <= 1e-10 * r or hi - lo <= 1e-16 * hi:
                break
        lam = hi
    w = gen.matrix @ z
    objective = float(np.sum((w - s) ** 2))
    return ProjectionResult(w, z, objective, (objective,), w[None, :], "exact", multiplier=float(lam))


def kkt_residual(gen, s, result):
    """Stationarity residual ``||B^T (B z - s) + lam z||`` of an exact projection."""
    B = gen.matrix
    return float(np.linalg.norm(B.T @ (B @ result.z - s) + result.multiplier * result.z))


def _adam_search(objective_and_grad, z0, cfg, ball):
    """Batched Adam over rows of ``z0``; returns the best iterate seen per row."""
    z = z0.copy()
    m = np.zeros_like(z)
    v = np.zeros_like(z)
    values, grad = objective_and_grad(z)
    best_values = values.copy()
    best_z = z.copy()
    for t in range(1, cfg.steps + 1):
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad
        m_hat = m / (1.0 - cfg.beta1**t)
        v_hat = v / (1.0 - cfg.beta2**t)
        z = z - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
        if cfg.strict:
            z = ball.project(z)
        with np.errstate(over="ignore", invalid="ignore"):
            values, grad = objective_and_grad(z)
        improved = values < best_values
        best_values = np.where(improved, values, best_values)
        best_z[improved] = z[improved]
        if not np.all(np.isfinite(z)):
            # frozen rows keep their best iterate; stop updating them
            bad = ~np.all(np.isfinite(z), axis=1)
            z[bad] = best_z[bad]
            grad[bad] = 0.0
            m[bad] = 0.0
    return best_z, best_values


def initial_latents(gen, cfg):
    """Restart starting points: ``N(0, I_k)`` draws, radially clipped in strict mode."""
    z0 = make_rng(cfg.restart_seed).standard_normal((cfg.restarts, gen.k))
    return gen.domain.project(z0) if cfg.strict else z0


def _pick_best(values):
    finite = np.isfinite(values)
    diverged = tuple(int(i) for i in np.flatnonzero(~finite))
    if not finite.any():
        return 0, diverged
    # argmin returns the lowest index among ties
    return int(np.argmin(np.where(finite, values, np.inf))), diverged


def latent_search(gen, objective_and_grad, cfg):
    """Run the restarted Adam search for an arbitrary latent objective."""
    z0 = initial_latents(gen, cfg)
    best_z, best_values = _adam_search(objective_and_grad, z0, cfg, gen.domain)
    index, diverged = _pick_best(best_values)
    return best_z, best_values, index, diverged


def project_latent(gen, s, cfg=ProjectionConfig()):
    """Approximate projection by Adam on ``0.5 ||G(z) - s||^2`` with restarts."""
    if cfg.method != "latent_adam":
        raise ProjectionError("project_latent needs method 'latent_adam'")
    s = np.asarray(s, dtype=float)
    if s.shape != (gen.n,):
        raise ProjectionError(f"vector has shape {s.shape}, expected ({gen.n},)")

    def objective_and_grad(z):
        w = gen.forward(z, strict=False)
        residual = w - s
        return 0.5 * np.sum(residual**2, axis=1), gen.jacobian_vector_product(z, residual, strict=False)

    best_z, best_values, index, diverged = latent_search(gen, objective_and_grad, cfg)
    points = gen.forward(best_z, strict=False)
    objectives = 2.0 * best_values
    return ProjectionResult(
        points[index],
        best_z[index],
        float(objectives[index]),
        tuple(float(v) for v in objectives),
        points,
        cfg.mode,
        diverged=diverged,
    )


def project(gen, s, cfg=ProjectionConfig()):
    if cfg.method == "exact_linear":
        return project_exact_linear(gen, s)
    return project_latent(gen, s, cfg)

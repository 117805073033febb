"""Single index model observations and their characterization parameters.

An observation model is a random scalar map ``f``; a measurement ensemble is
``y_i = f_i(<a_i, x>)`` with Gaussian rows ``a_i``. The parameters

    mu      = E[f(g) g]
    xi_sq   = E[f(g)^2]
    rho_sq  = Var[f(g) g]
    theta_4 = Var[f(g)^2]

with ``g ~ N(0, 1)`` govern how well ``x`` can be recovered; they can be
computed in closed form, by Gauss-Hermite quadrature or by Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import erf, roots_laguerre

from .seeding import make_rng

SIGNAL_NOISE_KINDS = ("one_bit_signal_noise", "cubic_signal_noise")
KINDS = ("noisy_one_bit", "noisy_cubic", "identity") + SIGNAL_NOISE_KINDS + ("custom",)
METHODS = ("analytic", "quadrature", "monte_carlo")
UNIT_TOL = 1e-10
CUSTOM_CHECK_SAMPLES = 200_000

KIND_ALIASES = {
    "one-bit": "noisy_one_bit",
    "one_bit": "noisy_one_bit",
    "1bit": "noisy_one_bit",
    "cubic": "noisy_cubic",
    "linear": "identity",
    "one-bit-signal-noise": "one_bit_signal_noise",
    "cubic-signal-noise": "cubic_signal_noise",
}


class ModelError(ValueError):
    """Invalid observation model or unsupported computation for it."""


@dataclass(frozen=True)
class ObservationModel:
    """Nonlinearity ``f`` plus its noise level.

    ``custom_fn(u, rng)`` maps an array of projections ``<a_i, x>`` to
    observations and draws its own noise from ``rng``; it is called with
    ``rng=None`` when a noise-free evaluation is needed (quadrature).
    ``ambient_dim`` is only consulted by the Monte Carlo parameter estimate of
    the signal-noise kinds, whose law depends on ``||a||``.
    """

    kind: str
    sigma: float = 0.0
    custom_fn: Optional[Callable] = field(default=None, compare=False)
    ambient_dim: Optional[int] = None

    def __post_init__(self):
        kind = KIND_ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ModelError(f"unknown observation model kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ModelError(f"noise level must be nonnegative, got {self.sigma}")
        if kind == "custom" and self.custom_fn is None:
            raise ModelError("custom model requires custom_fn")

    @classmethod
    def custom(cls, fn, sigma=0.0, check=True, samples=None, seed=0):
        """Build a custom model, by default rejecting maps that break the SIM assumptions."""
        model = cls("custom", sigma, fn)
        if check:
            report = validate_sim_assumptions(model, samples or CUSTOM_CHECK_SAMPLES, seed)
            if not report.mu_nonzero:
                raise ModelError(
                    f"E[f(g) g] is indistinguishable from 0 (estimate {report.mu_hat:.4g}, "
                    f"s.e. {report.mu_se:.3g})"
                )
            if not report.fourth_moment_finite:
                raise ModelError("E[f(g)^4] does not appear to be finite")
        return model

    @property
    def is_signal_noise(self) -> bool:
        return self.kind in SIGNAL_NOISE_KINDS

    @property
    def is_binary(self) -> bool:
        return self.kind in ("noisy_one_bit", "one_bit_signal_noise")

    def respond(self, u, rng):
        """Observations for projections ``u = A x`` (standard kinds only)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "custom":
            return np.asarray(self.custom_fn(u, rng), dtype=float)
        noise = self.sigma * rng.standard_normal(u.shape)
        if self.kind == "noisy_one_bit":
            return np.sign(u + noise)
        if self.kind == "noisy_cubic":
            return u**3 + noise
        if self.kind == "identity":
            return u + noise
        raise ModelError(f"{self.kind} observations depend on the full row; use sample_adversarial_ensemble")


@dataclass(frozen=True)
class SimParameters:
    mu: float
    xi_sq: float
    rho_sq: float
    theta_4: float
    method: str
    std_errors: Optional[dict] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ModelError(f"unknown method {self.method!r}")
        if not self.xi_sq > 0:
            raise ModelError(f"xi^2 must be positive, got {self.xi_sq}")
        slack = 1e-12 * max(1.0, self.xi_sq)
        if self.rho_sq < -slack or self.theta_4 < -slack:
            raise ModelError("rho^2 and theta^4 must be nonnegative")
        if self.std_errors:
            # sample moments only satisfy Cauchy-Schwarz up to sampling error
            se = self.std_errors
            slack += 3.0 * (2.0 * abs(self.mu) * se.get("mu", 0.0) + se.get("xi_sq", 0.0))
        if self.mu**2 > self.xi_sq + slack:
            raise ModelError(f"mu^2 = {self.mu**2:.6g} exceeds xi^2 = {self.xi_sq:.6g}")

    @property
    def xi(self) -> float:
        return math.sqrt(self.xi_sq)

    def as_dict(self):
        out = {"mu": self.mu, "xi_sq": self.xi_sq, "rho_sq": self.rho_sq, "theta_4": self.theta_4,
               "method": self.method}
        if self.std_errors:
            out["std_errors"] = dict(self.std_errors)
        return out


@dataclass(frozen=True, eq=False)
class MeasurementEnsemble:
    x: np.ndarray
    A: np.ndarray
    y: np.ndarray
    seed: int
    model: ObservationModel

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def to_dict(self):
        return {
            "seed": int(self.seed),
            "model": {"kind": self.model.kind, "sigma": self.model.sigma},
            "x": self.x.tolist(),
            "A": self.A.tolist(),
            "y": self.y.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        try:
            model = ObservationModel(data["model"]["kind"], float(data["model"]["sigma"]))
            return cls(
                np.asarray(data["x"], dtype=float),
                np.asarray(data["A"], dtype=float),
                np.asarray(data["y"], dtype=float),
                int(data["seed"]),
                model,
            )
        except (KeyError, TypeError) as exc:
            raise ModelError(f"malformed ensemble record: missing or invalid field {exc}") from exc


def _check_signal(x, m):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ModelError("signal must be a vector")
    if abs(np.linalg.norm(x) - 1.0) > UNIT_TOL:
        raise ModelError(f"signal must have unit norm, got {np.linalg.norm(x):.12g}")
    if int(m) != m or m < 1:
        raise ModelError(f"number of measurements must be a positive integer, got {m}")
    return x


def sample_ensemble(x, m, model, seed):
    """Draw ``A`` with i.i.d. N(0,1) entries and ``y = f(Ax)`` from a keyed stream.

    The stream draws ``A`` row-major first, then the per-row noise, so
    identical ``(x, m, model, seed)`` reproduce identical ensembles.
    """
    if model.is_signal_noise:
        return sample_adversarial_ensemble(x, m, model, seed)
    x = _check_signal(x, m)
    rng = make_rng(seed)
    A = rng.standard_normal((int(m), x.size))
    y = model.respond(A @ x, rng)
    return MeasurementEnsemble(x, A, y, int(seed), model)


def sample_adversarial_ensemble(x, m, model, seed):
    """Observations ``sign(<a_i, x + e_i>)`` or ``<a_i, x + e_i>^3`` with ``e_i ~ N(0, sigma^2 I)``.

    ``A`` comes first from the stream, exactly as in :func:`sample_ensemble`,
    then the perturbation matrix; with ``sigma = 0`` the output matches the
    corresponding standard model.
    """
    if model.kind not in SIGNAL_NOISE_KINDS:
        raise ModelError(f"{model.kind} is not a signal-noise model")
    x = _check_signal(x, m)
    rng = make_rng(seed)
    A = rng.standard_normal((int(m), x.size))
    E = model.sigma * rng.standard_normal((int(m), x.size))
    u = np.einsum("ij,ij->i", A, x[None, :] + E)
    y = np.sign(u) if model.kind == "one_bit_signal_noise" else u**3
    return MeasurementEnsemble(x, A, y, int(seed), model)


def apply_bounded_corruption(ensemble, nu, seed=None):
    """Add ``c`` with ``||c||_2 = nu * sqrt(m)`` along the sign pattern of ``y``.

    The adversary is deterministic, so ``seed`` is accepted for interface
    symmetry only. Zero observations take sign +1.
    """
    if not np.isfinite(nu) or nu < 0:
        raise ModelError(f"corruption budget must be nonnegative, got {nu}")
    if nu == 0:
        return ensemble
    pattern = np.where(ensemble.y < 0, -1.0, 1.0)
    c = pattern * (nu * math.sqrt(ensemble.m) / np.linalg.norm(pattern))
    return replace(ensemble, y=ensemble.y + c)


# ---------------------------------------------------------------------------
# characterization parameters
# ---------------------------------------------------------------------------


def _analytic(model):
    s2 = model.sigma**2
    if model.kind == "noisy_one_bit":
        mu = math.sqrt(2.0 / (math.pi * (1.0 + s2)))
        return mu, 1.0, 1.0 - mu**2, 0.0
    if model.kind == "noisy_cubic":
        return 3.0, 15.0 + s2, 96.0 + s2, 10170.0 + 60.0 * s2 + 2.0 * s2**2
    if model.kind == "identity":
        return 1.0, 1.0 + s2, 2.0 + s2, 2.0 * (1.0 + s2) ** 2
    raise ModelError(f"no closed form for {model.kind}")


def gauss_hermite_expectation(fn, order=64):
    """``E[fn(g)]`` for ``g ~ N(0, 1)`` with probabilists' Gauss-Hermite nodes."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(order)
    weights = weights / math.sqrt(2.0 * math.pi)
    return float(np.sum(weights * fn(nodes)))


def _quadrature(model, order):
    s2 = model.sigma**2
    if model.kind == "noisy_one_bit":
        if model.sigma > 0:
            cond = lambda g: erf(g / (model.sigma * math.sqrt(2.0)))
            mu = gauss_hermite_expectation(lambda g: g * cond(g), order)
        else:
            # E[g sign g] = 2 int_0^inf g phi(g) dg; Gauss-Laguerre in t = g^2/2
            # is exact here where Hermite nodes straddle the jump
            _, weights = roots_laguerre(order)
            mu = 2.0 * float(np.sum(weights)) / math.sqrt(2.0 * math.pi)
        return mu, 1.0, 1.0 - mu**2, 0.0
    if model.kind in ("noisy_cubic", "identity"):
        h = (lambda g: g**3) if model.kind == "noisy_cubic" else (lambda g: g)
    elif model.kind == "custom":
        if model.sigma > 0:
            raise ModelError("quadrature for custom models needs a noise-free map (sigma = 0)")
        h = lambda g: np.asarray(model.custom_fn(g, None), dtype=float)
    else:
        raise ModelError(f"quadrature is not available for {model.kind}")
    e_hg = gauss_hermite_expectation(lambda g: h(g) * g, order)
    e_h2 = gauss_hermite_expectation(lambda g: h(g) ** 2, order)
    e_h2g2 = gauss_hermite_expectation(lambda g: (h(g) * g) ** 2, order)
    e_h4 = gauss_hermite_expectation(lambda g: h(g) ** 4, order)
    # additive N(0, sigma^2) noise independent of g
    xi_sq = e_h2 + s2
    rho_sq = e_h2g2 + s2 - e_hg**2
    theta_4 = e_h4 + 6.0 * s2 * e_h2 + 3.0 * s2**2 - xi_sq**2
    return e_hg, xi_sq, rho_sq, theta_4


def _draw_scalar_observations(model, samples, rng):
    """Draw ``(g, y)`` pairs with ``g = <a, x>`` for a unit ``x``."""
    g = rng.standard_normal(samples)
    if not model.is_signal_noise:
        return g, model.respond(g, rng)
    if model.ambient_dim is None:
        raise ModelError(f"{model.kind} needs ambient_dim for Monte Carlo estimates")
    n = int(model.ambient_dim)
    # <a, e> given a is N(0, sigma^2 ||a||^2) and ||a||^2 = g^2 + chi^2_{n-1}
    row_sq = g**2 + (rng.chisquare(n - 1, samples) if n > 1 else 0.0)
    u = g + model.sigma * np.sqrt(row_sq) * rng.standard_normal(samples)
    y = np.sign(u) if model.kind == "one_bit_signal_noise" else u**3
    return g, y


def _variance_with_se(values):
    centered = values - values.mean()
    var = float(np.mean(centered**2))
    m4 = float(np.mean(centered**4))
    return var, math.sqrt(max(m4 - var**2, 0.0) / values.size)


def _monte_carlo(model, samples, seed):
    rng = make_rng(seed)
    g, y = _draw_scalar_observations(model, samples, rng)
    yg = y * g
    y2 = y * y
    mu = float(yg.mean())
    xi_sq = float(y2.mean())
    rho_sq, rho_se = _variance_with_se(yg)
    theta_4, theta_se = _variance_with_se(y2)
    root_n = math.sqrt(samples)
    std_errors = {
        "mu": float(yg.std()) / root_n,
        "xi_sq": float(y2.std()) / root_n,
        "rho_sq": rho_se,
        "theta_4": theta_se,
    }
    return (mu, xi_sq, rho_sq, theta_4), std_errors


def sim_parameters(model, method="analytic", samples=1_000_000, seed=0, order=64):
    """Compute ``(mu, xi^2, rho^2, theta^4)`` for ``model``.

    ``analytic`` covers the noisy one-bit, noisy cubic and identity models;
    ``quadrature`` integrates over ``g`` with ``order`` Gauss-Hermite nodes and
    handles the additive noise in closed form; ``monte_carlo`` averages over
    ``samples`` draws and reports standard errors.
    """
    if method == "analytic":
        return SimParameters(*_analytic(model), method="analytic")
    if method == "quadrature":
        if order < 64:
            raise ModelError("quadrature order must be at least 64")
        return SimParameters(*_quadrature(model, order), method="quadrature")
    if method == "monte_carlo":
        if samples < 2:
            raise ModelError("Monte Carlo needs at least 2 samples")
        values, std_errors = _monte_carlo(model, int(samples), seed)
        return SimParameters(*values, method="monte_carlo", std_errors=std_errors)
    raise ModelError(f"unknown method {method!r}")


def best_sim_parameters(model, samples=1_000_000, seed=0):
    """Closed form when available, else quadrature, else Monte Carlo."""
    for method in ("analytic", "quadrature"):
        try:
            return sim_parameters(model, method)
        except ModelError:
            continue
    return sim_parameters(model, "monte_carlo", samples=samples, seed=seed)


@dataclass(frozen=True)
class AssumptionReport:
    mu_hat: float
    mu_se: float
    mu_nonzero: bool
    fourth_moments: tuple
    fourth_moment_finite: bool

    @property
    def passed(self) -> bool:
        return self.mu_nonzero and self.fourth_moment_finite


def validate_sim_assumptions(model, samples=250_000, seed=0, doublings=3, max_ratio=1.25):
    """Check ``E[f(g) g] != 0`` and that ``E[f(g)^4]`` looks finite.

    ``mu`` is declared nonzero when its estimate exceeds three standard errors.
    The fourth moment is estimated on nested prefixes of length
    ``samples * 2^j``; it counts as finite when every consecutive ratio of
    those estimates stays within ``[1/max_ratio, max_ratio]``.
    """
    total = int(samples) * 2**doublings
    rng = make_rng(seed)
    g, y = _draw_scalar_observations(model, total, rng)
    yg = y * g
    mu_hat = float(yg.mean())
    mu_se = float(yg.std()) / math.sqrt(total)
    mu_nonzero = bool(abs(mu_hat) > 3.0 * mu_se)

    y4 = y**4
    estimates = tuple(float(y4[: int(samples) * 2**j].mean()) for j in range(doublings + 1))
    finite = all(np.isfinite(estimates))
    if finite:
        for before, after in zip(estimates[:-1], estimates[1:]):
            if before == 0.0 and after == 0.0:
                continue
            if before == 0.0 or not (1.0 / max_ratio <= after / before <= max_ratio):
                finite = False
                break
    return AssumptionReport(mu_hat, mu_se, mu_nonzero, estimates, finite)

"""Experiment sweeps, rate studies and plot-data export.

A sweep crosses a noise grid, a measurement-count grid and a trial count,
runs every configured estimator on each ensemble and writes one CSV row per
``(sigma, m, trial, estimator)``. Seeds are derived from the base seed and
grid indices (see :mod:`oneshot_recovery.seeding`), so a sweep is fully
reproducible and cells can run in any order.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .diagnostics import DEFAULT_DELTA, theoretical_rate
from .estimators import ESTIMATOR_KINDS, EstimatorSpec, one_shot, run_estimator
from .generators import (
    GeneratorError,
    LinearGenerator,
    generator_from_dict,
    load_generator,
    orthonormal_linear,
    random_mlp,
)
from .metrics import cosine_similarity, fit_rate_slope, restart_cosines
from .observation import ModelError, ObservationModel, best_sim_parameters, sample_ensemble
from .projection import ProjectionConfig
from .seeding import RESERVED, derive_seed, make_rng

COLUMNS = (
    "estimator", "model_kind", "sigma", "m", "trial", "seed",
    "cosine_best", "cosine_mean", "l2_to_mux", "runtime_ms", "projection_mode",
    "membership",
)
THREADS_ENV = "ONESHOT_THREADS"
FIXTURE_DIMS = (20, 64, 64, 200)


class ConfigError(ValueError):
    """Invalid sweep or rate-study configuration; messages carry the field path."""


class NumericalFailure(RuntimeError):
    """A run produced non-finite output."""


def default_fixture(seed=0):
    """The 20-64-64-200 relu MLP with per-layer spectral norm 1.5 and radius sqrt(20)."""
    return random_mlp(FIXTURE_DIMS, seed, spectral_scale=1.5)


def is_homogeneous(gen):
    """True when ``G(c z) = c G(z)`` for ``c > 0`` (linear maps, bias-free relu/identity nets)."""
    if isinstance(gen, LinearGenerator):
        return True
    return all(
        not np.any(layer.bias) and layer.activation in ("relu", "none") for layer in gen.layers
    )


def plant_signal(gen, mu, seed, radius_fraction=0.5):
    """Ground truth ``x = G(z0) / ||G(z0)||`` with ``z0`` uniform in the shrunken ball.

    Also returns whether ``mu x`` provably lies in the range: for positively
    homogeneous generators the witness ``mu z0 / ||G(z0)||`` is checked against
    the radius; otherwise membership is only approximate.
    """
    rng = make_rng(seed)
    k, r = gen.k, gen.radius
    for _ in range(100):
        direction = rng.standard_normal(k)
        direction /= np.linalg.norm(direction)
        z0 = direction * radius_fraction * r * rng.uniform() ** (1.0 / k)
        image = gen.forward(z0)
        norm = np.linalg.norm(image)
        if norm > 1e-12:
            break
    else:
        raise NumericalFailure("could not plant a signal with a nonzero image")
    x = image / norm
    membership = "approximate"
    if is_homogeneous(gen) and abs(mu) * np.linalg.norm(z0) / norm <= r:
        membership = "exact"
    return x, z0, membership


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _require(data, key, where):
    if key not in data:
        raise ConfigError(f"{where}.{key}: missing required field")
    return data[key]


def _number_list(value, where, integer=False, positive=False):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: must be a non-empty array")
    out = []
    for i, item in enumerate(value):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise ConfigError(f"{where}[{i}]: must be a number")
        if integer and int(item) != item:
            raise ConfigError(f"{where}[{i}]: must be an integer")
        if positive and item < 1:
            raise ConfigError(f"{where}[{i}]: must be >= 1")
        if item < 0:
            raise ConfigError(f"{where}[{i}]: must be nonnegative")
        out.append(int(item) if integer else float(item))
    return out


def projection_from_dict(data, where="projection"):
    if data is None:
        return ProjectionConfig()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: must be an object")
    allowed = set(ProjectionConfig.__dataclass_fields__)
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"{where}.{sorted(unknown)[0]}: unknown field")
    try:
        return ProjectionConfig(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def estimator_from_dict(data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: must be an object")
    kind = _require(data, "kind", where)
    if kind not in ESTIMATOR_KINDS:
        raise ConfigError(f"{where}.kind: unknown estimator {kind!r}")
    fields = dict(data)
    fields["projection"] = projection_from_dict(data.get("projection"), f"{where}.projection")
    unknown = set(fields) - set(EstimatorSpec.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"{where}.{sorted(unknown)[0]}: unknown field")
    try:
        return EstimatorSpec(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def generator_from_config(value, base_dir, where="generator"):
    """A generator from a path, an inline generator object or a fixture spec."""
    try:
        if isinstance(value, str):
            path = Path(value)
            if not path.is_absolute():
                path = Path(base_dir) / path
            return load_generator(path)
        if isinstance(value, dict) and "fixture" in value:
            fixture = value["fixture"]
            seed = int(value.get("seed", 0))
            if fixture == "mlp":
                dims = value.get("dims", list(FIXTURE_DIMS))
                return random_mlp(dims, seed, spectral_scale=float(value.get("spectral_scale", 1.5)),
                                  radius=value.get("radius"))
            if fixture == "linear":
                return orthonormal_linear(int(_require(value, "n", where)), int(_require(value, "k", where)),
                                          float(_require(value, "radius", where)), seed)
            raise ConfigError(f"{where}.fixture: unknown fixture {fixture!r}")
        if isinstance(value, dict):
            return generator_from_dict(value, where)
    except GeneratorError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: must be a path, a generator object or a fixture object")


def _load_json(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def _model(kind, sigma, gen, where):
    try:
        ambient = gen.n if kind in ("one_bit_signal_noise", "cubic_signal_noise") else None
        return ObservationModel(kind, sigma, ambient_dim=ambient)
    except ModelError as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass(frozen=True, eq=False)
class SweepConfig:
    generator: object
    model_kind: str
    sigmas: tuple
    ms: tuple
    trials: int
    estimators: tuple
    base_seed: int = 0
    output: Optional[str] = None
    truth_radius_fraction: float = 0.5

    def __post_init__(self):
        if not self.sigmas:
            raise ConfigError("sigmas: must be non-empty")
        if not self.ms or any(m < 1 for m in self.ms):
            raise ConfigError("ms: must be non-empty with every m >= 1")
        if self.trials < 1:
            raise ConfigError("trials: must be >= 1")
        if not self.estimators:
            raise ConfigError("estimators: must be non-empty")
        for name, grid in (("sigmas", self.sigmas), ("ms", self.ms), ("estimators", self.estimators)):
            if len(grid) >= RESERVED:
                raise ConfigError(f"{name}: grid too large")
        if self.trials >= RESERVED:
            raise ConfigError("trials: too many")

    @classmethod
    def from_dict(cls, data, base_dir="."):
        where = "config"
        gen = generator_from_config(_require(data, "generator", where), base_dir, f"{where}.generator")
        model_kind = _require(data, "model", where)
        if not isinstance(model_kind, str):
            raise ConfigError(f"{where}.model: must be a string")
        sigmas = _number_list(_require(data, "sigmas", where), f"{where}.sigmas")
        ms = _number_list(_require(data, "ms", where), f"{where}.ms", integer=True, positive=True)
        trials = _require(data, "trials", where)
        if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
            raise ConfigError(f"{where}.trials: must be an integer >= 1")
        raw_estimators = _require(data, "estimators", where)
        if not isinstance(raw_estimators, list) or not raw_estimators:
            raise ConfigError(f"{where}.estimators: must be a non-empty array")
        estimators = tuple(
            estimator_from_dict(item, f"{where}.estimators[{i}]") for i, item in enumerate(raw_estimators)
        )
        for i, spec in enumerate(estimators):
            if spec.kind != "lasso_ista" and spec.projection.method == "exact_linear" and not isinstance(
                gen, LinearGenerator
            ):
                raise ConfigError(f"{where}.estimators[{i}].projection.method: exact_linear needs a linear generator")
        _model(model_kind, sigmas[0], gen, f"{where}.model")
        base_seed = data.get("base_seed", 0)
        if isinstance(base_seed, bool) or not isinstance(base_seed, int):
            raise ConfigError(f"{where}.base_seed: must be an integer")
        output = data.get("output")
        if output is not None and not Path(output).is_absolute():
            output = str(Path(base_dir) / output)
        return cls(gen, model_kind, tuple(sigmas), tuple(ms), trials, estimators, base_seed, output,
                   float(data.get("truth_radius_fraction", 0.5)))

    @classmethod
    def load(cls, path):
        return cls.from_dict(_load_json(path), Path(path).parent)


@dataclass(frozen=True)
class ResultRow:
    estimator: str
    model_kind: str
    sigma: float
    m: int
    trial: int
    seed: int
    cosine_best: float
    cosine_mean: float
    l2_to_mux: float
    runtime_ms: float
    projection_mode: str
    membership: str

    def as_csv(self):
        return [
            self.estimator, self.model_kind, repr(float(self.sigma)), str(self.m), str(self.trial),
            str(self.seed), repr(float(self.cosine_best)), repr(float(self.cosine_mean)),
            repr(float(self.l2_to_mux)), f"{self.runtime_ms:.3f}", self.projection_mode, self.membership,
        ]


def _safe_cosine(x, v):
    # a zero estimate carries no direction; it scores 0
    return cosine_similarity(x, v) if np.any(v) else 0.0


def _score_run(result, x, mu):
    estimate = result.estimate
    if not np.all(np.isfinite(estimate)):
        raise NumericalFailure(f"{result.spec['kind']} produced a non-finite estimate")
    cosines = restart_cosines(x, result.restart_estimates)
    cosine_mean = float(np.mean(cosines)) if cosines.size else 0.0
    return _safe_cosine(x, estimate), cosine_mean, float(np.linalg.norm(estimate - mu * x))


def _run_cell(cfg, gen, sigma_index, m_index, trial, truths, params):
    sigma = cfg.sigmas[sigma_index]
    m = cfg.ms[m_index]
    model = _model(cfg.model_kind, sigma, gen, "config.model")
    x, membership = truths[(sigma_index, trial)]
    mu = params[sigma_index].mu
    ens_seed = derive_seed(cfg.base_seed, sigma_index, m_index, trial, RESERVED)
    ensemble = sample_ensemble(x, m, model, ens_seed)
    rows = []
    for est_index, spec in enumerate(cfg.estimators):
        seed = derive_seed(cfg.base_seed, sigma_index, m_index, trial, est_index)
        spec = replace(spec, projection=replace(spec.projection, restart_seed=seed))
        result = run_estimator(spec, ensemble, gen, truth_scale=mu)
        cos_best, cos_mean, l2 = _score_run(result, x, mu)
        rows.append(ResultRow(spec.kind, model.kind, sigma, m, trial, seed, cos_best, cos_mean, l2,
                              result.runtime_ms, result.projection_mode, membership))
    return rows


def thread_count():
    value = os.environ.get(THREADS_ENV)
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}") from None
    return os.cpu_count() or 1


def run_sweep(cfg, output=None, threads=None):
    """Run every cell of the sweep and return the rows in canonical order.

    Rows are written (and flushed) to ``output`` as soon as every earlier cell
    has finished, so an interrupted sweep keeps a valid prefix.
    """
    gen = cfg.generator
    output = output or cfg.output
    params = []
    for sigma in cfg.sigmas:
        model = _model(cfg.model_kind, sigma, gen, "config.model")
        params.append(best_sim_parameters(model, seed=cfg.base_seed))
    truths = {}
    for si in range(len(cfg.sigmas)):
        for trial in range(cfg.trials):
            x, _, membership = plant_signal(
                gen, params[si].mu, derive_seed(cfg.base_seed, RESERVED, RESERVED, trial, RESERVED),
                cfg.truth_radius_fraction,
            )
            truths[(si, trial)] = (x, membership)

    cells = [
        (si, mi, trial)
        for si in range(len(cfg.sigmas))
        for mi in range(len(cfg.ms))
        for trial in range(cfg.trials)
    ]
    rows = []
    handle = None
    writer = None
    if output:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        handle = open(output, "w", newline="", encoding="utf-8")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(COLUMNS)
        handle.flush()
    try:
        with ThreadPoolExecutor(max_workers=threads or thread_count()) as pool:
            futures = [pool.submit(_run_cell, cfg, gen, si, mi, trial, truths, params) for si, mi, trial in cells]
            for future in futures:
                for row in future.result():
                    rows.append(row)
                    if writer is not None:
                        writer.writerow(row.as_csv())
                        handle.flush()
    finally:
        if handle is not None:
            handle.close()
    return rows


def read_results(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as handle:
        for rec in csv.DictReader(handle):
            rows.append(ResultRow(
                rec["estimator"], rec["model_kind"], float(rec["sigma"]), int(rec["m"]), int(rec["trial"]),
                int(rec["seed"]), float(rec["cosine_best"]), float(rec["cosine_mean"]), float(rec["l2_to_mux"]),
                float(rec["runtime_ms"]), rec["projection_mode"], rec.get("membership", ""),
            ))
    return rows


# ---------------------------------------------------------------------------
# rate study
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RateConfig:
    generator: object
    model: ObservationModel
    ms: tuple
    trials: int
    base_seed: int = 0
    projection: ProjectionConfig = field(default_factory=lambda: ProjectionConfig(method="exact_linear"))
    delta: float = DEFAULT_DELTA
    output: Optional[str] = None

    def __post_init__(self):
        ms = sorted(self.ms)
        if len(set(ms)) < 4:
            raise ConfigError("ms: a rate study needs at least 4 distinct m values")
        if ms[-1] < 8 * ms[0]:
            raise ConfigError("ms: the m grid must span at least a factor of 8")
        if self.trials < 50:
            raise ConfigError("trials: a rate study needs at least 50 trials per m")

    @classmethod
    def from_dict(cls, data, base_dir="."):
        where = "config"
        gen = generator_from_config(_require(data, "generator", where), base_dir, f"{where}.generator")
        model = _model(_require(data, "model", where), float(data.get("sigma", 0.0)), gen, f"{where}.model")
        ms = _number_list(_require(data, "ms", where), f"{where}.ms", integer=True, positive=True)
        trials = _require(data, "trials", where)
        if isinstance(trials, bool) or not isinstance(trials, int):
            raise ConfigError(f"{where}.trials: must be an integer")
        default_method = "exact_linear" if isinstance(gen, LinearGenerator) else "latent_adam"
        proj = data.get("projection") or {"method": default_method}
        output = data.get("output")
        if output is not None and not Path(output).is_absolute():
            output = str(Path(base_dir) / output)
        return cls(gen, model, tuple(ms), trials, int(data.get("base_seed", 0)),
                   projection_from_dict(proj, f"{where}.projection"), float(data.get("delta", DEFAULT_DELTA)),
                   output)

    @classmethod
    def load(cls, path):
        return cls.from_dict(_load_json(path), Path(path).parent)


@dataclass(frozen=True, eq=False)
class RateStudy:
    ms: np.ndarray
    mean_error: np.ndarray
    stderr: np.ndarray
    theory: np.ndarray
    fit: object
    mu: float
    membership: str

    def rows(self):
        return [
            {"m": int(m), "mean_error": float(e), "stderr": float(se), "theory": float(t)}
            for m, e, se, t in zip(self.ms, self.mean_error, self.stderr, self.theory)
        ]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["m", "mean_error", "stderr", "theory"])
            for row in self.rows():
                writer.writerow([row["m"], repr(row["mean_error"]), repr(row["stderr"]), repr(row["theory"])])


def run_rate_study(cfg, errors_out=None):
    """Mean ``||x_hat - mu x||`` of the one-shot estimate per ``m`` with a log-log fit.

    The signal is planted once; trial ``j`` at grid index ``i`` draws its
    ensemble with ``derive_seed(base_seed, i, j)``.
    """
    gen = cfg.generator
    params = best_sim_parameters(cfg.model, seed=cfg.base_seed)
    x, _, membership = plant_signal(gen, params.mu, derive_seed(cfg.base_seed, RESERVED, RESERVED))
    ms = np.array(sorted(cfg.ms))
    means, ses = [], []
    for i, m in enumerate(ms):
        errs = np.empty(cfg.trials)
        for j in range(cfg.trials):
            ens = sample_ensemble(x, int(m), cfg.model, derive_seed(cfg.base_seed, i, j))
            estimate = one_shot(ens, gen, cfg.projection).estimate
            errs[j] = np.linalg.norm(estimate - params.mu * x)
        if not np.all(np.isfinite(errs)):
            raise NumericalFailure(f"non-finite recovery error at m = {m}")
        if errors_out is not None:
            errors_out[int(m)] = errs
        means.append(errs.mean())
        ses.append(errs.std(ddof=1) / math.sqrt(cfg.trials))
    means = np.array(means)
    fit = fit_rate_slope(zip(ms, means))
    theory = theoretical_rate(params.xi, gen.k, gen.lipschitz_bound(), gen.radius, ms, cfg.delta)
    study = RateStudy(ms, means, np.array(ses), theory, fit, params.mu, membership)
    if cfg.output:
        study.write_csv(cfg.output)
    return study


# ---------------------------------------------------------------------------
# plot data
# ---------------------------------------------------------------------------


def emit_plot_data(rows, x_axis, out_dir, metric="cosine_best"):
    """Write one CSV per (model, fixed other-axis value): x column plus one mean column per estimator."""
    if x_axis not in ("m", "sigma"):
        raise ValueError("x_axis must be 'm' or 'sigma'")
    if not rows:
        raise ValueError("no result rows to plot")
    other = "sigma" if x_axis == "m" else "m"
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    estimators = list(dict.fromkeys(row.estimator for row in rows))
    groups = {}
    for row in rows:
        key = (row.model_kind, getattr(row, other))
        groups.setdefault(key, {}).setdefault(getattr(row, x_axis), {}).setdefault(row.estimator, []).append(
            getattr(row, metric)
        )
    paths = []
    for (model_kind, fixed), table in sorted(groups.items()):
        path = out_dir / f"{model_kind}_{metric}_vs_{x_axis}_{other}={fixed:g}.csv"
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow([x_axis] + [f"{name}_{metric}" for name in estimators])
            for xval in sorted(table):
                cells = table[xval]
                writer.writerow([xval] + [
                    repr(float(np.mean(cells[name]))) if name in cells else "" for name in estimators
                ])
        paths.append(path)
    return paths

"""Command-line entry point.

Exit codes: 0 on success, 1 on validation or usage errors, 2 when a run
produces non-finite numbers.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .diagnostics import (
    DiagnosticsError,
    corollary_noise_curve,
    event_E_frequency,
    mu_hat_concentration,
    orthogonal_tail,
)
from .estimators import ESTIMATOR_KINDS, EstimatorError, EstimatorSpec, run_estimator
from .generators import GeneratorError, LinearGenerator, load_generator
from .harness import (
    ConfigError,
    NumericalFailure,
    RateConfig,
    SweepConfig,
    default_fixture,
    emit_plot_data,
    plant_signal,
    run_rate_study,
    run_sweep,
)
from .metrics import MetricError, cosine_similarity
from .observation import (
    METHODS,
    MeasurementEnsemble,
    ModelError,
    ObservationModel,
    best_sim_parameters,
    sample_ensemble,
    sim_parameters,
)
from .projection import ProjectionConfig, ProjectionError, project
from .seeding import derive_seed, make_rng

VALIDATION_ERRORS = (
    ConfigError, GeneratorError, ModelError, ProjectionError, EstimatorError, DiagnosticsError, MetricError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_model(p):
    p.add_argument("--model", required=True, help="observation model kind, e.g. one-bit, cubic, identity")
    p.add_argument("--sigma", type=float, default=0.0)


def _add_projection(p):
    p.add_argument("--method", choices=("latent_adam", "exact_linear"), default=None,
                   help="projection method (default: exact for linear generators)")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--unchecked", action="store_true", help="skip the latent ball constraint")


def _projection_config(args, gen, seed):
    method = args.method or ("exact_linear" if isinstance(gen, LinearGenerator) else "latent_adam")
    return ProjectionConfig(steps=args.steps, learning_rate=args.lr, restarts=args.restarts,
                            restart_seed=seed, method=method, strict=not args.unchecked)


def _generator(path):
    return load_generator(path) if path else default_fixture(0)


def _write_json(data, out):
    text = json.dumps(data, indent=1)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _read_vector(path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = text.split()
    try:
        vec = np.asarray(data, dtype=float)
    except ValueError:
        raise ConfigError(f"{path}: expected a list of numbers") from None
    if vec.ndim != 1:
        raise ConfigError(f"{path}: expected a flat vector")
    return vec


def build_parser():
    parser = _Parser(prog="oneshot", description="One-shot signal recovery under generative priors.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("params", help="print the SIM characterization parameters of a model")
    _add_model(p)
    p.add_argument("--method", choices=METHODS, default="analytic")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--ambient-dim", type=int, default=None, help="needed by signal-noise models")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("simulate", help="plant a signal and write a measurement ensemble")
    _add_model(p)
    p.add_argument("--generator", help="generator file (default: the MLP fixture)")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("project", help="project a vector onto the generator range")
    p.add_argument("--generator", help="generator file (default: the MLP fixture)")
    p.add_argument("--vector", required=True, help="JSON array or whitespace-separated numbers")
    _add_projection(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("recover", help="run one estimator on an ensemble file")
    p.add_argument("--ensemble", required=True)
    p.add_argument("--generator", help="generator file (default: the MLP fixture)")
    p.add_argument("--estimator", choices=ESTIMATOR_KINDS, default="one_shot")
    p.add_argument("--iterations", type=int, default=30)
    p.add_argument("--shrinkage", type=float, default=0.1)
    _add_projection(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("sweep", help="run a sweep from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--output", help="results CSV (overrides the config)")
    p.add_argument("--seed", type=int, default=None, help="override base_seed")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--plot-dir", help="also write plot-data CSVs here")
    p.add_argument("--plot-axis", choices=("m", "sigma"), default="m")

    p = sub.add_parser("rate", help="error-versus-m study with a log-log fit")
    p.add_argument("--config", required=True)
    p.add_argument("--output", help="per-m CSV (overrides the config)")
    p.add_argument("--seed", type=int, default=None, help="override base_seed")

    p = sub.add_parser("diagnose", help="Monte Carlo checks of the concentration bounds")
    p.add_argument("check", choices=("event-e", "mu-hat", "tail", "noise-curve"))
    _add_model(p)
    p.add_argument("--m", type=int, default=200)
    p.add_argument("--n", type=int, default=100, help="ambient dimension when no generator is given")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=2.0)
    p.add_argument("--nu", type=float, nargs="+", default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    p.add_argument("--generator", help="generator file (noise-curve default: the MLP fixture)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="CSV output")
    return parser


def _cmd_params(args):
    model = ObservationModel(args.model, args.sigma, ambient_dim=args.ambient_dim)
    params = sim_parameters(model, args.method, samples=args.samples, seed=args.seed)
    for name, value in params.as_dict().items():
        if isinstance(value, dict):
            for key, se in value.items():
                print(f"se_{key} = {se:.6g}")
        elif isinstance(value, float):
            print(f"{name} = {value:.6f}")
        else:
            print(f"{name} = {value}")
    return 0


def _cmd_simulate(args):
    gen = _generator(args.generator)
    model = ObservationModel(args.model, args.sigma, ambient_dim=gen.n)
    mu = best_sim_parameters(model, seed=args.seed).mu
    x, _, membership = plant_signal(gen, mu, derive_seed(args.seed, 0))
    ens = sample_ensemble(x, args.m, model, derive_seed(args.seed, 1))
    data = ens.to_dict()
    data["membership"] = membership
    _write_json(data, args.out)
    return 0


def _cmd_project(args):
    gen = _generator(args.generator)
    s = _read_vector(args.vector)
    result = project(gen, s, _projection_config(args, gen, args.seed))
    _write_json({"w": result.w.tolist(), "z": result.z.tolist(), "objective": result.objective,
                 "mode": result.mode}, args.out)
    return 0


def _load_ensemble(path):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read ensemble file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return MeasurementEnsemble.from_dict(data)


def _cmd_recover(args):
    ens = _load_ensemble(args.ensemble)
    gen = _generator(args.generator)
    spec = EstimatorSpec(args.estimator, _projection_config(args, gen, args.seed), iterations=args.iterations,
                         shrinkage=args.shrinkage)
    model = ObservationModel(ens.model.kind, ens.model.sigma, ambient_dim=ens.n)
    mu = best_sim_parameters(model, seed=args.seed).mu
    result = run_estimator(spec, ens, gen if args.estimator != "lasso_ista" else None, truth_scale=mu)
    if not np.all(np.isfinite(result.estimate)):
        raise NumericalFailure(f"{args.estimator} produced a non-finite estimate")
    cosine = cosine_similarity(ens.x, result.estimate) if np.any(result.estimate) else 0.0
    _write_json({
        "estimator": args.estimator,
        "estimate": result.estimate.tolist(),
        "cosine": cosine,
        "l2_to_mux": float(np.linalg.norm(result.estimate - mu * ens.x)),
        "runtime_ms": result.runtime_ms,
        "projection_mode": result.projection_mode,
    }, args.out)
    return 0


def _cmd_sweep(args):
    cfg = SweepConfig.load(args.config)
    if args.seed is not None:
        cfg = SweepConfig(cfg.generator, cfg.model_kind, cfg.sigmas, cfg.ms, cfg.trials, cfg.estimators,
                          args.seed, cfg.output, cfg.truth_radius_fraction)
    output = args.output or cfg.output
    if not output:
        raise ConfigError("config.output: missing (or pass --output)")
    rows = run_sweep(cfg, output, threads=args.threads)
    print(f"wrote {len(rows)} rows to {output}")
    if args.plot_dir:
        for path in emit_plot_data(rows, args.plot_axis, args.plot_dir):
            print(f"wrote {path}")
    return 0


def _cmd_rate(args):
    cfg = RateConfig.load(args.config)
    if args.seed is not None or args.output:
        cfg = RateConfig(cfg.generator, cfg.model, cfg.ms, cfg.trials,
                         cfg.base_seed if args.seed is None else args.seed, cfg.projection, cfg.delta,
                         args.output or cfg.output)
    study = run_rate_study(cfg)
    print("m,mean_error,stderr,theory")
    for row in study.rows():
        print(f"{row['m']},{row['mean_error']:.6g},{row['stderr']:.3g},{row['theory']:.6g}")
    fit = study.fit
    print(f"slope = {fit.slope:.4f} +/- {fit.slope_stderr:.4f}, r^2 = {fit.r_squared:.4f}")
    return 0


def _cmd_diagnose(args):
    if args.check == "noise-curve":
        gen = _generator(args.generator)
        n = gen.n
    else:
        gen = None
        n = args.n
    model = ObservationModel(args.model, args.sigma, ambient_dim=n)
    params = best_sim_parameters(model, seed=args.seed)
    rng = make_rng(derive_seed(args.seed, 0))
    if gen is not None:
        x, _, _ = plant_signal(gen, params.mu, derive_seed(args.seed, 0))
    else:
        x = rng.standard_normal(n)
        x /= np.linalg.norm(x)
    seed = derive_seed(args.seed, 1)
    header, records = None, []
    if args.check == "event-e":
        res = event_E_frequency(model, x, args.m, args.trials, seed, params)
        header = ["frequency", "bound", "stderr", "trials", "passed"]
        records = [[res.frequency, res.bound, res.stderr, res.trials, res.passed]]
    elif args.check == "mu-hat":
        res = mu_hat_concentration(model, x, args.m, args.t, args.trials, seed, params)
        header = ["frequency", "bound", "stderr", "trials", "passed"]
        records = [[res.frequency, res.bound, res.stderr, res.trials, res.passed]]
    elif args.check == "tail":
        probe = rng.standard_normal(n)
        res = orthogonal_tail(model, x, probe, args.m, args.epsilon, args.trials, seed, params)
        header = ["tail_frequency", "gaussian_prediction", "reference_tail", "threshold", "stderr", "passed"]
        records = [[res.tail_frequency, res.gaussian_prediction, res.reference_tail, res.threshold,
                    res.stderr, res.passed]]
    else:
        res = corollary_noise_curve(model, gen, x, args.m, args.nu, args.trials, seed, params=params)
        if not np.all(np.isfinite(res.mean_error)):
            raise NumericalFailure("non-finite recovery error in the noise curve")
        header = ["nu", "mean_error", "stderr"]
        records = [list(r) for r in res.rows()]
        print(f"# inversions = {res.inversions}, curvature = {res.curvature:.4g} +/- "
              f"{res.curvature_stderr:.2g}, passed = {res.passed}")
    lines = [",".join(header)] + [",".join(str(v) for v in rec) for rec in records]
    if args.output:
        Path(args.output).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0


COMMANDS = {
    "params": _cmd_params,
    "simulate": _cmd_simulate,
    "project": _cmd_project,
    "recover": _cmd_recover,
    "sweep": _cmd_sweep,
    "rate": _cmd_rate,
    "diagnose": _cmd_diagnose,
}


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:
        # --help exits through argparse
        return int(exc.code or 0)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalFailure, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main())

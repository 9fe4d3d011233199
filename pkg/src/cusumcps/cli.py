"""Command-line entry point: ``cusumcps <subcommand> [--config FILE] [flags]``.

Exit codes: 0 success, 1 invalid input or usage, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import experiments, tuning
from .attacks import worst_case_direction
from .config import ExperimentConfig, load_config
from .detectors import Chi2Config, CusumConfig, CusumState, cusum_run, stream_csv
from .errors import NumericalError, ValidationError
from .numerics import contraction_norm, riccati_residual, spectral_radius
from .output import to_csv, to_json
from .plant import design_filter

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _first(*values):
    for v in values:
        if v is not None:
            return v
    return None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config with [model], [detector], [attack], [run]")
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--seed", type=int)

    p = _Parser(prog="cusumcps", description="Tune and stress-test CUSUM and chi-squared residual detectors.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("tune-cusum", parents=[common], help="CUSUM threshold for a target false-alarm rate")
    s.add_argument("--m", type=int)
    s.add_argument("--b", type=float)
    s.add_argument("--bias-factor", type=float, help="b as a multiple of m")
    s.add_argument("--rate", type=float)
    s.add_argument("--N", type=int)
    s.add_argument("--tol", type=float, default=1e-4)

    s = sub.add_parser("tune-chi2", parents=[common], help="chi-squared threshold for a target false-alarm rate")
    s.add_argument("--m", type=int)
    s.add_argument("--rate", type=float)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo false-alarm rate of a detector")
    s.add_argument("--detector", choices=("cusum", "chi2"))
    s.add_argument("--b", type=float)
    s.add_argument("--bias-factor", type=float)
    s.add_argument("--tau", type=float)
    s.add_argument("--alpha", type=float)
    s.add_argument("--rate", type=float, help="tune the detector to this rate when no threshold is given")
    s.add_argument("--horizon", type=int)
    s.add_argument("--trials", type=int)
    s.add_argument("--warm-up", type=int)

    s = sub.add_parser("boundedness", parents=[common], help="CUSUM trajectories with resets disabled")
    s.add_argument("--factors", type=_floats)
    s.add_argument("--horizon", type=int)
    s.add_argument("--warm-up", type=int)

    s = sub.add_parser("attack", parents=[common], help="zero-alarm attack experiment")
    s.add_argument("--rate", type=float)
    s.add_argument("--b", type=float)
    s.add_argument("--tau", type=float)
    s.add_argument("--alpha", type=float)
    s.add_argument("--k-star", type=int)
    s.add_argument("--horizon", type=int)
    s.add_argument("--warm-up", type=int)
    s.add_argument("--detectors", default="chi2,cusum")
    s.add_argument("--directions", default="uniform,worst_case", help="comma list of uniform, worst_case, custom")
    s.add_argument("--what", choices=("trace", "envelope"), default="trace", help="CSV content")

    s = sub.add_parser("table1", parents=[common], help="threshold table with simulated false-alarm rates")
    s.add_argument("--steps", type=int, help=f"simulated steps per cell (default {experiments.DEFAULT_STEPS})")
    s.add_argument("--N", type=int)
    s.add_argument("--no-simulate", action="store_true")
    s.add_argument("--factors", type=_floats)
    s.add_argument("--rates", type=_floats)

    s = sub.add_parser("ratio-sweep", parents=[common], help="steady-state envelope ratio over (b, rate)")
    s.add_argument("--m", type=int)
    s.add_argument("--factors", type=_floats, default=[1.05, 1.25, 1.5, 2.0])
    s.add_argument("--rates", type=_floats, default=[0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.63])

    sub.add_parser("reactor-info", parents=[common], help="model matrices and derived filter quantities")
    return p


# ---------------------------------------------------------------------------
# Subcommands; each returns (text, default format)
# ---------------------------------------------------------------------------


def _need(value, what: str):
    if value is None:
        raise ValidationError(f"missing {what}")
    return value


def _bias(args, cfg: ExperimentConfig, m: int) -> float:
    b = _first(getattr(args, "b", None), cfg.detector.get("b"))
    factor = _first(getattr(args, "bias_factor", None), cfg.detector.get("bias_factor"))
    if b is None and factor is not None:
        b = factor * m
    return float(_need(b, "bias (--b or --bias-factor)"))


def cmd_tune_cusum(args, cfg: ExperimentConfig):
    m = _first(args.m, cfg.model.m)
    rate = float(_need(_first(args.rate, cfg.detector.get("target_rate")), "--rate"))
    N = _first(args.N, cfg.detector.get("N"), tuning.DEFAULT_PARTITIONS)
    res = tuning.solve_cusum_threshold(m, _bias(args, cfg, m), rate, N=N, tol=args.tol)
    rec = res.to_record()
    if args.format == "csv":
        return to_csv("tune-cusum", list(rec), [list(rec.values())]), "csv"
    return to_json(rec), "json"


def cmd_tune_chi2(args, cfg: ExperimentConfig):
    m = _first(args.m, cfg.model.m)
    rate = float(_need(_first(args.rate, cfg.detector.get("target_rate")), "--rate"))
    rec = {"m": m, "targetRate": rate, "alpha": tuning.chi2_threshold(m, rate)}
    if args.format == "csv":
        return to_csv("tune-chi2", list(rec), [list(rec.values())]), "csv"
    return to_json(rec), "json"


def _detector_from(args, cfg: ExperimentConfig):
    m = cfg.model.m
    kind = _first(args.detector, cfg.detector.get("kind"), "cusum")
    rate = _first(args.rate, cfg.detector.get("target_rate"))
    if kind == "chi2":
        alpha = _first(args.alpha, cfg.detector.get("alpha"))
        if alpha is None:
            alpha = tuning.chi2_threshold(m, float(_need(rate, "--alpha or --rate")))
        return Chi2Config(float(alpha))
    if kind != "cusum":
        raise ValidationError(f"unknown detector kind {kind!r}")
    b = _bias(args, cfg, m)
    tau = _first(args.tau, cfg.detector.get("tau"))
    if tau is None:
        N = cfg.detector.get("N", tuning.DEFAULT_PARTITIONS)
        tau = tuning.solve_cusum_threshold(m, b, float(_need(rate, "--tau or --rate")), N=N).tau
    return CusumConfig(b=b, tau=float(tau), m=m)


def cmd_simulate(args, cfg: ExperimentConfig):
    det = _detector_from(args, cfg)
    horizon = _first(args.horizon, cfg.horizon, experiments.DEFAULT_STEPS)
    trials = _first(args.trials, cfg.trials, 1)
    seed = _first(args.seed, cfg.seed, 0)
    warm = _first(args.warm_up, cfg.warm_up_steps, 1000)
    if args.format == "csv":
        design = design_filter(cfg.model)
        ss = experiments.trial_seeds(seed, trials)[0]
        z = experiments.unattacked_z(cfg.model, design, horizon, ss, warm)
        if isinstance(det, CusumConfig):
            return stream_csv(cusum_run(det, z, CusumState())), "csv"
        return to_csv("detector-stream", ["k", "z", "alarm"], ((i + 1, v, v > det.alpha) for i, v in enumerate(z.tolist()))), "csv"
    est = experiments.estimate_false_alarm_rate(cfg.model, det, horizon, trials, seed, warm)
    rec = {"detector": "chi2" if isinstance(det, Chi2Config) else "cusum", **est.to_record()}
    rec.update({"alpha": det.alpha} if isinstance(det, Chi2Config) else {"b": det.b, "tau": det.tau})
    return to_json(rec), "json"


def cmd_boundedness(args, cfg: ExperimentConfig):
    factors = _first(args.factors, [0.85, 0.95, 1.05])
    res = experiments.boundedness_experiment(
        cfg.model,
        factors,
        horizon=_first(args.horizon, cfg.horizon, 5000),
        seed=_first(args.seed, cfg.seed, 0),
        warm_up_steps=_first(args.warm_up, cfg.warm_up_steps, 1000),
    )
    if args.format == "json":
        m = res.m
        rec = {
            "m": m,
            "terminal": {f"{f:g}": res.terminal(f) for f in res.factors},
            "driftBoundary": {f"{f:g}": (tuning.drift_boundary(f * m, m) if f * m > m else None) for f in res.factors},
        }
        return to_json(rec), "json"
    return res.to_csv(), "csv"


def cmd_attack(args, cfg: ExperimentConfig):
    m = cfg.model.m
    rate = float(_first(args.rate, cfg.detector.get("target_rate"), 0.02))
    b = _first(args.b, cfg.detector.get("b"))
    if b is None and cfg.detector.get("bias_factor") is not None:
        b = cfg.detector["bias_factor"] * m
    directions = tuple(d.strip() for d in args.directions.split(",") if d.strip())
    if cfg.attack.get("direction"):
        directions = (cfg.attack["direction"],)
    detectors = tuple(d.strip() for d in args.detectors.split(",") if d.strip())
    if cfg.attack.get("detector"):
        detectors = (cfg.attack["detector"],)
    for d in detectors:
        if d not in ("chi2", "cusum"):
            raise ValidationError(f"unknown detector {d!r}")
    custom = cfg.attack.get("custom")
    if "custom" in directions and custom is None:
        raise ValidationError("a custom direction needs [attack] custom = [...] in the config")
    exp = experiments.attack_experiment(
        cfg.model,
        target_rate=rate,
        b=b,
        tau=_first(args.tau, cfg.detector.get("tau")),
        alpha=_first(args.alpha, cfg.detector.get("alpha")),
        k_star=_first(args.k_star, cfg.attack.get("k_star"), 2000),
        horizon=_first(args.horizon, cfg.horizon, 6000),
        seed=_first(args.seed, cfg.seed, 0),
        warm_up_steps=_first(args.warm_up, cfg.warm_up_steps, 1000),
        detectors=detectors,
        directions=directions,
        custom=custom,
    )
    if args.format == "json":
        return to_json(exp.summary()), "json"
    return (exp.envelope_csv() if args.what == "envelope" else exp.trajectory_csv()), "csv"


def cmd_table1(args, cfg: ExperimentConfig):
    cells = experiments.table1(
        cfg.model,
        seed=_first(args.seed, cfg.seed, 0),
        steps=_first(args.steps, cfg.horizon, experiments.DEFAULT_STEPS),
        N=_first(args.N, cfg.detector.get("N"), tuning.DEFAULT_PARTITIONS),
        factors=_first(args.factors, experiments.TABLE1_FACTORS),
        rates=_first(args.rates, experiments.TABLE1_RATES),
        simulate=not args.no_simulate,
        warm_up_steps=_first(cfg.warm_up_steps, 1000),
    )
    if args.format == "json":
        return to_json([c.to_record() for c in cells]), "json"
    return experiments.table1_csv(cells), "csv"


def cmd_ratio_sweep(args, cfg: ExperimentConfig):
    m = _first(args.m, cfg.model.m)
    rows = experiments.ratio_sweep(m, args.factors, args.rates)
    if args.format == "json":
        return to_json(rows), "json"
    return experiments.ratio_sweep_csv(rows), "csv"


def cmd_reactor_info(args, cfg: ExperimentConfig):
    model = cfg.model
    design = design_filter(model)
    norm = contraction_norm(model.F) if spectral_radius(model.F) < 1 else None
    rec = {
        "n": model.n,
        "m": model.m,
        "l": model.l,
        "model": model.to_mapping(),
        "P": design.P,
        "L": design.L,
        "Sigma": design.sigma,
        "SigmaSqrt": design.sigma_sqrt,
        "riccatiResidual": riccati_residual(model.F, model.C, model.R1, model.R2, design.P),
        "eigenvalueModuliF": sorted(np.abs(np.linalg.eigvals(model.F)).tolist(), reverse=True),
        "starNormF": None if norm is None else norm.star_norm_of_f,
        "c": None if norm is None else norm.c,
        "worstCaseDirection": worst_case_direction(model, design),
        "biasLowerBound": tuning.bias_lower_bound(model.m),
    }
    if args.format == "csv":
        rows = [[k, v] for k, v in rec.items() if isinstance(v, (int, float)) and not isinstance(v, bool)]
        return to_csv("reactor-info", ["key", "value"], rows), "csv"
    return to_json(rec), "json"


COMMANDS = {
    "tune-cusum": cmd_tune_cusum,
    "tune-chi2": cmd_tune_chi2,
    "simulate": cmd_simulate,
    "boundedness": cmd_boundedness,
    "attack": cmd_attack,
    "table1": cmd_table1,
    "ratio-sweep": cmd_ratio_sweep,
    "reactor-info": cmd_reactor_info,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"cusumcps: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    try:
        cfg = load_config(args.config)
        if args.format is None and cfg.format is not None:
            args.format = cfg.format
        text, _ = COMMANDS[args.command](args, cfg)
    except ValidationError as exc:
        print(f"cusumcps: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"cusumcps: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    out = args.out or cfg.output
    if out:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            print(f"cusumcps: cannot write {out}: {exc}", file=sys.stderr)
            return EXIT_INVALID
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

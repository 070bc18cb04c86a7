"""Command-line entry point: ``risda {synth,train,ablate,sweep,verify,plot}``."""
import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .dataset import synthesize, write_csv

log = logging.getLogger("risda")


class UsageError(Exception):
    pass


def parse_overrides(pairs):
    overrides = {}
    for pair in pairs or []:
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise UsageError(f"override {pair!r} is not of the form key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        overrides[key.strip()] = value
    return overrides


def parse_floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def build_config(args):
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
    data.update(parse_overrides(args.set))
    if args.seeds:
        data["seeds"] = [int(s) for s in args.seeds.split(",") if s.strip()]
    elif args.seed is not None:
        data["seeds"] = [args.seed]
    try:
        return pipeline.ExperimentConfig.from_dict(data)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    except TypeError as exc:
        raise UsageError(str(exc)) from None


def prepare_out(path, force):
    out = Path(path)
    if out.exists() and any(out.iterdir()) and not force:
        raise UsageError(f"output directory {out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args):
    config = build_config(args)
    out = prepare_out(args.out, args.force)
    for seed in config.seeds:
        spec = config.long_tail_spec(seed)
        train, test = synthesize(spec)
        suffix = "" if len(config.seeds) == 1 else f"-seed{seed}"
        write_csv(train, out / f"train{suffix}.csv")
        write_csv(test, out / f"test{suffix}.csv")
        (out / f"spec{suffix}.json").write_text(json.dumps(dataclasses.asdict(spec), indent=2, sort_keys=True) + "\n")
        print(f"wrote {len(train)} train / {len(test)} test rows (seed {spec.seed}) to {out}")
    return 0


def _print_reports(name, reports):
    for r in reports:
        print(f"{name:8s} seed={r.seed} run-{r.config_hash} error={r.overall_error:.2f} "
              f"head={r.head_error:.2f} tail={r.tail_error:.2f}")
    if len(reports) > 1:
        mean, std = pipeline.summarize([r.overall_error for r in reports])
        tmean, tstd = pipeline.summarize([r.tail_error for r in reports])
        print(f"{name:8s} mean error={mean:.2f}±{std:.2f} tail={tmean:.2f}±{tstd:.2f}")


def cmd_train(args):
    config = build_config(args)
    out = prepare_out(args.out, args.force)
    (out / "experiment.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    _print_reports("train", pipeline.train(config, out))
    return 0


def cmd_ablate(args):
    config = build_config(args)
    out = prepare_out(args.out, args.force)
    (out / "experiment.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    for name, reports in pipeline.ablate(config, out).items():
        _print_reports(name, reports)
    return 0


def cmd_sweep(args):
    config = build_config(args)
    alphas = parse_floats(args.alphas) if args.alphas else pipeline.SENSITIVITY_GRID
    betas = parse_floats(args.betas) if args.betas else pipeline.SENSITIVITY_GRID
    out = prepare_out(args.out, args.force)
    (out / "experiment.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    result = pipeline.sweep(config, alphas, betas, out)
    best = divmod(int(result.mean_error.argmin()), len(betas))
    print(f"sweep {len(alphas)}x{len(betas)}: best alpha0={alphas[best[0]]:g} beta0={betas[best[1]]:g} "
          f"error={result.mean_error[best]:.2f}")
    return 0


def cmd_verify(args):
    from .verify import CHECKS, run_all

    names = args.check or None
    unknown = sorted(set(names or []) - set(CHECKS))
    if unknown:
        raise UsageError(f"unknown check(s) {unknown}; available: {', '.join(CHECKS)}")
    results = run_all(names)
    report = {"passed": all(r.passed for r in results), "checks": [r.to_dict() for r in results]}
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0 if report["passed"] else 1


def cmd_plot(args):
    from .plotting import plot_dirs

    for path in plot_dirs(args.dirs, args.out):
        print(f"wrote {path}")
    return 0


def _experiment_args(p, out_required=True):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("--seed", type=int, help="single seed")
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("--force", action="store_true", help="allow writing into a non-empty output directory")


def make_parser():
    parser = argparse.ArgumentParser(prog="risda", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write synthetic long-tailed train/test CSVs")
    _experiment_args(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="two-stage training, one run per seed")
    _experiment_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="full method, without reasoning, without reweighting")
    _experiment_args(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="alpha0 x beta0 sensitivity grid")
    _experiment_args(p)
    p.add_argument("--alphas", help="comma-separated alpha0 grid")
    p.add_argument("--betas", help="comma-separated beta0 grid")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the oracle checks")
    p.add_argument("--check", action="append", help="run only this check (repeatable)")
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plot", help="SVG loss curves and sweep heatmaps")
    p.add_argument("dirs", nargs="+", help="run, experiment or sweep directories")
    p.add_argument("--out", help="write figures here instead of next to the inputs")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError, pipeline.TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

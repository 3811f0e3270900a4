"""``deepspace`` command line: generate, clean, encode, train, eval, sweep, export-paths, gradcheck.

Exit status is 0 on success, 1 on usage errors and 2 on data errors.
Defaults can be supplied through ``--config FILE`` holding ``key=value``
lines (keys are the long option names, dashes or underscores); explicit
flags win over the file.
"""
from __future__ import annotations

import argparse
import contextlib
import os
import sys
from pathlib import Path

from . import encode as enc
from . import evaluation as ev
from . import hier, ingest, nn, synth
from .errors import DeepSpaceError

USAGE_ERROR = 1
DATA_ERROR = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def read_config(path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    return int(os.environ.get("DEEPSPACE_SEED", "0"))


@contextlib.contextmanager
def _output(path, binary=False):
    if path in (None, "-"):
        if binary:
            yield sys.stdout.buffer
        else:
            yield sys.stdout
        return
    with open(path, "wb" if binary else "w", newline="" if not binary else None) as fh:
        yield fh


def _windows(text) -> list[int]:
    if isinstance(text, list):
        return text
    try:
        return [int(w) for w in str(text).split(",") if w.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad window list {text!r}") from None


def _train_cfg(args, W=None) -> nn.TrainConfig:
    return nn.TrainConfig(
        learning_rate=float(args.lr), batch_size=int(args.batch_size), seed=_seed(args),
        W=int(W if W is not None else args.W), epochs=int(args.epochs),
        iterations=int(args.iterations) if args.schedule == "steps" else nn.TrainConfig.iterations,
    )


def _load_trajectories(path):
    with open(path, "rb") as fh:
        records, rejected = ingest.parse_udr_csv(fh)
    if rejected:
        print(f"{path}: skipped {len(rejected)} malformed lines", file=sys.stderr)
    return ingest.group_and_sort(ingest.drop_dirty(records))


# --------------------------------------------------------------------------
# subcommands

def cmd_generate(args):
    seed = _seed(args)
    world = synth.generate_world(args.lacs, args.stations, seed=seed)
    records = []
    for u in range(args.users):
        persona = synth.make_persona(world, args.regularity, args.records_per_day, seed=seed * 1000 + u)
        records += synth.generate_trajectory(world, persona, args.days, args.records_per_day,
                                             seed=seed * 1000 + u, user=str(73900000000 + u))
    truth = []
    if args.anomaly_rate > 0:
        records, truth = synth.inject_anomalies(records, args.anomaly_rate, seed=seed)
    with _output(args.output) as fh:
        ingest.write_udr_csv(records, fh)
    if args.truth:
        with _output(args.truth) as fh:
            synth.write_truth_csv(truth, fh)


def cmd_clean(args):
    with open(args.input, "rb") as fh:
        records, rejected = ingest.parse_udr_csv(fh)
    trajs = ingest.clean_pipeline(records, ingest.CleanConfig(v_max_kmh=args.vmax))
    with _output(args.output) as fh:
        ingest.write_udr_csv(ingest.flatten(trajs), fh)
    if args.rejects:
        with _output(args.rejects) as fh:
            fh.write("line,reason\n")
            for r in rejected:
                fh.write(f"{r.line_number},{r.reason}\n")
    elif rejected:
        print(f"{args.input}: rejected {len(rejected)} lines", file=sys.stderr)


def cmd_encode(args):
    trajs = _load_trajectories(args.input)
    index = enc.build_station_index(trajs)
    samples = []
    for t in trajs:
        samples += enc.make_windows(enc.encode_trajectory(t, index, args.scale), args.W, args.scale)
    with _output(args.output) as fh:
        enc.write_samples_csv(samples, fh)


def cmd_train(args):
    trajs = _load_trajectories(args.input)
    index = enc.build_station_index(trajs)
    cfg = _train_cfg(args)
    train, _ = ev.prepare_events(trajs, index, cfg.W, args.train_fraction)
    if not train:
        raise DeepSpaceError(f"no training windows of length {cfg.W}")
    if args.mode == "flat":
        model = hier.build_flat_model(index, cfg)
    else:
        model = hier.build_hier_model(index, cfg)
    trainer = ev.SCHEDULES[args.schedule](model, train, cfg, parallel=args.parallel)
    with _output(args.output, binary=True) as fh:
        fh.write(hier.model_bytes(model))
    if args.curves:
        with _output(args.curves) as fh:
            hier.write_curves_csv(trainer.curves(), fh)


def cmd_eval(args):
    model = hier.load_model(args.model)
    trajs = _load_trajectories(args.input)
    _, test = ev.prepare_events(trajs, model.index, model.cfg.W, args.train_fraction)
    if isinstance(model, hier.FlatModel):
        row = ev.metrics_row(model.cfg.W, None, ev.evaluate_flat(model, test))
    else:
        row = ev.metrics_row(model.cfg.W, ev.evaluate(model, test))
    with _output(args.output) as fh:
        ev.write_metrics_csv([row], fh)


def cmd_sweep(args):
    trajs = _load_trajectories(args.input)
    index = enc.build_station_index(trajs)
    Ws = _windows(args.windows)
    rows = ev.sweep_windows(trajs, index, Ws, _train_cfg(args, W=max(Ws) if Ws else 1),
                            args.train_fraction, include_flat=not args.no_flat, schedule=args.schedule)
    with _output(args.output) as fh:
        ev.write_metrics_csv([ev.metrics_row(r.W, r.metrics, r.flat_acc) for r in rows], fh)


def cmd_export_paths(args):
    model = hier.load_model(args.model)
    trajs = _load_trajectories(args.input)
    if args.user is None:
        traj = trajs[0] if trajs else None
    else:
        traj = next((t for t in trajs if t.user == args.user), None)
    if traj is None:
        raise DeepSpaceError(f"user {args.user!r} not found in {args.input}")
    rows = ev.export_paths(model, traj, model.index)
    if args.test_only:
        rows = enc.split_train_test(rows, args.train_fraction)[1]
    with _output(args.output) as fh:
        ev.write_paths_csv(rows, fh)


def cmd_gradcheck(args):
    worst = {}
    for seed in range(args.seeds):
        for name, err in nn.layer_grad_checks(seed, args.eps).items():
            worst[name] = max(worst.get(name, 0.0), err)
    failed = [n for n, e in worst.items() if not e < args.tol]
    with _output(args.output) as fh:
        fh.write("layer,max_rel_error,status\n")
        for name, err in worst.items():
            fh.write(f"{name},{err:.3e},{'FAIL' if name in failed else 'ok'}\n")
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}", file=sys.stderr)
        return DATA_ERROR
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deepspace", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key=value defaults file")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, needs_input=True):
        if needs_input:
            p.add_argument("-i", "--input", required=True, help="UDR CSV input")
        p.add_argument("-o", "--output", default="-", help="output path ('-' for stdout)")
        p.add_argument("--seed", type=int, default=None, help="RNG seed (falls back to $DEEPSPACE_SEED, then 0)")

    def training(p):
        p.add_argument("--lr", type=float, default=0.01, help="SGD learning rate")
        p.add_argument("--batch-size", type=int, default=32)
        p.add_argument("--epochs", type=int, default=1, help="passes over the training stream")
        p.add_argument("--iterations", type=int, default=100, help="SGD steps per network under --schedule steps")
        p.add_argument("--schedule", choices=sorted(ev.SCHEDULES), default="epochs",
                       help="train for a number of passes or a per-network step budget")
        p.add_argument("--train-fraction", type=float, default=19 / 23,
                       help="chronological share of each user's windows used for training")

    p = sub.add_parser("generate", help="write a synthetic UDR CSV")
    common(p, needs_input=False)
    p.add_argument("--lacs", type=int, default=4)
    p.add_argument("--stations", type=int, default=10, help="stations per LAC")
    p.add_argument("--days", type=int, default=23)
    p.add_argument("--records-per-day", type=int, default=40)
    p.add_argument("--users", type=int, default=1)
    p.add_argument("--regularity", type=float, default=0.9)
    p.add_argument("--anomaly-rate", type=float, default=0.0, help="share of record pairs given a switching jump")
    p.add_argument("--truth", help="ground-truth sidecar CSV for injected anomalies")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("clean", help="remove dirty records and switching jumps")
    common(p)
    p.add_argument("--vmax", type=float, default=150.0, help="speed ceiling in km/h")
    p.add_argument("--rejects", help="CSV of rejected input lines")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("encode", help="write windowed label samples")
    common(p)
    p.add_argument("-W", type=int, default=50, help="window length")
    p.add_argument("--scale", choices=[enc.FINE, enc.COARSE], default=enc.FINE)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="train a hierarchical or flat model online")
    common(p)
    training(p)
    p.add_argument("-W", type=int, default=50, help="window length")
    p.add_argument("--mode", choices=["hierarchical", "flat"], default="hierarchical")
    p.add_argument("--curves", help="training-curve CSV")
    p.add_argument("--parallel", action="store_true", help="update fine models concurrently")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracies on the held-out split")
    common(p)
    p.add_argument("-m", "--model", required=True)
    p.add_argument("--train-fraction", type=float, default=19 / 23)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train and evaluate across window lengths")
    common(p)
    training(p)
    p.add_argument("--windows", type=_windows, default=[50, 100, 150, 200], help="comma-separated window lengths")
    p.add_argument("--no-flat", action="store_true", help="skip the flat baseline")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-paths", help="true vs predicted coordinates for one user")
    common(p)
    p.add_argument("-m", "--model", required=True)
    p.add_argument("--user", help="phonenum (default: first user)")
    p.add_argument("--test-only", action="store_true", help="only the held-out part of the trajectory")
    p.add_argument("--train-fraction", type=float, default=19 / 23)
    p.set_defaults(func=cmd_export_paths)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config(known.config)
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in sub_action.choices.values():
        dests = {a.dest: a for a in sp._actions}
        defaults = {}
        for key, raw in values.items():
            action = dests.get(key)
            if action is None:
                continue
            if action.type is not None:
                defaults[key] = action.type(raw)
            elif isinstance(action, argparse._StoreTrueAction):
                defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            else:
                defaults[key] = raw
        sp.set_defaults(**defaults)
        for action in sp._actions:
            if action.dest in defaults:
                action.required = False


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            raise UsageError("deepspace: error: a subcommand is required")
        status = args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return USAGE_ERROR
    except (DeepSpaceError, ValueError, OSError) as exc:
        print(f"deepspace: {exc}", file=sys.stderr)
        return DATA_ERROR
    return status or 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

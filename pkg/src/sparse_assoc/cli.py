"""Command line entry points: sweeps, probes, theory values, network files, selftest."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import dynamics as dyn
from . import experiments as ex
from . import netfile, theory
from .models import network_class
from .patterns import NeuronSpace, Pattern, substream

CSV_COLUMNS = [
    "model", "policy", "n", "c", "l", "M", "alpha", "rho", "trials", "error_rate",
    "stderr", "mean_iters", "cycle_rate", "notfound_rate", "efficiency", "seed",
]
PROG = "sparse-assoc"
THREADS_ENV = "SPARSE_ASSOC_THREADS"

GB_POLICIES = ("cluster-wta", "cluster-wta-sum", "som")
GLOBAL_POLICIES = ("wta-max", "wta-kth")
POLICIES = ("threshold", "input-count", "wta-max", "wta-kth", "cluster-wta", "cluster-wta-sum", "som", "exhaustive")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- parsing

def parse_range(text: str) -> list[int]:
    """``start:stop:step`` (inclusive) or a comma list of integers."""
    try:
        if ":" in text:
            parts = [int(float(x)) for x in text.split(":")]
            if len(parts) == 2:
                parts.append(1)
            start, stop, step = parts
            if step <= 0 or stop < start:
                raise ValueError
            return list(range(start, stop + 1, step))
        return [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad range {text!r}: expected start:stop:step or a comma list") from None


def parse_float_range(text: str) -> list[float]:
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            k = int(math.floor((stop - start) / step + 1e-9))
            return [round(start + i * step, 12) for i in range(k + 1)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad range {text!r}: expected start:stop:step or a comma list") from None


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _add_space(p, gb_only=False):
    if not gb_only:
        p.add_argument("--neurons", type=int, default=2048, help="neuron count N for amari/willshaw (default: %(default)s)")
        p.add_argument("--sparsity", type=int, default=8, help="active neurons per message c for amari/willshaw (default: %(default)s)")
    p.add_argument("--clusters", type=int, default=None, help="GB cluster count c (default: %(default)s)")
    p.add_argument("--per-cluster", type=int, default=None, help="GB neurons per cluster l (default: %(default)s)")


def _add_run(p, trials=2000):
    p.add_argument("--trials", type=int, default=trials, help="trials per point (default: %(default)s)")
    p.add_argument("--batch-size", type=int, default=100, help="trials sharing one network (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default: %(default)s)")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help=f"worker cap, also read from ${THREADS_ENV} (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description=__doc__, allow_abbrev=False,
                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help):
        return sub.add_parser(name, help=help, allow_abbrev=False)

    p = add("sweep", "retrieval error rate against the number of stored messages")
    p.add_argument("--model", choices=ex.MODELS, required=True, help="network model")
    _add_space(p)
    p.add_argument("--distribution", choices=ex.DISTRIBUTIONS, default=None,
                   help="message distribution (default: gb for gb, exact otherwise)")
    p.add_argument("--erase", type=int, default=0, help="active bits erased from the cue (default: %(default)s)")
    p.add_argument("--policy", choices=POLICIES, required=True, help="retrieval dynamics")
    p.add_argument("--threshold", type=int, default=None, help="h for --policy threshold (default: %(default)s)")
    p.add_argument("--max-candidates", type=int, default=dyn.DEFAULT_MAX_CANDIDATES,
                   help="exhaustive search cap (default: %(default)s)")
    p.add_argument("--patterns", default=None, help="M values, start:stop:step inclusive or comma list")
    p.add_argument("--alpha-range", default=None, help="loads alpha, start:stop:step or comma list; M = alpha * scale")
    p.add_argument("--max-iters", type=int, default=dyn.DEFAULT_MAX_ITERS, help="iteration cap (default: %(default)s)")
    _add_run(p)
    p.add_argument("--out", default=None, help="CSV output path (default: stdout)")
    p.add_argument("--append", action="store_true", help="append rows to an existing CSV")
    p.add_argument("--plot-script", default=None, help="also write a gnuplot script for --out")

    p = add("stability", "probability that one step leaves a stored message unchanged")
    p.add_argument("--model", choices=ex.MODELS, required=True)
    _add_space(p)
    p.add_argument("--distribution", choices=ex.DISTRIBUTIONS, default=None)
    p.add_argument("--policy", choices=POLICIES, required=True)
    p.add_argument("--threshold", type=int, default=None)
    p.add_argument("--patterns", default=None, help="M values")
    p.add_argument("--alpha-range", default=None, help="loads alpha; M = alpha * scale")
    _add_run(p, trials=1000)
    p.add_argument("--out", default=None, help="CSV output path (default: stdout only)")

    for name, help in (("wrong-message", "chance a random GB message is recognized"),
                       ("subclique", "chance a partly wrong GB message is recognized")):
        p = add(name, help)
        _add_space(p, gb_only=True)
        p.add_argument("--patterns", default=None, help="M values")
        p.add_argument("--alpha-range", default=None, help="loads alpha; M = alpha * l^2 * ln(c)")
        if name == "subclique":
            p.add_argument("--rho", type=float, default=0.5, help="kept fraction of clusters (default: %(default)s)")
        _add_run(p, trials=10_000)
        p.add_argument("--out", default=None, help="CSV output path (default: stdout only)")

    p = add("theory", "closed-form constants and bounds")
    p.add_argument("--constant", choices=theory.CONSTANTS, default=None, help="print one constant")
    p.add_argument("--rho", type=float, default=None, help="erasure rate for rho-dependent constants")
    p.add_argument("--clusters", type=int, default=None, help="c for recognition bounds")
    p.add_argument("--per-cluster", type=int, default=None, help="l for recognition bounds")
    p.add_argument("--patterns", default=None, help="M values for recognition bounds")

    p = add("store", "build a network from random messages and save it")
    p.add_argument("--model", choices=ex.MODELS, required=True)
    _add_space(p)
    p.add_argument("--distribution", choices=ex.DISTRIBUTIONS, default=None)
    p.add_argument("--patterns", type=int, required=True, help="number of messages M")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-stored", action="store_true", help="omit the stored-message section")
    p.add_argument("--out", required=True, help="network file path")

    p = add("recall", "run a retrieval dynamics on a saved network")
    p.add_argument("--network", required=True, help="network file")
    p.add_argument("--input", default=None, help="comma list of active neuron indices")
    p.add_argument("--stored-index", type=int, default=None, help="cue from this stored message")
    p.add_argument("--erase", type=int, default=0, help="bits erased from the stored cue")
    p.add_argument("--policy", choices=POLICIES, required=True)
    p.add_argument("--threshold", type=int, default=None)
    p.add_argument("--target-size", type=int, default=None, help="completion size for exhaustive search")
    p.add_argument("--max-iters", type=int, default=dyn.DEFAULT_MAX_ITERS)
    p.add_argument("--seed", type=int, default=0)

    p = add("plot", "write a gnuplot script for sweep CSV files")
    p.add_argument("csv", nargs="+", help="sweep CSV files")
    p.add_argument("--out", required=True, help="script path")

    p = add("selftest", "run the built-in property suites")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _space_args(args, model: str):
    """``(n, c, l)`` for the chosen model, validating the flag combination."""
    if model == "gb":
        if args.clusters is None or args.per_cluster is None:
            raise UsageError("the gb model needs --clusters and --per-cluster")
        return args.clusters * args.per_cluster, args.clusters, args.per_cluster
    if getattr(args, "clusters", None) is not None or getattr(args, "per_cluster", None) is not None:
        raise UsageError(f"--clusters/--per-cluster only apply to the gb model, not {model}")
    return args.neurons, args.sparsity, None


def _policy(args, model: str, c: int):
    name = args.policy
    if name in GB_POLICIES and model != "gb":
        raise UsageError(f"policy {name} needs the gb model (use --model gb with --clusters)")
    if name in GLOBAL_POLICIES and model == "gb":
        raise UsageError(f"policy {name} does not apply to the gb model")
    if name == "threshold" and args.threshold is None:
        raise UsageError("policy threshold needs --threshold")
    if name != "threshold" and getattr(args, "threshold", None) is not None:
        raise UsageError("--threshold only applies to --policy threshold")
    return ex.make_policy(name, c, args.threshold, getattr(args, "max_candidates", dyn.DEFAULT_MAX_CANDIDATES))


def _loads(args, scale: float) -> list[int]:
    if (args.patterns is None) == (args.alpha_range is None):
        raise UsageError("give exactly one of --patterns and --alpha-range")
    if args.patterns is not None:
        ms = parse_range(args.patterns)
    else:
        ms = [max(0, int(round(a * scale))) for a in parse_float_range(args.alpha_range)]
    if not ms:
        raise UsageError("empty M sweep")
    return ms


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse and validate; raises :class:`UsageError` on any bad flag or combination."""
    args = build_parser().parse_args(argv)
    cmd = args.command
    if cmd in ("sweep", "stability", "store"):
        n, c, l = _space_args(args, args.model)
        args.n, args.c, args.l = n, c, l
        if args.distribution is None:
            args.distribution = "gb" if args.model == "gb" else "exact"
        if cmd != "store":
            args.policy_obj = _policy(args, args.model, c)
            args.scale = ex.load_scale(args.model, n, c, l)
            args.M = _loads(args, args.scale)
    elif cmd in ("wrong-message", "subclique"):
        if args.clusters is None or args.per_cluster is None:
            raise UsageError(f"{cmd} needs --clusters and --per-cluster")
        args.scale = args.per_cluster ** 2 * math.log(args.clusters)
        args.M = _loads(args, args.scale)
    elif cmd == "theory":
        if args.patterns is not None and (args.clusters is None or args.per_cluster is None):
            raise UsageError("recognition bounds need --clusters and --per-cluster")
    elif cmd == "recall":
        if (args.input is None) == (args.stored_index is None):
            raise UsageError("give exactly one of --input and --stored-index")
    if cmd == "sweep":
        if args.append and args.out is None:
            raise UsageError("--append needs --out")
        if args.plot_script and args.out is None:
            raise UsageError("--plot-script needs --out")
        args.spec = _spec_from_args(args)
    return args


def _spec_from_args(args) -> ex.ExperimentSpec:
    try:
        return ex.ExperimentSpec(
            model=args.model, policy=args.policy_obj, patterns=args.M, n=args.n, c=args.c, l=args.l,
            distribution=args.distribution, erase=args.erase, trials=args.trials, batch_size=args.batch_size,
            max_iters=args.max_iters, seed=args.seed, workers=args.threads,
        )
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------- CSV and plots

def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.9g}"
    return "" if x is None else str(x)


def result_rows(result: ex.ExperimentResult) -> list[dict]:
    spec = result.spec
    rows = []
    for p in sorted(result.points, key=lambda p: p.M):
        rows.append({
            "model": spec.model, "policy": spec.policy_name, "n": spec.n, "c": spec.c,
            "l": spec.l if spec.l is not None else 0, "M": p.M, "alpha": float(p.alpha), "rho": float(p.rho),
            "trials": p.trials, "error_rate": float(p.error_rate), "stderr": float(p.stderr),
            "mean_iters": float(p.mean_iters), "cycle_rate": float(p.cycle_rate),
            "notfound_rate": float(p.notfound_rate), "efficiency": float(p.efficiency), "seed": spec.seed,
        })
    return rows


def write_results(result: ex.ExperimentResult, path, append: bool = False, config: Optional[dict] = None):
    """Write sweep rows as CSV, optionally after a ``# config: {...}`` comment line."""
    path = Path(path)
    has_header = append and path.exists() and path.stat().st_size > 0
    try:
        with open(path, "a" if append else "w", newline="") as fh:
            if config is not None:
                fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            if not has_header:
                w.writerow(CSV_COLUMNS)
            for row in result_rows(result):
                w.writerow([_fmt(row[k]) for k in CSV_COLUMNS])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror or exc}") from exc
    return path


_INT_COLUMNS = {"n", "c", "l", "M", "trials", "seed"}


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = []
    for rec in csv.DictReader(lines):
        row = {}
        for k, v in rec.items():
            if k in ("model", "policy"):
                row[k] = v
            elif k in _INT_COLUMNS:
                row[k] = int(v)
            else:
                row[k] = float(v)
        rows.append(row)
    return rows


def emit_plot_script(csv_paths: Sequence, out_path) -> Path:
    """gnuplot script: error rate against M (left) and against efficiency (right)."""
    series = []
    for p in csv_paths:
        if not Path(p).exists():
            raise FileNotFoundError(f"missing CSV {p}")
        for row in read_results(p):
            key = (str(p), row["model"], row["policy"])
            if key not in series:
                series.append(key)
    out_path = Path(out_path)
    image = out_path.with_suffix(".png").name

    def plot_cmd(xcol):
        lines = []
        for path, model, policy in series:
            sel = f'(strcol("model") eq "{model}" && strcol("policy") eq "{policy}" ? column("{xcol}") : NaN)'
            lines.append(f'"{path}" using {sel}:(column("error_rate")) with linespoints title "{model} {policy}"')
        return "plot " + ", \\\n     ".join(lines) + "\n"

    text = (
        'set datafile separator ","\n'
        'set datafile commentschars "#"\n'
        "set datafile columnheaders\n"
        "set terminal pngcairo size 1200,450\n"
        f'set output "{image}"\n'
        "set multiplot layout 1,2\n"
        "set yrange [0:1]\n"
        'set ylabel "error_rate"\n'
        "set key bottom right\n"
        'set xlabel "M"\n'
        + plot_cmd("M")
        + 'set xlabel "efficiency"\n'
        + plot_cmd("efficiency")
        + "unset multiplot\n"
    )
    out_path.write_text(text)
    return out_path


# ---------------------------------------------------------------- commands

def _print_config(config: dict, out):
    print("# config: " + json.dumps(config, sort_keys=True), file=out)


def _cmd_sweep(args, out) -> int:
    spec = args.spec
    config = spec.resolved()
    config["scale"] = args.scale
    _print_config(config, sys.stderr if args.out is None else out)

    def progress(p):
        print(f"# M={p.M} alpha={p.alpha:.4g} error_rate={p.error_rate:.4f} +- {p.stderr:.4f} "
              f"({p.wall_time:.1f}s)", file=sys.stderr)

    result = ex.run_retrieval_sweep(spec, progress=progress)
    # worker count never changes results, so it stays out of the file
    config = {k: v for k, v in config.items() if k != "workers"}
    if args.out is None:
        print("# config: " + json.dumps(config, sort_keys=True), file=out)
        w = csv.writer(out, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in result_rows(result):
            w.writerow([_fmt(row[k]) for k in CSV_COLUMNS])
    else:
        write_results(result, args.out, append=args.append, config=config)
        if args.plot_script:
            emit_plot_script([args.out], args.plot_script)
    return 0


def _probe_table(rows: list[dict], header: list[str], path, out):
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in header])
    if path:
        with open(path, "w", newline="") as fh:
            cw = csv.writer(fh, lineterminator="\n")
            cw.writerow(header)
            for r in rows:
                cw.writerow([_fmt(r[k]) for k in header])


def _cmd_stability(args, out) -> int:
    config = {k: v for k, v in vars(args).items() if k not in ("policy_obj",)}
    _print_config(config, out)
    rows = []
    for m in args.M:
        r = ex.stability_probe(args.model, args.n, args.c, m, args.policy_obj, args.trials, args.seed,
                               distribution=args.distribution, l=args.l, batch_size=args.batch_size,
                               workers=args.threads)
        rows.append({"M": m, "alpha": m / args.scale, "trials": r.trials, "estimate": r.estimate, "stderr": r.stderr})
    _probe_table(rows, ["M", "alpha", "trials", "estimate", "stderr"], args.out, out)
    return 0


def _cmd_recognition(args, out) -> int:
    _print_config(dict(vars(args)), out)
    rows = []
    for m in args.M:
        if args.command == "wrong-message":
            r = ex.wrong_message_probe(args.per_cluster, args.clusters, m, args.trials, args.seed,
                                       batch_size=args.batch_size, workers=args.threads)
            bound = theory.recognition_lower_bound(args.per_cluster, args.clusters, m)
            rho = None
        else:
            r = ex.subclique_probe(args.per_cluster, args.clusters, m, args.rho, args.trials, args.seed,
                                   batch_size=args.batch_size, workers=args.threads)
            rho = r.rho
            bound = theory.subclique_lower_bound(args.per_cluster, args.clusters, m, rho)
        rows.append({"M": m, "alpha": m / args.scale, "rho": rho, "trials": r.trials,
                     "estimate": r.estimate, "stderr": r.stderr, "lower_bound": bound})
    _probe_table(rows, ["M", "alpha", "rho", "trials", "estimate", "stderr", "lower_bound"], args.out, out)
    return 0


def _cmd_theory(args, out) -> int:
    if args.constant is not None:
        print(f"{theory.eval_constant(args.constant, args.rho):.17g}", file=out)
        return 0
    if args.patterns is not None:
        l, c = args.per_cluster, args.clusters
        print("M,alpha,recognition_lower_bound", file=out)
        for m in parse_range(args.patterns):
            print(f"{m},{_fmt(theory.recognition_alpha(l, c, m))},{_fmt(theory.recognition_lower_bound(l, c, m))}", file=out)
        return 0
    rho = args.rho
    for name in theory.CONSTANTS:
        print(f"{name},{theory.eval_constant(name, rho):.17g}", file=out)
    return 0


def _cmd_store(args, out) -> int:
    distribution = args.distribution or ("gb" if args.model == "gb" else "exact")
    rng = substream(args.seed, 0)
    msgs = ex._draw_messages(distribution, args.n, args.c, args.l, args.patterns, rng)
    space = NeuronSpace(args.n, args.c, args.l) if args.model == "gb" else NeuronSpace(args.n)
    try:
        net = network_class(args.model).build(space, msgs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    data = netfile.save(net, args.out, include_stored=not args.no_stored)
    print(f"wrote {args.model} network n={args.n} M={net.m_stored} ({len(data)} bytes) to {args.out}", file=out)
    return 0


def _cmd_recall(args, out) -> int:
    net = netfile.load(args.network)
    model = net.model_name
    c = net.space.c if model == "gb" else (args.target_size or 0)
    if args.input is not None:
        cue = Pattern(net.space, parse_range(args.input))
        target = args.target_size
    else:
        if net.stored is None:
            raise UsageError("network file has no stored messages; use --input")
        orig = net.stored[args.stored_index]
        cue = Pattern._trusted(net.space, np.sort(substream(args.seed, 0).choice(orig.active, len(orig) - args.erase, replace=False)))
        target = args.target_size or len(orig)
        c = c or len(orig)
    policy = _policy(args, model, c)
    print(f"input {cue.active.tolist()}", file=out)
    if isinstance(policy, dyn.Exhaustive):
        res = dyn.retrieve_exhaustive(net, cue, target, policy.max_candidates, substream(args.seed, 1))
        print(f"completion {res.active.tolist()}", file=out)
        return 0
    tr = dyn.iterate(net, cue, policy, args.max_iters)
    for t, s in enumerate(tr.states):
        print(f"t={t} {s.active.tolist()}", file=out)
    if tr.status == "converged":
        print(f"converged at step {tr.converged_at}", file=out)
    elif tr.status == "cycle":
        print(f"cycle entry {tr.entry} period {tr.period}", file=out)
    else:
        print(f"truncated after {tr.steps} steps", file=out)
    return 0


def _cmd_plot(args, out) -> int:
    emit_plot_script(args.csv, args.out)
    print(f"wrote {args.out}", file=out)
    return 0


def _cmd_selftest(args, out) -> int:
    from .selftest import run_all

    ok = True
    for name, passed, detail in run_all(seed=args.seed):
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}", file=out)
    return 0 if ok else 1


COMMANDS = {
    "sweep": _cmd_sweep, "stability": _cmd_stability, "wrong-message": _cmd_recognition,
    "subclique": _cmd_recognition, "theory": _cmd_theory, "store": _cmd_store, "recall": _cmd_recall,
    "plot": _cmd_plot, "selftest": _cmd_selftest,
}


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, LookupError, RuntimeError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``partsim {freq,occupancy,coalescent,constants,verify}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import asymptotics as asy
from . import harness
from .coalescent import allelic_partition, drop_mutations, simulate, total_length
from .errors import PartsimError
from .freq import make_example_bosz, make_example_newex, make_log_law, make_power_law
from .io import read_freq, write_events, write_freq, write_mutations, write_spectrum
from .occupancy import sample_fixed, sample_poissonized


def _cmd_freq(args) -> int:
    if args.model == "powerlaw":
        seq, _ = make_power_law(args.alpha, args.trunc)
    elif args.model == "loglaw":
        seq, _ = make_log_law(args.trunc)
    elif args.model == "newex":
        rng = np.random.default_rng(args.seed)
        schedule = harness._int_list(args.schedule)
        seq = make_example_newex(args.alpha, schedule, rng, r_max=args.r_max,
                                 truncation=args.trunc)
    else:
        seq = make_example_bosz(args.n_max, args.trunc)
    path = write_freq(seq, args.out)
    print(f"wrote {len(seq)} groups (dust={seq.dust:.3g}) to {path}")
    return 0


def _cmd_occupancy(args) -> int:
    seq = read_freq(args.freq)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["replicate,seed,sample_size,K_n"]
    for rep in range(args.reps):
        seed = harness.replicate_seed(args.seed, args.n, rep)
        rng = np.random.default_rng(seed)
        if args.poisson is not None:
            spec = sample_poissonized(seq, args.poisson, rng)
        else:
            spec = sample_fixed(seq, args.n, rng)
        write_spectrum(spec, out / f"spectrum_{rep:05d}.csv", seed)
        lines.append(f"{rep},{seed},{spec.sample_size},{spec.n_blocks}")
    (out / "summary.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {args.reps} spectra to {out}")
    return 0


def _cmd_coalescent(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["replicate,seed,K_n,S_n,L_n"]
    for rep in range(args.reps):
        seed = harness.replicate_seed(args.seed, args.n, rep)
        rng = np.random.default_rng(seed)
        hist = simulate(args.model, args.n, rng)
        muts = drop_mutations(hist, args.theta, rng)
        spec = allelic_partition(hist, muts)
        write_events(hist, out / f"events_{rep:05d}.tsv")
        write_mutations(muts, out / f"mutations_{rep:05d}.tsv")
        write_spectrum(spec, out / f"spectrum_{rep:05d}.csv", seed)
        lines.append(f"{rep},{seed},{spec.n_blocks},{len(muts)},{total_length(hist)!r}")
    (out / "summary.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {args.reps} genealogies to {out}")
    return 0


def _constant_rows(args) -> list:
    m = args.model
    rs = args.r or [1, 2, 3, 4, 5]
    rows = []

    def add(t: asy.LimitTarget):
        rows.append({"target": t.name, "scaling": t.scaling.label, "constant": t.constant})

    if m == "powerlaw":
        add(asy.powerlaw_targets(args.alpha))
        for r in rs:
            add(asy.powerlaw_targets(args.alpha, r))
            add(asy.powerlaw_targets(args.alpha, r, statistic="ratio"))
    elif m == "loglaw":
        add(asy.loglaw_kn_target())
        for r in rs:
            add(asy.loglaw_targets(r))
    elif m == "beta":
        add(asy.coalescent_targets("beta", args.theta, args.alpha))
        for r in rs:
            add(asy.coalescent_targets("beta", args.theta, args.alpha, r))
            add(asy.coalescent_targets("beta", args.theta, args.alpha, r, "ratio"))
    elif m == "uniform":
        add(asy.coalescent_targets("uniform", args.theta))
        for r in rs:
            add(asy.coalescent_targets("uniform", args.theta, None, r))
    elif m == "growpop":
        gamma = args.gamma if args.gamma is not None else args.alpha / (1.0 - args.alpha)
        for s in ("L_n", "S_n", "K_n"):
            add(asy.coalescent_targets("growpop", args.theta, gamma, statistic=s))
        for r in rs:
            add(asy.coalescent_targets("growpop", args.theta, gamma, r))
            add(asy.coalescent_targets("growpop", args.theta, gamma, r, "ratio"))
    return rows


def _cmd_constants(args) -> int:
    rows = _constant_rows(args)
    if args.json:
        print(json.dumps(rows, indent=2))
    else:
        width = max(len(r["target"]) for r in rows)
        print(f"{'target':<{width}}  {'scaling':<20}  constant")
        for r in rows:
            print(f"{r['target']:<{width}}  {r['scaling']:<20}  {r['constant']:.12g}")
    return 0


def _cmd_verify(args) -> int:
    mapping = harness.read_config(args.config) if args.config else {}
    result = harness.run_suite(args.suite, mapping)
    files = harness.export(result, args.out)
    for rep in result.reports:
        print(rep.summary())
    for key, val in result.checks.items():
        if isinstance(val, (bool, float, int)):
            print(f"{key}: {val}")
    if result.demo is not None:
        print(f"{result.demo.name}: {result.demo.statement}")
    print(f"suite {args.suite}: {'PASS' if result.verdict else 'FAIL'}")
    print("wrote " + ", ".join(str(f) for f in files))
    return 0 if result.verdict else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="partsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("freq", help="build a frequency sequence and write it as text")
    f.add_argument("--model", choices=("powerlaw", "loglaw", "newex", "bosz"), required=True)
    f.add_argument("--alpha", type=float, default=0.5)
    f.add_argument("--trunc", type=harness._int, default=10**6)
    f.add_argument("--n-max", type=int, default=3, help="bosz: largest marked group")
    f.add_argument("--schedule", default="1000,100000,100000000", help="newex: scales n_k")
    f.add_argument("--r-max", type=int, default=4, help="newex: cap on R_k")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True)
    f.set_defaults(func=_cmd_freq)

    o = sub.add_parser("occupancy", help="sample paintbox spectra from a sequence file")
    o.add_argument("--freq", required=True)
    o.add_argument("--n", type=harness._int, required=True)
    o.add_argument("--poisson", type=float, default=None, metavar="T",
                   help="Poissonized sampling at time T instead of fixed n")
    o.add_argument("--reps", type=int, default=1)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--out", required=True)
    o.set_defaults(func=_cmd_occupancy)

    c = sub.add_parser("coalescent", help="simulate genealogies with mutations")
    c.add_argument("--model", required=True, help="kingman | uniform | beta:A | growpop:G")
    c.add_argument("--n", type=harness._int, required=True)
    c.add_argument("--theta", type=float, default=1.0)
    c.add_argument("--reps", type=int, default=1)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.set_defaults(func=_cmd_coalescent)

    k = sub.add_parser("constants", help="print limit scalings and constants")
    k.add_argument("--model", choices=("powerlaw", "loglaw", "beta", "uniform", "growpop"),
                   required=True)
    k.add_argument("--alpha", type=float, default=0.5)
    k.add_argument("--gamma", type=float, default=None)
    k.add_argument("--theta", type=float, default=1.0)
    k.add_argument("--r", type=int, action="append")
    k.add_argument("--json", action="store_true")
    k.set_defaults(func=_cmd_constants)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("--suite", choices=harness.SUITES, required=True)
    v.add_argument("--config", default=None)
    v.add_argument("--out", required=True)
    v.set_defaults(func=_cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PartsimError as exc:
        print(f"partsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

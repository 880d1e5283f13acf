"""Command-line front end.

Usage::

    hbf sweep recipe.cfg --snr -20,-10,0 --trials 50 --out results/
    hbf solve-one --seed 7 --algo gevd --out dump/

Exit status is 0 on success, 1 for configuration errors and 2 when a solver
fails. Progress goes to standard error; data goes to files under ``--out``.
"""

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, replace

import numpy as np

from . import harness
from .config import ConfigError, build_config, parse_config, read_config, to_json
from .driver import Init, SolverError, solve, write_run_trace
from .manifold import write_trace
from .matrix_io import write_matrices
from .mmse import range_spectral_efficiency

log = logging.getLogger("mmsehbf")

BROADBAND_DEFAULT_SUBCARRIERS = 16
PAPER_SCALE = {"n_tx": 64, "n_rx": 64, "trials": 1000}
PAPER_SUBCARRIERS = 64


def _csv_list(conv):
    def parse(text):
        try:
            return tuple(conv(x.strip()) for x in text.split(",") if x.strip())
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad list {text!r}: {exc}") from None

    return parse


def build_parser():
    p = argparse.ArgumentParser(prog="hbf", description="Hybrid beamforming design and link simulation.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("sweep", "Monte Carlo MSE/BER/SE sweep over SNR"),
        ("converge", "mean objective per outer iteration for each init mode"),
        ("quantize", "metrics versus analog phase resolution"),
        ("solve-one", "solve one seeded channel and dump the beamformer"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("config", nargs="?", help="experiment config file")
        sp.add_argument("--algo", type=_csv_list(str), help="comma-separated algorithms")
        sp.add_argument("--criterion", choices=("mmse", "wmmse"))
        sp.add_argument("--scenario", choices=("narrowband", "broadband"))
        sp.add_argument("--snr", type=_csv_list(float), help="comma-separated SNRs in dB")
        sp.add_argument("--trials", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--quant-bits", type=_csv_list(int), help="comma-separated bit counts")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--paper-scale", action="store_true", help="64x64 arrays, 1000 trials")
        sp.add_argument("--trace", action="store_true", help="write solver iteration CSVs")
        sp.add_argument("--plot", action="store_true", help="also render PNG charts")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args):
    """Config file (or defaults) with command-line overrides applied."""
    base = read_config(args.config) if args.config else parse_config("")
    over = {}
    if args.algo is not None:
        over["algorithms"] = tuple(a.lower().replace("-", "_") for a in args.algo)
    if args.criterion is not None:
        over["criterion"] = args.criterion
    if args.scenario == "narrowband":
        over["n_subcarriers"] = 1
    elif args.scenario == "broadband" and base.n_subcarriers == 1:
        over["n_subcarriers"] = BROADBAND_DEFAULT_SUBCARRIERS
    if args.snr is not None:
        over["snr_db"] = args.snr
    if args.trials is not None:
        over["trials"] = args.trials
    if args.seed is not None:
        over["seed"] = args.seed
    if args.quant_bits is not None:
        over["quant_bits"] = args.quant_bits
    if args.out is not None:
        over["out"] = args.out
    if args.paper_scale:
        over.update(PAPER_SCALE)
        if over.get("n_subcarriers", base.n_subcarriers) > 1:
            over["n_subcarriers"] = PAPER_SUBCARRIERS
    return build_config(over, base=base)


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _run_sweep(cfg, args):
    path = os.path.join(cfg.out, "sweep.csv")
    records = harness.run_sweep(cfg, path)
    _write_text(os.path.join(cfg.out, "sweep.json"), to_json(cfg))
    if args.plot:
        for metric in harness.METRICS:
            harness.plot_records(records, os.path.join(cfg.out, f"sweep_{metric}.png"), metric)
    return [path]


def _run_converge(cfg, args):
    path = os.path.join(cfg.out, "converge.csv")
    harness.run_convergence_study(cfg, path)
    _write_text(os.path.join(cfg.out, "converge.json"), to_json(cfg))
    return [path]


def _run_quantize(cfg, args):
    path = os.path.join(cfg.out, "quantize.csv")
    records = harness.run_quantization_study(cfg, path)
    _write_text(os.path.join(cfg.out, "quantize.json"), to_json(cfg))
    if args.plot:
        _plot_quant(records, os.path.join(cfg.out, "quantize_ber.png"))
    return [path]


def _plot_quant(records, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for alg in dict.fromkeys(r.algorithm for r in records):
        for snr in dict.fromkeys(r.snr_db for r in records):
            rows = [r for r in records if r.algorithm == alg and r.snr_db == snr and r.metric == "ber"]
            q_rows = [r for r in rows if r.quant_bits is not None]
            ref = [r for r in rows if r.quant_bits is None]
            line = ax.plot([r.quant_bits for r in q_rows], [r.value for r in q_rows], marker="o",
                           label=f"{alg} {snr:g} dB")
            if ref:
                ax.axhline(ref[0].value, ls="--", color=line[0].get_color())
    ax.set_yscale("log")
    ax.set_xlabel("phase bits")
    ax.set_ylabel("BER")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def _run_solve_one(cfg, args):
    alg = cfg.algorithms[0]
    snr = cfg.snr_db[0]
    dims = cfg.dims(snr)
    opts = cfg.solver_options(alg, 0, init=Init(cfg.inits[0]))
    if args.trace:
        opts = replace(opts, keep_inner=True)
    ch = cfg.channel(0)
    res = solve(ch, dims, opts)
    written = []

    def dump(name, mat):
        path = os.path.join(cfg.out, name)
        write_matrices(path, mat)
        written.append(path)

    dump("channel.csv", ch.per_subcarrier)
    if res.beamformer is not None:
        bf = res.beamformer
        dump("v_rf.csv", bf.v_rf)
        dump("w_rf.csv", bf.w_rf)
        dump("v_dig.csv", bf.v_dig)
        dump("w_dig.csv", bf.w_dig)
    dump("v.csv", res.transceiver.v)
    dump("w.csv", res.transceiver.w)
    dump("beta.csv", np.asarray(res.transceiver.beta, dtype=complex)[:, None, None])
    if args.trace:
        path = os.path.join(cfg.out, "trace.csv")
        write_run_trace(path, res.trace)
        written.append(path)
        for outer_iter, side, mo in res.trace.inner:
            path = os.path.join(cfg.out, f"trace_mo_{outer_iter:03d}_{side}.csv")
            write_trace(path, mo)
            written.append(path)
    _write_text(os.path.join(cfg.out, "solve-one.json"), to_json(cfg))
    summary = {
        "algorithm": alg,
        "criterion": cfg.criterion,
        "snr_db": snr,
        "mse": harness.analytic_mse(ch.per_subcarrier, res.transceiver, dims.noise_var),
        "se": range_spectral_efficiency(ch.per_subcarrier, res.transceiver, dims.noise_var),
        "outer_iterations": len(res.trace),
    }
    print(json.dumps(summary, sort_keys=True))
    return written


COMMANDS = {
    "sweep": _run_sweep,
    "converge": _run_converge,
    "quantize": _run_quantize,
    "solve-one": _run_solve_one,
}


def dispatch(args):
    """Run the parsed invocation and return the process exit code."""
    try:
        cfg = resolve_config(args)
        if args.command == "quantize" and not cfg.quant_bits:
            raise ConfigError(["quant_bits: the quantize command needs at least one bit count"])
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return 1
    if args.paper_scale:
        log.warning("paper-scale runs use %dx%d arrays and %d trials; expect hours of runtime on one core",
                    cfg.n_tx, cfg.n_rx, cfg.trials)
    try:
        os.makedirs(cfg.out, exist_ok=True)
    except OSError as exc:
        print(f"cannot create output directory {cfg.out}: {exc}", file=sys.stderr)
        return 1
    start = time.perf_counter()
    log.info("%s: %s", args.command, json.dumps(asdict(cfg), sort_keys=True))
    try:
        written = COMMANDS[args.command](cfg, args)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    log.info("done in %.1f s; wrote %s", time.perf_counter() - start, ", ".join(written))
    return 0


def _glue_values(argv):
    """Attach the value to ``--snr`` so lists such as ``-10,0`` are not read as flags."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok == "--snr":
            out.append(f"--snr={next(it, '')}")
        else:
            out.append(tok)
    return out


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_glue_values(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    return dispatch(args)


if __name__ == "__main__":
    sys.exit(main())

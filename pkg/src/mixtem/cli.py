"""Command-line entry point: ``mixtem {generate,encode,decode,sweep,check}``.

Exit codes: 0 success, 1 configuration error, 2 I/O error,
3 numerical failure.
"""

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import experiment as ex
from .mixing import MixingError, mix
from .pocs_decoder import DIAGNOSTIC_COLUMNS, DecoderInput, decode, reconstructible
from .signal_model import VectorSignal
from .tem_encoder import (
    SpikeTrain,
    encode,
    params_from_json,
    params_to_json,
    read_spikes_csv,
    write_spikes_csv,
)

log = logging.getLogger("mixtem")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


def _config(args):
    cfg = ex.load_config(args.config) if args.config else ex.default_config()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _out_path(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _write_text(path, text):
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    log.info("wrote %s", path)


def _read_text(path):
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc


def cmd_generate(args):
    cfg = _config(args)
    x = ex.generate_signals(cfg, args.trial)
    log.info("trial %d: %d signals x %d atoms", args.trial, len(x), cfg.K)
    _write_text(_out_path(args, "signals.json"), json.dumps(x.to_dict(), indent=2) + "\n")


def _machine_biases(cfg, y, horizon, sweep_bias):
    params = []
    for i, spec in enumerate(cfg.machines):
        if spec.bias is not None:
            params.append(spec.params(spec.bias))
        elif spec.target_spikes is not None:
            bias, _ = ex.calibrate_bias(y[i], spec.params(0.0), horizon, spec.target_spikes)
            params.append(spec.params(bias))
        else:
            value = spec.sweep_values[-1] if sweep_bias is None else sweep_bias
            params.append(spec.params(value))
    return params


def cmd_encode(args):
    cfg = _config(args)
    x = VectorSignal.from_json(_read_text(args.signals))
    if len(x) != cfg.J or x.grid.count != cfg.K:
        raise ex.ConfigError(f"signals file has {len(x)} x {x.grid.count} coefficients, config wants {cfg.J} x {cfg.K}")
    A = cfg.mixing()
    y = mix(A, x)
    horizon = cfg.window_end
    params = _machine_biases(cfg, y, horizon, args.sweep_bias)
    trains = [encode(y[i], p, horizon) for i, p in enumerate(params)]
    for i, t in enumerate(trains):
        log.info("machine %d: bias %.6g, %d spikes", i, t.params.bias, t.n_spikes)
    path = _out_path(args, "spikes.csv")
    try:
        write_spikes_csv(trains, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    _write_text(_out_path(args, "machines.json"), params_to_json(params, horizon) + "\n")
    counts = [t.n_spikes for t in trains]
    log.info("reconstructible: %s", reconstructible(counts, cfg.K, cfg.J))


def cmd_decode(args):
    cfg = _config(args)
    params, horizon = params_from_json(_read_text(args.machines))
    if len(params) != cfg.I:
        raise ex.ConfigError(f"{len(params)} machines in {args.machines}, config has I={cfg.I}")
    try:
        times = read_spikes_csv(args.spikes, n_channels=cfg.I)
    except OSError as exc:
        raise OSError(f"cannot read {args.spikes}: {exc.strerror}") from exc
    horizon = cfg.window_end if horizon is None else horizon
    trains = [SpikeTrain(p, t, horizon) for p, t in zip(params, times)]
    inp = DecoderInput(trains, cfg.mixing(), cfg.grid)

    def progress(m, diag):
        log.debug("iter %d spike_residual %.3e step %.3e", m, diag["spike_residual"], diag["step_norm"])

    x_hat, state = decode(inp, cfg.stop, callback=progress, schedule=cfg.schedule)
    log.info("decoder stopped after %d iterations (%s)", state.iteration, state.reason)
    _write_text(_out_path(args, "x_hat.json"), json.dumps(x_hat.to_dict(), indent=2) + "\n")
    path = _out_path(args, "diagnostics.csv")
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(DIAGNOSTIC_COLUMNS)
            for h in state.history:
                writer.writerow([h["iter"]] + [repr(float(h[c])) for c in DIAGNOSTIC_COLUMNS[1:]])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def cmd_sweep(args):
    cfg = _config(args)
    if args.trials is not None:
        cfg = cfg.replace(trials=args.trials)
    done = [0]

    def progress(records):
        done[0] += 1
        log.info("trial %d/%d done", done[0], cfg.trials)

    result = ex.run_sweep(cfg, jobs=args.jobs, progress=progress)
    outputs = cfg.outputs
    csv_path = _out_path(args, outputs.get("csv", "sweep.csv"))
    ex.emit_csv(result, csv_path)
    log.info("wrote %s", csv_path)
    svg_path = _out_path(args, outputs.get("svg", "sweep.svg"))
    ex.emit_svg(result, svg_path)
    log.info("wrote %s", svg_path)
    if outputs.get("trials_csv"):
        trials_path = _out_path(args, outputs["trials_csv"])
        ex.emit_trials_csv(result, trials_path)
        log.info("wrote %s", trials_path)


def cmd_check(args):
    counts = args.counts
    capped = sum(min(c, args.K) for c in counts)
    ok = reconstructible(counts, args.K, args.J)
    relation = ">" if ok else "<="
    print(f"{'reconstructible' if ok else 'not reconstructible'}: "
          f"sum min(n_i, {args.K}) = {capped} {relation} {args.J * args.K}")


def build_parser():
    parser = argparse.ArgumentParser(prog="mixtem", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON); built-in default if omitted")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--quiet", action="store_true", help="only report errors")
    common.add_argument("-v", "--verbose", action="store_true", help="per-iteration logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="draw random source signals")
    p.add_argument("--trial", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("encode", parents=[common], help="mix and encode signals into spikes")
    p.add_argument("--signals", required=True, help="signals JSON from `generate`")
    p.add_argument("--sweep-bias", type=float, help="bias of the sweeping machine (default: sweep end)")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", parents=[common], help="reconstruct signals from spikes")
    p.add_argument("--spikes", required=True, help="spikes CSV (channel,spike_time)")
    p.add_argument("--machines", required=True, help="machine parameters JSON from `encode`")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("sweep", parents=[common], help="run the spike-rate sweep")
    p.add_argument("--trials", type=int, help="override the number of trials")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", parents=[common], help="test the reconstructibility condition")
    p.add_argument("--counts", type=int, nargs="+", required=True, help="spike count per machine")
    p.add_argument("-K", "--K", type=int, required=True, help="sinc atoms per signal")
    p.add_argument("-J", "--J", type=int, required=True, help="number of source signals")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.ERROR if args.quiet else (logging.DEBUG if args.verbose else logging.INFO)
    logging.basicConfig(level=level, format="%(message)s", stream=sys.stderr, force=True)
    try:
        args.func(args)
    except (ex.ConfigError, MixingError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (KeyError, ValueError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

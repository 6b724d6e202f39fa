"""Command-line front end: gen-signal, estimate, experiment."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .correlate import cross_correlate, papr_traditional, threshold_toa
from .estimator import ToaParams, estimate_toa, ml_single_path
from .experiments import config_from_dict, config_to_dict, run_experiment
from .iqfile import read_cf32, write_cf32
from .nprs import Numerology, compute_acf, generate_nprs_grid, ofdm_modulate


def _gen_signal(args) -> int:
    num = Numerology.for_rate(args.rate)
    grid = generate_nprs_grid(args.cell_shift, args.seed)
    buf = ofdm_modulate(grid, num)
    path = write_cf32(args.out, buf, {"seed": args.seed, "cell_id_shift": args.cell_shift})
    print(json.dumps({"written": str(path), "samples": len(buf),
                      "sampling_rate_hz": buf.sampling_rate_hz}))
    return 0


def _estimate(args) -> int:
    received, meta = read_cf32(args.input)
    num = Numerology.for_rate(received.sampling_rate_hz)
    grid = generate_nprs_grid(int(meta.get("cell_id_shift", 0)), int(meta.get("seed", 0)))
    ref = ofdm_modulate(grid, num)
    corr = cross_correlate(received, ref, args.window)
    out = {"estimator": args.estimator, "window": args.window,
           "papr": papr_traditional(corr)}
    if args.estimator == "threshold":
        out["toa"] = threshold_toa(corr, args.eta2)
        out["eta2"] = args.eta2
    elif args.estimator == "ml":
        peak, gain = ml_single_path(corr)
        out["toa"] = peak
        out["peak_gain_abs"] = abs(gain)
    else:
        acf = compute_acf(ref, args.window - 1)
        params = ToaParams.for_rate(received.sampling_rate_hz)
        result = estimate_toa(corr, acf, params)
        out.update({
            "toa": result.toa,
            "num_taps": result.taps.num_taps,
            "tap_delays": [int(d) for d in result.taps.delays],
            "used_fallback": result.used_fallback,
            "outer_iterations": result.outer_iterations,
        })
    print(json.dumps(out))
    return 0


def _apply_overrides(raw: dict, overrides: list[str]) -> dict:
    for item in overrides:
        key, _, value = item.partition("=")
        if not _:
            raise SystemExit(f"override {item!r} is not of the form key=value")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = parsed
    return raw


def _experiment(args) -> int:
    raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    raw = _apply_overrides(raw, args.override)
    cfg = config_from_dict(raw)
    paths = run_experiment(cfg, workers=args.workers)
    print(json.dumps({"config": config_to_dict(cfg), **paths}))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nbtoa",
        description="Narrowband first-path ToA estimation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-signal", help="write a positioning subframe as .cf32 + sidecar")
    gen.add_argument("--rate", type=float, default=1.92e6,
                     help="sampling rate in Hz (30.72e6, 1.92e6 or 240e3)")
    gen.add_argument("--cell-shift", type=int, default=0, help="cell id shift, 0..5")
    gen.add_argument("--seed", type=int, default=0, help="pilot sequence seed")
    gen.add_argument("--out", required=True, help="output .cf32 path")
    gen.set_defaults(func=_gen_signal)

    est = sub.add_parser("estimate", help="estimate ToA from a .cf32 recording")
    est.add_argument("--input", required=True, help=".cf32 file with JSON sidecar")
    est.add_argument("--estimator", choices=("threshold", "ml", "sage"), default="sage")
    est.add_argument("--eta2", type=float, default=0.5,
                     help="relative threshold for the threshold estimator")
    est.add_argument("--window", type=int, default=120, help="search window length D")
    est.set_defaults(func=_estimate)

    exp = sub.add_parser("experiment", help="run a Monte-Carlo experiment from JSON config")
    exp.add_argument("--config", required=True, help="JSON experiment config")
    exp.add_argument("--override", action="append", default=[],
                     help="key=value config override (dots descend, value parsed as JSON)")
    exp.add_argument("--workers", type=int, default=None,
                     help="worker processes (default: NBTOA_WORKERS or all cores)")
    exp.set_defaults(func=_experiment)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Monte-Carlo experiment harness.

Three experiments, each persisted as a CSV table plus a JSON run manifest
with config and file checksums:

* ``papr_cdf``: empirical CDFs of both presence statistics, with and without
  the pilot in the received signal, per SNR point.
* ``convergence``: residual noise power after each estimation sweep,
  averaged over fading realizations.
* ``detection``: exact and within-3-samples arrival detection probability
  per SNR for the threshold, single-peak and successive-cancellation
  estimators, all evaluated on identical per-trial waveforms.

Trials are independent and distributed over a process pool (worker count
from the ``NBTOA_WORKERS`` environment variable, default all cores); chunk
boundaries and per-trial seeds are fixed by (master_seed, trial_index), so
results are byte-identical regardless of scheduling.

The AWGN "channel" in an experiment is a deterministic unit tap: only the
noise varies between trials. Fading profiles draw one realization per trial.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .channel import (
    ChannelProfile,
    ChannelRealization,
    add_awgn,
    apply_channel,
    builtin_profile,
    realize_channel,
    trial_seed,
)
from .correlate import cross_correlate, papr_acf_removed, papr_traditional, threshold_toa
from .estimator import ToaParams, estimate_toa, ml_single_path
from .nprs import Numerology, SampleBuffer, compute_acf, generate_nprs_grid, ofdm_modulate
from .sage import SageParams, run_sage

EXPERIMENTS = ("papr_cdf", "convergence", "detection")
ESTIMATORS = ("threshold", "ml", "sage")

_CHUNK = 250  # trials per pool task; fixed so aggregation order never varies


@dataclass(frozen=True)
class DetectionRecord:
    """Detection probabilities for one (SNR, estimator) cell."""

    snr_db: float
    estimator: str
    p_exact: float
    p_within3: float
    trials: int

    def __post_init__(self):
        if not 0.0 <= self.p_exact <= self.p_within3 <= 1.0:
            raise ValueError("need 0 <= p_exact <= p_within3 <= 1")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment run (JSON round-trippable)."""

    experiment: str
    channel: ChannelProfile
    snr_grid_db: tuple[float, ...]
    trials: int = 2000
    true_toa: int = 50
    master_seed: int = 1
    sampling_rate_hz: float = 1.92e6
    window: int = 120
    eta2: float = 0.5
    nprs_seed: int = 0
    cell_id_shift: int = 0
    toa: ToaParams = field(default_factory=ToaParams)
    convergence_sweeps: int = 16
    output_dir: str = "runs"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if len(self.snr_grid_db) == 0:
            raise ValueError("snr grid must be nonempty")
        if self.true_toa < 0:
            raise ValueError("true_toa must be >= 0")


# ----------------------------------------------------------------------
# config (de)serialization
# ----------------------------------------------------------------------

def profile_to_dict(profile: ChannelProfile) -> dict:
    out = {
        "name": profile.name,
        "delays": list(profile.tap_delays_samples),
        "powers_db": list(profile.tap_powers_db),
    }
    if profile.fixed_gains is not None:
        out["gains"] = [[g.real, g.imag] for g in profile.fixed_gains]
    return out


def profile_from_dict(d: dict, sampling_rate_hz: float) -> ChannelProfile:
    """Accepts either a bare {"name": ...} builtin reference or a full spec."""
    name = d["name"]
    if "delays" not in d:
        return builtin_profile(name, sampling_rate_hz)
    gains = d.get("gains")
    if gains is not None:
        gains = tuple(complex(re, im) for re, im in gains)
    return ChannelProfile(
        name,
        tuple(int(x) for x in d["delays"]),
        tuple(float(x) for x in d["powers_db"]),
        gains,
    )


def config_to_dict(cfg: ExperimentConfig) -> dict:
    sage = cfg.toa.sage
    return {
        "experiment": cfg.experiment,
        "channel": profile_to_dict(cfg.channel),
        "snr_grid_db": list(cfg.snr_grid_db),
        "trials": cfg.trials,
        "true_toa": cfg.true_toa,
        "master_seed": cfg.master_seed,
        "sampling_rate_hz": cfg.sampling_rate_hz,
        "window": cfg.window,
        "eta2": cfg.eta2,
        "nprs_seed": cfg.nprs_seed,
        "cell_id_shift": cfg.cell_id_shift,
        "toa": {
            "max_peak_distance": cfg.toa.max_peak_distance,
            "weak_tap_fraction": cfg.toa.weak_tap_fraction,
            "outer_cap": cfg.toa.outer_cap,
            "sage": {
                "sweeps": sage.sweeps,
                "avg_halfwidth": sage.avg_halfwidth,
                "initial_taps": sage.initial_taps,
                "unbiased_divisor": sage.unbiased_divisor,
            },
        },
        "convergence_sweeps": cfg.convergence_sweeps,
        "output_dir": cfg.output_dir,
    }


def config_from_dict(d: dict) -> ExperimentConfig:
    rate = float(d.get("sampling_rate_hz", 1.92e6))
    toa_d = dict(d.get("toa", {}))
    sage_d = dict(toa_d.pop("sage", {}))
    toa = ToaParams(sage=SageParams(**sage_d), **toa_d)
    return ExperimentConfig(
        experiment=d["experiment"],
        channel=profile_from_dict(d["channel"], rate),
        snr_grid_db=tuple(float(x) for x in d["snr_grid_db"]),
        trials=int(d.get("trials", 2000)),
        true_toa=int(d.get("true_toa", 50)),
        master_seed=int(d.get("master_seed", 1)),
        sampling_rate_hz=rate,
        window=int(d.get("window", 120)),
        eta2=float(d.get("eta2", 0.5)),
        nprs_seed=int(d.get("nprs_seed", 0)),
        cell_id_shift=int(d.get("cell_id_shift", 0)),
        toa=toa,
        convergence_sweeps=int(d.get("convergence_sweeps", 16)),
        output_dir=str(d.get("output_dir", "runs")),
    )


# ----------------------------------------------------------------------
# shared per-trial machinery
# ----------------------------------------------------------------------

def _context(cfg: ExperimentConfig):
    num = Numerology.for_rate(cfg.sampling_rate_hz)
    grid = generate_nprs_grid(cfg.cell_id_shift, cfg.nprs_seed)
    ref = ofdm_modulate(grid, num)
    acf = compute_acf(ref, cfg.window - 1)
    return ref, acf


def _trial_realization(profile: ChannelProfile, seed) -> ChannelRealization:
    # A pure-noise experiment keeps the channel at a fixed unit tap.
    if profile.name == "AWGN":
        return ChannelRealization(np.array([1.0 + 0j]), np.array([0]), normalized=False)
    return realize_channel(profile, seed)


def _received(cfg, ref, snr_db, trial_index):
    seq = trial_seed(cfg.master_seed, trial_index)
    chan_seed, noise_seed = seq.spawn(2)
    chan = _trial_realization(cfg.channel, chan_seed)
    total = cfg.window + len(ref) - 1
    clean = apply_channel(ref, chan, cfg.true_toa, total)
    return add_awgn(clean, snr_db, ref.mean_power, noise_seed)


# ----------------------------------------------------------------------
# chunk workers (top level so the process pool can pickle them)
# ----------------------------------------------------------------------

def _detection_chunk(cfg: ExperimentConfig, snr_db: float, snr_index: int,
                     lo: int, hi: int) -> dict:
    ref, acf = _context(cfg)
    counts = {name: [0, 0] for name in ESTIMATORS}
    for t in range(lo, hi):
        y = _received(cfg, ref, snr_db, snr_index * cfg.trials + t)
        corr = cross_correlate(y, ref, cfg.window)
        toas = {
            "threshold": threshold_toa(corr, cfg.eta2),
            "ml": ml_single_path(corr)[0],
            "sage": estimate_toa(corr, acf, cfg.toa).toa,
        }
        for name, toa in toas.items():
            err = toa - cfg.true_toa
            counts[name][0] += int(err == 0)
            counts[name][1] += int(abs(err) < 3)
    return counts


def _papr_chunk(cfg: ExperimentConfig, snr_db: float, snr_index: int,
                lo: int, hi: int) -> dict:
    ref, acf = _context(cfg)
    total = cfg.window + len(ref) - 1
    silence = SampleBuffer(np.zeros(total), cfg.sampling_rate_hz)
    values: dict = {(present, method): []
                    for present in (False, True)
                    for method in ("traditional", "acf_removed")}
    for t in range(lo, hi):
        seq = trial_seed(cfg.master_seed, snr_index * cfg.trials + t)
        chan_seed, noise_seed = seq.spawn(2)
        chan = _trial_realization(cfg.channel, chan_seed)
        clean = apply_channel(ref, chan, cfg.true_toa, total)
        noise_only = add_awgn(silence, snr_db, ref.mean_power, noise_seed)
        with_pilot = SampleBuffer(clean.samples + noise_only.samples,
                                  cfg.sampling_rate_hz)
        for present, y in ((False, noise_only), (True, with_pilot)):
            corr = cross_correlate(y, ref, cfg.window)
            values[(present, "traditional")].append(papr_traditional(corr))
            values[(present, "acf_removed")].append(papr_acf_removed(corr, acf))
    return values


def _convergence_chunk(cfg: ExperimentConfig, snr_db: float, snr_index: int,
                       lo: int, hi: int) -> np.ndarray:
    ref, acf = _context(cfg)
    params = replace(cfg.toa.sage, sweeps=cfg.convergence_sweeps)
    out = np.empty((hi - lo, params.sweeps))
    for i, t in enumerate(range(lo, hi)):
        y = _received(cfg, ref, snr_db, snr_index * cfg.trials + t)
        corr = cross_correlate(y, ref, cfg.window)
        objective: list[float] = []
        run_sage(corr, acf, params.initial_taps, params, sweep_objective=objective)
        out[i] = objective
    return out


# ----------------------------------------------------------------------
# pool plumbing
# ----------------------------------------------------------------------

def _num_workers(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    env = os.environ.get("NBTOA_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _run_chunks(fn, arg_tuples: list[tuple], workers: int | None) -> list:
    n = _num_workers(workers)
    if n <= 1 or len(arg_tuples) <= 1:
        return [fn(*args) for args in arg_tuples]
    with ProcessPoolExecutor(max_workers=n) as pool:
        futures = [pool.submit(fn, *args) for args in arg_tuples]
        return [f.result() for f in futures]


def _chunked(cfg: ExperimentConfig) -> list[tuple[int, int]]:
    return [(lo, min(lo + _CHUNK, cfg.trials)) for lo in range(0, cfg.trials, _CHUNK)]


# ----------------------------------------------------------------------
# experiment runners
# ----------------------------------------------------------------------

def run_detection_experiment(cfg: ExperimentConfig,
                             workers: int | None = None) -> list[DetectionRecord]:
    """Detection probability per (SNR, estimator), paired across estimators."""
    records = []
    for i, snr in enumerate(cfg.snr_grid_db):
        args = [(cfg, snr, i, lo, hi) for lo, hi in _chunked(cfg)]
        totals = {name: [0, 0] for name in ESTIMATORS}
        for part in _run_chunks(_detection_chunk, args, workers):
            for name, (exact, within) in part.items():
                totals[name][0] += exact
                totals[name][1] += within
        for name in ESTIMATORS:
            exact, within = totals[name]
            records.append(DetectionRecord(snr, name, exact / cfg.trials,
                                           within / cfg.trials, cfg.trials))
    return records


def run_papr_experiment(cfg: ExperimentConfig, workers: int | None = None) -> list[dict]:
    """Empirical CDF rows for both presence statistics at each SNR point."""
    if cfg.channel.name != "AWGN":
        raise ValueError("the PAPR experiment is defined for the AWGN channel")
    rows = []
    for i, snr in enumerate(cfg.snr_grid_db):
        args = [(cfg, snr, i, lo, hi) for lo, hi in _chunked(cfg)]
        merged: dict = {key: [] for key in
                        ((False, "traditional"), (False, "acf_removed"),
                         (True, "traditional"), (True, "acf_removed"))}
        for part in _run_chunks(_papr_chunk, args, workers):
            for key, vals in part.items():
                merged[key].extend(vals)
        for (present, method), vals in merged.items():
            ordered = np.sort(np.asarray(vals))
            n = ordered.size
            for j, v in enumerate(ordered):
                rows.append({
                    "snr_db": snr,
                    "nprs_present": int(present),
                    "method": method,
                    "value": float(v),
                    "cum_prob": (j + 1) / n,
                })
    return rows


def run_convergence_experiment(cfg: ExperimentConfig,
                               workers: int | None = None) -> list[dict]:
    """Residual noise power after each sweep, averaged over all trials."""
    snr = cfg.snr_grid_db[0]
    args = [(cfg, snr, 0, lo, hi) for lo, hi in _chunked(cfg)]
    parts = _run_chunks(_convergence_chunk, args, workers)
    per_trial = np.concatenate(parts, axis=0)
    mean = per_trial.mean(axis=0)
    if per_trial.shape[0] > 1:
        stderr = per_trial.std(axis=0, ddof=1) / np.sqrt(per_trial.shape[0])
    else:
        stderr = np.zeros_like(mean)
    return [{"sweep": m + 1, "mean_noise_var": float(mean[m]),
             "stderr": float(stderr[m]), "trials": cfg.trials}
            for m in range(mean.size)]


# ----------------------------------------------------------------------
# persistence
# ----------------------------------------------------------------------

def write_csv(rows: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def write_manifest(cfg: ExperimentConfig, results_paths: list, out_path=None) -> Path:
    """Record config, seed, version and checksums of every result file."""
    paths = [Path(p) for p in results_paths]
    if out_path is None:
        out_path = Path(cfg.output_dir) / "manifest.json"
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": config_to_dict(cfg),
        "master_seed": cfg.master_seed,
        "version": __version__,
        "files": {p.name: {"sha256": _sha256(p), "bytes": p.stat().st_size}
                  for p in paths},
    }
    out_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return out_path


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def verify_manifest(path) -> dict:
    """Re-hash every referenced file; raise on any mismatch."""
    path = Path(path)
    manifest = load_manifest(path)
    for name, entry in manifest["files"].items():
        target = path.parent / name
        if not target.exists():
            raise ValueError(f"manifest references missing file {target}")
        digest = _sha256(target)
        if digest != entry["sha256"]:
            raise ValueError(f"checksum mismatch for {target}: "
                             f"{digest} != {entry['sha256']}")
    return manifest


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> dict:
    """Run the configured experiment, write its CSV and manifest."""
    out_dir = Path(cfg.output_dir)
    if cfg.experiment == "detection":
        records = run_detection_experiment(cfg, workers)
        rows = [{"snr_db": r.snr_db, "estimator": r.estimator,
                 "p_exact": r.p_exact, "p_within3": r.p_within3,
                 "trials": r.trials} for r in records]
    elif cfg.experiment == "papr_cdf":
        rows = run_papr_experiment(cfg, workers)
    else:
        rows = run_convergence_experiment(cfg, workers)
    csv_path = write_csv(rows, out_dir / f"{cfg.experiment}.csv")
    manifest_path = write_manifest(cfg, [csv_path])
    return {"csv": [str(csv_path)], "manifest": str(manifest_path)}

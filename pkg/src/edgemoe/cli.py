"""Batch experiment runner.

    edgemoe validate [--config PATH]
    edgemoe run      --scheme NAME [--seed N] [--out DIR] [--checkpoint PATH] [--d-fixed N]
    edgemoe train    [--seed N] [--out DIR] [--iterations N] [--workers N] [--horizon N]
    edgemoe compare  [--scheme NAME ...] [--seeds A..B] [--out FILE] [--checkpoint PATH]

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import statistics
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .baselines import DEFAULT_D_FIXED, SchemeId, make_policy
from .core import ConfigError, SystemConfig, config_hash, load_config
from .dppo.checkpoint import CheckpointError, atomic_write_text, load_checkpoint
from .dppo.net import head_widths_for
from .dppo.ppo import TrainConfig
from .dppo.train import TrainingAborted, train
from .env import EdgeEnv, EpisodeMetrics, SlotRecord, run_episode, summarize

log = logging.getLogger("edgemoe")

SUMMARY_COLUMNS = ["scheme", "seed", "total_energy_j", "acc_sat_rate", "lat_sat_rate", "tasks", "failed"]


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunManifest:
    scheme: SchemeId
    seed: int
    config_path: str | None
    config_hash: str
    records_path: Path | None = None
    metrics_path: Path | None = None
    checkpoint: str | None = None

    def describe(self) -> str:
        return json.dumps({
            "scheme": str(self.scheme), "seed": self.seed, "config": self.config_path,
            "config_hash": self.config_hash, "records": str(self.records_path),
            "metrics": str(self.metrics_path), "checkpoint": self.checkpoint,
        })


def provenance_line(chash: str, seed: int, **extra) -> str:
    parts = [f"edgemoe version={__version__}", f"config_hash={chash}", f"seed={seed}"]
    parts += [f"{k}={v}" for k, v in extra.items()]
    return "# " + " ".join(parts) + "\n"


def records_csv(records: Sequence[SlotRecord], chash: str, seed: int, scheme: str) -> str:
    buf = io.StringIO()
    buf.write(provenance_line(chash, seed, scheme=scheme))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SlotRecord.columns())
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def metrics_json(m: EpisodeMetrics, scheme: str, seed: int, chash: str) -> dict:
    return {
        "scheme": scheme,
        "seed": seed,
        "total_energy_j": m.total_energy,
        "acc_sat_rate": m.acc_sat_rate,
        "lat_sat_rate": m.lat_sat_rate,
        "tasks": m.tasks,
        "failed": m.failed,
        "config_hash": chash,
        "empty": m.empty,
    }


def load_policy_net(cfg: SystemConfig, checkpoint: str | Path):
    return load_checkpoint(checkpoint, expect_heads=head_widths_for(cfg), expect_obs_width=cfg.obs_width)


def run_scheme(cfg: SystemConfig, scheme: SchemeId | str, seed: int, *, checkpoint: str | Path | None = None,
               d_fixed: int = DEFAULT_D_FIXED, out_dir: str | Path | None = None, net=None,
               config_path: str | None = None) -> tuple[EpisodeMetrics, list[SlotRecord], RunManifest]:
    """Run one full episode of ``scheme`` and optionally write its CSV and JSON."""
    scheme = SchemeId(scheme)
    if scheme is SchemeId.MOE_DYNAMIC and net is None:
        if checkpoint is None:
            raise UsageError("scheme moe_dynamic needs --checkpoint")
        net = load_policy_net(cfg, checkpoint)
    policy = make_policy(scheme, cfg, d_fixed=d_fixed, net=net)
    records = run_episode(EdgeEnv(cfg), policy, seed)
    metrics = summarize(records)
    chash = config_hash(cfg)
    manifest = RunManifest(scheme, seed, config_path, chash,
                           checkpoint=str(checkpoint) if checkpoint else None)
    if out_dir is not None:
        out = Path(out_dir)
        stem = f"{scheme.value}_seed{seed}"
        manifest = replace(manifest, records_path=out / f"{stem}.csv", metrics_path=out / f"{stem}.json")
        atomic_write_text(manifest.records_path, records_csv(records, chash, seed, scheme.value))
        atomic_write_text(manifest.metrics_path,
                          json.dumps(metrics_json(metrics, scheme.value, seed, chash), indent=2) + "\n")
    return metrics, records, manifest


def compare(cfg: SystemConfig, schemes: Sequence[SchemeId | str], seeds: Sequence[int], *,
            checkpoint: str | Path | None = None, d_fixed: int = DEFAULT_D_FIXED, net=None,
            config_path: str | None = None) -> list[dict]:
    """One row per (scheme, seed), then a mean row and an sd row per scheme."""
    if not schemes or not seeds:
        raise UsageError("compare needs at least one scheme and one seed")
    schemes = [SchemeId(s) for s in schemes]
    if SchemeId.MOE_DYNAMIC in schemes and net is None:
        if checkpoint is None:
            raise UsageError("scheme moe_dynamic needs --checkpoint")
        net = load_policy_net(cfg, checkpoint)
    rows: list[dict] = []
    for scheme in schemes:
        for seed in seeds:
            try:
                m, _, _ = run_scheme(cfg, scheme, seed, d_fixed=d_fixed, net=net, config_path=config_path,
                                     checkpoint=checkpoint)
            except Exception as exc:
                manifest = RunManifest(scheme, seed, config_path, config_hash(cfg),
                                       checkpoint=str(checkpoint) if checkpoint else None)
                raise RuntimeError(f"run failed ({exc}); manifest: {manifest.describe()}") from exc
            rows.append({"scheme": scheme.value, "seed": seed, "total_energy_j": m.total_energy,
                         "acc_sat_rate": m.acc_sat_rate, "lat_sat_rate": m.lat_sat_rate,
                         "tasks": m.tasks, "failed": m.failed})
    stats_rows = []
    for scheme in schemes:
        member = [r for r in rows if r["scheme"] == scheme.value]
        mean = {"scheme": scheme.value, "seed": "mean"}
        sd = {"scheme": scheme.value, "seed": "sd"}
        for col in SUMMARY_COLUMNS[2:]:
            vals = [float(r[col]) for r in member]
            mean[col] = math.fsum(vals) / len(vals)
            sd[col] = statistics.stdev(vals) if len(vals) > 1 else 0.0
        stats_rows += [mean, sd]
    return rows + stats_rows


def summary_csv(rows: Sequence[dict], chash: str, seeds: Sequence[int]) -> str:
    buf = io.StringIO()
    buf.write(provenance_line(chash, seeds[0] if len(seeds) == 1 else f"{seeds[0]}..{seeds[-1]}"))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in rows:
        w.writerow([r[c] if not isinstance(r[c], float) else repr(r[c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def format_table(rows: Sequence[dict]) -> str:
    lines = [f"{'scheme':<14} {'seed':>6} {'energy_J':>12} {'acc_sat':>8} {'lat_sat':>8} {'tasks':>7} {'failed':>6}"]
    for r in rows:
        lines.append(f"{r['scheme']:<14} {str(r['seed']):>6} {r['total_energy_j']:>12.1f} "
                     f"{r['acc_sat_rate']:>8.3f} {r['lat_sat_rate']:>8.3f} {r['tasks']:>7.0f} {r['failed']:>6.0f}")
    return "\n".join(lines)


def parse_seeds(text: str) -> list[int]:
    """``"A..B"`` (inclusive) or a comma-separated list."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            a, b = int(lo), int(hi)
            if b < a:
                raise ValueError
            return list(range(a, b + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad seed range {text!r}; use A..B or a,b,c") from None


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgemoe", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file (defaults when omitted)")

    sp = sub.add_parser("validate", help="check a config and print its hash")
    common(sp)

    sp = sub.add_parser("run", help="run one scheme for one full episode")
    common(sp)
    sp.add_argument("--scheme", required=True, choices=[s.value for s in SchemeId])
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", default="runs")
    sp.add_argument("--checkpoint")
    sp.add_argument("--d-fixed", type=int, default=DEFAULT_D_FIXED)

    sp = sub.add_parser("train", help="train the dynamic scheme with distributed PPO")
    common(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", default="train")
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--jobs", type=int, default=1, help="rollout processes (1 = in-process)")

    sp = sub.add_parser("compare", help="compare schemes across seeds")
    common(sp)
    sp.add_argument("--scheme", action="append", choices=[s.value for s in SchemeId],
                    help="repeatable; default all four")
    sp.add_argument("--seeds", default="0..2")
    sp.add_argument("--out", default="summary.csv")
    sp.add_argument("--checkpoint")
    sp.add_argument("--d-fixed", type=int, default=DEFAULT_D_FIXED)
    return p


def _cmd_validate(args, cfg) -> int:
    print(f"config ok  hash={config_hash(cfg)}  devices={cfg.n_devices}  slots={cfg.n_slots}  seed={cfg.seed}")
    return 0


def _cmd_run(args, cfg) -> int:
    seed = cfg.seed if args.seed is None else args.seed
    m, _, manifest = run_scheme(cfg, args.scheme, seed, checkpoint=args.checkpoint, d_fixed=args.d_fixed,
                                out_dir=args.out, config_path=args.config)
    print(json.dumps(metrics_json(m, args.scheme, seed, manifest.config_hash)))
    return 0


def _cmd_train(args, cfg) -> int:
    overrides = {k: getattr(args, k) for k in ("iterations", "workers", "horizon") if getattr(args, k)}
    hp = TrainConfig(**overrides)
    seed = cfg.seed if args.seed is None else args.seed
    executor = None
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        executor = ProcessPoolExecutor(max_workers=args.jobs)
    try:
        result = train(cfg, hp, seed=seed, out_dir=args.out, executor=executor)
    finally:
        if executor is not None:
            executor.shutdown()
    last = result.log_rows[-1]
    print(f"trained {hp.iterations} iterations; final mean reward {last['mean_reward']:.4f}; "
          f"checkpoint {result.checkpoint}")
    return 0


def _cmd_compare(args, cfg) -> int:
    schemes = args.scheme or [s.value for s in SchemeId]
    seeds = parse_seeds(args.seeds)
    rows = compare(cfg, schemes, seeds, checkpoint=args.checkpoint, d_fixed=args.d_fixed,
                   config_path=args.config)
    atomic_write_text(args.out, summary_csv(rows, config_hash(cfg), seeds))
    print(format_table(rows))
    return 0


COMMANDS = {"validate": _cmd_validate, "run": _cmd_run, "train": _cmd_train, "compare": _cmd_compare}


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        d_fixed = getattr(args, "d_fixed", 0)
        if not 0 <= d_fixed <= cfg.d_max:
            raise UsageError(f"--d-fixed {d_fixed} outside 0..{cfg.d_max}")
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        for name, msg in exc.errors:
            print(f"config error: {name}: {msg}", file=sys.stderr)
        return 2
    except (UsageError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingAborted as exc:
        print(f"error: {exc}; last good checkpoint: {exc.last_checkpoint}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Experiment runner CLI.

Verbs:
  run        execute a scheduler/seed/lambda matrix from a JSON spec and
             write per-cell report.json files plus an aggregate summary.csv
  bounds     compute the offline bound certificate for an instance file
  gen-traces synthesize seeded capacity/encounter traces to trace.json
  ingest     convert session/viewing CSV logs to trace.json

Exit codes: 0 success, 2 usage/config error, 3 partial result
(bound solver ran out of budget; the relaxed bound is still written).
"""
from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import os
import sys
from dataclasses import dataclass

from . import offline, sim, traces
from .model import UserProfile

DEFAULT_LADDER = (0.2, 0.4, 0.7, 1.3, 2.3)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3


class SpecError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    scenario: str = "multi"  # "single" | "multi"
    n_users: int = 10
    video_fraction: float = 1.0
    capacity_range: tuple[float, float] = (0.5, 3.0)
    cooperation: str = "full"  # "full" | "none" | "trace"
    schedulers: tuple[str, ...] = ("lyapunov", "buffer", "prediction")
    lambdas: tuple[float, ...] = (100.0,)
    seeds: tuple[int, ...] = tuple(range(10))
    horizon: float = 500.0
    beta: float = 2.0
    buffer_cap: float = 40.0
    ladder: tuple[float, ...] = DEFAULT_LADDER
    video_length_s: float = 500.0
    theta: float = 1.0
    phi_qdeg: float = 0.5
    phi_rebuf: float = 1.0
    c_time: float = 0.05
    c_data: float = 0.02
    w_data: float = 0.01
    delta_th: float = 0.5
    gap_th: float = 10.0
    slot_len: float = 5.0
    compute_gap: bool = False
    compare_cooperation: bool = False
    abort_policy: str = "abort"
    out_dir: str = "out"

    def __post_init__(self) -> None:
        if self.scenario not in ("single", "multi"):
            raise SpecError(f"unknown scenario {self.scenario!r}")
        if self.scenario == "single":
            self.n_users = 1
            self.video_fraction = 1.0
        if not 0.0 <= self.video_fraction <= 1.0:
            raise SpecError("video_fraction must lie in [0, 1]")
        if self.n_users < 1:
            raise SpecError("need at least one user")
        if not self.schedulers:
            raise SpecError("scheduler list must be nonempty")
        for s in self.schedulers:
            if s not in ("lyapunov", "buffer", "prediction"):
                raise SpecError(f"unknown scheduler {s!r}")
        if self.cooperation not in ("full", "none", "trace"):
            raise SpecError(f"unknown cooperation mode {self.cooperation!r}")
        lo, hi = self.capacity_range
        if lo < 0 or hi < lo:
            raise SpecError(f"bad capacity range [{lo}, {hi}]")

    @classmethod
    def from_file(cls, path: str) -> "ExperimentSpec":
        with open(path) as fh:
            raw = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise SpecError(f"unknown spec fields: {sorted(unknown)}")
        for tup in ("capacity_range", "schedulers", "lambdas", "seeds", "ladder"):
            if tup in raw:
                raw[tup] = tuple(raw[tup])
        return cls(**raw)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


def build_profiles(spec: ExperimentSpec) -> tuple[UserProfile, ...]:
    """Users 0..N-1; the first round(fraction*N) are video users, the rest
    idle helpers that only contribute downloads (no QoE terms of their own)."""
    n_video = max(1, round(spec.video_fraction * spec.n_users)) if spec.video_fraction > 0 else 0
    segs = int(spec.video_length_s / spec.beta)
    out = []
    for n in range(spec.n_users):
        video = n < n_video
        out.append(UserProfile(
            id=n, beta=spec.beta, buffer_cap=spec.buffer_cap,
            ladder=spec.ladder, theta=spec.theta,
            phi_qdeg=spec.phi_qdeg if video else 0.0,
            phi_rebuf=spec.phi_rebuf if video else 0.0,
            c_time=spec.c_time, c_data=spec.c_data, w_data=spec.w_data,
            video_segments=segs if video else 0,
        ))
    return tuple(out)


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _run_cell(spec: ExperimentSpec, scheduler: str, lam: float | None,
              seed: int, cooperation: str) -> dict:
    profiles = build_profiles(spec)
    ids = [p.id for p in profiles]
    capacity = traces.synth_capacity(ids, spec.horizon, spec.capacity_range, seed)
    encounters = traces.synth_encounters(ids, spec.horizon, seed, mode=cooperation)
    params: dict[str, float] = {"delta_th": spec.delta_th, "gap_th": spec.gap_th}
    if scheduler == "lyapunov":
        params = {"lam": lam if lam is not None else 100.0}
    config = sim.SimConfig(
        horizon=spec.horizon, profiles=profiles, capacity=capacity,
        encounters=encounters, scheduler=scheduler, scheduler_params=params,
        seed=str(seed), abort_policy=spec.abort_policy,
    )
    report = sim.run_simulation(config)
    if spec.compute_gap:
        instance = offline.SlottedInstance.from_traces(
            profiles, capacity, encounters, spec.slot_len
        )
        report.gap = sim.gap_vs_upper_bound(report, instance)
    return {
        "scheduler": scheduler,
        "seed": seed,
        "lambda": lam,
        "cooperation": cooperation,
        "report": report,
    }


def cmd_run(args: argparse.Namespace) -> int:
    try:
        spec = ExperimentSpec.from_file(args.spec)
    except (OSError, json.JSONDecodeError, SpecError, TypeError, ValueError) as exc:
        print(f"bad experiment spec: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out or spec.out_dir
    os.makedirs(out_dir, exist_ok=True)

    cells: list[tuple[str, float | None, int, str]] = []
    modes = [spec.cooperation]
    if spec.compare_cooperation:
        modes = ["full", "none"]
    for scheduler in spec.schedulers:
        lams = spec.lambdas if scheduler == "lyapunov" else (None,)
        for lam in lams:
            for seed in spec.seeds:
                for mode in modes:
                    cells.append((scheduler, lam, seed, mode))

    results: dict[tuple, dict] = {}
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = {
                pool.submit(_run_cell, spec, *cell): cell for cell in cells
            }
            for fut, cell in futures.items():
                results[cell] = fut.result()
    else:
        for cell in cells:
            results[cell] = _run_cell(spec, *cell)

    rows = []
    for cell in cells:
        res = results[cell]
        scheduler, lam, seed, mode = cell
        report: sim.ExperimentReport = res["report"]
        lam_tag = "" if lam is None else f"{lam:g}"
        name = f"report_{scheduler}{('_lam' + lam_tag) if lam_tag else ''}_{mode}_{seed}.json"
        payload = report.to_dict()
        payload["spec"] = spec.to_dict()
        payload["cooperation"] = mode
        _atomic_write(os.path.join(out_dir, name), json.dumps(payload, sort_keys=True, indent=2))
        if mode == modes[0]:
            rows.append({
                "scheduler": scheduler,
                "seed": seed,
                "lambda": lam_tag,
                "avg_bitrate_mbps": report.avg_bitrate_mbps,
                "welfare": report.welfare,
                "rebuffer_s": report.rebuffer_s,
                "gap": "" if report.gap is None else report.gap,
            })

    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=[
            "scheduler", "seed", "lambda", "avg_bitrate_mbps",
            "welfare", "rebuffer_s", "gap",
        ])
        writer.writeheader()
        writer.writerows(rows)

    if spec.compare_cooperation:
        gain_rows = []
        for scheduler, lam, seed, mode in cells:
            if mode != "full":
                continue
            full = results[(scheduler, lam, seed, "full")]["report"]
            none = results[(scheduler, lam, seed, "none")]["report"]
            bitrate_gain = (
                (full.avg_bitrate_mbps - none.avg_bitrate_mbps) / none.avg_bitrate_mbps
                if none.avg_bitrate_mbps > 0 else ""
            )
            gain_rows.append({
                "scheduler": scheduler,
                "seed": seed,
                "lambda": "" if lam is None else f"{lam:g}",
                "bitrate_gain": bitrate_gain,
                "welfare_gain": full.welfare - none.welfare,
            })
        with open(os.path.join(out_dir, "cooperation_gain.csv"), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=[
                "scheduler", "seed", "lambda", "bitrate_gain", "welfare_gain",
            ])
            writer.writeheader()
            writer.writerows(gain_rows)
    return EXIT_OK


def cmd_bounds(args: argparse.Namespace) -> int:
    try:
        with open(args.spec) as fh:
            raw = json.load(fh)
        profiles = tuple(UserProfile.from_dict(p) for p in raw["profiles"])
        capacity, encounters = traces.traces_from_dict(raw)
        slot_len = float(raw["slot_len"])
        n_slots = raw.get("n_slots")
        exact_budget = int(raw.get("exact_budget", 10_000_000))
        brute_budget = int(raw.get("brute_budget", 2_000_000))
        include_middle = bool(raw.get("include_middle", True))
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"bad bounds instance: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_path = args.out or "bounds.json"
    try:
        cert = offline.bound_certificate(
            profiles, capacity, encounters, slot_len,
            n_slots=n_slots, include_middle=include_middle,
            exact_budget=exact_budget, brute_budget=brute_budget,
        )
    except offline.SolverBudgetError as exc:
        instance = offline.SlottedInstance.from_traces(
            profiles, capacity, encounters, slot_len, n_slots
        )
        upper = offline.solve_slotted_relaxed(instance)
        payload = {
            "lower": exc.welfare,
            "middle": None,
            "upper": upper,
            "chain_ok": False,
            "prop1_ok": False,
            "partial": True,
            "solver_stats": {"error": str(exc)},
        }
        _atomic_write(out_path, json.dumps(payload, sort_keys=True, indent=2))
        print(f"solver budget exhausted; partial certificate in {out_path}",
              file=sys.stderr)
        return EXIT_PARTIAL
    payload = cert.to_dict()
    payload["partial"] = False
    _atomic_write(out_path, json.dumps(payload, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_gen_traces(args: argparse.Namespace) -> int:
    if args.cap_hi < args.cap_lo or args.cap_lo < 0:
        print(f"bad capacity range [{args.cap_lo}, {args.cap_hi}]", file=sys.stderr)
        return EXIT_CONFIG
    ids = list(range(args.users))
    try:
        capacity = traces.synth_capacity(
            ids, args.horizon, (args.cap_lo, args.cap_hi), args.seed
        )
        encounters = traces.synth_encounters(
            ids, args.horizon, args.seed, mode=args.encounters
        )
    except traces.TraceError as exc:
        print(f"trace generation failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _atomic_write(args.out, json.dumps(
        traces.traces_to_dict(capacity, encounters), sort_keys=True, indent=2
    ))
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    try:
        sessions = traces.read_sessions_csv(args.sessions)
        viewing = traces.read_viewing_csv(args.viewing)
        encounters = traces.encounters_from_sessions(sessions, horizon=args.horizon)
        capacity = traces.capacity_from_viewing_log(viewing, horizon=encounters.horizon)
    except (OSError, traces.TraceError) as exc:
        print(f"ingestion failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _atomic_write(args.out, json.dumps(
        traces.traces_to_dict(capacity, encounters), sort_keys=True, indent=2
    ))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdstream",
        description="Cooperative ABR streaming: simulations and welfare bounds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment matrix")
    p_run.add_argument("--spec", required=True, help="experiment spec JSON")
    p_run.add_argument("--out", help="output directory (overrides spec)")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p_run.set_defaults(fn=cmd_run)

    p_bounds = sub.add_parser("bounds", help="compute offline bound certificate")
    p_bounds.add_argument("--spec", required=True, help="instance JSON")
    p_bounds.add_argument("--out", default="bounds.json")
    p_bounds.set_defaults(fn=cmd_bounds)

    p_gen = sub.add_parser("gen-traces", help="synthesize seeded traces")
    p_gen.add_argument("--users", type=int, default=10)
    p_gen.add_argument("--horizon", type=float, default=500.0)
    p_gen.add_argument("--cap-lo", type=float, default=0.5)
    p_gen.add_argument("--cap-hi", type=float, default=3.0)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--encounters", default="trace",
                       choices=("full", "none", "trace"))
    p_gen.add_argument("--out", default="trace.json")
    p_gen.set_defaults(fn=cmd_gen_traces)

    p_ing = sub.add_parser("ingest", help="convert CSV logs to trace.json")
    p_ing.add_argument("--sessions", required=True, help="hotspot session CSV")
    p_ing.add_argument("--viewing", required=True, help="viewing log CSV")
    p_ing.add_argument("--horizon", type=float, default=None)
    p_ing.add_argument("--out", default="trace.json")
    p_ing.set_defaults(fn=cmd_ingest)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

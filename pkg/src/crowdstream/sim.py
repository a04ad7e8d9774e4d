"""Deterministic discrete-event simulator of asynchronous segmented streaming.

Each user alternates between decision epochs and transfers. Decisions come
from a pure scheduler function over a snapshot of broadcast state; transfer
completion times are inverted from the piecewise-constant capacity trace.
Buffers drain continuously at unit rate, segments arriving into a full
buffer are dropped (energy still charged), and transfers that lose their
encounter mid-flight are aborted with pro-rata energy under the default
abort policy.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from . import model, offline, online
from .model import SegmentRecord, UserProfile
from .traces import CapacityTrace, EncounterTrace

TOL = 1e-9

SchedulerFn = Callable[[online.SchedulerState, Mapping[int, UserProfile]], online.Decision]


@dataclass(frozen=True)
class SimConfig:
    horizon: float
    profiles: tuple[UserProfile, ...]
    capacity: CapacityTrace
    encounters: EncounterTrace
    scheduler: str | SchedulerFn = "lyapunov"
    scheduler_params: Mapping[str, float] = field(default_factory=dict)
    seed: str = "0"
    abort_policy: str = "abort"  # "abort" | "complete"

    def __post_init__(self) -> None:
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.horizon > self.capacity.horizon + TOL:
            raise ValueError("horizon exceeds capacity trace horizon")
        if self.abort_policy not in ("abort", "complete"):
            raise ValueError(f"unknown abort policy {self.abort_policy!r}")


@dataclass
class ExperimentReport:
    config: dict
    welfare: float
    sw_estimated: float
    avg_bitrate_mbps: float
    rebuffer_s: float
    deliveries: int
    drops: int
    aborts: int
    per_user: dict[int, dict]
    downloads: dict[int, list[SegmentRecord]]
    violations: list[str]
    gap: float | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "welfare": self.welfare,
            "sw_estimated": self.sw_estimated,
            "avg_bitrate_mbps": self.avg_bitrate_mbps,
            "rebuffer_s": self.rebuffer_s,
            "deliveries": self.deliveries,
            "drops": self.drops,
            "aborts": self.aborts,
            "per_user": {str(k): v for k, v in sorted(self.per_user.items())},
            "downloads": {
                str(n): [
                    {
                        "downloader": r.downloader, "owner": r.owner, "level": r.level,
                        "rate": r.rate, "seg_index": r.seg_index,
                        "t_start": r.t_start, "t_end": r.t_end,
                        "delivered": r.delivered, "completed": r.completed,
                        "mbit": r.mbit,
                    }
                    for r in recs
                ]
                for n, recs in sorted(self.downloads.items())
            },
            "violations": self.violations,
            "gap": self.gap,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def compute_download_end(
    capacity: CapacityTrace, n: int, t_start: float, volume_mbit: float
) -> float | None:
    """Earliest time by which ``volume_mbit`` can be fetched; None if the
    trace runs out of capacity before its horizon."""
    if volume_mbit < 0:
        raise ValueError("volume must be nonnegative")
    return capacity.invert(n, t_start, volume_mbit)


def run_simulation(config: SimConfig) -> ExperimentReport:
    profiles = model.profile_map(config.profiles)
    ids = sorted(profiles)
    horizon = config.horizon
    if callable(config.scheduler):
        scheduler = config.scheduler
        sched_name = getattr(config.scheduler, "__name__", "custom")
    else:
        scheduler = online.make_scheduler(config.scheduler, **dict(config.scheduler_params))
        sched_name = config.scheduler

    # playable buffer = contiguous prefix of delivered content (seconds);
    # out-of-order deliveries are parked and flushed once the gap closes
    buffers = {n: 0.0 for n in ids}
    parked: dict[int, set[int]] = {n: set() for n in ids}
    play_next = {n: 0 for n in ids}  # first index not yet in the playable prefix
    last_rates: dict[int, float | None] = {n: None for n in ids}
    delivered_segs: dict[int, set[int]] = {n: set() for n in ids}
    reserved: set[tuple[int, int]] = set()
    busy = {n: False for n in ids}
    samples: dict[int, list[float]] = {n: [] for n in ids}
    downloads: dict[int, list[SegmentRecord]] = {n: [] for n in ids}
    violations: list[str] = []
    counters = {"deliveries": 0, "drops": 0, "aborts": 0}
    sw_estimated = 0.0
    last_t = 0.0

    events: list[tuple[float, int, str, object]] = []
    seq = 0

    def push(time: float, kind: str, payload: object) -> None:
        nonlocal seq
        heapq.heappush(events, (time, seq, kind, payload))
        seq += 1

    def advance(now: float) -> None:
        nonlocal last_t
        dt = now - last_t
        if dt < -TOL:
            raise RuntimeError("event time went backwards")
        if dt > 0:
            for n in ids:
                buffers[n] = max(0.0, buffers[n] - dt)
        last_t = now

    inflight = {n: 0 for n in ids}  # reserved transfers currently heading to n

    def committed(n: int) -> float:
        """Buffer content including parked out-of-order segments (checked
        against the cap at arrival and at every event)."""
        return buffers[n] + profiles[n].beta * len(parked[n])

    def sched_level(n: int) -> float:
        """Buffer level broadcast to schedulers: committed content plus
        in-flight reservations, so concurrent downloaders do not over-fill
        one owner's buffer."""
        return committed(n) + profiles[n].beta * inflight[n]

    def check_invariants(now: float) -> None:
        for n in ids:
            if buffers[n] < -TOL or committed(n) > profiles[n].buffer_cap + TOL:
                violations.append(
                    f"t={now}: buffer of user {n} out of range: {committed(n)}"
                )

    def next_seg_of(n: int) -> int | None:
        """Smallest segment index neither delivered nor reserved by an
        in-flight transfer, so several downloaders can serve one owner."""
        prof = profiles[n]
        if not prof.is_video_user:
            return None
        for k in range(prof.video_segments):
            if k not in delivered_segs[n] and (n, k) not in reserved:
                return k
        return None

    def usable_neighbor(n: int, m: int, now: float) -> bool:
        """Encounter intervals are closed, so right at a break the pair is
        still "encountered" but no positive-duration transfer fits; exclude
        such neighbors to keep every started transfer strictly progressing."""
        if m == n:
            return True
        if not config.encounters.encountered(n, m, now):
            return False
        brk = config.encounters.next_break(n, m, now)
        return brk is None or brk > now + TOL

    def snapshot(n: int, now: float) -> online.SchedulerState:
        neighbors = tuple(m for m in ids if usable_neighbor(n, m, now))
        return online.SchedulerState(
            user=n,
            now=now,
            capacity=config.capacity.rate_at(n, now),
            neighbors=neighbors,
            buffers={m: sched_level(m) for m in ids},
            last_rates=dict(last_rates),
            next_seg={m: next_seg_of(m) for m in ids},
            reserved=frozenset(reserved),
            throughput_samples=tuple(samples[n]),
        )

    def start_download(n: int, now: float, decision: online.Download) -> None:
        nonlocal sw_estimated
        u, z, k = decision.owner, decision.level, decision.seg_index
        prof_u = profiles[u]
        if k in delivered_segs[u] or (u, k) in reserved:
            violations.append(f"t={now}: stale segment choice ({u},{k}) by {n}")
            push(min(now + online.DEFAULT_EPOCH, horizon), "epoch", n)
            return
        rate = prof_u.ladder[z]
        vol = rate * prof_u.beta
        end = compute_download_end(config.capacity, n, now, vol)
        full_vol = vol
        completed = True
        if end is None or end > horizon:
            end = horizon
            completed = False
        if completed and u != n and config.abort_policy == "abort":
            brk = config.encounters.next_break(n, u, now)
            if brk is not None and brk < end - TOL:
                end = brk
                completed = False
                counters["aborts"] += 1
        mbit = full_vol if completed else config.capacity.integrate(n, now, end)
        record = SegmentRecord(
            downloader=n, owner=u, level=z, rate=rate, seg_index=k,
            t_start=now, t_end=end, delivered=False, completed=completed,
            mbit=mbit,
        )
        state = snapshot(n, now)
        try:
            sw_estimated += online.decision_payoff(state, profiles, u, z)
        except ValueError:
            pass  # zero instantaneous capacity: no payoff estimate
        reserved.add((u, k))
        inflight[u] += 1
        busy[n] = True
        push(end, "complete", (n, record))

    def finish_download(n: int, now: float, record: SegmentRecord) -> None:
        u, k = record.owner, record.seg_index
        reserved.discard((u, k))
        inflight[u] -= 1
        busy[n] = False
        final = record
        if record.completed:
            prof_u = profiles[u]
            if committed(u) + prof_u.beta > prof_u.buffer_cap + TOL:
                counters["drops"] += 1
            else:
                final = SegmentRecord(
                    downloader=n, owner=u, level=record.level, rate=record.rate,
                    seg_index=k, t_start=record.t_start, t_end=record.t_end,
                    delivered=True, completed=True, mbit=record.mbit,
                )
                last_rates[u] = record.rate
                delivered_segs[u].add(k)
                counters["deliveries"] += 1
                parked[u].add(k)
                while play_next[u] in parked[u]:
                    parked[u].discard(play_next[u])
                    buffers[u] += prof_u.beta
                    play_next[u] += 1
            if record.t_end > record.t_start:
                samples[n].append(record.mbit / (record.t_end - record.t_start))
        downloads[n].append(final)
        if now < horizon:
            push(now, "epoch", n)

    for n in ids:
        push(0.0, "epoch", n)

    while events:
        time, _, kind, payload = heapq.heappop(events)
        if time > horizon + TOL:
            break
        advance(min(time, horizon))
        check_invariants(time)
        if kind == "epoch":
            n = payload
            if busy[n] or time >= horizon:
                continue
            decision = scheduler(snapshot(n, time), profiles)
            if isinstance(decision, online.Download):
                start_download(n, time, decision)
            else:
                wake = time + max(decision.duration, 1e-6)
                if wake < horizon:
                    push(wake, "epoch", n)
        elif kind == "complete":
            n, record = payload
            finish_download(n, time, record)

    advance(horizon)
    check_invariants(horizon)

    # accounting invariants over the realized records
    seen: set[tuple[int, int]] = set()
    for n in ids:
        for r in downloads[n]:
            if r.delivered:
                key = (r.owner, r.seg_index)
                if key in seen:
                    violations.append(f"duplicate delivered segment {key}")
                seen.add(key)
                got = config.capacity.integrate(n, r.t_start, r.t_end)
                if r.rate * profiles[r.owner].beta > got + 1e-9:
                    violations.append(
                        f"capacity shortfall for segment {key} by user {n}"
                    )

    welfare, breakdowns = model.eval_social_welfare(profiles, downloads)
    delivered_records = [
        r for recs in downloads.values() for r in recs if r.delivered
    ]
    avg_rate = (
        sum(r.rate for r in delivered_records) / len(delivered_records)
        if delivered_records else 0.0
    )
    rebuffer_s = sum(b.rebuffer_s for b in breakdowns.values())
    per_user = {
        n: {
            **breakdowns[n].to_dict(),
            "delivered_segments": len(delivered_segs[n]),
            "video_segments": profiles[n].video_segments,
        }
        for n in ids
    }
    config_echo = {
        "horizon": horizon,
        "scheduler": sched_name,
        "scheduler_params": dict(config.scheduler_params),
        "seed": config.seed,
        "abort_policy": config.abort_policy,
        "profiles": [profiles[n].to_dict() for n in ids],
    }
    return ExperimentReport(
        config=config_echo,
        welfare=welfare,
        sw_estimated=sw_estimated,
        avg_bitrate_mbps=avg_rate,
        rebuffer_s=rebuffer_s,
        deliveries=counters["deliveries"],
        drops=counters["drops"],
        aborts=counters["aborts"],
        per_user=per_user,
        downloads=downloads,
        violations=violations,
    )


def gap_vs_upper_bound(
    report: ExperimentReport,
    instance: offline.SlottedInstance,
    eps: float = 1e-9,
) -> float:
    """Relative gap between the fluid upper bound and the accumulated
    per-decision welfare estimate of a run."""
    upper = offline.solve_slotted_relaxed(instance)
    return (upper - report.sw_estimated) / max(abs(upper), eps)

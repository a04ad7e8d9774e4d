"""Offline welfare bounds via a virtual time-slotted download schedule.

The slotted scheme plans whole segments per slot instead of asynchronous
transfers. Its exact optimum lower-bounds the asynchronous optimum; a fluid
relaxation (continuous volumes, fluctuation and rebuffering charges dropped)
upper-bounds it. A grid-restricted brute-force search over asynchronous
segmented schedules provides the middle reference on tiny instances.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from . import model
from .model import SegmentRecord, UserProfile, Violation, WelfareBreakdown

TOL = 1e-9


class SolverBudgetError(RuntimeError):
    """Search exhausted its node budget; carries the best incumbent found."""

    def __init__(self, message: str, incumbent=None, welfare: float | None = None):
        super().__init__(message)
        self.incumbent = incumbent
        self.welfare = welfare


@dataclass(frozen=True)
class SlottedInstance:
    """Profiles plus per-slot capacity (Mbit) and whole-slot encounter flags.

    Users are indexed 0..N-1 in profile order; ``capacity[n][t]`` is the
    integrated cellular capacity of user n in slot t, and ``encounter`` holds
    (n, m, t) triples (n < m) whose encounter covers the entire slot.
    """

    profiles: tuple[UserProfile, ...]
    slot_len: float
    n_slots: int
    capacity: tuple[tuple[float, ...], ...]
    encounter: frozenset[tuple[int, int, int]]

    def __post_init__(self) -> None:
        if self.slot_len <= 0:
            raise ValueError("slot length must be positive")
        if list(p.id for p in self.profiles) != list(range(len(self.profiles))):
            raise ValueError("slotted instances require contiguous user ids 0..N-1")
        if any(h < 0 for row in self.capacity for h in row):
            raise ValueError("slot capacities must be nonnegative")

    @property
    def n_users(self) -> int:
        return len(self.profiles)

    def encountered(self, n: int, m: int, t: int) -> bool:
        if n == m:
            return True
        return (min(n, m), max(n, m), t) in self.encounter

    @classmethod
    def from_traces(
        cls,
        profiles: Sequence[UserProfile],
        capacity,
        encounters,
        slot_len: float,
        n_slots: int | None = None,
    ) -> "SlottedInstance":
        profiles = tuple(profiles)
        if n_slots is None:
            n_slots = int(capacity.horizon // slot_len)
        cap = tuple(
            tuple(capacity.integrate(p.id, t * slot_len, (t + 1) * slot_len)
                  for t in range(n_slots))
            for p in profiles
        )
        enc = set()
        for i, a in enumerate(profiles):
            for b in profiles[i + 1:]:
                for t in range(n_slots):
                    if encounters.holds(a.id, b.id, t * slot_len, (t + 1) * slot_len):
                        enc.add((a.id, b.id, t))
        return cls(profiles=profiles, slot_len=slot_len, n_slots=n_slots,
                   capacity=cap, encounter=frozenset(enc))

    def with_split(self, k: int) -> "SlottedInstance":
        """Same instance with every segment split into k equal parts."""
        if k < 1:
            raise ValueError("split factor must be at least 1")
        profiles = tuple(
            dataclasses.replace(p, beta=p.beta / k, video_segments=p.video_segments * k)
            for p in self.profiles
        )
        return dataclasses.replace(self, profiles=profiles)


@dataclass(frozen=True)
class SlottedSchedule:
    """Sparse segment counts keyed by (slot, downloader, owner, level)."""

    kappa: Mapping[tuple[int, int, int, int], int]

    def count(self, t: int, n: int, m: int, z: int) -> int:
        return self.kappa.get((t, n, m, z), 0)

    def downloaded_mbit(self, instance: SlottedInstance, n: int, t: int) -> float:
        total = 0.0
        for (tt, nn, m, z), c in self.kappa.items():
            if tt == t and nn == n:
                owner = instance.profiles[m]
                total += c * owner.beta * owner.ladder[z]
        return total

    def received_seconds(self, instance: SlottedInstance, m: int, t: int) -> float:
        beta = instance.profiles[m].beta
        return beta * sum(
            c for (tt, n, mm, z), c in self.kappa.items() if tt == t and mm == m
        )


def check_slotted_feasibility(
    instance: SlottedInstance, schedule: SlottedSchedule, tol: float = TOL
) -> list[Violation]:
    violations: list[Violation] = []
    received = [0] * instance.n_users
    for (t, n, m, z), c in schedule.kappa.items():
        if c < 0:
            violations.append(Violation("capacity", n, f"negative count at slot {t}"))
        if c > 0 and not instance.encountered(n, m, t):
            violations.append(Violation(
                "encounter", n, f"users {n} and {m} not encountered for all of slot {t}"
            ))
        received[m] += c
    for m, prof in enumerate(instance.profiles):
        if received[m] > prof.video_segments:
            violations.append(Violation(
                "duplicate", m,
                f"user {m} receives {received[m]} segments but video has {prof.video_segments}",
            ))
    for n in range(instance.n_users):
        for t in range(instance.n_slots):
            x = schedule.downloaded_mbit(instance, n, t)
            if x > instance.capacity[n][t] + tol:
                violations.append(Violation(
                    "capacity", n,
                    f"slot {t}: {x} Mbit exceeds capacity {instance.capacity[n][t]}",
                ))
    for m, prof in enumerate(instance.profiles):
        q = 0.0
        for t in range(instance.n_slots):
            q = max(0.0, q - instance.slot_len) + schedule.received_seconds(instance, m, t)
            if q > prof.buffer_cap + tol:
                violations.append(Violation(
                    "buffer", m, f"slot {t}: buffer {q} exceeds cap {prof.buffer_cap}"
                ))
    return violations


def eval_slotted_welfare(
    instance: SlottedInstance, schedule: SlottedSchedule, check: bool = True
) -> tuple[float, dict[int, WelfareBreakdown]]:
    """Welfare of a slotted schedule: value minus losses and energies.

    Within a slot segments count as played in ascending bitrate order, so
    quality degradation is charged only across successive nonempty slots;
    an empty slot carries the previous high bitrate forward. Rebuffering is
    charged per slot from the second slot on, only for video users.
    """
    if check:
        violations = check_slotted_feasibility(instance, schedule)
        if violations:
            raise ValueError("infeasible slotted schedule: "
                             + "; ".join(f"{v.kind}: {v.detail}" for v in violations))
    N, T, L = instance.n_users, instance.n_slots, instance.slot_len
    slot_rates: list[list[list[float]]] = [[[] for _ in range(T)] for _ in range(N)]
    value = [0.0] * N
    cell = [0.0] * N
    wifi = [0.0] * N
    play = [0.0] * N
    x_total = [[0.0] * T for _ in range(N)]
    for (t, n, m, z), c in schedule.kappa.items():
        if c <= 0:
            continue
        owner = instance.profiles[m]
        rate = owner.ladder[z]
        vol = c * rate * owner.beta
        value[m] += c * model.quality_value(owner, rate) * owner.beta
        x_total[n][t] += vol
        cell[n] += instance.profiles[n].c_data * vol
        if m != n:
            wifi[n] += instance.profiles[n].w_data * vol
        play[m] += c * (owner.eps_time * owner.beta + owner.eps_rate * rate * owner.beta)
        slot_rates[m][t].extend([rate] * c)
    for n in range(N):
        c_time = instance.profiles[n].c_time
        for t in range(T):
            if x_total[n][t] > 0:
                cell[n] += c_time * (x_total[n][t] / instance.capacity[n][t]) * L
    breakdowns: dict[int, WelfareBreakdown] = {}
    welfare = 0.0
    for m, prof in enumerate(instance.profiles):
        qdeg = 0.0
        last_high: float | None = None
        for t in range(T):
            rates = slot_rates[m][t]
            if rates:
                if last_high is not None:
                    qdeg += prof.phi_qdeg * max(0.0, last_high - min(rates))
                last_high = max(rates)
        rebuf = 0.0
        stall = 0.0
        if prof.is_video_user:
            q = 0.0
            for t in range(T):
                if t >= 1:
                    stall += max(0.0, L - q)
                q = max(0.0, q - L) + schedule.received_seconds(instance, m, t)
            rebuf = prof.phi_rebuf * stall
        bd = WelfareBreakdown(
            value=value[m], qdeg_loss=qdeg, rebuf_loss=rebuf,
            cell_energy=cell[m], wifi_energy=wifi[m], play_energy=play[m],
            rebuffer_s=stall,
        )
        breakdowns[m] = bd
        welfare += bd.payoff
    return welfare, breakdowns


# ---------------------------------------------------------------------------
# Exact slotted optimum: depth-first branch and bound over segment counts
# ---------------------------------------------------------------------------

@dataclass
class ExactResult:
    schedule: SlottedSchedule
    welfare: float
    nodes: int
    leaves: int


def solve_slotted_exact(
    instance: SlottedInstance, node_budget: int = 10_000_000
) -> ExactResult:
    """Exact slotted optimum by branch and bound over per-slot segment counts.

    Counts are enumerated in lexicographic (slot, downloader, owner, level)
    order with ascending values and strict incumbent improvement, so the
    returned schedule is the lexicographically smallest optimum.
    """
    N, T, L = instance.n_users, instance.n_slots, instance.slot_len
    profiles = instance.profiles
    slot_vars: list[list[tuple[int, int, int]]] = []
    for t in range(T):
        svars = []
        for n in range(N):
            if instance.capacity[n][t] <= TOL:
                continue
            for m in range(N):
                if not profiles[m].is_video_user or not instance.encountered(n, m, t):
                    continue
                for z in range(len(profiles[m].ladder)):
                    svars.append((n, m, z))
        slot_vars.append(svars)

    # Optimistic value per Mbit achievable in each slot (losses and energy
    # treated as zero keeps the bound admissible).
    slot_density = []
    for t in range(T):
        best = 0.0
        for n, m, z in slot_vars[t]:
            rate = profiles[m].ladder[z]
            best = max(best, model.quality_value(profiles[m], rate) / rate)
        slot_density.append(best)
    suffix_cap = [0.0] * (T + 1)
    for t in range(T - 1, -1, -1):
        suffix_cap[t] = suffix_cap[t + 1] + slot_density[t] * sum(
            instance.capacity[n][t] for n in range(N)
        )
    best_seg_value = [
        max(model.quality_value(p, r) for r in p.ladder) * p.beta if p.is_video_user else 0.0
        for p in profiles
    ]

    counts: dict[tuple[int, int, int, int], int] = {}
    received = [0] * N
    stats = {"nodes": 0, "leaves": 0}
    best = {"welfare": -math.inf, "kappa": {}}

    def budget_bound(rcv: list[int]) -> float:
        return sum((profiles[m].video_segments - rcv[m]) * best_seg_value[m]
                   for m in range(N))

    def close_slot(t: int, acc: float, q: list[float], last_high: list[float | None]):
        """Charge slot-level losses and advance buffers; recurse or prune."""
        new_q = list(q)
        new_high = list(last_high)
        total = acc
        for m, prof in enumerate(profiles):
            rates = slot_rate_buf[m]
            if rates:
                lo, hi = min(rates), max(rates)
                if new_high[m] is not None:
                    total -= prof.phi_qdeg * max(0.0, new_high[m] - lo)
                new_high[m] = hi
            if prof.is_video_user:
                if t >= 1:
                    total -= prof.phi_rebuf * max(0.0, L - new_q[m])
                new_q[m] = max(0.0, new_q[m] - L) + slot_secs_buf[m]
                if new_q[m] > prof.buffer_cap + TOL:
                    return
        if t + 1 == T:
            stats["leaves"] += 1
            if total > best["welfare"]:
                best["welfare"] = total
                best["kappa"] = dict(counts)
            return
        if total + min(suffix_cap[t + 1], budget_bound(received)) <= best["welfare"] + 1e-12:
            return
        dfs_slot(t + 1, total, new_q, new_high)

    slot_rate_buf: list[list[float]] = [[] for _ in range(N)]
    slot_secs_buf: list[float] = [0.0] * N

    def dfs_vars(t: int, i: int, acc: float, rem_cap: list[float],
                 q: list[float], last_high: list[float | None]):
        stats["nodes"] += 1
        if stats["nodes"] > node_budget:
            raise SolverBudgetError(
                f"node budget {node_budget} exhausted",
                incumbent=SlottedSchedule(dict(best["kappa"])),
                welfare=best["welfare"] if best["welfare"] > -math.inf else None,
            )
        if i == len(slot_vars[t]):
            close_slot(t, acc, q, last_high)
            return
        if best["welfare"] > -math.inf:
            rem_total = sum(rem_cap)
            optimistic = acc + min(
                rem_total * slot_density[t] + suffix_cap[t + 1],
                budget_bound(received),
            )
            if optimistic <= best["welfare"] + 1e-12:
                return
        n, m, z = slot_vars[t][i]
        owner = profiles[m]
        rate = owner.ladder[z]
        unit_vol = rate * owner.beta
        cmax = min(
            int((rem_cap[n] + TOL) // unit_vol),
            owner.video_segments - received[m],
        )
        dl = profiles[n]
        unit_gain = (
            model.quality_value(owner, rate) * owner.beta
            - dl.c_time * (unit_vol / instance.capacity[n][t]) * L
            - dl.c_data * unit_vol
            - (dl.w_data * unit_vol if m != n else 0.0)
            - (owner.eps_time * owner.beta + owner.eps_rate * rate * owner.beta)
        )
        for c in range(cmax + 1):
            if c > 0:
                counts[(t, n, m, z)] = c
                rem_cap[n] -= unit_vol
                received[m] += 1
                slot_secs_buf[m] += owner.beta
                slot_rate_buf[m].append(rate)
            dfs_vars(t, i + 1, acc + c * unit_gain, rem_cap, q, last_high)
        if cmax > 0:
            counts.pop((t, n, m, z), None)
            rem_cap[n] += cmax * unit_vol
            received[m] -= cmax
            slot_secs_buf[m] -= cmax * owner.beta
            del slot_rate_buf[m][-cmax:]

    def dfs_slot(t: int, acc: float, q: list[float], last_high: list[float | None]):
        saved_rates = [list(r) for r in slot_rate_buf]
        saved_secs = list(slot_secs_buf)
        for m in range(N):
            slot_rate_buf[m].clear()
            slot_secs_buf[m] = 0.0
        rem_cap = [instance.capacity[n][t] for n in range(N)]
        dfs_vars(t, 0, acc, rem_cap, q, last_high)
        for m in range(N):
            slot_rate_buf[m][:] = saved_rates[m]
            slot_secs_buf[m] = saved_secs[m]

    if T == 0:
        return ExactResult(SlottedSchedule({}), 0.0, 0, 1)
    dfs_slot(0, 0.0, [0.0] * N, [None] * N)
    return ExactResult(
        SlottedSchedule(best["kappa"]), best["welfare"], stats["nodes"], stats["leaves"]
    )


# ---------------------------------------------------------------------------
# Fluid relaxation upper bound (linear program)
# ---------------------------------------------------------------------------

def solve_slotted_relaxed(instance: SlottedInstance) -> float:
    """Certified welfare upper bound from the fluid relaxation.

    Segment counts become continuous volumes, and the fluctuation and
    rebuffering charges are dropped (both are nonnegative, so removing them
    keeps the bound valid for any feasible schedule, slotted or segmented).
    Capacity, whole-slot encounters, buffer capacity, and video-length
    budgets are kept. The bound does not depend on the segment length.
    """
    N, T, L = instance.n_users, instance.n_slots, instance.slot_len
    profiles = instance.profiles
    xs: list[tuple[int, int, int, int]] = []  # (t, n, m, z)
    for t in range(T):
        for n in range(N):
            if instance.capacity[n][t] <= TOL:
                continue
            for m in range(N):
                if not profiles[m].is_video_user or not instance.encountered(n, m, t):
                    continue
                for z in range(len(profiles[m].ladder)):
                    xs.append((t, n, m, z))
    if not xs:
        return 0.0
    video = [m for m in range(N) if profiles[m].is_video_user]
    nx = len(xs)
    np_idx = {(m, t): nx + i for i, (m, t) in
              enumerate((m, t) for m in video for t in range(T))}
    nq_idx = {(m, t): nx + len(np_idx) + i for i, (m, t) in
              enumerate((m, t) for m in video for t in range(T))}
    nvars = nx + 2 * len(np_idx)

    obj = np.zeros(nvars)
    for j, (t, n, m, z) in enumerate(xs):
        owner, dl = profiles[m], profiles[n]
        rate = owner.ladder[z]
        obj[j] = (
            model.quality_value(owner, rate) / rate
            - dl.c_time * L / instance.capacity[n][t]
            - dl.c_data
            - (dl.w_data if m != n else 0.0)
            - (owner.eps_time / rate + owner.eps_rate)
        )

    rows_ub, cols_ub, vals_ub, b_ub = [], [], [], []
    rows_eq, cols_eq, vals_eq, b_eq = [], [], [], []

    def add_ub(entries, rhs):
        r = len(b_ub)
        for c, v in entries:
            rows_ub.append(r); cols_ub.append(c); vals_ub.append(v)
        b_ub.append(rhs)

    def add_eq(entries, rhs):
        r = len(b_eq)
        for c, v in entries:
            rows_eq.append(r); cols_eq.append(c); vals_eq.append(v)
        b_eq.append(rhs)

    by_slot_dl: dict[tuple[int, int], list[int]] = {}
    by_slot_owner: dict[tuple[int, int], list[int]] = {}
    by_owner: dict[int, list[int]] = {}
    for j, (t, n, m, z) in enumerate(xs):
        by_slot_dl.setdefault((n, t), []).append(j)
        by_slot_owner.setdefault((m, t), []).append(j)
        by_owner.setdefault(m, []).append(j)

    for (n, t), js in sorted(by_slot_dl.items()):
        add_ub([(j, 1.0) for j in js], instance.capacity[n][t])
    for m in video:
        prof = profiles[m]
        for t in range(T):
            # buffer dynamics: q(t) = q(t-1) - p(t) + playback seconds received
            entries = [(nq_idx[(m, t)], 1.0), (np_idx[(m, t)], 1.0)]
            if t > 0:
                entries.append((nq_idx[(m, t - 1)], -1.0))
            for j in by_slot_owner.get((m, t), ()):
                entries.append((j, -1.0 / profiles[m].ladder[xs[j][3]]))
            add_eq(entries, 0.0)
            if t > 0:
                add_ub([(np_idx[(m, t)], 1.0), (nq_idx[(m, t - 1)], -1.0)], 0.0)
        js = by_owner.get(m, ())
        if js:
            add_ub([(j, 1.0 / profiles[m].ladder[xs[j][3]]) for j in js],
                   prof.video_segments * prof.beta)

    # variable bounds: x >= 0, playback p in [0, L] (0 in the first slot
    # since nothing has arrived yet), buffer q in [0, cap]
    ordered: list[tuple[float, float | None]] = [(0.0, None)] * nvars
    for (m, t), j in np_idx.items():
        ordered[j] = (0.0, 0.0 if t == 0 else L)
    for (m, t), j in nq_idx.items():
        ordered[j] = (0.0, profiles[m].buffer_cap)

    A_ub = sparse.csr_matrix((vals_ub, (rows_ub, cols_ub)), shape=(len(b_ub), nvars))
    A_eq = sparse.csr_matrix((vals_eq, (rows_eq, cols_eq)), shape=(len(b_eq), nvars))
    res = linprog(-obj, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=ordered, method="highs")
    if res.status != 0:
        raise RuntimeError(f"relaxation LP failed: {res.message}")
    return float(-res.fun)


# ---------------------------------------------------------------------------
# Brute-force segmented oracle (grid-restricted exhaustive search)
# ---------------------------------------------------------------------------

@dataclass
class BruteForceResult:
    welfare: float
    downloads: dict[int, list[SegmentRecord]]
    nodes: int
    leaves: int


def brute_force_segmented(
    profiles: Sequence[UserProfile],
    capacity,
    encounters,
    horizon: float,
    grid: Sequence[float] | None = None,
    node_budget: int = 2_000_000,
) -> BruteForceResult:
    """Exhaustive search over asynchronous segmented schedules.

    Start times are restricted to a finite grid (trace breakpoints by
    default) plus each downloader's previous completion time, and every
    transfer runs at full link capacity. The result is a welfare lower
    bound certificate for the asynchronous optimum.
    """
    pmap = model.profile_map(profiles)
    ids = sorted(pmap)
    if grid is None:
        pts = set(capacity.breakpoints()) | set(encounters.breakpoints())
        grid = sorted(t for t in pts if 0 <= t < horizon)
    owners = [m for m in ids if pmap[m].is_video_user]
    stats = {"nodes": 0, "leaves": 0}
    best = {"welfare": 0.0, "downloads": {n: [] for n in ids}}

    scheduled: dict[int, list[tuple[float, float, int, int]]] = {n: [] for n in ids}
    next_free = {n: 0.0 for n in ids}
    received = {m: 0 for m in ids}
    best_seg_value = {
        m: max(model.quality_value(pmap[m], r) for r in pmap[m].ladder) * pmap[m].beta
        for m in owners
    }

    def leaf(partial: float):
        stats["leaves"] += 1
        downloads: dict[int, list[SegmentRecord]] = {n: [] for n in ids}
        per_owner: dict[int, list[tuple[float, int, float, float, int]]] = {m: [] for m in owners}
        for n in ids:
            for start, end, m, z in scheduled[n]:
                per_owner[m].append((end, n, start, pmap[m].ladder[z], z))
        for m in owners:
            per_owner[m].sort()
            prof = pmap[m]
            q = 0.0
            for k, (end, n, start, rate, z) in enumerate(per_owner[m]):
                if k == 0:
                    q = model.update_buffer(0.0, 0.0, prof.beta)
                else:
                    gap = max(0.0, end - per_owner[m][k - 1][0])
                    q = model.update_buffer(q, gap, prof.beta)
                if q > prof.buffer_cap + TOL:
                    return  # infeasible leaf
                downloads[n].append(SegmentRecord(
                    downloader=n, owner=m, level=z, rate=rate, seg_index=k,
                    t_start=start, t_end=end,
                ))
        welfare, _ = model.eval_social_welfare(pmap, downloads)
        if welfare > best["welfare"]:
            best["welfare"] = welfare
            best["downloads"] = {n: list(v) for n, v in downloads.items()}

    def bound_remaining() -> float:
        return sum((pmap[m].video_segments - received[m]) * best_seg_value[m]
                   for m in owners)

    def dfs(active: tuple[int, ...], partial: float):
        stats["nodes"] += 1
        if stats["nodes"] > node_budget:
            raise SolverBudgetError(
                f"node budget {node_budget} exhausted",
                incumbent=best["downloads"], welfare=best["welfare"],
            )
        if not active:
            leaf(partial)
            return
        if partial + bound_remaining() <= best["welfare"] + 1e-12:
            # even a loss-free completion cannot beat the incumbent
            leaf(partial)
            return
        d = min(active, key=lambda n: (next_free[n], n))
        starts = [next_free[d]] + [g for g in grid if g > next_free[d] + TOL]
        prof_d = pmap[d]
        for start in starts:
            if start >= horizon - TOL:
                break
            for m in owners:
                if received[m] >= pmap[m].video_segments:
                    continue
                prof_m = pmap[m]
                for z, rate in enumerate(prof_m.ladder):
                    vol = rate * prof_m.beta
                    end = capacity.invert(d, start, vol)
                    if end is None:
                        continue
                    if m != d and not encounters.holds(d, m, start, end):
                        continue
                    gain = (
                        model.quality_value(prof_m, rate) * prof_m.beta
                        - prof_d.c_time * (end - start) - prof_d.c_data * vol
                        - (prof_d.w_data * vol if m != d else 0.0)
                        - (prof_m.eps_time * prof_m.beta + prof_m.eps_rate * rate * prof_m.beta)
                    )
                    scheduled[d].append((start, end, m, z))
                    old_free = next_free[d]
                    next_free[d] = end
                    received[m] += 1
                    dfs(active, partial + gain)
                    received[m] -= 1
                    next_free[d] = old_free
                    scheduled[d].pop()
        dfs(tuple(n for n in active if n != d), partial)  # retire this downloader

    dfs(tuple(ids), 0.0)
    return BruteForceResult(best["welfare"], best["downloads"], stats["nodes"], stats["leaves"])


# ---------------------------------------------------------------------------
# Bound certificate: lower / middle / upper sandwich
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundCertificate:
    lower: float
    upper: float
    middle: float | None
    chain_ok: bool
    split_monotone_ok: bool
    solver_stats: dict

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "middle": self.middle,
            "upper": self.upper,
            "chain_ok": self.chain_ok,
            "prop1_ok": self.split_monotone_ok,
            "solver_stats": self.solver_stats,
        }


def bound_certificate(
    profiles: Sequence[UserProfile],
    capacity,
    encounters,
    slot_len: float,
    n_slots: int | None = None,
    include_middle: bool = True,
    exact_budget: int = 10_000_000,
    brute_budget: int = 2_000_000,
    tol: float = TOL,
) -> BoundCertificate:
    """Run the three bound solvers and certify the sandwich ordering."""
    instance = SlottedInstance.from_traces(profiles, capacity, encounters, slot_len, n_slots)
    exact = solve_slotted_exact(instance, node_budget=exact_budget)
    upper = solve_slotted_relaxed(instance)
    exact_half = solve_slotted_exact(instance.with_split(2), node_budget=exact_budget)
    middle = None
    stats = {
        "exact_nodes": exact.nodes,
        "exact_half_nodes": exact_half.nodes,
    }
    horizon = instance.n_slots * slot_len
    if include_middle:
        brute = brute_force_segmented(
            profiles, capacity, encounters, horizon, node_budget=brute_budget
        )
        middle = brute.welfare
        stats["brute_nodes"] = brute.nodes
    if middle is None:
        chain_ok = exact.welfare <= upper + tol
    else:
        chain_ok = exact.welfare <= middle + tol and middle <= upper + tol
    return BoundCertificate(
        lower=exact.welfare,
        upper=upper,
        middle=middle,
        chain_ok=chain_ok,
        split_monotone_ok=exact.welfare <= exact_half.welfare + tol,
        solver_stats=stats,
    )

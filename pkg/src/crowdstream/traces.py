"""Network traces: per-user cellular capacity and pairwise encounter windows.

Capacity is piecewise constant, which keeps the feasibility integral exact
and makes download-completion inversion closed form. Encounters are stored
as disjoint closed intervals per unordered user pair; a user always
"encounters" himself, so self-download is always feasible.

Also provides CSV ingestion for hotspot session logs and video viewing logs,
plus seeded synthetic generators standing in for real datasets.
"""
from __future__ import annotations

import bisect
import csv
import random
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class PiecewiseConstant:
    """A right-open piecewise-constant function on [0, horizon]."""

    times: tuple[float, ...]   # piece start times; first must be 0
    values: tuple[float, ...]
    horizon: float

    def __post_init__(self) -> None:
        if not self.times or self.times[0] != 0.0:
            raise TraceError("breakpoints must start at 0")
        if len(self.times) != len(self.values):
            raise TraceError("breakpoints and values must have equal length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise TraceError("breakpoints must be strictly increasing")
        if self.times[-1] > self.horizon:
            raise TraceError("breakpoints must lie within the horizon")
        if any(v < 0 for v in self.values):
            raise TraceError("rates must be nonnegative")

    def _check(self, t: float) -> None:
        if t < 0 or t > self.horizon:
            raise TraceError(f"time {t} outside horizon [0, {self.horizon}]")

    def value_at(self, t: float) -> float:
        self._check(t)
        i = bisect.bisect_right(self.times, t) - 1
        return self.values[i]

    def integrate(self, t1: float, t2: float) -> float:
        self._check(t1)
        self._check(t2)
        if t2 < t1:
            raise TraceError(f"empty interval reversed: [{t1}, {t2}]")
        total = 0.0
        i = bisect.bisect_right(self.times, t1) - 1
        t = t1
        while t < t2:
            piece_end = self.times[i + 1] if i + 1 < len(self.times) else self.horizon
            seg_end = min(piece_end, t2)
            total += self.values[i] * (seg_end - t)
            t = seg_end
            i += 1
        return total

    def invert(self, start: float, volume: float) -> float | None:
        """Earliest t with integral over [start, t] equal to ``volume``.

        Returns None when the remaining capacity before the horizon is
        insufficient.
        """
        self._check(start)
        if volume < 0:
            raise TraceError("volume must be nonnegative")
        if volume == 0:
            return start
        remaining = volume
        i = bisect.bisect_right(self.times, start) - 1
        t = start
        while t < self.horizon:
            piece_end = self.times[i + 1] if i + 1 < len(self.times) else self.horizon
            rate = self.values[i]
            chunk = rate * (piece_end - t)
            if rate > 0 and chunk >= remaining - 1e-12:
                return min(self.horizon, t + remaining / rate)
            remaining -= chunk
            t = piece_end
            i += 1
        return None


@dataclass(frozen=True)
class CapacityTrace:
    """Cellular link capacity h_n(t) for every user over [0, horizon]."""

    users: Mapping[int, PiecewiseConstant]
    horizon: float

    def rate_at(self, n: int, t: float) -> float:
        return self.users[n].value_at(t)

    def integrate(self, n: int, t1: float, t2: float) -> float:
        return self.users[n].integrate(t1, t2)

    def invert(self, n: int, start: float, volume: float) -> float | None:
        return self.users[n].invert(start, volume)

    def breakpoints(self) -> list[float]:
        pts = {0.0, self.horizon}
        for pw in self.users.values():
            pts.update(pw.times)
        return sorted(pts)

    @classmethod
    def constant(cls, user_ids: Iterable[int], rate: float, horizon: float) -> "CapacityTrace":
        return cls(
            users={n: PiecewiseConstant((0.0,), (rate,), horizon) for n in user_ids},
            horizon=horizon,
        )

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "users": {
                str(n): {"times": list(pw.times), "rates": list(pw.values)}
                for n, pw in sorted(self.users.items())
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CapacityTrace":
        horizon = float(d["horizon"])
        users = {
            int(n): PiecewiseConstant(tuple(spec["times"]), tuple(spec["rates"]), horizon)
            for n, spec in d["users"].items()
        }
        return cls(users=users, horizon=horizon)


def _merge_intervals(intervals: Iterable[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    merged: list[list[float]] = []
    for a, b in sorted(intervals):
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return tuple((a, b) for a, b in merged)


@dataclass(frozen=True)
class EncounterTrace:
    """Pairwise encounter windows; symmetric, disjoint closed intervals."""

    intervals: Mapping[tuple[int, int], tuple[tuple[float, float], ...]]
    horizon: float

    def __post_init__(self) -> None:
        for (n, m), ivs in self.intervals.items():
            if n >= m:
                raise TraceError(f"pair keys must be ordered (n < m), got ({n}, {m})")
            for a, b in ivs:
                if a > b or a < 0 or b > self.horizon:
                    raise TraceError(f"bad encounter interval [{a}, {b}] for pair ({n}, {m})")

    def _pair(self, n: int, m: int) -> tuple[tuple[float, float], ...]:
        return self.intervals.get((min(n, m), max(n, m)), ())

    def _check(self, t: float) -> None:
        if t < 0 or t > self.horizon:
            raise TraceError(f"time {t} outside horizon [0, {self.horizon}]")

    def encountered(self, n: int, m: int, t: float) -> bool:
        self._check(t)
        if n == m:
            return True
        return any(a <= t <= b for a, b in self._pair(n, m))

    def holds(self, n: int, m: int, t1: float, t2: float) -> bool:
        """True iff the pair is encountered throughout [t1, t2]."""
        self._check(t1)
        self._check(t2)
        if n == m:
            return True
        return any(a <= t1 and t2 <= b for a, b in self._pair(n, m))

    def next_break(self, n: int, m: int, t: float) -> float | None:
        """End of the encounter window containing ``t``; None if unbounded or self."""
        if n == m:
            return None
        for a, b in self._pair(n, m):
            if a <= t <= b:
                return None if b >= self.horizon else b
        return t  # not encountered at all

    def breakpoints(self) -> list[float]:
        pts = {0.0, self.horizon}
        for ivs in self.intervals.values():
            for a, b in ivs:
                pts.update((a, b))
        return sorted(pts)

    @classmethod
    def full(cls, user_ids: Sequence[int], horizon: float) -> "EncounterTrace":
        ids = sorted(user_ids)
        pairs = {
            (a, b): ((0.0, horizon),)
            for i, a in enumerate(ids) for b in ids[i + 1:]
        }
        return cls(intervals=pairs, horizon=horizon)

    @classmethod
    def none(cls, horizon: float) -> "EncounterTrace":
        return cls(intervals={}, horizon=horizon)

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "pairs": [
                {"users": [n, m], "intervals": [list(iv) for iv in ivs]}
                for (n, m), ivs in sorted(self.intervals.items())
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EncounterTrace":
        pairs = {
            (int(p["users"][0]), int(p["users"][1])):
                tuple((float(a), float(b)) for a, b in p["intervals"])
            for p in d["pairs"]
        }
        return cls(intervals=pairs, horizon=float(d["horizon"]))


# ---------------------------------------------------------------------------
# Log ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SessionLogRecord:
    user_id: int
    hotspot_id: str
    login_time: float
    logout_time: float
    in_bytes: int = 0
    out_bytes: int = 0

    def __post_init__(self) -> None:
        if self.logout_time < self.login_time:
            raise TraceError("session logout precedes login")


@dataclass(frozen=True)
class ViewingLogRecord:
    user_id: int
    video_id: str
    seg_index: int
    seg_length: float
    bitrate: float
    download_time: float

    def __post_init__(self) -> None:
        if self.seg_length <= 0 or self.bitrate <= 0:
            raise TraceError("segment length and bitrate must be positive")
        if self.download_time <= 0:
            raise TraceError("download time must be positive")

    @property
    def throughput(self) -> float:
        return self.bitrate * self.seg_length / self.download_time


def read_sessions_csv(path) -> list[SessionLogRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(SessionLogRecord(
                    user_id=int(row["user_id"]),
                    hotspot_id=row["hotspot_id"],
                    login_time=float(row["login_s"]),
                    logout_time=float(row["logout_s"]),
                    in_bytes=int(row.get("in_bytes") or 0),
                    out_bytes=int(row.get("out_bytes") or 0),
                ))
            except (KeyError, ValueError, TraceError) as exc:
                raise TraceError(f"{path}:{lineno}: bad session record: {exc}") from exc
    return records


def read_viewing_csv(path) -> list[ViewingLogRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(ViewingLogRecord(
                    user_id=int(row["user_id"]),
                    video_id=row["video_id"],
                    seg_index=int(row["seg_index"]),
                    seg_length=float(row["seg_len_s"]),
                    bitrate=float(row["bitrate_mbps"]),
                    download_time=float(row["download_s"]),
                ))
            except (KeyError, ValueError, TraceError) as exc:
                raise TraceError(f"{path}:{lineno}: bad viewing record: {exc}") from exc
    return records


def encounters_from_sessions(
    records: Sequence[SessionLogRecord], horizon: float | None = None
) -> EncounterTrace:
    """Two users are encountered while their sessions overlap at one hotspot."""
    if horizon is None:
        horizon = max((r.logout_time for r in records), default=0.0)
    by_hotspot: dict[str, list[SessionLogRecord]] = {}
    for rec in records:
        by_hotspot.setdefault(rec.hotspot_id, []).append(rec)
    raw: dict[tuple[int, int], list[tuple[float, float]]] = {}
    for sessions in by_hotspot.values():
        for i, a in enumerate(sessions):
            for b in sessions[i + 1:]:
                if a.user_id == b.user_id:
                    continue
                lo = max(a.login_time, b.login_time)
                hi = min(a.logout_time, b.logout_time)
                if lo < hi:
                    key = (min(a.user_id, b.user_id), max(a.user_id, b.user_id))
                    raw.setdefault(key, []).append((lo, min(hi, horizon)))
    pairs = {key: _merge_intervals(ivs) for key, ivs in raw.items()}
    return EncounterTrace(intervals=pairs, horizon=horizon)


def capacity_from_viewing_log(
    records: Sequence[ViewingLogRecord], horizon: float | None = None
) -> CapacityTrace:
    """Per-user capacity from measured per-segment throughputs, laid end to end."""
    if not records:
        raise TraceError("no samples in viewing log")
    by_user: dict[int, list[ViewingLogRecord]] = {}
    for rec in records:
        by_user.setdefault(rec.user_id, []).append(rec)
    if horizon is None:
        horizon = max(sum(r.download_time for r in recs) for recs in by_user.values())
    users = {}
    for uid, recs in by_user.items():
        times, rates = [], []
        t = 0.0
        for rec in recs:
            if t >= horizon:
                break
            times.append(t)
            rates.append(rec.throughput)
            t += rec.download_time
        users[uid] = PiecewiseConstant(tuple(times), tuple(rates), horizon)
    return CapacityTrace(users=users, horizon=horizon)


# ---------------------------------------------------------------------------
# Synthetic generators (seed-deterministic)
# ---------------------------------------------------------------------------

def synth_capacity(
    user_ids: Sequence[int],
    horizon: float,
    mean_range: tuple[float, float],
    seed: int,
    hold_mean: float = 30.0,
    jitter: float = 0.5,
) -> CapacityTrace:
    """Markov-modulated piecewise-constant capacity per user.

    Each user draws a mean rate uniformly from ``mean_range`` and holds
    rates jittered around it for exponentially distributed durations, so the
    per-user time-average stays near the drawn mean.
    """
    lo, hi = mean_range
    if lo < 0 or hi < lo:
        raise TraceError(f"bad mean capacity range [{lo}, {hi}]")
    if hold_mean <= 0 or not 0 <= jitter < 1:
        raise TraceError("hold_mean must be positive and jitter in [0, 1)")
    rng = random.Random(f"capacity/{seed}")
    users = {}
    for n in sorted(user_ids):
        mean = rng.uniform(lo, hi)
        times, rates = [], []
        t = 0.0
        while t < horizon:
            times.append(t)
            rates.append(mean * rng.uniform(1.0 - jitter, 1.0 + jitter))
            t += rng.expovariate(1.0 / hold_mean)
        users[n] = PiecewiseConstant(tuple(times), tuple(rates), horizon)
    return CapacityTrace(users=users, horizon=horizon)


def synth_encounters(
    user_ids: Sequence[int],
    horizon: float,
    seed: int,
    mode: str = "trace",
    mean_on: float = 60.0,
    mean_off: float = 60.0,
) -> EncounterTrace:
    """Alternating exponential ON/OFF encounter process per user pair.

    ``mode`` selects the two benchmark scenarios: "full" (every pair always
    encountered), "none" (no pair ever encountered), or "trace" (random).
    """
    if mode == "full":
        return EncounterTrace.full(list(user_ids), horizon)
    if mode == "none":
        return EncounterTrace.none(horizon)
    if mode != "trace":
        raise TraceError(f"unknown encounter mode {mode!r}")
    if mean_on <= 0 or mean_off <= 0:
        raise TraceError("ON/OFF durations must be positive")
    rng = random.Random(f"encounters/{seed}")
    ids = sorted(user_ids)
    pairs: dict[tuple[int, int], tuple[tuple[float, float], ...]] = {}
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            ivs = []
            on = rng.random() < mean_on / (mean_on + mean_off)
            t = 0.0
            while t < horizon:
                dur = rng.expovariate(1.0 / (mean_on if on else mean_off))
                if on:
                    ivs.append((t, min(t + dur, horizon)))
                t += dur
                on = not on
            if ivs:
                pairs[(a, b)] = tuple(ivs)
    return EncounterTrace(intervals=pairs, horizon=horizon)


def traces_to_dict(capacity: CapacityTrace, encounters: EncounterTrace) -> dict:
    return {"capacity": capacity.to_dict(), "encounters": encounters.to_dict()}


def traces_from_dict(d: Mapping) -> tuple[CapacityTrace, EncounterTrace]:
    return CapacityTrace.from_dict(d["capacity"]), EncounterTrace.from_dict(d["encounters"])

"""Domain types and payoff arithmetic for cooperative segment downloading.

All welfare accounting lives here: per-user quality value, quality-degradation
and rebuffering losses, cellular/WiFi/playback energy, and the social welfare
aggregation used by both the offline bound machinery and the simulator.

Units: seconds for time and buffer levels, Mbps for bitrates, Mbit for data
volumes. Utility is dimensionless. All functions are pure and operate on
immutable inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

FEASIBILITY_TOL = 1e-9


class IntegrityError(ValueError):
    """Delivered segments collide on the same (owner, seg_index)."""


@dataclass(frozen=True)
class UserProfile:
    """Per-user video, QoE, energy, and buffer parameters.

    ``ladder`` is the strictly increasing set of available bitrates (Mbps);
    ``video_segments`` is the number of segments in the user's video (0 for
    an idle helper that plays nothing).
    """

    id: int
    beta: float
    buffer_cap: float
    ladder: tuple[float, ...]
    theta: float = 1.0
    phi_qdeg: float = 0.0
    phi_rebuf: float = 0.0
    c_time: float = 0.0
    c_data: float = 0.0
    w_time: float = 0.0
    w_data: float = 0.0
    eps_time: float = 0.0
    eps_rate: float = 0.0
    video_segments: int = 0

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError(f"segment length must be positive, got {self.beta}")
        if self.buffer_cap < self.beta:
            raise ValueError(
                f"buffer must fit at least one segment: cap {self.buffer_cap} < beta {self.beta}"
            )
        if not self.ladder:
            raise ValueError("bitrate ladder must be non-empty")
        if any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ValueError(f"bitrate ladder must be strictly increasing: {self.ladder}")
        if self.theta <= 0:
            raise ValueError(f"quality factor must be positive, got {self.theta}")
        for name in ("phi_qdeg", "phi_rebuf", "c_time", "c_data",
                     "w_time", "w_data", "eps_time", "eps_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.video_segments < 0:
            raise ValueError("video_segments must be nonnegative")

    @property
    def is_video_user(self) -> bool:
        return self.video_segments > 0

    @property
    def top_rate(self) -> float:
        return self.ladder[-1]

    def to_dict(self) -> dict:
        return {
            "id": self.id, "beta": self.beta, "buffer_cap": self.buffer_cap,
            "ladder": list(self.ladder), "theta": self.theta,
            "phi_qdeg": self.phi_qdeg, "phi_rebuf": self.phi_rebuf,
            "c_time": self.c_time, "c_data": self.c_data,
            "w_time": self.w_time, "w_data": self.w_data,
            "eps_time": self.eps_time, "eps_rate": self.eps_rate,
            "video_segments": self.video_segments,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "UserProfile":
        kw = dict(d)
        kw["ladder"] = tuple(kw["ladder"])
        return cls(**kw)


@dataclass(frozen=True)
class SegmentRecord:
    """One segment transfer: who downloaded it, for whom, at which bitrate.

    ``delivered`` is False for aborted transfers and for segments dropped at
    arrival because the owner's buffer was full. ``completed`` is False only
    when the transfer itself was cut short (encounter loss or horizon), in
    which case ``mbit`` carries the actually transferred volume.
    """

    downloader: int
    owner: int
    level: int
    rate: float
    seg_index: int
    t_start: float
    t_end: float
    delivered: bool = True
    completed: bool = True
    mbit: float | None = None

    def __post_init__(self) -> None:
        if self.t_end < self.t_start:
            raise ValueError("segment must end no earlier than it starts")
        if self.mbit is not None and self.mbit < 0:
            raise ValueError("transferred volume must be nonnegative")

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class WelfareBreakdown:
    value: float
    qdeg_loss: float
    rebuf_loss: float
    cell_energy: float
    wifi_energy: float
    play_energy: float
    rebuffer_s: float = 0.0

    @property
    def payoff(self) -> float:
        return (self.value - self.qdeg_loss - self.rebuf_loss
                - self.cell_energy - self.wifi_energy - self.play_energy)

    def to_dict(self) -> dict:
        return {
            "value": self.value, "qdeg_loss": self.qdeg_loss,
            "rebuf_loss": self.rebuf_loss, "cell_energy": self.cell_energy,
            "wifi_energy": self.wifi_energy, "play_energy": self.play_energy,
            "rebuffer_s": self.rebuffer_s, "payoff": self.payoff,
        }


@dataclass(frozen=True)
class Violation:
    kind: str  # "timing" | "capacity" | "encounter" | "buffer" | "duplicate"
    user: int
    detail: str


def profile_map(profiles: Iterable[UserProfile]) -> dict[int, UserProfile]:
    out: dict[int, UserProfile] = {}
    for p in profiles:
        if p.id in out:
            raise ValueError(f"duplicate user id {p.id}")
        out[p.id] = p
    return out


def segment_volume(record: SegmentRecord, profiles: Mapping[int, UserProfile]) -> float:
    """Transferred data volume (Mbit): actual for truncated transfers."""
    if record.mbit is not None:
        return record.mbit
    return record.rate * profiles[record.owner].beta


def quality_value(profile: UserProfile, rate: float) -> float:
    """Per-second value of playing at ``rate`` Mbps: ln(1 + theta * rate)."""
    if rate < 0:
        raise ValueError(f"rate must be nonnegative, got {rate}")
    return math.log1p(profile.theta * rate)


def eval_value(profile: UserProfile, received: Sequence[SegmentRecord]) -> float:
    return sum(quality_value(profile, rec.rate) * profile.beta for rec in received)


def eval_qdeg_loss(profile: UserProfile, received: Sequence[SegmentRecord]) -> float:
    """Loss from bitrate downswitches between consecutively played segments."""
    loss = 0.0
    for prev, cur in zip(received, received[1:]):
        loss += profile.phi_qdeg * max(0.0, prev.rate - cur.rate)
    return loss


def update_buffer(prev_q: float, gap: float, beta: float) -> float:
    """Buffer after a reception: drain ``gap`` seconds of playback, add one segment."""
    if gap < 0:
        raise ValueError(f"playback gap must be nonnegative, got {gap}")
    if prev_q < 0:
        raise ValueError(f"buffer level must be nonnegative, got {prev_q}")
    if beta <= 0:
        raise ValueError(f"segment length must be positive, got {beta}")
    return max(0.0, prev_q - gap) + beta


def _reception_gaps(received: Sequence[SegmentRecord]) -> list[float]:
    # Playback is in order, so segment k becomes usable only once every
    # earlier segment has arrived: its effective reception time is the
    # prefix maximum of arrival times. Out-of-order arrivals (possible
    # under cooperation) therefore yield a zero gap.
    gaps = []
    avail = received[0].t_end
    for cur in received[1:]:
        t = max(avail, cur.t_end)
        gaps.append(t - avail)
        avail = t
    return gaps


def eval_rebuf_loss(
    profile: UserProfile, received: Sequence[SegmentRecord]
) -> tuple[float, float]:
    """Rebuffering loss and total stall seconds over a receiving sequence.

    Startup is not penalized: the buffer starts empty and charges begin with
    the second reception.
    """
    if not received:
        return 0.0, 0.0
    stall = 0.0
    q = update_buffer(0.0, 0.0, profile.beta)
    for gap in _reception_gaps(received):
        stall += max(0.0, gap - q)
        q = update_buffer(q, gap, profile.beta)
    return profile.phi_rebuf * stall, stall


def eval_cell_energy(
    profile: UserProfile,
    downloads: Sequence[SegmentRecord],
    profiles: Mapping[int, UserProfile],
) -> float:
    total = 0.0
    for rec in downloads:
        total += profile.c_time * rec.duration
        total += profile.c_data * segment_volume(rec, profiles)
    return total


def eval_wifi_energy(
    profile: UserProfile,
    downloads: Sequence[SegmentRecord],
    profiles: Mapping[int, UserProfile],
) -> float:
    # The time term is negligible (multiplied by zero); aborted transfers are
    # never exchanged over WiFi, so only completed cross-user segments count.
    total = 0.0
    for rec in downloads:
        if rec.owner != rec.downloader and rec.completed:
            total += profile.w_data * segment_volume(rec, profiles)
    return total


def eval_play_energy(profile: UserProfile, received: Sequence[SegmentRecord]) -> float:
    total = 0.0
    for rec in received:
        total += profile.eps_time * profile.beta
        total += profile.eps_rate * rec.rate * profile.beta
    return total


def receiving_sequences(
    profiles: Mapping[int, UserProfile],
    all_downloads: Mapping[int, Sequence[SegmentRecord]],
) -> dict[int, list[SegmentRecord]]:
    """Group delivered records by owner, sorted into playback order."""
    received: dict[int, list[SegmentRecord]] = {uid: [] for uid in profiles}
    for downloads in all_downloads.values():
        for rec in downloads:
            if rec.delivered:
                received[rec.owner].append(rec)
    for uid, recs in received.items():
        recs.sort(key=lambda r: r.seg_index)
        for a, b in zip(recs, recs[1:]):
            if a.seg_index == b.seg_index:
                raise IntegrityError(
                    f"user {uid} received segment {a.seg_index} more than once"
                )
    return received


def user_breakdown(
    profile: UserProfile,
    downloads: Sequence[SegmentRecord],
    received: Sequence[SegmentRecord],
    profiles: Mapping[int, UserProfile],
) -> WelfareBreakdown:
    rebuf_loss, stall = eval_rebuf_loss(profile, received)
    return WelfareBreakdown(
        value=eval_value(profile, received),
        qdeg_loss=eval_qdeg_loss(profile, received),
        rebuf_loss=rebuf_loss,
        cell_energy=eval_cell_energy(profile, downloads, profiles),
        wifi_energy=eval_wifi_energy(profile, downloads, profiles),
        play_energy=eval_play_energy(profile, received),
        rebuffer_s=stall,
    )


def eval_social_welfare(
    profiles: Mapping[int, UserProfile],
    all_downloads: Mapping[int, Sequence[SegmentRecord]],
) -> tuple[float, dict[int, WelfareBreakdown]]:
    """Aggregate payoff of all users plus the per-user breakdowns."""
    received = receiving_sequences(profiles, all_downloads)
    breakdowns = {
        uid: user_breakdown(
            profiles[uid], all_downloads.get(uid, ()), received[uid], profiles
        )
        for uid in sorted(profiles)
    }
    welfare = sum(b.payoff for b in breakdowns.values())
    return welfare, breakdowns


def validate_sequences(
    profiles: Mapping[int, UserProfile],
    capacity,
    encounters,
    all_downloads: Mapping[int, Sequence[SegmentRecord]],
    tol: float = FEASIBILITY_TOL,
) -> list[Violation]:
    """Check a joint schedule against the feasibility constraints.

    Per downloader: non-overlapping ordered transfers, cellular capacity,
    encounter coverage for cross-user transfers. Per owner: the buffer
    trajectory stays within [0, cap] at every reception. Violations are
    returned as data; an empty list means the schedule is feasible.
    """
    violations: list[Violation] = []
    for uid, downloads in all_downloads.items():
        ordered = sorted(downloads, key=lambda r: r.t_start)
        for a, b in zip(ordered, ordered[1:]):
            if a.t_end > b.t_start + tol:
                violations.append(Violation(
                    "timing", uid,
                    f"transfer ending at {a.t_end} overlaps next start {b.t_start}",
                ))
        for rec in ordered:
            volume = rec.rate * profiles[rec.owner].beta if rec.completed else segment_volume(rec, profiles)
            available = capacity.integrate(uid, rec.t_start, rec.t_end)
            if volume > available + tol:
                violations.append(Violation(
                    "capacity", uid,
                    f"segment needs {volume} Mbit but only {available} Mbit available "
                    f"in [{rec.t_start}, {rec.t_end}]",
                ))
            if rec.owner != uid and not encounters.holds(uid, rec.owner, rec.t_start, rec.t_end):
                violations.append(Violation(
                    "encounter", uid,
                    f"users {uid} and {rec.owner} not encountered throughout "
                    f"[{rec.t_start}, {rec.t_end}]",
                ))
    try:
        received = receiving_sequences(profiles, all_downloads)
    except IntegrityError as exc:
        return violations + [Violation("duplicate", -1, str(exc))]
    for uid, recs in received.items():
        profile = profiles[uid]
        if not recs:
            continue
        q = update_buffer(0.0, 0.0, profile.beta)
        if q > profile.buffer_cap + tol:
            violations.append(Violation(
                "buffer", uid, f"buffer {q} exceeds cap {profile.buffer_cap} at first reception"
            ))
        for gap in _reception_gaps(recs):
            q = update_buffer(q, gap, profile.beta)
            if q > profile.buffer_cap + tol:
                violations.append(Violation(
                    "buffer", uid, f"buffer {q} exceeds cap {profile.buffer_cap}"
                ))
    return violations

"""Real-time download decision policies.

Three schedulers over an identical decision interface: a drift-plus-penalty
policy that balances buffer equalization against immediate payoff, and two
baselines (buffer-mapped bitrate and capacity-prediction bitrate) paired
with a threshold owner-selection rule for multi-user cooperation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

from .model import UserProfile, quality_value

DEFAULT_EPOCH = 1.0  # re-poll interval when no download is possible (s)


@dataclass(frozen=True)
class Download:
    owner: int
    level: int
    seg_index: int


@dataclass(frozen=True)
class Wait:
    duration: float


Decision = Download | Wait


@dataclass(frozen=True)
class SchedulerState:
    """Snapshot visible to one deciding downloader at one instant.

    ``buffers`` and ``last_rates`` cover every user (the periodic broadcast);
    ``next_seg`` maps each user to its next missing playback index, or None
    once the video is complete. ``reserved`` holds (owner, seg_index) pairs
    already committed to an in-flight transfer.
    """

    user: int
    now: float
    capacity: float  # current cellular rate of the decider, Mbps
    neighbors: tuple[int, ...]  # encountered users, including the decider
    buffers: Mapping[int, float]
    last_rates: Mapping[int, float | None]
    next_seg: Mapping[int, int | None]
    reserved: frozenset[tuple[int, int]] = frozenset()
    throughput_samples: tuple[float, ...] = ()


def estimate_download_time(
    state: SchedulerState, profiles: Mapping[int, UserProfile], u: int, z: int
) -> float | None:
    """Estimated transfer time of owner u's next segment at level z.

    Returns None when the decider currently has no capacity.
    """
    if state.capacity <= 0:
        return None
    prof = profiles[u]
    return prof.ladder[z] * prof.beta / state.capacity


def decision_payoff(
    state: SchedulerState, profiles: Mapping[int, UserProfile], u: int, z: int
) -> float:
    """Immediate welfare estimate of downloading owner u's segment at level z.

    Receiver utility (value minus projected degradation and stall losses)
    plus projected stall losses of the other playing video users, minus the
    decider's download energy and the receiver's playback energy.
    """
    gamma = estimate_download_time(state, profiles, u, z)
    if gamma is None:
        raise ValueError("cannot evaluate a download with zero capacity")
    owner = profiles[u]
    dl = profiles[state.user]
    rate = owner.ladder[z]
    vol = rate * owner.beta
    util = quality_value(owner, rate) * owner.beta
    last = state.last_rates.get(u)
    if last is not None:
        util -= owner.phi_qdeg * max(0.0, last - rate)
    util -= owner.phi_rebuf * max(0.0, gamma - state.buffers.get(u, 0.0))
    for m in state.neighbors:
        if m == u:
            continue
        prof_m = profiles[m]
        if not prof_m.is_video_user or state.last_rates.get(m) is None:
            continue  # playback not started: startup waiting is not a stall
        util -= prof_m.phi_rebuf * max(0.0, gamma - state.buffers.get(m, 0.0))
    cost = dl.c_time * gamma + dl.c_data * vol
    if u != state.user:
        cost += dl.w_data * vol
    cost += owner.eps_time * owner.beta + owner.eps_rate * vol
    return util - cost


def lyapunov_drift(
    state: SchedulerState, profiles: Mapping[int, UserProfile], u: int, z: int
) -> float:
    """Change in the squared buffer-deficit potential over the transfer.

    Potential J = half the sum over video users of (cap - level)^2; the
    receiver's buffer is projected as drained-then-refilled (clamped at its
    cap), every other video user's as drained only.
    """
    gamma = estimate_download_time(state, profiles, u, z)
    if gamma is None:
        raise ValueError("cannot evaluate a download with zero capacity")
    drift = 0.0
    for m, prof in profiles.items():
        if not prof.is_video_user or m not in state.buffers:
            continue
        q = state.buffers[m]
        if m == u:
            q_next = min(prof.buffer_cap, max(0.0, q - gamma) + prof.beta)
        else:
            q_next = max(0.0, q - gamma)
        drift += 0.5 * ((prof.buffer_cap - q_next) ** 2 - (prof.buffer_cap - q) ** 2)
    return drift


def _split_candidates(
    state: SchedulerState, profiles: Mapping[int, UserProfile]
) -> tuple[list[int], list[int]]:
    """Owners the decider could serve now, and those blocked only by a
    full buffer (relevant for the waiting-timer branch)."""
    ready: list[int] = []
    blocked: list[int] = []
    for u in sorted(set(state.neighbors)):
        prof = profiles.get(u)
        if prof is None or not prof.is_video_user:
            continue
        seg = state.next_seg.get(u)
        if seg is None or (u, seg) in state.reserved:
            continue
        if state.buffers.get(u, 0.0) + prof.beta <= prof.buffer_cap:
            ready.append(u)
        else:
            blocked.append(u)
    return ready, blocked


def _wait_for_headroom(
    state: SchedulerState, profiles: Mapping[int, UserProfile], blocked: list[int]
) -> Wait:
    t_w = min(
        state.buffers[u] + profiles[u].beta - profiles[u].buffer_cap for u in blocked
    )
    return Wait(max(t_w, 1e-6))


def lyapunov_decide(
    state: SchedulerState,
    profiles: Mapping[int, UserProfile],
    lam: float,
    default_epoch: float = DEFAULT_EPOCH,
) -> Decision:
    """Pick the (owner, level) minimizing drift minus lam * payoff.

    Waits for buffer headroom when every reachable owner is over-full,
    otherwise re-polls after a fixed epoch when no download is possible.
    Ties break toward the lowest owner id, then the lowest level.
    """
    if state.capacity <= 0:
        return Wait(default_epoch)
    ready, blocked = _split_candidates(state, profiles)
    if not ready:
        if blocked:
            return _wait_for_headroom(state, profiles, blocked)
        return Wait(default_epoch)
    best: tuple[float, int, int] | None = None
    for u in ready:
        for z in range(len(profiles[u].ladder)):
            phi = lyapunov_drift(state, profiles, u, z) - lam * decision_payoff(
                state, profiles, u, z
            )
            key = (phi, u, z)
            if best is None or key < best:
                best = key
    _, u, z = best
    return Download(owner=u, level=z, seg_index=state.next_seg[u])


def predict_capacity(
    samples: tuple[float, ...] | list[float], fallback: float, window: int = 5
) -> float:
    """Harmonic mean of the last ``window`` throughput samples (Mbps)."""
    if not samples:
        return fallback
    recent = list(samples[-window:])
    if min(recent) <= 0:
        return 0.0
    return len(recent) / sum(1.0 / s for s in recent)


def select_owner(
    state: SchedulerState,
    profiles: Mapping[int, UserProfile],
    delta_th: float = 0.5,
    gap_th: float = 10.0,
) -> int:
    """Threshold rule deciding whose segment to download next.

    A video-user decider helps the minimum-buffer neighbor only when its own
    buffer is at least ``delta_th`` of its cap and exceeds the neighbor's by
    ``gap_th`` seconds; an idle decider (or one whose video is finished)
    always helps the minimum-buffer neighbor. Falls back to self.
    """
    n = state.user
    ready, _ = _split_candidates(state, profiles)
    others = [u for u in ready if u != n]
    if not others:
        return n
    u_min = min(others, key=lambda u: (state.buffers.get(u, 0.0), u))
    prof_n = profiles[n]
    self_active = prof_n.is_video_user and state.next_seg.get(n) is not None
    if not self_active:
        return u_min
    q_n = state.buffers.get(n, 0.0)
    if (
        q_n >= delta_th * prof_n.buffer_cap
        and q_n - state.buffers.get(u_min, 0.0) >= gap_th
    ):
        return u_min
    return n


def _baseline_decide(
    state: SchedulerState,
    profiles: Mapping[int, UserProfile],
    pick_level: Callable[[int], int],
    delta_th: float,
    gap_th: float,
    default_epoch: float,
) -> Decision:
    if state.capacity <= 0:
        return Wait(default_epoch)
    ready, blocked = _split_candidates(state, profiles)
    if not ready:
        if blocked:
            return _wait_for_headroom(state, profiles, blocked)
        return Wait(default_epoch)
    u = select_owner(state, profiles, delta_th, gap_th)
    if u not in ready:
        u = ready[0]
    return Download(owner=u, level=pick_level(u), seg_index=state.next_seg[u])


def buffer_based_decide(
    state: SchedulerState,
    profiles: Mapping[int, UserProfile],
    reservoir_frac: float = 0.25,
    delta_th: float = 0.5,
    gap_th: float = 10.0,
    default_epoch: float = DEFAULT_EPOCH,
) -> Decision:
    """Linear buffer-to-bitrate mapping on the owner's buffer level."""

    def pick_level(u: int) -> int:
        prof = profiles[u]
        reservoir = reservoir_frac * prof.buffer_cap
        span = prof.buffer_cap - reservoir
        top = len(prof.ladder) - 1
        if top == 0 or span <= 0:
            return top
        frac = (state.buffers.get(u, 0.0) - reservoir) / span
        frac = min(1.0, max(0.0, frac))
        return min(top, int(frac * top))

    return _baseline_decide(state, profiles, pick_level, delta_th, gap_th, default_epoch)


def prediction_based_decide(
    state: SchedulerState,
    profiles: Mapping[int, UserProfile],
    window: int = 5,
    delta_th: float = 0.5,
    gap_th: float = 10.0,
    default_epoch: float = DEFAULT_EPOCH,
) -> Decision:
    """Highest bitrate supported by the predicted channel capacity."""
    predicted = predict_capacity(state.throughput_samples, state.capacity, window)

    def pick_level(u: int) -> int:
        ladder = profiles[u].ladder
        level = 0
        for z, rate in enumerate(ladder):
            if rate <= predicted:
                level = z
        return level

    return _baseline_decide(state, profiles, pick_level, delta_th, gap_th, default_epoch)


def make_scheduler(name: str, **params) -> Callable[[SchedulerState, Mapping[int, UserProfile]], Decision]:
    """Scheduler factory: "lyapunov" | "buffer" | "prediction"."""
    if name == "lyapunov":
        lam = params.pop("lam", 100.0)
        epoch = params.pop("default_epoch", DEFAULT_EPOCH)
        if params:
            raise ValueError(f"unknown lyapunov params: {sorted(params)}")
        return lambda state, profiles: lyapunov_decide(state, profiles, lam, epoch)
    if name == "buffer":
        kwargs = {
            "reservoir_frac": params.pop("reservoir_frac", 0.25),
            "delta_th": params.pop("delta_th", 0.5),
            "gap_th": params.pop("gap_th", 10.0),
            "default_epoch": params.pop("default_epoch", DEFAULT_EPOCH),
        }
        if params:
            raise ValueError(f"unknown buffer params: {sorted(params)}")
        return lambda state, profiles: buffer_based_decide(state, profiles, **kwargs)
    if name == "prediction":
        kwargs = {
            "window": params.pop("window", 5),
            "delta_th": params.pop("delta_th", 0.5),
            "gap_th": params.pop("gap_th", 10.0),
            "default_epoch": params.pop("default_epoch", DEFAULT_EPOCH),
        }
        if params:
            raise ValueError(f"unknown prediction params: {sorted(params)}")
        return lambda state, profiles: prediction_based_decide(state, profiles, **kwargs)
    raise ValueError(f"unknown scheduler {name!r}")

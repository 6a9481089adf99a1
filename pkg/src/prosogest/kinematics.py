"""Trajectory differentiation into the 7-D gesture feature stream.

Positions are smoothed with a 5-frame moving average before central
differencing, since raw tracking jitter would otherwise dominate the
accelerations.  The default per-frame feature layout is hand velocity
(2), hand acceleration (2), head velocity (2) and hand speed (1); the
layout is selectable because the exact seven components are a modelling
choice.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d

from .errors import EmptyInterval, TooFewFrames
from .prominence import SIGMA_VELOCITY, max_gradient
from .signal_io import TrajectoryTrack

FEATURE_NAMES = (
    "hand_vx",
    "hand_vy",
    "hand_ax",
    "hand_ay",
    "head_vx",
    "head_vy",
    "hand_speed",
)
SMOOTH_FRAMES = 5


@dataclass(frozen=True)
class KinematicFeatures:
    """Per-frame gesture features; ``values`` has one column per layout entry."""

    times: np.ndarray
    values: np.ndarray
    layout: tuple[str, ...] = FEATURE_NAMES

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.layout.index(name)]

    @property
    def hand_speed(self) -> np.ndarray:
        return self.column("hand_speed")

    @property
    def dt(self) -> float:
        return float(np.median(np.diff(self.times)))

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class VelocityProfile:
    """Hand speed over an interval with its peak and steepest gradient.

    ``v_dot_max`` is a (magnitude, time) pair from the
    derivative-of-Gaussian detector with sigma = 1.0.
    """

    times: np.ndarray
    speed: np.ndarray
    v_peak_time: float
    v_dot_max: tuple[float, float]


def differentiate(track: TrajectoryTrack, layout=FEATURE_NAMES,
                  smooth_frames: int = SMOOTH_FRAMES) -> KinematicFeatures:
    """Velocities and accelerations from a trajectory track.

    Central differences on 5-frame-smoothed positions; endpoints use
    one-sided (second-order) differences.  Requires >= 5 frames.
    """
    if len(track) < 5:
        raise TooFewFrames(f"need >= 5 frames, got {len(track)}")
    t = track.times
    hand = uniform_filter1d(track.hand, size=smooth_frames, axis=0, mode="nearest")
    head = uniform_filter1d(track.head, size=smooth_frames, axis=0, mode="nearest")

    hand_v = np.gradient(hand, t, axis=0, edge_order=2)
    hand_a = np.gradient(hand_v, t, axis=0, edge_order=2)
    head_v = np.gradient(head, t, axis=0, edge_order=2)

    channels = {
        "hand_vx": hand_v[:, 0],
        "hand_vy": hand_v[:, 1],
        "hand_ax": hand_a[:, 0],
        "hand_ay": hand_a[:, 1],
        "head_vx": head_v[:, 0],
        "head_vy": head_v[:, 1],
        "hand_speed": np.hypot(hand_v[:, 0], hand_v[:, 1]),
    }
    try:
        values = np.column_stack([channels[name] for name in layout])
    except KeyError as exc:
        raise ValueError(f"unknown feature channel {exc.args[0]!r}") from exc
    return KinematicFeatures(times=t, values=values, layout=tuple(layout))


def velocity_profile(features: KinematicFeatures, interval,
                     sigma: float = SIGMA_VELOCITY) -> VelocityProfile:
    """Hand-speed profile restricted to ``interval`` = (start, end) seconds.

    The peak time takes the earliest maximum; the steepest-gradient event
    comes from ``max_gradient`` on the restricted series.
    """
    start, end = interval
    mask = (features.times >= start - 1e-12) & (features.times <= end + 1e-12)
    if not mask.any():
        raise EmptyInterval(f"no frames in [{start}, {end}]")
    t = features.times[mask]
    speed = features.hand_speed[mask]
    v_peak_time = float(t[int(np.argmax(speed))])
    if len(speed) >= 3:
        v_dot = max_gradient(speed, t, sigma)
    else:
        v_dot = (0.0, float(t[0]))
    return VelocityProfile(times=t, speed=speed, v_peak_time=v_peak_time, v_dot_max=v_dot)


def dump_kinematics_csv(features: KinematicFeatures, path) -> None:
    """Write features as CSV ``t,vx,vy,ax,ay,hvx,hvy,speed``."""
    cols = [features.column(name) for name in FEATURE_NAMES]
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write("t,vx,vy,ax,ay,hvx,hvy,speed\n")
        for i, t in enumerate(features.times):
            row = ",".join(f"{c[i]:.6f}" for c in cols)
            fh.write(f"{t:.6f},{row}\n")
    os.replace(tmp, path)

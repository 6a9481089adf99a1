"""Seeded synthetic multimodal recordings with ground-truth phoneme labels.

Stands in for unavailable narration footage: each recording is a chain of
gesture units (preparation, stroke, optional hold, retraction) rendered
as a hand/head trajectory, plus synthesized vowel-like audio whose pitch
accents are placed relative to the gesture events with class-dependent
timing.  Contour and circle strokes put the accent peak near the hand
velocity peak; point strokes are acoustically quiet during the stroke,
with the prominent segment starting around the onset of the post-stroke
hold.  Non-stroke phonemes receive neutral accents at a configurable
rate, and short non-prominent filler segments supply the bulk of the
accent distribution.

Everything is reproducible: the recipe seed fully determines the corpus.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidRecipe
from .gesture_hmm import PhonemeClass, SegmentInterval
from .signal_io import (
    AudioBuffer,
    TrajectoryTrack,
    write_audio,
    write_json,
    write_phoneme_records,
    write_trajectory,
)

GESTURE_BOX = (0.20, 0.80, 0.25, 0.60)   # x_lo, x_hi, y_lo, y_hi
REST_POSITION = (0.50, 0.85)
HEAD_POSITION = (0.50, 0.18)
MIN_SEGMENT_S = 0.12
FORMANTS_HZ = (500.0, 1500.0)


def _default_durations():
    return {
        "Preparation": (0.40, 0.72),
        "PointStroke": (0.20, 0.32),
        "ContourStroke": (0.72, 1.20),
        "CircleStroke": (0.80, 1.20),
        "Hold": (0.40, 0.80),
        "Retraction": (0.40, 0.72),
    }


def _default_kinematics():
    return {
        "Preparation": {"amplitude": (0.16, 0.30), "curvature": 0.14},
        "PointStroke": {"amplitude": (0.06, 0.13), "curvature": 0.05},
        "ContourStroke": {"amplitude": (0.16, 0.34), "curvature": 0.30},
        "CircleStroke": {"amplitude": (0.07, 0.13), "curvature": 1.0},
        "Hold": {"amplitude": (0.0, 0.0), "curvature": 0.0},
        "Retraction": {"amplitude": (0.16, 0.30), "curvature": 0.14},
    }


def _default_alignment():
    return {
        "ContourStroke": {"event": "velocity_peak", "offset_mean": 0.0, "offset_std": 0.05},
        "CircleStroke": {"event": "velocity_peak", "offset_mean": 0.0, "offset_std": 0.12},
        "PointStroke": {"event": "stroke_end", "offset_mean": -0.04, "offset_std": 0.08},
    }


def _default_stroke_weights():
    return {"PointStroke": 1.0, "ContourStroke": 1.0, "CircleStroke": 1.0}


@dataclass
class SyntheticRecipe:
    """Generative parameters for one corpus.

    Alignment rules and rates beyond the two qualitative behaviours they
    encode (contour peaks on pitch peaks, silent points with accents at
    the post-stroke hold onset) are assumptions; the manifest records the
    full recipe so they stay visible.
    """

    seed: int = 20260810
    n_recordings: int = 110
    n_gesture_units: int = 3
    frame_rate: float = 25.0
    sample_rate: int = 16000
    speaker_id: str = "synthetic"
    phoneme_durations: dict = field(default_factory=_default_durations)
    kinematics: dict = field(default_factory=_default_kinematics)
    alignment: dict = field(default_factory=_default_alignment)
    stroke_weights: dict = field(default_factory=_default_stroke_weights)
    prominence_rate: float = 0.35
    hold_probability: float = 0.5
    stroke_chain_probability: float = 0.15
    base_f0_hz: float = 115.0
    accent_rise_hz: tuple = (55.0, 85.0)
    filler_rise_hz: tuple = (2.0, 10.0)
    accent_pause_s: tuple = (0.28, 0.50)
    filler_gap_s: tuple = (0.08, 0.20)
    filler_duration_s: tuple = (0.15, 0.35)
    tracking_noise: float = 0.004

    def validate(self) -> None:
        if self.n_recordings < 0 or self.n_gesture_units < 0:
            raise InvalidRecipe("counts must be non-negative")
        if self.frame_rate <= 0 or self.sample_rate < 8000:
            raise InvalidRecipe("invalid frame or sample rate")
        for name, (lo, hi) in self.phoneme_durations.items():
            if lo <= 0 or hi < lo:
                raise InvalidRecipe(f"bad duration range for {name}")
        for rule in self.alignment.values():
            if rule["offset_std"] < 0:
                raise InvalidRecipe("alignment offset std must be >= 0")
        if not 0 <= self.prominence_rate <= 1:
            raise InvalidRecipe("prominence_rate must lie in [0, 1]")
        weights = list(self.stroke_weights.values())
        if any(w < 0 for w in weights) or sum(weights) <= 0:
            raise InvalidRecipe("stroke weights must be non-negative with a positive sum")
        if self.tracking_noise < 0:
            raise InvalidRecipe("tracking_noise must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticRecipe":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise InvalidRecipe(f"unknown recipe fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class _StrokeEvent:
    label: str
    start: float
    end: float
    v_peak_time: float


def _min_jerk(tau: np.ndarray) -> np.ndarray:
    return tau**3 * (10.0 - 15.0 * tau + 6.0 * tau**2)


def _phoneme_plan(recipe: SyntheticRecipe, rng) -> list[tuple[str, int]]:
    """Phoneme sequence for one recording as (class name, frame count)."""
    fps = recipe.frame_rate
    names = list(recipe.stroke_weights)
    weights = np.array([recipe.stroke_weights[n] for n in names], dtype=float)
    weights = weights / weights.sum()

    def frames_for(name: str) -> int:
        lo, hi = recipe.phoneme_durations[name]
        return max(2, int(round(rng.uniform(lo, hi) * fps)))

    plan: list[tuple[str, int]] = []
    for _ in range(recipe.n_gesture_units):
        plan.append(("Preparation", frames_for("Preparation")))
        stroke = str(rng.choice(names, p=weights))
        plan.append((stroke, frames_for(stroke)))
        if rng.random() < recipe.stroke_chain_probability and len(names) > 1:
            others = [n for n in names if n != stroke and recipe.stroke_weights[n] > 0]
            if others:
                stroke = str(rng.choice(others))
                plan.append((stroke, frames_for(stroke)))
        wants_hold = stroke == "PointStroke" or rng.random() < recipe.hold_probability
        if wants_hold:
            plan.append(("Hold", frames_for("Hold")))
        plan.append(("Retraction", frames_for("Retraction")))
    return plan


def _unit_vector(angle: float) -> np.ndarray:
    return np.array([np.cos(angle), np.sin(angle)])


def _trajectory(recipe: SyntheticRecipe, plan, rng):
    """Hand/head positions on the frame grid plus per-stroke events."""
    fps = recipe.frame_rate
    dt = 1.0 / fps
    total_frames = sum(k for _, k in plan)
    n = total_frames + 1
    times = np.arange(n) * dt

    hand = np.zeros((n, 2))
    pos = np.array(REST_POSITION)
    hand[0] = pos
    events: list[_StrokeEvent] = []
    x_lo, x_hi, y_lo, y_hi = GESTURE_BOX

    frame = 0
    for name, k in plan:
        tau = np.arange(1, k + 1) / k
        kin = recipe.kinematics[name]
        if name == "Preparation":
            target = np.array([rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi)])
            path = _swept_path(pos, target - pos, kin["curvature"], tau, rng)
        elif name in ("PointStroke", "ContourStroke"):
            amp = rng.uniform(*kin["amplitude"])
            direction = _unit_vector(rng.uniform(0, 2 * np.pi))
            path = _swept_path(pos, amp * direction, kin["curvature"], tau, rng)
        elif name == "CircleStroke":
            radius = rng.uniform(*kin["amplitude"])
            psi = rng.uniform(0, 2 * np.pi)
            turn = 2 * np.pi * (1 if rng.random() < 0.5 else -1)
            center = pos + radius * _unit_vector(psi)
            angles = psi + np.pi + turn * _min_jerk(tau)
            path = center + radius * np.column_stack([np.cos(angles), np.sin(angles)])
        elif name == "Hold":
            path = np.tile(pos, (k, 1))
        else:  # Retraction
            target = np.array(REST_POSITION) + rng.normal(0, 0.012, size=2)
            path = _swept_path(pos, target - pos, kin["curvature"], tau, rng)
        path = np.clip(path, 0.02, 0.98)
        hand[frame + 1 : frame + k + 1] = path
        if name.endswith("Stroke"):
            events.append(
                _StrokeEvent(
                    label=name,
                    start=frame * dt,
                    end=(frame + k) * dt,
                    v_peak_time=(frame + 0.5 * k) * dt,
                )
            )
        pos = path[-1]
        frame += k

    head = np.tile(np.array(HEAD_POSITION), (n, 1))
    phase = rng.uniform(0, 2 * np.pi, size=2)
    head[:, 0] += 0.008 * np.sin(2 * np.pi * times / 7.3 + phase[0])
    head[:, 1] += 0.006 * np.sin(2 * np.pi * times / 9.1 + phase[1])

    hand = np.clip(hand + rng.normal(0, recipe.tracking_noise, size=hand.shape), 0.0, 1.0)
    head = np.clip(head + rng.normal(0, recipe.tracking_noise, size=head.shape), 0.0, 1.0)
    track = TrajectoryTrack(times=times, hand=hand, head=head, frame_rate=fps)
    return track, events


def _swept_path(pos, offset, curvature, tau, rng):
    """Straight min-jerk path with a lateral sin^2 bow.

    The bow derivative vanishes at both endpoints, so concatenated
    phonemes keep continuous, zero-at-boundary velocities.
    """
    offset = np.asarray(offset, dtype=np.float64)
    normal = np.array([-offset[1], offset[0]])
    norm = np.linalg.norm(normal)
    if norm > 0:
        normal = normal / norm
    bow = curvature * np.linalg.norm(offset) * (1 if rng.random() < 0.5 else -1)
    main = pos + offset * _min_jerk(tau)[:, None]
    return main + normal[None, :] * (bow * np.sin(np.pi * tau) ** 2)[:, None]


@dataclass
class _VoicedSpec:
    start: float
    end: float
    peak: float
    rise: float
    prominent: bool
    block_start: float  # start of the reserved (silent) pause before the segment


def _accent_candidates(recipe, plan_intervals, events, rng):
    """Accent segments implied by the alignment rules, in draw order."""
    cands = []
    for ev in events:
        rule = recipe.alignment.get(ev.label)
        if rule is None:
            continue
        rise = rng.uniform(*recipe.accent_rise_hz)
        offset = rule["offset_mean"] + rng.normal(0, rule["offset_std"])
        if rule["event"] == "velocity_peak":
            peak = ev.v_peak_time + offset
            lead = rng.uniform(0.20, 0.32)
            tail = rng.uniform(0.20, 0.32)
            cands.append((peak - lead, peak + tail, peak, rise))
        else:  # stroke_end
            start = ev.end + offset
            dur = rng.uniform(0.30, 0.45)
            peak = start + rng.uniform(0.30, 0.50) * dur
            cands.append((start, start + dur, peak, rise))
    non_stroke = []
    for start, end, label in plan_intervals:
        if label.endswith("Stroke"):
            continue
        if rng.random() < recipe.prominence_rate:
            dur = rng.uniform(0.25, 0.40)
            if end - start <= dur + 0.05:
                continue
            s = rng.uniform(start, end - dur)
            peak = s + rng.uniform(0.2, 0.8) * dur
            rise = rng.uniform(*recipe.accent_rise_hz)
            non_stroke.append((s, s + dur, peak, rise))
    return cands, non_stroke


def _resolve_accents(recipe, stroke_cands, other_cands, total_s, rng):
    """Sort, pause-reserve and de-conflict accent segments."""
    accepted: list[_VoicedSpec] = []
    for start, end, peak, rise in sorted(stroke_cands):
        pause = rng.uniform(*recipe.accent_pause_s)
        start = max(start, 0.05)
        end = min(end, total_s - 0.05)
        if end - start < MIN_SEGMENT_S:
            continue
        if accepted and start - pause < accepted[-1].end + 0.05:
            prev = accepted[-1]
            new_prev_end = start - pause
            if new_prev_end >= prev.start + MIN_SEGMENT_S and prev.peak < new_prev_end - 0.02:
                accepted[-1] = dataclasses.replace(prev, end=new_prev_end)
            else:
                continue
        peak = float(np.clip(peak, start + 0.03, end - 0.03))
        accepted.append(_VoicedSpec(start, end, peak, rise, True, start - pause))
    for start, end, peak, rise in sorted(other_cands):
        pause = rng.uniform(*recipe.accent_pause_s)
        start = max(start, 0.05)
        end = min(end, total_s - 0.05)
        if end - start < MIN_SEGMENT_S:
            continue
        block = start - pause
        clear = all(
            end <= a.block_start - 0.05 or block >= a.end + 0.05 for a in accepted
        )
        if clear:
            peak = float(np.clip(peak, start + 0.03, end - 0.03))
            accepted.append(_VoicedSpec(start, end, peak, rise, True, block))
    accepted.sort(key=lambda a: a.start)
    return accepted


def _fill_fillers(recipe, accents, total_s, rng):
    """Non-prominent filler segments in the gaps left by accent reservations."""
    blocks = [(a.block_start, a.end) for a in accents]
    blocks.sort()
    free = []
    cursor = 0.05
    for b0, b1 in blocks:
        if b0 - cursor > 0:
            free.append((cursor, b0))
        cursor = max(cursor, b1)
    if total_s - 0.05 > cursor:
        free.append((cursor, total_s - 0.05))

    fillers = []
    for r0, r1 in free:
        cursor = r0
        while True:
            gap = rng.uniform(*recipe.filler_gap_s)
            dur = rng.uniform(*recipe.filler_duration_s)
            start = cursor + gap
            end = start + dur
            if end > r1 - 0.02:
                break
            rise = rng.uniform(*recipe.filler_rise_hz)
            peak = start + rng.uniform(0.3, 0.7) * dur
            fillers.append(_VoicedSpec(start, end, peak, rise, False, cursor))
            cursor = end
    return fillers


def _render_audio(recipe, specs, total_s, rng) -> AudioBuffer:
    sr = recipe.sample_rate
    n_total = int(round(total_s * sr))
    out = np.zeros(n_total)
    for spec in sorted(specs, key=lambda s: s.start):
        i0 = int(round(spec.start * sr))
        i1 = min(int(round(spec.end * sr)), n_total)
        n = i1 - i0
        if n < int(0.05 * sr):
            continue
        t = spec.start + np.arange(n) / sr
        base = recipe.base_f0_hz + rng.uniform(-4.0, 4.0)
        span_up = max(spec.peak - spec.start, 1e-3)
        span_dn = max(spec.end - spec.peak, 1e-3)
        bump = np.where(
            t <= spec.peak,
            np.sin(0.5 * np.pi * (t - spec.start) / span_up) ** 2,
            np.sin(0.5 * np.pi * np.clip((spec.end - t) / span_dn, 0.0, 1.0)) ** 2,
        )
        drift = -3.0 * (t - spec.start) / (spec.end - spec.start)
        f0 = base + spec.rise * bump + drift
        phase = 2.0 * np.pi * np.cumsum(f0) / sr
        saw = 2.0 * ((phase / (2.0 * np.pi)) % 1.0) - 1.0
        voice = saw
        for fc in FORMANTS_HZ:
            r = 0.96
            w = 2.0 * np.pi * fc / sr
            voice = lfilter([1.0 - r], [1.0, -2.0 * r * np.cos(w), r * r], voice)
        peak_amp = np.max(np.abs(voice))
        if peak_amp > 0:
            voice = voice / peak_amp
        amp = 0.30 if spec.prominent else 0.20
        edge = max(4, int(0.025 * sr))
        env = np.ones(n)
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(edge) / edge)
        env[:edge] = ramp
        env[-edge:] = ramp[::-1]
        out[i0:i1] = amp * voice * env
    return AudioBuffer(samples=np.clip(out, -1.0, 1.0), sample_rate=sr)


def generate(recipe: SyntheticRecipe):
    """Generate one recording: (AudioBuffer, TrajectoryTrack, reference).

    The reference segmentation tiles the recording span exactly; rerunning
    with the same recipe reproduces all three outputs bit-identically.
    """
    recipe.validate()
    rng = np.random.default_rng(recipe.seed)
    plan = _phoneme_plan(recipe, rng)
    if not plan:
        audio = AudioBuffer(
            samples=np.zeros(int(0.2 * recipe.sample_rate)),
            sample_rate=recipe.sample_rate,
        )
        track = TrajectoryTrack(
            times=np.zeros(0),
            hand=np.zeros((0, 2)),
            head=np.zeros((0, 2)),
            frame_rate=recipe.frame_rate,
        )
        return audio, track, []

    track, events = _trajectory(recipe, plan, rng)
    dt = 1.0 / recipe.frame_rate
    reference = []
    frame = 0
    plan_intervals = []
    for name, k in plan:
        start, end = frame * dt, (frame + k) * dt
        plan_intervals.append((start, end, name))
        reference.append(
            SegmentInterval(
                start=start, end=end, label=PhonemeClass.from_name(name),
                log_likelihood=0.0,
            )
        )
        frame += k
    total_s = frame * dt

    stroke_cands, other_cands = _accent_candidates(recipe, plan_intervals, events, rng)
    accents = _resolve_accents(recipe, stroke_cands, other_cands, total_s, rng)
    fillers = _fill_fillers(recipe, accents, total_s, rng)
    audio = _render_audio(recipe, accents + fillers, total_s, rng)
    return audio, track, reference


def split(recordings, train_fraction: float, seed: int = 0):
    """Deterministic seeded split at the recording level.

    ``n_train = round_half_up(n * train_fraction)``; with a single
    recording the weakly larger side receives it.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    recordings = list(recordings)
    n = len(recordings)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(n * train_fraction + 0.5)
    train_idx = sorted(order[:n_train])
    test_idx = sorted(order[n_train:])
    return [recordings[i] for i in train_idx], [recordings[i] for i in test_idx]


def reference_to_records(reference) -> list[dict]:
    return [
        {
            "start_s": seg.start,
            "end_s": seg.end,
            "label": seg.label.value,
            "log_likelihood": None,
            "prior": None,
            "posterior": None,
        }
        for seg in reference
    ]


def records_to_reference(records) -> list[SegmentInterval]:
    return [
        SegmentInterval(
            start=float(r["start_s"]),
            end=float(r["end_s"]),
            label=PhonemeClass.from_name(r["label"]),
            log_likelihood=float(r["log_likelihood"] or 0.0),
        )
        for r in records
    ]


def child_seed(master_seed: int, index: int) -> int:
    """Per-recording seed derived from the corpus master seed."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    return int(ss.generate_state(1)[0])


def write_corpus(recipe: SyntheticRecipe, out_dir) -> dict:
    """Render a corpus to disk and return its manifest.

    Writes ``rec_###.wav``, ``rec_###.csv`` and ``rec_###.ref.jsonl`` per
    recording plus ``manifest.json`` with the recipe and file paths.
    """
    recipe.validate()
    os.makedirs(out_dir, exist_ok=True)
    recordings = []
    for i in range(recipe.n_recordings):
        rec_recipe = dataclasses.replace(recipe, seed=child_seed(recipe.seed, i))
        audio, track, reference = generate(rec_recipe)
        rec_id = f"rec_{i:03d}"
        wav = f"{rec_id}.wav"
        csv_name = f"{rec_id}.csv"
        ref = f"{rec_id}.ref.jsonl"
        write_audio(audio, os.path.join(out_dir, wav))
        write_trajectory(track, os.path.join(out_dir, csv_name))
        write_phoneme_records(reference_to_records(reference), os.path.join(out_dir, ref))
        recordings.append(
            {
                "id": rec_id,
                "seed": rec_recipe.seed,
                "speaker_id": recipe.speaker_id,
                "wav": wav,
                "trajectory": csv_name,
                "reference": ref,
            }
        )
    manifest = {"recipe": recipe.to_dict(), "recordings": recordings}
    write_json(manifest, os.path.join(out_dir, "manifest.json"))
    return manifest

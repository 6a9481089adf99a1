"""Audio and trajectory file ingestion plus pipeline output writers.

Supported inputs are RIFF/WAVE 16-bit PCM audio (mono or stereo; stereo is
averaged down to mono) and trajectory CSV files with the exact header
``t,hand_x,hand_y,head_x,head_y``.  Recognized phonemes travel as JSON
lines, one object per phoneme with keys ``start_s``, ``end_s``, ``label``,
``log_likelihood``, ``prior`` and ``posterior``.

All loaders are pure: the same bytes always produce the same in-memory
values, and the returned containers are treated as immutable.
"""

from __future__ import annotations

import csv
import json
import os
import struct
import wave
from dataclasses import dataclass

import numpy as np

from .errors import (
    CorruptHeader,
    EmptyAudio,
    MalformedRow,
    NonMonotonicTime,
    NonUniformRate,
    UnsupportedFormat,
)

MIN_AUDIO_S = 0.1
TRAJECTORY_HEADER = ("t", "hand_x", "hand_y", "head_x", "head_y")
# uniform-spacing jitter tolerance, seconds
SPACING_TOL_S = 1e-6


@dataclass(frozen=True)
class AudioBuffer:
    """Mono audio samples normalized to [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class TrajectoryTrack:
    """Hand and head image coordinates sampled at a uniform frame rate.

    ``times`` are seconds from recording start; ``hand`` and ``head`` are
    (n, 2) arrays of image-normalized coordinates.  ``frame_rate`` is 0.0
    for degenerate tracks with fewer than two frames.
    """

    times: np.ndarray
    hand: np.ndarray
    head: np.ndarray
    frame_rate: float

    def __len__(self) -> int:
        return len(self.times)


def load_audio(path) -> AudioBuffer:
    """Read a RIFF/WAVE PCM 16-bit file into a normalized mono buffer."""
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            sampwidth = wf.getsampwidth()
            sample_rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg or "compression" in msg.lower():
            raise UnsupportedFormat(f"{path}: {msg}") from exc
        raise CorruptHeader(f"{path}: {msg}") from exc
    except (struct.error, EOFError) as exc:
        raise CorruptHeader(f"{path}: truncated header") from exc

    if sampwidth != 2:
        raise UnsupportedFormat(
            f"{path}: expected 16-bit PCM, got {8 * sampwidth}-bit"
        )
    if n_channels not in (1, 2):
        raise UnsupportedFormat(f"{path}: expected mono or stereo, got {n_channels} channels")
    if sample_rate <= 0:
        raise CorruptHeader(f"{path}: invalid sample rate {sample_rate}")

    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if n_channels == 2:
        data = data.reshape(-1, 2).mean(axis=1)
    if len(data) / sample_rate < MIN_AUDIO_S:
        raise EmptyAudio(
            f"{path}: {len(data) / sample_rate:.3f} s is below the "
            f"{MIN_AUDIO_S} s minimum"
        )
    return AudioBuffer(samples=data, sample_rate=int(sample_rate))


def write_audio(buffer: AudioBuffer, path) -> None:
    """Write an AudioBuffer as mono 16-bit PCM WAV (atomic)."""
    pcm = np.clip(np.round(buffer.samples * 32768.0), -32768, 32767).astype("<i2")
    tmp = f"{path}.tmp"
    with wave.open(tmp, "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(buffer.sample_rate)
        wf.writeframes(pcm.tobytes())
    os.replace(tmp, path)


def load_trajectory(path) -> TrajectoryTrack:
    """Read a trajectory CSV with header ``t,hand_x,hand_y,head_x,head_y``."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(f"{path}: file is empty") from None
        if tuple(h.strip() for h in header) != TRAJECTORY_HEADER:
            raise MalformedRow(
                f"{path}: header must be {','.join(TRAJECTORY_HEADER)!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise MalformedRow(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise MalformedRow(f"{path}:{lineno}: {exc}") from exc

    arr = np.asarray(rows, dtype=np.float64).reshape(-1, 5)
    times = arr[:, 0]
    if len(times) >= 2:
        dt = np.diff(times)
        if np.any(dt <= 0):
            bad = int(np.argmax(dt <= 0))
            raise NonMonotonicTime(
                f"{path}: timestamps not strictly increasing at row {bad + 3}"
            )
        spacing = float(np.median(dt))
        if np.max(np.abs(dt - spacing)) > SPACING_TOL_S:
            raise NonUniformRate(
                f"{path}: frame spacing jitter exceeds {SPACING_TOL_S} s"
            )
        frame_rate = 1.0 / spacing
    else:
        frame_rate = 0.0
    return TrajectoryTrack(
        times=times, hand=arr[:, 1:3], head=arr[:, 3:5], frame_rate=frame_rate
    )


def write_trajectory(track: TrajectoryTrack, path) -> None:
    """Write a trajectory CSV with 6-decimal fields (atomic).

    Values already representable at 6 decimal places round-trip bit-exactly
    through :func:`load_trajectory`.
    """
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(",".join(TRAJECTORY_HEADER) + "\n")
        for t, hand, head in zip(track.times, track.hand, track.head):
            fh.write(
                f"{t:.6f},{hand[0]:.6f},{hand[1]:.6f},{head[0]:.6f},{head[1]:.6f}\n"
            )
    os.replace(tmp, path)


def write_phoneme_records(records, path) -> None:
    """Write phoneme records (dicts) as JSON lines, atomically.

    Every record must at least carry ``start_s``, ``end_s`` and ``label``;
    ``log_likelihood``, ``prior`` and ``posterior`` may be null for
    reference segmentations.
    """
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    os.replace(tmp, path)


def read_phoneme_records(path) -> list[dict]:
    """Read JSON-lines phoneme records into a list of dicts."""
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def write_json(obj, path) -> None:
    """Write a JSON document with sorted keys, atomically."""
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def read_json(path):
    with open(path) as fh:
        return json.load(fh)

"""Fundamental-frequency contour extraction and voiced-segment slicing.

The detector follows the classic short-term autocorrelation scheme of
Boersma (1993): per frame, the normalized autocorrelation of the windowed
signal is divided by the autocorrelation of the window itself, candidate
lags are taken from the local maxima of the corrected curve, and a
dynamic-programming pass over candidates (with octave and voicing
transition costs) picks the final path.  A frame is voiced when its best
corrected peak beats the voicing threshold within the DP path.

Contours are post-processed by bridging short unvoiced gaps between
near-equal neighbors, then cut into voiced segments that carry the
derived statistics (extrema, first/last values, extrema times) used by
the prominence and co-occurrence stages.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import AudioTooShort
from .signal_io import AudioBuffer

# gap-bridging rule: both conditions must hold
MAX_GAP_S = 0.02
MAX_GAP_JUMP_HZ = 10.0


@dataclass(frozen=True)
class PitchConfig:
    """Detector parameters.  Defaults follow common speech-analysis practice."""

    f0_floor: float = 75.0
    f0_ceiling: float = 600.0
    window_s: float = 0.040     # >= 3 periods at the 75 Hz floor
    hop_s: float = 0.010
    voicing_threshold: float = 0.45
    octave_cost: float = 0.01           # per octave, high-frequency bias
    octave_jump_cost: float = 0.35      # per octave, between adjacent frames
    transition_cost: float = 0.2        # voiced <-> unvoiced switch
    max_candidates: int = 4


@dataclass(frozen=True)
class PitchContour:
    """Per-frame F0 estimates.

    ``f0`` and ``strength`` are NaN on unvoiced frames; frame ``i`` sits at
    time ``i * hop``.  Voiced values always lie in [f0_floor, f0_ceiling]
    and strengths in [0, 1].
    """

    f0: np.ndarray
    strength: np.ndarray
    hop: float
    f0_floor: float
    f0_ceiling: float

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.f0)) * self.hop

    @property
    def voiced(self) -> np.ndarray:
        return ~np.isnan(self.f0)

    def __len__(self) -> int:
        return len(self.f0)


@dataclass(frozen=True)
class F0Segment:
    """A maximal voiced interval of the contour with derived statistics."""

    start: float
    end: float
    times: np.ndarray
    f0: np.ndarray
    f0_max: float
    f0_min: float
    f0_first: float
    f0_last: float
    t_of_max: float
    t_of_min: float

    @property
    def duration(self) -> float:
        return self.end - self.start

    def __len__(self) -> int:
        return len(self.f0)


def _frame_signal(x: np.ndarray, n_frames: int, hop: int, win: int) -> np.ndarray:
    """Frames centered at i*hop, zero-padded at both signal edges."""
    half = win // 2
    padded = np.concatenate([np.zeros(half), x, np.zeros(win)])
    idx = np.arange(n_frames)[:, None] * hop + np.arange(win)[None, :]
    return padded[idx]


def extract_f0(audio: AudioBuffer, cfg: PitchConfig = PitchConfig()) -> PitchContour:
    """Extract the F0 contour by window-corrected autocorrelation.

    Raises AudioTooShort when the signal is shorter than two analysis
    windows.
    """
    if cfg.f0_floor >= cfg.f0_ceiling:
        raise ValueError("f0_floor must be below f0_ceiling")
    sr = audio.sample_rate
    if audio.duration < 2 * cfg.window_s:
        raise AudioTooShort(
            f"need at least {2 * cfg.window_s:.3f} s, got {audio.duration:.3f} s"
        )

    win = int(round(cfg.window_s * sr))
    hop = int(round(cfg.hop_s * sr))
    hop_s = hop / sr
    lag_min = max(2, int(np.floor(sr / cfg.f0_ceiling)))
    lag_max = int(np.ceil(sr / cfg.f0_floor))

    n_frames = int((len(audio.samples) - 1) // hop) + 1
    frames = _frame_signal(audio.samples, n_frames, hop, win)
    frames -= frames.mean(axis=1, keepdims=True)
    window = np.hanning(win)
    frames *= window

    # linear autocorrelation via FFT; nfft >= win + lag_max avoids aliasing
    # into the lag range of interest because the support is only win samples
    nfft = 1 << int(np.ceil(np.log2(win + lag_max + 2)))
    spec = np.fft.rfft(frames, nfft)
    ac = np.fft.irfft(spec.real**2 + spec.imag**2, nfft)[:, : lag_max + 2]
    power = ac[:, 0].copy()

    wspec = np.fft.rfft(window, nfft)
    wac = np.fft.irfft(wspec.real**2 + wspec.imag**2, nfft)[: lag_max + 2]
    wac = wac / wac[0]

    silent = power < 1e-12 * win
    with np.errstate(invalid="ignore", divide="ignore"):
        r = ac / power[:, None]
        r = r / wac[None, :]
    r[silent] = 0.0

    interior = r[:, lag_min : lag_max + 1]
    left = r[:, lag_min - 1 : lag_max]
    right = r[:, lag_min + 1 : lag_max + 2]
    is_peak = (interior > left) & (interior >= right) & (interior > 0.0)

    candidates: list[list[tuple[float, float, float]]] = []
    for i in range(n_frames):
        lags = np.nonzero(is_peak[i])[0] + lag_min
        cand: list[tuple[float, float, float]] = []
        if lags.size:
            order = np.argsort(r[i, lags])[::-1][: cfg.max_candidates]
            for lag in lags[order]:
                rm, r0, rp = r[i, lag - 1], r[i, lag], r[i, lag + 1]
                denom = 2.0 * r0 - rm - rp
                delta = 0.5 * (rp - rm) / denom if denom > 1e-12 else 0.0
                delta = float(np.clip(delta, -0.5, 0.5))
                height = float(r0 + 0.25 * (rp - rm) * delta)
                tau = (lag + delta) / sr
                f = float(np.clip(1.0 / tau, cfg.f0_floor, cfg.f0_ceiling))
                strength = height - cfg.octave_cost * np.log2(cfg.f0_floor * tau)
                cand.append((f, height, float(strength)))
        candidates.append(cand)

    f0, strength = _dp_path(candidates, cfg)
    return PitchContour(
        f0=f0,
        strength=strength,
        hop=hop_s,
        f0_floor=cfg.f0_floor,
        f0_ceiling=cfg.f0_ceiling,
    )


def _dp_path(candidates, cfg: PitchConfig):
    """Dynamic-programming path over per-frame candidates.

    State 0 of every frame is the unvoiced candidate with constant local
    score ``voicing_threshold``; voiced candidates score their corrected
    (octave-biased) peak strength.  Transition costs penalize voicing
    switches and octave jumps.
    """
    n = len(candidates)
    f0 = np.full(n, np.nan)
    strength = np.full(n, np.nan)
    if n == 0:
        return f0, strength

    # per-frame states: [(freq or None, local_score, height)]
    states = []
    for cand in candidates:
        st = [(None, cfg.voicing_threshold, 0.0)]
        st.extend((f, s, h) for f, h, s in cand)
        states.append(st)

    score = [s for _, s, _ in states[0]]
    back: list[list[int]] = []
    for t in range(1, n):
        cur = states[t]
        prev = states[t - 1]
        new_score = []
        new_back = []
        for f, local, _h in cur:
            best = -np.inf
            best_j = 0
            for j, (fp, _sp, _hp) in enumerate(prev):
                if f is None and fp is None:
                    cost = 0.0
                elif f is None or fp is None:
                    cost = cfg.transition_cost
                else:
                    cost = cfg.octave_jump_cost * abs(np.log2(f / fp))
                total = score[j] - cost
                if total > best:
                    best = total
                    best_j = j
            new_score.append(best + local)
            new_back.append(best_j)
        score = new_score
        back.append(new_back)

    k = int(np.argmax(score))
    path = [k]
    for t in range(n - 1, 0, -1):
        k = back[t - 1][k]
        path.append(k)
    path.reverse()

    for t, k in enumerate(path):
        f, _s, h = states[t][k]
        if f is not None:
            f0[t] = f
            strength[t] = float(np.clip(h, 0.0, 1.0))
    return f0, strength


def _unvoiced_runs(voiced: np.ndarray):
    """Yield (a, b) index ranges of unvoiced runs with voiced frames on both sides."""
    n = len(voiced)
    i = 0
    while i < n:
        if not voiced[i]:
            j = i
            while j < n and not voiced[j]:
                j += 1
            if i > 0 and j < n:
                yield i, j
            i = j
        else:
            i += 1


def preprocess_contour(contour: PitchContour) -> PitchContour:
    """Bridge short unvoiced gaps between near-equal neighbors.

    A gap is filled by linear interpolation when its duration is below
    0.02 s AND the F0 differential between the bounding voiced frames is
    below 10 Hz; both conditions are required.  The operation is
    idempotent.
    """
    f0 = contour.f0.copy()
    strength = contour.strength.copy()
    voiced = contour.voiced
    for a, b in _unvoiced_runs(voiced):
        gap_s = (b - a) * contour.hop
        left, right = f0[a - 1], f0[b]
        if gap_s < MAX_GAP_S and abs(right - left) < MAX_GAP_JUMP_HZ:
            k = np.arange(1, b - a + 1)
            frac = k / (b - a + 1)
            f0[a:b] = left + (right - left) * frac
            sl, sr = strength[a - 1], strength[b]
            strength[a:b] = sl + (sr - sl) * frac
    return replace(contour, f0=f0, strength=strength)


def segment_contour(contour: PitchContour) -> list[F0Segment]:
    """Cut the contour into maximal voiced runs.

    Each segment spans [first frame time, last frame time + hop]; extrema
    ties resolve to the earliest time.
    """
    voiced = contour.voiced
    times = contour.times
    segments = []
    n = len(contour)
    i = 0
    while i < n:
        if voiced[i]:
            j = i
            while j < n and voiced[j]:
                j += 1
            seg_t = times[i:j]
            seg_f = contour.f0[i:j]
            k_max = int(np.argmax(seg_f))
            k_min = int(np.argmin(seg_f))
            segments.append(
                F0Segment(
                    start=float(seg_t[0]),
                    end=float(seg_t[-1] + contour.hop),
                    times=seg_t,
                    f0=seg_f,
                    f0_max=float(seg_f[k_max]),
                    f0_min=float(seg_f[k_min]),
                    f0_first=float(seg_f[0]),
                    f0_last=float(seg_f[-1]),
                    t_of_max=float(seg_t[k_max]),
                    t_of_min=float(seg_t[k_min]),
                )
            )
            i = j
        else:
            i += 1
    return segments


def dump_f0_csv(contour: PitchContour, path) -> None:
    """Write the contour as CSV ``t,f0,voiced`` (0 Hz on unvoiced frames)."""
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write("t,f0,voiced\n")
        for t, f in zip(contour.times, contour.f0):
            if np.isnan(f):
                fh.write(f"{t:.6f},0.000000,0\n")
            else:
                fh.write(f"{t:.6f},{f:.6f},1\n")
    os.replace(tmp, path)

"""End-to-end orchestration: feature extraction, model training and
recognition over corpus recordings.

The recognizer runs the prior-aware segmental decoder in both modes; the
only difference between ``gesture-only`` and ``fused`` is the prior table
(uniform versus co-occurrence), which keeps the two modes exactly
comparable and makes the uniform-prior identity hold bit-for-bit.

Alignment features during training and recognition come from shared
precomputed tables (prominent-segment prefix sums plus running speed /
gradient maxima over candidate windows), so both phases see the same
feature definition and per-candidate cost stays O(1).
"""

from __future__ import annotations

import dataclasses
import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import corpus as corpus_mod
from .config import DEFAULT_N_STATES, PipelineConfig
from .cooccur import AlignmentFeatures, CooccurrenceModel, fit_cooccurrence
from .errors import InsufficientClassData, InsufficientExamples, MissingModels
from .fusion_eval import (
    ErrorBreakdown,
    decode_with_priors,
    score,
    uniform_log_priors,
)
from .gesture_hmm import (
    CLASS_ORDER,
    PhonemeClass,
    PhonemeHmm,
    PhonemeNetwork,
    train_hmm,
)
from .kinematics import KinematicFeatures, differentiate
from .pitch import extract_f0, preprocess_contour, segment_contour
from .prominence import (
    ProminenceModel,
    accent_matrix,
    compute_accents,
    fit_prominence_model,
    gradient_response,
    max_gradient,
)
from .signal_io import (
    load_audio,
    load_trajectory,
    read_json,
    read_phoneme_records,
)

logger = logging.getLogger(__name__)

PROMINENCE_PREFIX = "prominence"
HMM_PREFIX = "hmm"
COOCCURRENCE_FILE = "cooccurrence.json"
NETWORK_FILE = "network.json"


@dataclasses.dataclass
class RecordingFeatures:
    """Everything the trainer / recognizer needs from one recording."""

    contour: object
    segments: list
    accents: list
    kinematics: KinematicFeatures
    reference: list | None = None
    speaker_id: str = ""


@dataclasses.dataclass
class Models:
    prominence: dict[str, ProminenceModel]
    hmms: dict[PhonemeClass, PhonemeHmm]
    cooccurrence: CooccurrenceModel
    network: PhonemeNetwork

    def save(self, model_dir) -> None:
        os.makedirs(model_dir, exist_ok=True)
        for speaker, model in self.prominence.items():
            model.save(os.path.join(model_dir, f"{PROMINENCE_PREFIX}_{speaker}.json"))
        for cls_, hmm in self.hmms.items():
            hmm.save(os.path.join(model_dir, f"{HMM_PREFIX}_{cls_.value}.json"))
        self.cooccurrence.save(os.path.join(model_dir, COOCCURRENCE_FILE))
        self.network.save(os.path.join(model_dir, NETWORK_FILE))

    @classmethod
    def load(cls, model_dir) -> "Models":
        if not os.path.isdir(model_dir):
            raise MissingModels(f"model directory {model_dir} does not exist")
        hmms = {}
        for c in CLASS_ORDER:
            path = os.path.join(model_dir, f"{HMM_PREFIX}_{c.value}.json")
            if not os.path.exists(path):
                raise MissingModels(f"missing model file {path}")
            hmms[c] = PhonemeHmm.load(path)
        cooc_path = os.path.join(model_dir, COOCCURRENCE_FILE)
        net_path = os.path.join(model_dir, NETWORK_FILE)
        for path in (cooc_path, net_path):
            if not os.path.exists(path):
                raise MissingModels(f"missing model file {path}")
        prominence = {}
        for name in sorted(os.listdir(model_dir)):
            if name.startswith(f"{PROMINENCE_PREFIX}_") and name.endswith(".json"):
                model = ProminenceModel.load(os.path.join(model_dir, name))
                prominence[model.speaker_id] = model
        if not prominence:
            raise MissingModels(f"no {PROMINENCE_PREFIX}_*.json in {model_dir}")
        return cls(
            prominence=prominence,
            hmms=hmms,
            cooccurrence=CooccurrenceModel.load(cooc_path),
            network=PhonemeNetwork.load(net_path, hmms),
        )


# ---------------------------------------------------------------------------
# corpus access
# ---------------------------------------------------------------------------

def load_manifest(corpus_dir) -> dict:
    path = os.path.join(corpus_dir, "manifest.json")
    if not os.path.exists(path):
        raise FileNotFoundError(f"no manifest.json in {corpus_dir}")
    return read_json(path)


def select_recordings(manifest: dict, corpus_dir, subset: str, cfg: PipelineConfig):
    """Pick the train/test/all subset of a corpus, deterministically."""
    entries = manifest["recordings"]
    if subset == "all":
        chosen = entries
    else:
        train, test = corpus_mod.split(entries, cfg.train_fraction, seed=cfg.seed)
        chosen = train if subset == "train" else test
    return [
        {
            "id": e["id"],
            "speaker_id": e.get("speaker_id", cfg.speaker_id),
            "wav": os.path.join(corpus_dir, e["wav"]),
            "trajectory": os.path.join(corpus_dir, e["trajectory"]),
            "reference": os.path.join(corpus_dir, e["reference"])
            if e.get("reference")
            else None,
        }
        for e in chosen
    ]


def analyze_recording(wav_path, trajectory_path, cfg: PipelineConfig,
                      reference_path=None, speaker_id: str = "") -> RecordingFeatures:
    """Load one recording and run the speech + kinematic front ends."""
    audio = load_audio(wav_path)
    track = load_trajectory(trajectory_path)
    contour = preprocess_contour(extract_f0(audio, cfg.pitch))
    segments = segment_contour(contour)
    accents = compute_accents(segments, stream_start=0.0, sigma=cfg.prominence.sigma_pitch)
    kin = differentiate(track)
    reference = None
    if reference_path:
        reference = corpus_mod.records_to_reference(read_phoneme_records(reference_path))
    return RecordingFeatures(
        contour=contour,
        segments=segments,
        accents=accents,
        kinematics=kin,
        reference=reference,
        speaker_id=speaker_id,
    )


def _map_jobs(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# alignment tables
# ---------------------------------------------------------------------------

class AlignmentTables:
    """Per-recording tables for O(1) alignment features of any interval.

    Prominent-segment statistics (onset, extrema times, gradient-peak
    time, duration) are reduced to prefix sums; the hand-speed peak and
    steepest-gradient times over a window come from running maxima.  The
    gradient response is computed once over the whole speed series.
    """

    def __init__(self, kin: KinematicFeatures, prominent, *,
                 sigma_pitch: float = 0.8, sigma_velocity: float = 1.0):
        self.times = kin.times
        self.dt = kin.dt
        self.speed = kin.hand_speed
        self.abs_dog = np.abs(gradient_response(self.speed, self.dt, sigma_velocity))
        self.prominent = list(prominent)

        starts, ends, t_max, t_min, t_grad, durs = [], [], [], [], [], []
        for seg in self.prominent:
            if len(seg) >= 3:
                _, gt = max_gradient(seg.f0, seg.times, sigma_pitch)
            else:
                gt = seg.t_of_max
            starts.append(seg.start)
            ends.append(seg.end)
            t_max.append(seg.t_of_max)
            t_min.append(seg.t_of_min)
            t_grad.append(gt)
            durs.append(seg.duration)
        self.seg_starts = np.asarray(starts)
        self.seg_ends = np.asarray(ends)
        w = np.asarray(durs)

        def prefix(v):
            return np.concatenate([[0.0], np.cumsum(w * np.asarray(v))])

        self.p_w = np.concatenate([[0.0], np.cumsum(w)])
        self.p_start = prefix(starts)
        self.p_tmax = prefix(t_max)
        self.p_tmin = prefix(t_min)
        self.p_tgrad = prefix(t_grad)

    def _window_stats(self, start_t, end_t):
        """Weighted segment sums for windows [start_t, end_t) (vectorized)."""
        lo = np.searchsorted(self.seg_ends, start_t, side="right")
        hi = np.searchsorted(self.seg_starts, end_t, side="left")
        has = hi > lo
        lo_c = np.minimum(lo, hi)
        w = self.p_w[hi] - self.p_w[lo_c]
        with np.errstate(invalid="ignore", divide="ignore"):
            tau0 = (self.p_start[hi] - self.p_start[lo_c]) / w - start_t
            tmax = (self.p_tmax[hi] - self.p_tmax[lo_c]) / w
            tmin = (self.p_tmin[hi] - self.p_tmin[lo_c]) / w
            tgrad = (self.p_tgrad[hi] - self.p_tgrad[lo_c]) / w
        return has, tau0, tmax, tmin, tgrad

    def log_prior_table(self, model: CooccurrenceModel, d_max: int) -> np.ndarray:
        """Log P(class | alignment) for every (start frame, length) candidate."""
        T = len(self.times)
        n_cls = len(CLASS_ORDER)
        table = np.zeros((T, d_max, n_cls))
        peak_val = self.speed.copy()
        peak_t = self.times.copy()
        grad_val = self.abs_dog.copy()
        grad_t = self.times.copy()
        for d in range(d_max):
            if d > 0:
                n = T - d
                upd = self.speed[d:] > peak_val[:n]
                peak_val[:n][upd] = self.speed[d:][upd]
                peak_t[:n][upd] = self.times[d:][upd]
                upd = self.abs_dog[d:] > grad_val[:n]
                grad_val[:n][upd] = self.abs_dog[d:][upd]
                grad_t[:n][upd] = self.times[d:][upd]
            n = T - d
            if n <= 0:
                break
            start_t = self.times[:n]
            end_t = self.times[d:] + self.dt
            has, tau0, tmax, tmin, tgrad = self._window_stats(start_t, end_t)
            t_mat = np.column_stack(
                [tau0, tmax - peak_t[:n], tmin - peak_t[:n], tgrad - grad_t[:n]]
            )
            t_mat[~has] = 0.0
            table[:n, d, :] = model.log_prior_matrix(t_mat, has)
        return table

    def alignment_for(self, start_t: float, end_t: float):
        """Alignment features of one interval (same tables as decoding)."""
        has, tau0, tmax, tmin, tgrad = self._window_stats(
            np.array([start_t]), np.array([end_t])
        )
        if not has[0]:
            return None
        i0 = int(np.searchsorted(self.times, start_t - 1e-9))
        i1 = int(np.searchsorted(self.times, end_t - 1e-9))
        sl = slice(i0, max(i1, i0 + 1))
        k = int(np.argmax(self.speed[sl]))
        vp = float(self.times[sl][k])
        k = int(np.argmax(self.abs_dog[sl]))
        vg = float(self.times[sl][k])
        lo = int(np.searchsorted(self.seg_ends, start_t, side="right"))
        hi = int(np.searchsorted(self.seg_starts, end_t, side="left"))
        return AlignmentFeatures(
            tau_0=float(tau0[0]),
            tau_max=float(tmax[0] - vp),
            tau_min=float(tmin[0] - vp),
            tau_max_prime=float(tgrad[0] - vg),
            n_segments=hi - lo,
        )


def prominent_segments(rec: RecordingFeatures, model: ProminenceModel):
    """Segments whose accent features pass the prominence threshold."""
    if not rec.accents:
        return []
    d2 = model.d2(accent_matrix(rec.accents))
    return [
        rec.segments[af.segment_ref]
        for af, dd in zip(rec.accents, np.atleast_1d(d2))
        if dd >= model.threshold_d2
    ]


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def train_models(cfg: PipelineConfig, recordings) -> Models:
    """Fit prominence, HMM and co-occurrence models from analyzed recordings.

    ``recordings`` are dicts from :func:`select_recordings`; each must
    reference a ground-truth segmentation.
    """
    feats = _map_jobs(
        lambda r: analyze_recording(
            r["wav"], r["trajectory"], cfg, r["reference"], r["speaker_id"]
        ),
        recordings,
        cfg.jobs,
    )

    # per-speaker prominence models
    prominence: dict[str, ProminenceModel] = {}
    for speaker in sorted({r.speaker_id for r in feats}):
        rows = np.vstack(
            [accent_matrix(r.accents) for r in feats if r.speaker_id == speaker and r.accents]
        )
        prominence[speaker] = fit_prominence_model(
            rows,
            speaker_id=speaker,
            threshold_d2=cfg.prominence.threshold_d2,
            target_miss_rate=cfg.prominence.target_miss_rate,
        )
        logger.info(
            "prominence[%s]: %d segments, threshold d2=%.3f",
            speaker, len(rows), prominence[speaker].threshold_d2,
        )

    # HMM training sets sliced from the references
    examples: dict[PhonemeClass, list[np.ndarray]] = {c: [] for c in CLASS_ORDER}
    alignment_rows: list[tuple[PhonemeClass, object]] = []
    for rec in feats:
        prom = prominent_segments(rec, prominence[rec.speaker_id])
        tables = AlignmentTables(
            rec.kinematics,
            prom,
            sigma_pitch=cfg.prominence.sigma_pitch,
            sigma_velocity=cfg.prominence.sigma_velocity,
        )
        times = rec.kinematics.times
        for seg in rec.reference:
            i0 = int(np.searchsorted(times, seg.start - 1e-9))
            i1 = int(np.searchsorted(times, seg.end - 1e-9))
            if i1 - i0 >= 2:
                examples[seg.label].append(rec.kinematics.values[i0:i1])
            t = tables.alignment_for(seg.start, seg.end)
            if t is not None:
                alignment_rows.append((seg.label, t))

    hmms: dict[PhonemeClass, PhonemeHmm] = {}
    for c in CLASS_ORDER:
        n_states = cfg.hmm.n_states.get(c.value, DEFAULT_N_STATES[c.value])
        try:
            hmms[c] = train_hmm(
                c,
                examples[c],
                n_states,
                covariance_type=cfg.hmm.covariance_type,
                max_iterations=cfg.hmm.max_iterations,
                tolerance=cfg.hmm.tolerance,
            )
        except InsufficientExamples as exc:
            raise InsufficientClassData(c.value, str(exc)) from exc
        logger.info(
            "hmm[%s]: %d examples, %d iterations",
            c.value, len(examples[c]), len(hmms[c].training_log),
        )

    cooccurrence = fit_cooccurrence(alignment_rows)
    network = PhonemeNetwork(hmms=hmms, insertion_penalty=cfg.hmm.insertion_penalty)
    return Models(
        prominence=prominence,
        hmms=hmms,
        cooccurrence=cooccurrence,
        network=network,
    )


# ---------------------------------------------------------------------------
# recognition
# ---------------------------------------------------------------------------

def recognize_recording(cfg: PipelineConfig, models: Models,
                        rec: RecordingFeatures, mode: str):
    """Decode one recording; returns (scored intervals, breakdown or None)."""
    if mode not in ("fused", "gesture-only"):
        raise ValueError(f"unknown mode {mode!r}")
    prom_model = models.prominence.get(
        rec.speaker_id, next(iter(models.prominence.values()))
    )
    kin = rec.kinematics
    T = len(kin)
    dt = kin.dt
    d_max = min(T, max(1, int(round(cfg.fusion.max_duration_s / dt))))

    if mode == "fused":
        prom = prominent_segments(rec, prom_model)
        tables = AlignmentTables(
            kin,
            prom,
            sigma_pitch=cfg.prominence.sigma_pitch,
            sigma_velocity=cfg.prominence.sigma_velocity,
        )
        log_priors = tables.log_prior_table(models.cooccurrence, d_max)
    else:
        log_priors = uniform_log_priors(T, d_max, models.network.classes)

    intervals = decode_with_priors(
        models.network,
        kin,
        log_priors,
        min_duration_s=cfg.fusion.min_duration_s,
        max_duration_s=cfg.fusion.max_duration_s,
    )
    breakdown = score(intervals, rec.reference) if rec.reference else None
    return intervals, breakdown


def recognize_many(cfg: PipelineConfig, models: Models, recordings, mode: str):
    """Recognize a list of corpus recordings; aggregates the breakdown.

    Returns (per-recording list of (id, intervals, breakdown), total
    ErrorBreakdown or None).
    """

    def run(entry):
        rec = analyze_recording(
            entry["wav"], entry["trajectory"], cfg, entry.get("reference"),
            entry.get("speaker_id", cfg.speaker_id),
        )
        intervals, breakdown = recognize_recording(cfg, models, rec, mode)
        return entry["id"], intervals, breakdown

    results = _map_jobs(run, recordings, cfg.jobs)
    totals = None
    for _, _, breakdown in results:
        if breakdown is not None:
            totals = breakdown if totals is None else totals + breakdown
    return results, totals

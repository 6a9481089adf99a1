"""Speech-gesture alignment features and the co-occurrence class prior.

For every phoneme interval the prominent F0 segments overlapping it yield
four temporal offsets: segment onset relative to the phoneme start
(tau_0), segment F0 maximum and minimum relative to the hand-velocity
peak (tau_max, tau_min), and the segment's steepest-F0-gradient time
relative to the steepest-velocity-gradient time (tau_max').  Offsets are
averaged over the overlapping segments, weighted by segment duration.
A per-class 4-D Gaussian with a class frequency weight turns the offsets
into the prior P(class | alignment) used for fusion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientClassData
from .gesture_hmm import CLASS_ORDER, PhonemeClass
from .kinematics import VelocityProfile
from .prominence import SIGMA_PITCH, GaussianModel, fit_gaussian, max_gradient
from .signal_io import read_json, write_json

ALIGNMENT_DIM = 4
MIN_CLASS_SAMPLES = ALIGNMENT_DIM + 2


@dataclass(frozen=True)
class AlignmentFeatures:
    """Weighted-average temporal offsets t = [tau_0, tau_max, tau_min, tau_max']."""

    tau_0: float
    tau_max: float
    tau_min: float
    tau_max_prime: float
    n_segments: int

    def as_vector(self) -> np.ndarray:
        return np.array([self.tau_0, self.tau_max, self.tau_min, self.tau_max_prime])


def compute_alignment(phoneme, profile: VelocityProfile, prominent,
                      sigma_pitch: float = SIGMA_PITCH) -> AlignmentFeatures | None:
    """Alignment features of one phoneme interval, or None when no
    prominent segment overlaps it.

    ``phoneme`` is the (start, end) interval in seconds; ``prominent`` the
    prominent F0 segments of the recording.  A segment counts as soon as
    any part of its contour falls inside the interval.  Offsets from
    several segments are averaged with the segment durations as weights.
    """
    start, end = phoneme
    overlapping = [s for s in prominent if s.start < end and s.end > start]
    if not overlapping:
        return None
    weights = []
    rows = []
    for seg in overlapping:
        if len(seg) >= 3:
            _, grad_t = max_gradient(seg.f0, seg.times, sigma_pitch)
        else:
            grad_t = seg.t_of_max
        rows.append(
            [
                seg.start - start,
                seg.t_of_max - profile.v_peak_time,
                seg.t_of_min - profile.v_peak_time,
                grad_t - profile.v_dot_max[1],
            ]
        )
        weights.append(seg.duration)
    rows = np.asarray(rows)
    weights = np.asarray(weights)
    t = (weights[:, None] * rows).sum(axis=0) / weights.sum()
    return AlignmentFeatures(
        tau_0=float(t[0]),
        tau_max=float(t[1]),
        tau_min=float(t[2]),
        tau_max_prime=float(t[3]),
        n_segments=len(overlapping),
    )


@dataclass
class CooccurrenceModel:
    """Per-class alignment Gaussians N_i and class frequencies pi_i."""

    gaussians: dict[PhonemeClass, GaussianModel]
    priors: dict[PhonemeClass, float]

    def class_prior(self, t: AlignmentFeatures | None) -> np.ndarray:
        """Normalized prior over CLASS_ORDER given alignment features.

        With no alignment evidence (t is None) the prior is uniform over
        the classes with positive frequency, so silent gestures never
        zero out a class.
        """
        pis = np.array([self.priors.get(c, 0.0) for c in CLASS_ORDER])
        if t is None:
            supported = pis > 0
            out = np.zeros(len(CLASS_ORDER))
            out[supported] = 1.0 / supported.sum()
            return out
        vec = t.as_vector() if isinstance(t, AlignmentFeatures) else np.asarray(t)
        logw = np.full(len(CLASS_ORDER), -np.inf)
        for i, c in enumerate(CLASS_ORDER):
            g = self.gaussians.get(c)
            if g is not None and pis[i] > 0:
                logw[i] = np.log(pis[i]) + g.log_density(vec)
        m = logw.max()
        w = np.exp(logw - m)
        return w / w.sum()

    def log_prior_matrix(self, t_matrix: np.ndarray, has_alignment: np.ndarray) -> np.ndarray:
        """Batch log class priors for (n, 4) alignment rows.

        Rows where ``has_alignment`` is False get the uniform fallback.
        Returns (n, n_classes) log-probabilities.
        """
        n = t_matrix.shape[0]
        pis = np.array([self.priors.get(c, 0.0) for c in CLASS_ORDER])
        logw = np.full((n, len(CLASS_ORDER)), -np.inf)
        for i, c in enumerate(CLASS_ORDER):
            g = self.gaussians.get(c)
            if g is not None and pis[i] > 0:
                logw[:, i] = np.log(pis[i]) + g.log_density(t_matrix)
        m = logw.max(axis=1, keepdims=True)
        norm = m + np.log(np.exp(logw - m).sum(axis=1, keepdims=True))
        logp = logw - norm
        supported = pis > 0
        fallback = np.full(len(CLASS_ORDER), -np.inf)
        fallback[supported] = -np.log(supported.sum())
        logp[~has_alignment] = fallback
        return logp

    def save(self, path) -> None:
        classes = []
        for c in CLASS_ORDER:
            if c in self.priors or c in self.gaussians:
                g = self.gaussians.get(c)
                classes.append(
                    {
                        "name": c.value,
                        "pi": self.priors.get(c, 0.0),
                        "mean": g.mean.tolist() if g is not None else None,
                        "cov": g.covariance.tolist() if g is not None else None,
                    }
                )
        write_json({"classes": classes}, path)

    @classmethod
    def load(cls, path) -> "CooccurrenceModel":
        doc = read_json(path)
        gaussians = {}
        priors = {}
        for entry in doc["classes"]:
            c = PhonemeClass.from_name(entry["name"])
            priors[c] = float(entry["pi"])
            if entry.get("mean") is not None:
                gaussians[c] = GaussianModel(entry["mean"], entry["cov"])
        return cls(gaussians=gaussians, priors=priors)


def fit_cooccurrence(labeled, *, share_preparation_retraction: bool = True,
                     min_per_class: int = MIN_CLASS_SAMPLES) -> CooccurrenceModel:
    """Fit per-class alignment Gaussians and class frequencies.

    ``labeled`` is a sequence of (PhonemeClass, AlignmentFeatures).
    Preparation and retraction share one Gaussian (fit on their pooled
    rows, duplicated into both slots) since their alignment statistics
    are not meaningfully different.  Classes absent from the data get a
    zero frequency and no Gaussian; classes present with fewer than
    ``min_per_class`` rows raise InsufficientClassData.
    """
    groups: dict[PhonemeClass, list[np.ndarray]] = {}
    for cls_, feats in labeled:
        vec = feats.as_vector() if isinstance(feats, AlignmentFeatures) else np.asarray(feats)
        groups.setdefault(cls_, []).append(vec)

    total = sum(len(v) for v in groups.values())
    priors = {c: len(groups.get(c, ())) / total for c in CLASS_ORDER if c in groups}

    gaussians: dict[PhonemeClass, GaussianModel] = {}
    shared_pair = (PhonemeClass.PREPARATION, PhonemeClass.RETRACTION)
    if share_preparation_retraction and any(c in groups for c in shared_pair):
        pooled = [row for c in shared_pair for row in groups.get(c, ())]
        if len(pooled) < min_per_class:
            raise InsufficientClassData(
                "Preparation/Retraction",
                f"Preparation/Retraction pool has {len(pooled)} samples, "
                f"needs {min_per_class}",
            )
        shared = fit_gaussian(np.vstack(pooled))
        for c in shared_pair:
            if c in groups:
                gaussians[c] = shared

    for c, rows in groups.items():
        if share_preparation_retraction and c in shared_pair:
            continue
        if len(rows) < min_per_class:
            raise InsufficientClassData(
                c.value, f"{c.value} has {len(rows)} samples, needs {min_per_class}"
            )
        gaussians[c] = fit_gaussian(np.vstack(rows))

    return CooccurrenceModel(gaussians=gaussians, priors=priors)

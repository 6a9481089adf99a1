"""Pitch-accent features and prominent-segment classification.

Each voiced segment yields a 3-vector of accent measures: the preceding
pause times the F0 differential to the segment maximum (xi_max) and
minimum (xi_min), plus the magnitude of the steepest smoothed F0 gradient
(xi_dot_max, derivative-of-Gaussian detector).  A per-speaker Gaussian is
fit to Yeo-Johnson-transformed accent vectors and segments are called
prominent when their squared Mahalanobis distance reaches a threshold,
i.e. when they sit in the tails of the accent distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.ndimage import correlate1d

from .errors import (
    DegenerateDimension,
    DimensionMismatch,
    InsufficientData,
    NoPositiveLabels,
    TooFewSamples,
)
from .signal_io import read_json, write_json

SIGMA_PITCH = 0.8      # smoothing width (frames) for F0 gradients
SIGMA_VELOCITY = 1.0   # smoothing width (frames) for speed gradients

_LAMBDA_GRID = np.arange(-200, 201) * 0.01  # [-2, 2] step 0.01, exact 0.0


@dataclass(frozen=True)
class AccentFeatures:
    """Accent measures of one voiced segment: [xi_max, xi_min, xi_dot_max]."""

    xi_max: float
    xi_min: float
    xi_dot_max: float
    segment_ref: int

    def as_vector(self) -> np.ndarray:
        return np.array([self.xi_max, self.xi_min, self.xi_dot_max])


def accent_matrix(features) -> np.ndarray:
    """Stack AccentFeatures into an (n, 3) matrix."""
    return np.array([f.as_vector() for f in features]).reshape(-1, 3)


# ---------------------------------------------------------------------------
# derivative-of-Gaussian gradient extraction
# ---------------------------------------------------------------------------

def _dog_kernel(sigma: float) -> np.ndarray:
    """First-derivative-of-Gaussian weights, truncated at 4*sigma.

    Normalized so that correlating a unit-slope ramp yields 1 per sample.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    half = max(1, int(np.ceil(4.0 * sigma)))
    i = np.arange(-half, half + 1, dtype=np.float64)
    w = i * np.exp(-(i**2) / (2.0 * sigma**2))
    return w / np.sum(i * w)


def gradient_response(values, dt: float, sigma: float) -> np.ndarray:
    """Smoothed derivative of a uniformly sampled series, in units/s."""
    values = np.asarray(values, dtype=np.float64)
    w = _dog_kernel(sigma)
    return correlate1d(values, w, mode="nearest") / dt


def max_gradient(values, times, sigma: float) -> tuple[float, float]:
    """Largest smoothed-gradient magnitude of a series and its time.

    Convolves with a derivative-of-Gaussian kernel of width ``sigma``
    (in samples, truncated at 4 sigma) and returns (|gradient|, time) of
    the strongest response; ties resolve to the earliest time.
    """
    values = np.asarray(values, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if len(values) < 3:
        raise TooFewSamples(f"need >= 3 samples, got {len(values)}")
    dt = float(np.median(np.diff(times)))
    resp = gradient_response(values, dt, sigma)
    k = int(np.argmax(np.abs(resp)))
    return float(abs(resp[k])), float(times[k])


# ---------------------------------------------------------------------------
# accent features
# ---------------------------------------------------------------------------

def compute_accents(segments, stream_start: float = 0.0,
                    sigma: float = SIGMA_PITCH) -> list[AccentFeatures]:
    """Accent features for time-ordered voiced segments.

    The pause before segment k is its start minus the previous segment's
    end (the stream start for k = 0).  The F0 differential is taken
    against the previous segment's last voiced value; the first segment
    uses its own onset value.  Segments with fewer than three frames get
    xi_dot_max = 0.
    """
    feats = []
    prev_end = stream_start
    prev_last = None
    for k, seg in enumerate(segments):
        pause = seg.start - prev_end
        ref = seg.f0_first if prev_last is None else prev_last
        xi_max = pause * (seg.f0_max - ref)
        xi_min = pause * (seg.f0_min - ref)
        if len(seg) >= 3:
            xi_dot, _ = max_gradient(seg.f0, seg.times, sigma)
        else:
            xi_dot = 0.0
        feats.append(AccentFeatures(float(xi_max), float(xi_min), float(xi_dot), k))
        prev_end = seg.end
        prev_last = seg.f0_last
    return feats


# ---------------------------------------------------------------------------
# Yeo-Johnson power transform
# ---------------------------------------------------------------------------

def yeo_johnson(y, lam: float) -> np.ndarray:
    """Apply the four-branch Yeo-Johnson transform with exponent ``lam``.

    Uses expm1/log1p so the two special exponents (0 and 2) are approached
    continuously to high precision.
    """
    y = np.asarray(y, dtype=np.float64)
    out = np.empty_like(y)
    pos = y >= 0
    if lam == 0.0:
        out[pos] = np.log1p(y[pos])
    else:
        out[pos] = np.expm1(lam * np.log1p(y[pos])) / lam
    if lam == 2.0:
        out[~pos] = -np.log1p(-y[~pos])
    else:
        out[~pos] = -np.expm1((2.0 - lam) * np.log1p(-y[~pos])) / (2.0 - lam)
    return out


def _yeo_johnson_llf(lam: float, y: np.ndarray) -> float:
    """Gaussian profile log-likelihood of the transformed sample."""
    psi = yeo_johnson(y, lam)
    var = float(np.var(psi))
    if var <= 0 or not np.isfinite(var):
        return -np.inf
    n = len(y)
    jac = float(np.sum(np.sign(y) * np.log1p(np.abs(y))))
    return -0.5 * n * np.log(var) + (lam - 1.0) * jac


@dataclass(frozen=True)
class YeoJohnsonTransform:
    """Per-dimension Yeo-Johnson exponents."""

    lambdas: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.lambdas)

    def apply(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise DimensionMismatch(f"expected {self.dim} columns, got {X.shape[1]}")
        out = np.empty_like(X)
        for j, lam in enumerate(self.lambdas):
            out[:, j] = yeo_johnson(X[:, j], float(lam))
        return out


def fit_yeo_johnson(data) -> YeoJohnsonTransform:
    """Choose per-dimension exponents by grid search over [-2, 2].

    Maximizes the Gaussian profile log-likelihood on a 0.01-step grid.
    Raises DegenerateDimension for zero-variance columns and
    InsufficientData below 10 rows.
    """
    X = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if X.shape[0] < 10:
        raise InsufficientData(f"need >= 10 rows, got {X.shape[0]}")
    lambdas = np.empty(X.shape[1])
    for j in range(X.shape[1]):
        col = X[:, j]
        if np.ptp(col) == 0.0:
            raise DegenerateDimension(f"dimension {j} has zero variance")
        llf = np.array([_yeo_johnson_llf(lam, col) for lam in _LAMBDA_GRID])
        lambdas[j] = _LAMBDA_GRID[int(np.argmax(llf))]
    return YeoJohnsonTransform(lambdas=lambdas)


# ---------------------------------------------------------------------------
# Gaussian model and Mahalanobis distance
# ---------------------------------------------------------------------------

class GaussianModel:
    """Mean and SPD covariance with Mahalanobis and density evaluation."""

    def __init__(self, mean, covariance):
        self.mean = np.asarray(mean, dtype=np.float64).reshape(-1)
        cov = np.asarray(covariance, dtype=np.float64)
        cov = cov.reshape(len(self.mean), len(self.mean))
        self.covariance = 0.5 * (cov + cov.T)
        self._chol = np.linalg.cholesky(self.covariance)
        self._logdet = 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    @property
    def dim(self) -> int:
        return len(self.mean)

    def __repr__(self):
        return f"GaussianModel(dim={self.dim})"

    def mahalanobis_d2(self, x) -> np.ndarray | float:
        """Squared Mahalanobis distance via the Cholesky factor."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        X = np.atleast_2d(x)
        if X.shape[1] != self.dim:
            raise DimensionMismatch(f"expected dim {self.dim}, got {X.shape[1]}")
        z = solve_triangular(self._chol, (X - self.mean).T, lower=True)
        d2 = np.sum(z**2, axis=0)
        return float(d2[0]) if squeeze else d2

    def log_density(self, x) -> np.ndarray | float:
        d2 = self.mahalanobis_d2(x)
        return -0.5 * (self.dim * np.log(2.0 * np.pi) + self._logdet + d2)


def fit_gaussian(data) -> GaussianModel:
    """Sample mean and regularized unbiased covariance.

    The covariance receives ``eps * I`` with ``eps = 1e-6 * trace / dim``
    so nearly-degenerate per-speaker samples stay positive definite.
    Requires strictly more rows than dimensions.
    """
    X = np.atleast_2d(np.asarray(data, dtype=np.float64))
    n, d = X.shape
    if n <= d:
        raise InsufficientData(f"need more than {d} rows, got {n}")
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1).reshape(d, d)
    eps = 1e-6 * np.trace(cov) / d
    cov = cov + eps * np.eye(d)
    return GaussianModel(mean, cov)


def mahalanobis_d2(f, model: GaussianModel):
    """Squared Mahalanobis distance of ``f`` under ``model``."""
    return model.mahalanobis_d2(f)


# ---------------------------------------------------------------------------
# prominence model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProminenceModel:
    """Per-speaker accent transform, Gaussian and decision threshold."""

    transform: YeoJohnsonTransform
    gaussian: GaussianModel
    threshold_d2: float
    speaker_id: str = ""

    def d2(self, features) -> np.ndarray | float:
        vec = _as_accent_matrix(features)
        d2 = self.gaussian.mahalanobis_d2(self.transform.apply(vec))
        if isinstance(features, AccentFeatures) or np.ndim(features) == 1:
            return float(d2[0])
        return d2

    def save(self, path) -> None:
        write_json(
            {
                "lambda": self.transform.lambdas.tolist(),
                "mean": self.gaussian.mean.tolist(),
                "cov": self.gaussian.covariance.tolist(),
                "threshold_d2": self.threshold_d2,
                "speaker_id": self.speaker_id,
            },
            path,
        )

    @classmethod
    def load(cls, path) -> "ProminenceModel":
        doc = read_json(path)
        return cls(
            transform=YeoJohnsonTransform(np.asarray(doc["lambda"], dtype=np.float64)),
            gaussian=GaussianModel(doc["mean"], doc["cov"]),
            threshold_d2=float(doc["threshold_d2"]),
            speaker_id=doc.get("speaker_id", ""),
        )


def _as_accent_matrix(features) -> np.ndarray:
    if isinstance(features, AccentFeatures):
        return features.as_vector().reshape(1, -1)
    arr = np.asarray(features, dtype=np.float64)
    return np.atleast_2d(arr)


def classify_prominent(f, model: ProminenceModel) -> bool:
    """True when the transformed accent vector reaches the d2 threshold.

    The boundary is inclusive: d2 == threshold classifies prominent.
    """
    vec = _as_accent_matrix(f)
    d2 = model.gaussian.mahalanobis_d2(model.transform.apply(vec))
    return bool(d2[0] >= model.threshold_d2)


def threshold_from_positive_d2(d2_values, target_miss_rate: float) -> float:
    """Largest threshold keeping the positive miss fraction at or below target."""
    d2 = np.sort(np.asarray(d2_values, dtype=np.float64))
    if d2.size == 0:
        raise NoPositiveLabels("no labeled-prominent samples")
    if not 0.0 < target_miss_rate < 0.5:
        raise ValueError("target_miss_rate must lie in (0, 0.5)")
    k = int(np.floor(target_miss_rate * len(d2) + 1e-9))
    return float(d2[k])


def calibrate_threshold(labeled, transform: YeoJohnsonTransform,
                        gaussian: GaussianModel,
                        target_miss_rate: float = 0.02) -> float:
    """Decision threshold from labeled accents, allowing a miss fraction.

    ``labeled`` is an iterable of (accent vector or AccentFeatures,
    is_prominent).  Returns the largest threshold such that the fraction
    of labeled-prominent samples falling below it does not exceed
    ``target_miss_rate``.
    """
    pos = [
        f.as_vector() if isinstance(f, AccentFeatures) else np.asarray(f, dtype=np.float64)
        for f, flag in labeled
        if flag
    ]
    if not pos:
        raise NoPositiveLabels("no labeled-prominent samples")
    d2 = gaussian.mahalanobis_d2(transform.apply(np.vstack(pos)))
    return threshold_from_positive_d2(d2, target_miss_rate)


def fit_prominence_model(data, *, speaker_id: str = "", threshold_d2: float | None = None,
                         labeled=None, target_miss_rate: float = 0.02) -> ProminenceModel:
    """Fit transform + Gaussian on accent rows and pick a threshold.

    When ``labeled`` pairs are available the threshold is calibrated from
    them; otherwise ``threshold_d2`` (or 0.9, the middle of the reported
    user-dependent range) is used.
    """
    X = _as_accent_matrix(data) if not isinstance(data, np.ndarray) else np.atleast_2d(data)
    transform = fit_yeo_johnson(X)
    gaussian = fit_gaussian(transform.apply(X))
    if labeled is not None:
        thr = calibrate_threshold(labeled, transform, gaussian, target_miss_rate)
    else:
        thr = 0.9 if threshold_d2 is None else float(threshold_d2)
    return ProminenceModel(
        transform=transform, gaussian=gaussian, threshold_d2=thr, speaker_id=speaker_id
    )

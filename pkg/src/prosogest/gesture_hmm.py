"""Gesture-phoneme HMMs: training, scoring and continuous decoding.

Each of the six phoneme classes (preparation, point/contour/circle
strokes, hold, retraction) gets a left-to-right HMM with Gaussian
emissions over the 7-D kinematic feature vector.  Training is plain
Baum-Welch from a uniform-duration initialization; continuous streams
are decoded by token-passing Viterbi over a grammar network whose
class-exit arcs carry a configurable insertion penalty.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InsufficientExamples, SequenceTooShort
from .signal_io import read_json, write_json

VARIANCE_FLOOR = 1e-6
DEFAULT_INSERTION_PENALTY = -20.0


class PhonemeClass(Enum):
    """The six gesture phonemes."""

    PREPARATION = "Preparation"
    POINT_STROKE = "PointStroke"
    CONTOUR_STROKE = "ContourStroke"
    CIRCLE_STROKE = "CircleStroke"
    HOLD = "Hold"
    RETRACTION = "Retraction"

    @classmethod
    def from_name(cls, name: str) -> "PhonemeClass":
        for member in cls:
            if member.value == name:
                return member
        raise ValueError(f"unknown phoneme class {name!r}")


CLASS_ORDER = tuple(PhonemeClass)
STROKES = (
    PhonemeClass.POINT_STROKE,
    PhonemeClass.CONTOUR_STROKE,
    PhonemeClass.CIRCLE_STROKE,
)

# grammar: preparation leads into a stroke; strokes may chain or move to
# hold/retraction/preparation; holds resume strokes or retract; retraction
# returns to preparation.  Strongly connected over the six classes.
DEFAULT_GRAMMAR: dict[PhonemeClass, tuple[PhonemeClass, ...]] = {
    PhonemeClass.PREPARATION: STROKES,
    PhonemeClass.POINT_STROKE: STROKES
    + (PhonemeClass.HOLD, PhonemeClass.RETRACTION, PhonemeClass.PREPARATION),
    PhonemeClass.CONTOUR_STROKE: STROKES
    + (PhonemeClass.HOLD, PhonemeClass.RETRACTION, PhonemeClass.PREPARATION),
    PhonemeClass.CIRCLE_STROKE: STROKES
    + (PhonemeClass.HOLD, PhonemeClass.RETRACTION, PhonemeClass.PREPARATION),
    PhonemeClass.HOLD: STROKES + (PhonemeClass.RETRACTION,),
    PhonemeClass.RETRACTION: (PhonemeClass.PREPARATION,),
}


@dataclass(frozen=True)
class SegmentInterval:
    """One decoded (or reference) phoneme interval."""

    start: float
    end: float
    label: PhonemeClass
    log_likelihood: float = 0.0

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass
class PhonemeHmm:
    """Left-to-right HMM with Gaussian emissions for one phoneme class.

    ``covariances`` is (S, D) for diagonal emissions or (S, D, D) for full
    ones.  The entry state is always state 0.  ``training_log`` holds the
    per-iteration total log-likelihood of the last training run.
    """

    phoneme_class: PhonemeClass
    n_states: int
    transitions: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    covariance_type: str = "diag"
    training_log: list = field(default_factory=list, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def frame_log_likelihood(self, X) -> np.ndarray:
        """Per-frame, per-state emission log-densities, shape (T, S)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.covariance_type == "diag":
            var = self.covariances
            const = -0.5 * (self.dim * np.log(2 * np.pi) + np.sum(np.log(var), axis=1))
            diff = X[:, None, :] - self.means[None, :, :]
            quad = -0.5 * np.sum(diff**2 / var[None, :, :], axis=2)
            return quad + const[None, :]
        out = np.empty((X.shape[0], self.n_states))
        for s in range(self.n_states):
            cov = self.covariances[s]
            factor = cho_factor(cov, lower=True)
            logdet = 2.0 * np.sum(np.log(np.diag(factor[0])))
            diff = X - self.means[s]
            d2 = np.sum(diff * cho_solve(factor, diff.T).T, axis=1)
            out[:, s] = -0.5 * (self.dim * np.log(2 * np.pi) + logdet + d2)
        return out

    def to_dict(self) -> dict:
        doc = {
            "class": self.phoneme_class.value,
            "n_states": self.n_states,
            "transitions": self.transitions.tolist(),
            "means": self.means.tolist(),
            "variances": self.covariances.tolist(),
        }
        if self.covariance_type != "diag":
            doc["covariance_type"] = self.covariance_type
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PhonemeHmm":
        return cls(
            phoneme_class=PhonemeClass.from_name(doc["class"]),
            n_states=int(doc["n_states"]),
            transitions=np.asarray(doc["transitions"], dtype=np.float64),
            means=np.asarray(doc["means"], dtype=np.float64),
            covariances=np.asarray(doc["variances"], dtype=np.float64),
            covariance_type=doc.get("covariance_type", "diag"),
        )

    def save(self, path) -> None:
        write_json(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "PhonemeHmm":
        return cls.from_dict(read_json(path))


# ---------------------------------------------------------------------------
# training (Baum-Welch)
# ---------------------------------------------------------------------------

def _uniform_duration_init(phoneme_class, sequences, n_states, covariance_type):
    dim = sequences[0].shape[1]
    sums = np.zeros((n_states, dim))
    sqsums = np.zeros((n_states, dim))
    counts = np.zeros(n_states)
    for seq in sequences:
        bounds = np.linspace(0, len(seq), n_states + 1).astype(int)
        for s in range(n_states):
            chunk = seq[bounds[s] : max(bounds[s] + 1, bounds[s + 1])]
            sums[s] += chunk.sum(axis=0)
            sqsums[s] += (chunk**2).sum(axis=0)
            counts[s] += len(chunk)
    means = sums / counts[:, None]
    variances = np.maximum(sqsums / counts[:, None] - means**2, VARIANCE_FLOOR)

    mean_len = np.mean([len(s) for s in sequences])
    dwell = max(2.0, mean_len / n_states)
    stay = 1.0 - 1.0 / dwell
    transitions = np.zeros((n_states, n_states))
    for s in range(n_states - 1):
        transitions[s, s] = stay
        transitions[s, s + 1] = 1.0 - stay
    transitions[-1, -1] = 1.0

    if covariance_type == "full":
        cov = np.array([np.diag(v) for v in variances])
    else:
        cov = variances
    return PhonemeHmm(
        phoneme_class=phoneme_class,
        n_states=n_states,
        transitions=transitions,
        means=means,
        covariances=cov,
        covariance_type=covariance_type,
    )


def _forward_backward(logB: np.ndarray, A: np.ndarray):
    """Scaled forward-backward for a left-to-right HMM starting in state 0.

    Returns (gamma, xi_sum, log_likelihood).  Emission columns are shifted
    by their per-frame maximum before scaling so extreme log-densities
    cannot underflow.
    """
    T, S = logB.shape
    shift = logB.max(axis=1)
    B = np.exp(logB - shift[:, None])

    alpha = np.zeros((T, S))
    scales = np.zeros(T)
    alpha[0, 0] = B[0, 0]
    scales[0] = alpha[0].sum()
    alpha[0] /= scales[0]
    for t in range(1, T):
        a = (alpha[t - 1] @ A) * B[t]
        scales[t] = a.sum()
        alpha[t] = a / scales[t]

    beta = np.zeros((T, S))
    beta[-1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[t] = (A @ (B[t + 1] * beta[t + 1])) / scales[t + 1]

    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)

    xi_sum = np.zeros((S, S))
    for t in range(T - 1):
        xi = (alpha[t][:, None] * A) * (B[t + 1] * beta[t + 1])[None, :]
        xi_sum += xi / scales[t + 1]

    ll = float(np.sum(np.log(scales)) + np.sum(shift))
    return gamma, xi_sum, ll


def train_hmm(phoneme_class: PhonemeClass, examples, n_states: int, *,
              covariance_type: str = "diag", max_iterations: int = 100,
              tolerance: float = 1e-4, min_examples: int = 10) -> PhonemeHmm:
    """Fit a left-to-right HMM by Baum-Welch.

    Starts from a uniform-duration initialization and iterates until the
    total log-likelihood improves by less than ``tolerance`` per
    observation or ``max_iterations`` is reached.  The per-iteration
    log-likelihoods (non-decreasing by the EM guarantee) are recorded in
    ``training_log``.
    """
    sequences = [np.atleast_2d(np.asarray(x, dtype=np.float64)) for x in examples]
    if len(sequences) < min_examples:
        raise InsufficientExamples(
            f"{phoneme_class.value}: need >= {min_examples} examples, got {len(sequences)}"
        )
    for i, seq in enumerate(sequences):
        if len(seq) < n_states:
            raise SequenceTooShort(
                f"{phoneme_class.value}: example {i} has {len(seq)} frames < {n_states} states"
            )

    hmm = _uniform_duration_init(phoneme_class, sequences, n_states, covariance_type)
    n_obs = sum(len(s) for s in sequences)
    dim = hmm.dim
    history: list[float] = []
    prev_ll = -np.inf

    for _ in range(max_iterations):
        trans_acc = np.zeros((n_states, n_states))
        gamma_tot = np.zeros(n_states)
        wsum_x = np.zeros((n_states, dim))
        if covariance_type == "full":
            wsum_outer = np.zeros((n_states, dim, dim))
        else:
            wsum_x2 = np.zeros((n_states, dim))
        total_ll = 0.0

        for seq in sequences:
            logB = hmm.frame_log_likelihood(seq)
            gamma, xi_sum, ll = _forward_backward(logB, hmm.transitions)
            total_ll += ll
            trans_acc += xi_sum
            gamma_tot += gamma.sum(axis=0)
            wsum_x += gamma.T @ seq
            if covariance_type == "full":
                for s in range(n_states):
                    diff = seq - hmm.means[s]
                    wsum_outer[s] += (gamma[:, s][:, None] * diff).T @ diff
            else:
                wsum_x2 += gamma.T @ seq**2

        history.append(total_ll)

        # M step
        new_trans = hmm.transitions.copy()
        row_tot = trans_acc.sum(axis=1)
        ok = row_tot > 0
        new_trans[ok] = trans_acc[ok] / row_tot[ok, None]
        new_means = hmm.means.copy()
        occupied = gamma_tot > 1e-12
        new_means[occupied] = wsum_x[occupied] / gamma_tot[occupied, None]
        if covariance_type == "full":
            new_cov = hmm.covariances.copy()
            for s in range(n_states):
                if occupied[s]:
                    mu = new_means[s]
                    shift = hmm.means[s] - mu
                    cov = wsum_outer[s] / gamma_tot[s] - np.outer(shift, shift)
                    new_cov[s] = cov + VARIANCE_FLOOR * np.eye(dim)
        else:
            new_cov = hmm.covariances.copy()
            new_cov[occupied] = np.maximum(
                wsum_x2[occupied] / gamma_tot[occupied, None] - new_means[occupied] ** 2,
                VARIANCE_FLOOR,
            )
        hmm = PhonemeHmm(
            phoneme_class=phoneme_class,
            n_states=n_states,
            transitions=new_trans,
            means=new_means,
            covariances=new_cov,
            covariance_type=covariance_type,
        )

        if (total_ll - prev_ll) / n_obs < tolerance:
            prev_ll = total_ll
            break
        prev_ll = total_ll

    hmm.training_log = history
    return hmm


# ---------------------------------------------------------------------------
# Viterbi scoring
# ---------------------------------------------------------------------------

def _log_transitions(A: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(A)


def viterbi_log_likelihood(hmm: PhonemeHmm, seq) -> float:
    """Log-probability of the single best state path (entry in state 0)."""
    logB = hmm.frame_log_likelihood(seq)
    logA = _log_transitions(hmm.transitions)
    delta = np.full(hmm.n_states, -np.inf)
    delta[0] = logB[0, 0]
    for t in range(1, len(logB)):
        delta = logB[t] + (delta[:, None] + logA).max(axis=0)
    return float(delta.max())


def viterbi_scores_all_starts(hmm: PhonemeHmm, logB: np.ndarray,
                              max_len: int) -> np.ndarray:
    """Best-path scores for every (start, length) candidate segment.

    ``M[a, d]`` is the Viterbi log-likelihood of frames ``a .. a + d``
    (length d + 1), or -inf where the segment would run off the stream.
    Exploits the left-to-right band (self + next transitions only).
    """
    T = logB.shape[0]
    S = hmm.n_states
    logA = _log_transitions(hmm.transitions)
    diag = np.diag(logA)
    up = np.full(S, -np.inf)
    if S > 1:
        up[1:] = logA[np.arange(S - 1), np.arange(1, S)]

    M = np.full((T, max_len), -np.inf)
    V = np.full((T, S), -np.inf)
    V[:, 0] = logB[:, 0]
    M[:, 0] = V.max(axis=1)
    for d in range(1, max_len):
        stay = V + diag[None, :]
        move = np.full_like(V, -np.inf)
        if S > 1:
            move[:, 1:] = V[:, :-1] + up[None, 1:]
        V = np.maximum(stay, move)
        n_valid = T - d
        if n_valid <= 0:
            break
        V[:n_valid] += logB[d:]
        V[n_valid:] = -np.inf
        M[:n_valid, d] = V[:n_valid].max(axis=1)
    return M


# ---------------------------------------------------------------------------
# phoneme network and continuous decoding
# ---------------------------------------------------------------------------

@dataclass
class PhonemeNetwork:
    """Per-class HMMs plus the inter-phoneme transition graph."""

    hmms: dict[PhonemeClass, PhonemeHmm]
    grammar: dict[PhonemeClass, tuple[PhonemeClass, ...]] = field(
        default_factory=lambda: dict(DEFAULT_GRAMMAR)
    )
    insertion_penalty: float = DEFAULT_INSERTION_PENALTY

    def __post_init__(self):
        self.classes = tuple(c for c in CLASS_ORDER if c in self.hmms)
        _check_strongly_connected(self.grammar, self.classes)

    def predecessors(self, target: PhonemeClass) -> tuple[PhonemeClass, ...]:
        return tuple(
            c for c in self.classes if target in self.grammar.get(c, ())
        )

    def save(self, path) -> None:
        write_json(
            {
                "insertion_penalty": self.insertion_penalty,
                "transitions": {
                    c.value: [s.value for s in succ]
                    for c, succ in self.grammar.items()
                },
            },
            path,
        )

    @classmethod
    def load(cls, path, hmms) -> "PhonemeNetwork":
        doc = read_json(path)
        grammar = {
            PhonemeClass.from_name(c): tuple(PhonemeClass.from_name(s) for s in succ)
            for c, succ in doc["transitions"].items()
        }
        return cls(
            hmms=hmms,
            grammar=grammar,
            insertion_penalty=float(doc["insertion_penalty"]),
        )


def _check_strongly_connected(grammar, classes) -> None:
    def reachable(start, edges):
        seen = {start}
        stack = [start]
        while stack:
            node = stack.pop()
            for nxt in edges.get(node, ()):
                if nxt in classes and nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen

    if not classes:
        raise ValueError("network has no classes")
    start = classes[0]
    reverse: dict[PhonemeClass, list[PhonemeClass]] = {c: [] for c in classes}
    for c in classes:
        for nxt in grammar.get(c, ()):
            if nxt in reverse:
                reverse[nxt].append(c)
    fwd = reachable(start, grammar)
    bwd = reachable(start, reverse)
    if not (set(classes) <= fwd and set(classes) <= bwd):
        raise ValueError("phoneme grammar is not strongly connected")


def decode_stream(network: PhonemeNetwork, features) -> list[SegmentInterval]:
    """Token-passing Viterbi over the concatenated phoneme network.

    Class-exit arcs (from each HMM's final state into a grammar-allowed
    successor's entry state) carry the insertion penalty.  Any class may
    start the stream.  Returns contiguous intervals tiling the decoded
    span; each interval's log-likelihood is the within-class Viterbi
    score of its frames.
    """
    times = np.asarray(features.times, dtype=np.float64)
    X = np.asarray(features.values, dtype=np.float64)
    T = len(X)
    if T < 2:
        raise ValueError("stream must have at least 2 frames")
    dt = float(np.median(np.diff(times)))

    classes = network.classes
    hmms = [network.hmms[c] for c in classes]
    sizes = [h.n_states for h in hmms]
    offsets = np.cumsum([0] + sizes[:-1])
    total = int(np.sum(sizes))

    logB = np.concatenate([h.frame_log_likelihood(X) for h in hmms], axis=1)
    diag = np.full(total, -np.inf)
    up = np.full(total, -np.inf)
    for h, off in zip(hmms, offsets):
        logA = _log_transitions(h.transitions)
        s = h.n_states
        diag[off : off + s] = np.diag(logA)
        if s > 1:
            up[off + 1 : off + s] = logA[np.arange(s - 1), np.arange(1, s)]
    entry = np.array([off for off in offsets])
    exit_ = np.array([off + s - 1 for off, s in zip(offsets, sizes)])
    preds = [
        [ci for ci, c in enumerate(classes) if classes[ti] in network.grammar.get(c, ())]
        for ti in range(len(classes))
    ]

    delta = np.full(total, -np.inf)
    delta[entry] = logB[0, entry]
    back = np.zeros((T, total), dtype=np.int32)
    back[0] = np.arange(total)

    for t in range(1, T):
        stay = delta + diag
        move = np.full(total, -np.inf)
        move[1:] = delta[:-1] + up[1:]
        new = stay.copy()
        bp = np.arange(total, dtype=np.int32)
        better = move > new
        new[better] = move[better]
        bp[better] = bp[better] - 1

        exit_scores = delta[exit_] + network.insertion_penalty
        for ti in range(len(classes)):
            if not preds[ti]:
                continue
            cand = exit_scores[preds[ti]]
            j = int(np.argmax(cand))
            if cand[j] > new[entry[ti]]:
                new[entry[ti]] = cand[j]
                bp[entry[ti]] = exit_[preds[ti][j]]

        delta = new + logB[t]
        back[t] = bp

    state = int(np.argmax(delta))
    path = np.zeros(T, dtype=np.int32)
    path[-1] = state
    for t in range(T - 1, 0, -1):
        state = back[t][state]
        path[t - 1] = state

    class_idx = np.searchsorted(offsets, path, side="right") - 1
    intervals = []
    run_start = 0
    for t in range(1, T + 1):
        if t == T or class_idx[t] != class_idx[run_start]:
            c = classes[class_idx[run_start]]
            seg = X[run_start:t]
            intervals.append(
                SegmentInterval(
                    start=float(times[run_start]),
                    end=float(times[t - 1] + dt),
                    label=c,
                    log_likelihood=viterbi_log_likelihood(network.hmms[c], seg),
                )
            )
            run_start = t
    return intervals

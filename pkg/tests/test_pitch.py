"""Pitch extraction, contour preprocessing and voiced-segment slicing."""

import numpy as np
import pytest

from prosogest.errors import AudioTooShort
from prosogest.pitch import (
    PitchConfig,
    PitchContour,
    extract_f0,
    preprocess_contour,
    segment_contour,
)
from prosogest.signal_io import AudioBuffer


def sine_buffer(freq, duration=1.0, sr=16000, amp=0.6):
    t = np.arange(int(duration * sr)) / sr
    return AudioBuffer(samples=amp * np.sin(2 * np.pi * freq * t), sample_rate=sr)


def zero_crossing_f0(buf: AudioBuffer) -> float:
    """Independent F0 oracle for a clean periodic signal."""
    s = buf.samples
    crossings = np.sum((s[:-1] < 0) & (s[1:] >= 0))
    return crossings / buf.duration


def spectral_flatness(x: np.ndarray, n_blocks: int = 32) -> float:
    """Geometric / arithmetic mean of a block-averaged PSD.

    Averaging tames the chi-square scatter of single periodogram bins;
    white noise then scores near 1 while any tone pulls the ratio down.
    """
    block = len(x) // n_blocks
    psd = np.mean(
        [np.abs(np.fft.rfft(x[i * block : (i + 1) * block])) ** 2 for i in range(n_blocks)],
        axis=0,
    )[1:]
    return np.exp(np.mean(np.log(psd + 1e-30))) / np.mean(psd)


def make_contour(f0_values, hop=0.01):
    f0 = np.asarray(f0_values, dtype=np.float64)
    strength = np.where(np.isnan(f0), np.nan, 0.9)
    return PitchContour(f0=f0, strength=strength, hop=hop, f0_floor=75.0, f0_ceiling=600.0)


class TestExtractF0:
    def test_pure_sine_200(self):
        """All voiced frames of a 200 Hz sine land within 1%."""
        buf = sine_buffer(200.0)
        oracle = zero_crossing_f0(buf)
        assert abs(oracle - 200.0) < 2.0  # trust the synthetic signal first
        contour = extract_f0(buf)
        voiced = contour.voiced
        assert voiced.mean() > 0.9
        f0 = contour.f0[voiced]
        assert np.all(f0 >= 198.0)
        assert np.all(f0 <= 202.0)

    @pytest.mark.parametrize("freq", [100.0, 150.0, 200.0, 300.0])
    def test_frequency_shift_equivariance(self, freq):
        contour = extract_f0(sine_buffer(freq))
        f0 = contour.f0[contour.voiced]
        assert len(f0) > 50
        assert np.all(np.abs(f0 - freq) <= 0.01 * freq)

    def test_white_noise_mostly_unvoiced(self):
        rng = np.random.default_rng(123)
        x = 0.5 * rng.uniform(-1, 1, 16000)
        # verify aperiodicity before trusting the assertion
        assert spectral_flatness(x) > 0.8
        contour = extract_f0(AudioBuffer(samples=x, sample_rate=16000))
        assert (~contour.voiced).mean() >= 0.95

    def test_all_zero_unvoiced(self):
        contour = extract_f0(AudioBuffer(samples=np.zeros(16000), sample_rate=16000))
        assert not contour.voiced.any()

    def test_too_short(self):
        with pytest.raises(AudioTooShort):
            extract_f0(AudioBuffer(samples=np.zeros(1000), sample_rate=16000))

    def test_voiced_within_range(self):
        contour = extract_f0(sine_buffer(200.0))
        f0 = contour.f0[contour.voiced]
        assert np.all(f0 >= contour.f0_floor)
        assert np.all(f0 <= contour.f0_ceiling)
        strength = contour.strength[contour.voiced]
        assert np.all((strength >= 0) & (strength <= 1))

    def test_frame_times_on_hop_grid(self):
        contour = extract_f0(sine_buffer(150.0))
        np.testing.assert_allclose(
            contour.times, np.arange(len(contour)) * contour.hop
        )


class TestPreprocessContour:
    def test_small_gap_small_jump_fills(self):
        """0.015 s gap between 150 and 155 Hz is interpolated."""
        f0 = [150.0] * 4 + [np.nan] * 3 + [155.0] * 4
        out = preprocess_contour(make_contour(f0, hop=0.005))
        assert out.voiced.all()
        np.testing.assert_allclose(out.f0[4:7], [151.25, 152.5, 153.75])
        assert len(segment_contour(out)) == 1

    def test_large_jump_untouched(self):
        """25 Hz differential blocks the fill."""
        f0 = [150.0] * 4 + [np.nan] * 3 + [175.0] * 4
        out = preprocess_contour(make_contour(f0, hop=0.005))
        assert np.isnan(out.f0[4:7]).all()
        assert len(segment_contour(out)) == 2

    def test_long_gap_untouched(self):
        """0.03 s gap stays even with a 2 Hz differential."""
        f0 = [150.0] * 4 + [np.nan] * 6 + [152.0] * 4
        out = preprocess_contour(make_contour(f0, hop=0.005))
        assert np.isnan(out.f0[4:10]).all()

    def test_boundary_gaps_untouched(self):
        f0 = [np.nan] * 2 + [150.0] * 4 + [np.nan] * 2
        out = preprocess_contour(make_contour(f0, hop=0.005))
        assert np.isnan(out.f0[:2]).all()
        assert np.isnan(out.f0[-2:]).all()

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        f0 = rng.uniform(100, 200, 200)
        f0[rng.uniform(size=200) < 0.3] = np.nan
        contour = make_contour(f0, hop=0.01)
        once = preprocess_contour(contour)
        twice = preprocess_contour(once)
        np.testing.assert_array_equal(once.f0, twice.f0)
        np.testing.assert_array_equal(once.strength, twice.strength)


class TestSegmentContour:
    def test_two_runs(self):
        """Voiced on [0, 0.5] and [0.8, 1.0] gives two segments at those bounds."""
        hop = 0.01
        n = 101
        f0 = np.full(n, np.nan)
        f0[0:50] = 120.0
        f0[80:100] = 140.0
        segs = segment_contour(make_contour(f0, hop=hop))
        assert len(segs) == 2
        assert segs[0].start == pytest.approx(0.0, abs=hop)
        assert segs[0].end == pytest.approx(0.5, abs=hop)
        assert segs[1].start == pytest.approx(0.8, abs=hop)
        assert segs[1].end == pytest.approx(1.0, abs=hop)

    def test_fully_unvoiced(self):
        segs = segment_contour(make_contour([np.nan] * 20))
        assert segs == []

    def test_single_frame_segment(self):
        f0 = [np.nan, 150.0, np.nan]
        segs = segment_contour(make_contour(f0, hop=0.01))
        assert len(segs) == 1
        assert segs[0].duration == pytest.approx(0.01)

    def test_derived_fields_and_tiebreak(self):
        f0 = [100.0, 140.0, 120.0, 140.0, 110.0]
        segs = segment_contour(make_contour(f0, hop=0.01))
        seg = segs[0]
        assert seg.f0_max == 140.0
        assert seg.f0_min == 100.0
        assert seg.f0_first == 100.0
        assert seg.f0_last == 110.0
        assert seg.t_of_max == pytest.approx(0.01)  # earliest of the two maxima
        assert seg.t_of_min == pytest.approx(0.0)

    def test_partition_property(self):
        """Segments cover exactly the voiced frames, disjointly."""
        rng = np.random.default_rng(17)
        f0 = rng.uniform(90, 300, 300)
        f0[rng.uniform(size=300) < 0.4] = np.nan
        contour = make_contour(f0, hop=0.01)
        segs = segment_contour(contour)
        covered = np.zeros(len(f0), dtype=int)
        for seg in segs:
            i0 = int(round(seg.start / contour.hop))
            covered[i0 : i0 + len(seg)] += 1
        assert np.all(covered[contour.voiced] == 1)
        assert np.all(covered[~contour.voiced] == 0)

"""Audio / trajectory loaders and the JSON-lines record format."""

import struct
import wave

import numpy as np
import pytest

from prosogest.errors import (
    CorruptHeader,
    EmptyAudio,
    MalformedRow,
    NonMonotonicTime,
    NonUniformRate,
    UnsupportedFormat,
)
from prosogest.signal_io import (
    AudioBuffer,
    TrajectoryTrack,
    load_audio,
    load_trajectory,
    read_phoneme_records,
    write_audio,
    write_phoneme_records,
    write_trajectory,
)


def _write_wav(path, samples_int16, sample_rate=16000, channels=1):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(np.asarray(samples_int16, dtype="<i2").tobytes())


class TestLoadAudio:
    def test_silence(self, tmp_path):
        """1 s of 16 kHz silence loads as 16000 zero samples."""
        path = tmp_path / "silence.wav"
        _write_wav(path, np.zeros(16000, dtype=np.int16))
        buf = load_audio(path)
        assert len(buf.samples) == 16000
        assert buf.sample_rate == 16000
        assert np.all(buf.samples == 0.0)

    def test_stereo_averages_to_mono(self, tmp_path):
        """Channels at +0.5 / -0.5 cancel to an all-zero mono buffer."""
        path = tmp_path / "stereo.wav"
        left = np.full(8000, 16384, dtype=np.int16)
        right = np.full(8000, -16384, dtype=np.int16)
        interleaved = np.column_stack([left, right]).ravel()
        _write_wav(path, interleaved, channels=2)
        buf = load_audio(path)
        assert len(buf.samples) == 8000
        np.testing.assert_array_equal(buf.samples, 0.0)

    def test_too_short_raises(self, tmp_path):
        path = tmp_path / "short.wav"
        _write_wav(path, np.zeros(800, dtype=np.int16))  # 0.05 s
        with pytest.raises(EmptyAudio):
            load_audio(path)

    def test_corrupt_header(self, tmp_path):
        path = tmp_path / "garbage.wav"
        path.write_bytes(b"this is not a wav file at all, not even close")
        with pytest.raises(CorruptHeader):
            load_audio(path)

    def test_non_pcm_rejected(self, tmp_path):
        """An IEEE-float format tag is not PCM and must be refused."""
        path = tmp_path / "float.wav"
        data = np.zeros(4000, dtype="<f4").tobytes()
        hdr = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
        fmt = struct.pack("<HHIIHH", 3, 1, 16000, 64000, 4, 32)  # tag 3 = float
        path.write_bytes(
            hdr + b"fmt " + struct.pack("<I", 16) + fmt
            + b"data" + struct.pack("<I", len(data)) + data
        )
        with pytest.raises(UnsupportedFormat):
            load_audio(path)

    def test_8bit_rejected(self, tmp_path):
        path = tmp_path / "8bit.wav"
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(1)
            wf.setframerate(16000)
            wf.writeframes(bytes(16000))
        with pytest.raises(UnsupportedFormat):
            load_audio(path)

    def test_deterministic(self, tmp_path):
        path = tmp_path / "tone.wav"
        rng = np.random.default_rng(7)
        _write_wav(path, (rng.normal(0, 3000, 16000)).astype(np.int16))
        a = load_audio(path)
        b = load_audio(path)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_unit_range(self, tmp_path):
        path = tmp_path / "full.wav"
        _write_wav(path, np.array([32767, -32768] * 2000, dtype=np.int16))
        buf = load_audio(path)
        assert np.all(buf.samples >= -1.0)
        assert np.all(buf.samples <= 1.0)

    def test_roundtrip_write_load(self, tmp_path):
        rng = np.random.default_rng(11)
        samples = np.round(rng.uniform(-0.9, 0.9, 4000) * 32768) / 32768
        buf = AudioBuffer(samples=samples, sample_rate=16000)
        path = tmp_path / "rt.wav"
        write_audio(buf, path)
        again = load_audio(path)
        np.testing.assert_allclose(again.samples, samples, atol=1 / 32768)


class TestLoadTrajectory:
    def _write(self, path, text):
        path.write_text(text)
        return path

    def test_frame_rate_from_spacing(self, tmp_path):
        """Rows at 0.00 / 0.04 / 0.08 give 25 Hz."""
        p = self._write(
            tmp_path / "t.csv",
            "t,hand_x,hand_y,head_x,head_y\n"
            "0.00,0.1,0.2,0.5,0.2\n0.04,0.1,0.2,0.5,0.2\n0.08,0.1,0.2,0.5,0.2\n",
        )
        track = load_trajectory(p)
        assert track.frame_rate == pytest.approx(25.0, abs=1e-6)
        assert len(track) == 3

    def test_non_monotonic(self, tmp_path):
        p = self._write(
            tmp_path / "t.csv",
            "t,hand_x,hand_y,head_x,head_y\n"
            "0.0,0,0,0,0\n0.04,0,0,0,0\n0.03,0,0,0,0\n",
        )
        with pytest.raises(NonMonotonicTime):
            load_trajectory(p)

    def test_malformed_row(self, tmp_path):
        p = self._write(
            tmp_path / "t.csv",
            "t,hand_x,hand_y,head_x,head_y\n0.0,a,b,c,d\n",
        )
        with pytest.raises(MalformedRow):
            load_trajectory(p)

    def test_wrong_header(self, tmp_path):
        p = self._write(tmp_path / "t.csv", "time,x,y,hx,hy\n0,0,0,0,0\n")
        with pytest.raises(MalformedRow):
            load_trajectory(p)

    def test_jitter_rejected(self, tmp_path):
        p = self._write(
            tmp_path / "t.csv",
            "t,hand_x,hand_y,head_x,head_y\n"
            "0.000000,0,0,0,0\n0.040000,0,0,0,0\n0.080100,0,0,0,0\n",
        )
        with pytest.raises(NonUniformRate):
            load_trajectory(p)

    def test_roundtrip_bit_exact(self, tmp_path):
        """6-decimal values survive a write/load cycle without change."""
        rng = np.random.default_rng(3)
        n = 50
        times = np.round(np.arange(n) * 0.04, 6)
        hand = np.round(rng.uniform(0, 1, (n, 2)), 6)
        head = np.round(rng.uniform(0, 1, (n, 2)), 6)
        track = TrajectoryTrack(times=times, hand=hand, head=head, frame_rate=25.0)
        path = tmp_path / "rt.csv"
        write_trajectory(track, path)
        again = load_trajectory(path)
        np.testing.assert_array_equal(again.times, times)
        np.testing.assert_array_equal(again.hand, hand)
        np.testing.assert_array_equal(again.head, head)


class TestPhonemeRecords:
    def test_roundtrip(self, tmp_path):
        records = [
            {
                "start_s": 0.0,
                "end_s": 0.52,
                "label": "Preparation",
                "log_likelihood": -12.5,
                "prior": 0.3,
                "posterior": 0.8,
            },
            {
                "start_s": 0.52,
                "end_s": 1.0,
                "label": "PointStroke",
                "log_likelihood": None,
                "prior": None,
                "posterior": None,
            },
        ]
        path = tmp_path / "seg.jsonl"
        write_phoneme_records(records, path)
        assert read_phoneme_records(path) == records

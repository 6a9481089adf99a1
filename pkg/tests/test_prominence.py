"""Accent features, Yeo-Johnson transform, Gaussian model and threshold."""

import numpy as np
import pytest

from prosogest.errors import (
    DegenerateDimension,
    DimensionMismatch,
    InsufficientData,
    NoPositiveLabels,
    TooFewSamples,
)
from prosogest.pitch import PitchContour, segment_contour
from prosogest.prominence import (
    AccentFeatures,
    GaussianModel,
    ProminenceModel,
    YeoJohnsonTransform,
    accent_matrix,
    calibrate_threshold,
    classify_prominent,
    compute_accents,
    fit_gaussian,
    fit_prominence_model,
    fit_yeo_johnson,
    mahalanobis_d2,
    max_gradient,
    threshold_from_positive_d2,
    yeo_johnson,
)


def segments_from(f0_runs, hop=0.01):
    """Build F0Segments from a list of (start_index, [f0 values])."""
    n = max(i + len(v) for i, v in f0_runs) + 1
    f0 = np.full(n, np.nan)
    for i, values in f0_runs:
        f0[i : i + len(values)] = values
    contour = PitchContour(
        f0=f0, strength=np.where(np.isnan(f0), np.nan, 0.8),
        hop=hop, f0_floor=75.0, f0_ceiling=600.0,
    )
    return segment_contour(contour)


class TestComputeAccents:
    def test_pause_times_differential(self):
        """Pause 0.3 s and max differential 60 Hz give xi_max = 18."""
        # previous segment ends at 1.0 s with f0 150->120; next starts at 1.3 s
        segs = segments_from(
            [(90, [150.0] * 9 + [120.0]), (130, [130.0, 180.0, 150.0])]
        )
        feats = compute_accents(segs)
        assert feats[1].xi_max == pytest.approx(0.3 * (180.0 - 120.0))

    def test_negative_differential_for_minimum(self):
        segs = segments_from(
            [(90, [150.0] * 9 + [120.0]), (130, [130.0, 180.0, 110.0])]
        )
        feats = compute_accents(segs)
        assert feats[1].xi_min == pytest.approx(0.3 * (110.0 - 120.0))

    def test_abutting_segments_zero(self):
        """Zero pause multiplies any differential away."""
        from prosogest.pitch import F0Segment

        def seg(start, values, hop=0.01):
            v = np.asarray(values)
            t = start + np.arange(len(v)) * hop
            return F0Segment(
                start=start, end=float(t[-1] + hop), times=t, f0=v,
                f0_max=float(v.max()), f0_min=float(v.min()),
                f0_first=float(v[0]), f0_last=float(v[-1]),
                t_of_max=float(t[np.argmax(v)]), t_of_min=float(t[np.argmin(v)]),
            )

        a = seg(0.0, [150.0] * 10)
        b = seg(a.end, [170.0, 190.0, 160.0])  # abuts exactly
        feats = compute_accents([a, b])
        assert feats[1].xi_max == pytest.approx(0.0)
        assert feats[1].xi_min == pytest.approx(0.0)

    def test_first_segment_uses_stream_start(self):
        segs = segments_from([(50, [120.0, 160.0, 130.0])])
        feats = compute_accents(segs, stream_start=0.0)
        # pause 0.5, differential against its own onset value
        assert feats[0].xi_max == pytest.approx(0.5 * (160.0 - 120.0))

    def test_empty_input(self):
        assert compute_accents([]) == []

    def test_gradient_magnitude_nonnegative(self):
        segs = segments_from([(0, list(np.linspace(200, 100, 30)))])
        feats = compute_accents(segs)
        assert feats[0].xi_dot_max >= 0


class TestMaxGradient:
    def test_constant_series_zero(self):
        t = np.arange(20) * 0.01
        mag, _ = max_gradient(np.full(20, 150.0), t, sigma=0.8)
        assert mag == pytest.approx(0.0, abs=1e-9)

    def test_linear_ramp_slope(self):
        """100 -> 200 Hz over 1 s at 100 Hz sampling: slope 100 Hz/s."""
        t = np.arange(101) * 0.01
        y = 100.0 + 100.0 * t
        oracle = np.max(np.abs(np.gradient(y, t)))  # central differences
        assert oracle == pytest.approx(100.0, abs=1e-9)
        mag, _ = max_gradient(y, t, sigma=0.8)
        assert mag == pytest.approx(100.0, abs=1.0)

    def test_step_edge_time(self):
        t = np.arange(101) * 0.01
        y = np.where(t < 0.5, 100.0, 200.0)
        fd = np.abs(np.diff(y))
        oracle_t = t[int(np.argmax(fd))]
        sigma = 0.8
        mag, when = max_gradient(y, t, sigma=sigma)
        assert abs(when - 0.5) <= 2 * sigma * 0.01 + 1e-9
        assert abs(when - oracle_t) <= 2 * sigma * 0.01 + 1e-9
        assert mag > 0

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            max_gradient([1.0, 2.0], [0.0, 0.01], sigma=0.8)


class TestYeoJohnson:
    def test_identity_at_lambda_one(self):
        y = np.linspace(-5, 5, 41)
        np.testing.assert_allclose(yeo_johnson(y, 1.0), y, atol=1e-12)

    def test_log_branch_at_zero(self):
        assert yeo_johnson(np.array([np.e - 1.0]), 0.0)[0] == pytest.approx(1.0)

    def test_negative_log_branch_at_two(self):
        assert yeo_johnson(np.array([-(np.e - 1.0)]), 2.0)[0] == pytest.approx(-1.0)

    @pytest.mark.parametrize("special", [0.0, 2.0])
    def test_continuity_at_special_lambdas(self, special):
        """Approach the special exponents along a sequence; gap shrinks below 1e-9."""
        y = np.array([-0.9, -0.4, 0.0, 0.5, 1.5])
        exact = yeo_johnson(y, special)
        for eps in [1e-5, 1e-7, 1e-9]:
            for lam in (special - eps, special + eps):
                diff = np.max(np.abs(yeo_johnson(y, lam) - exact))
                assert diff <= 10 * eps
        lam = special + 1e-9
        assert np.max(np.abs(yeo_johnson(y, lam) - exact)) < 1e-9

    def test_monotone_in_y(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            lam = rng.uniform(-2, 2)
            y1, y2 = np.sort(rng.uniform(-10, 10, 2))
            if y1 == y2:
                continue
            a, b = yeo_johnson(np.array([y1, y2]), lam)
            assert a < b

    def test_continuity_at_y_zero(self):
        for lam in [-1.3, 0.0, 0.7, 2.0]:
            vals = yeo_johnson(np.array([-1e-12, 0.0, 1e-12]), lam)
            assert np.max(np.abs(vals)) < 1e-9


class TestFitYeoJohnson:
    def test_normalizes_skewed_data(self):
        rng = np.random.default_rng(0)
        X = rng.lognormal(0.0, 0.8, size=(500, 1))
        tf = fit_yeo_johnson(X)
        z = tf.apply(X)[:, 0]

        def skew(v):
            v = v - v.mean()
            return np.mean(v**3) / np.mean(v**2) ** 1.5

        assert abs(skew(z)) < abs(skew(X[:, 0]))

    def test_degenerate_dimension(self):
        X = np.column_stack([np.ones(20), np.arange(20.0)])
        with pytest.raises(DegenerateDimension):
            fit_yeo_johnson(X)

    def test_too_few_rows(self):
        with pytest.raises(InsufficientData):
            fit_yeo_johnson(np.random.default_rng(1).normal(size=(5, 3)))

    def test_gaussian_data_lambda_near_one(self):
        rng = np.random.default_rng(9)
        X = rng.normal(0, 1, size=(2000, 1))
        tf = fit_yeo_johnson(X)
        assert abs(tf.lambdas[0] - 1.0) < 0.25


class TestGaussianModel:
    def test_mean_of_four_rows(self):
        X = np.array([[0, 0, 0], [2, 2, 2], [0, 2, 0], [2, 0, 2]], dtype=float)
        g = fit_gaussian(X)
        np.testing.assert_allclose(g.mean, [1.0, 1.0, 1.0])

    def test_seeded_standard_normal(self):
        rng = np.random.default_rng(77)
        X = rng.normal(0, 1, size=(100, 3))
        # oracle: direct mean / covariance on the same sample
        np.testing.assert_allclose(fit_gaussian(X).mean, X.mean(axis=0))
        g = fit_gaussian(X)
        assert np.linalg.norm(g.mean) < 0.5
        assert np.all(np.diag(g.covariance) > 0.5)
        assert np.all(np.diag(g.covariance) < 1.5)

    def test_insufficient_rows(self):
        with pytest.raises(InsufficientData):
            fit_gaussian(np.zeros((3, 3)))

    def test_covariance_spd(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(50, 4)) @ np.diag([1, 1e-3, 1, 1e-3])
        g = fit_gaussian(X)
        assert np.all(np.linalg.eigvalsh(g.covariance) > 0)


class TestMahalanobis:
    def test_zero_at_mean(self):
        g = GaussianModel([1.0, 2.0, 3.0], np.eye(3))
        assert mahalanobis_d2(np.array([1.0, 2.0, 3.0]), g) == pytest.approx(0.0)

    def test_unit_offset_identity_cov(self):
        g = GaussianModel(np.zeros(3), np.eye(3))
        assert mahalanobis_d2(np.array([1.0, 0.0, 0.0]), g) == pytest.approx(1.0)

    def test_diag_scaling(self):
        g = GaussianModel(np.zeros(3), np.diag([4.0, 1.0, 1.0]))
        assert mahalanobis_d2(np.array([2.0, 0.0, 0.0]), g) == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        g = GaussianModel(np.zeros(3), np.eye(3))
        with pytest.raises(DimensionMismatch):
            mahalanobis_d2(np.zeros(4), g)

    def test_affine_invariance(self):
        """d2 under the analytically transformed Gaussian is unchanged."""
        rng = np.random.default_rng(31)
        X = rng.normal(size=(200, 3)) @ np.array(
            [[1.0, 0.4, 0.0], [0.0, 1.0, 0.3], [0.0, 0.0, 1.0]]
        )
        g = fit_gaussian(X)
        d2 = g.mahalanobis_d2(X)
        A = np.array([[2.0, 0.5, 0.0], [0.0, 1.5, -0.3], [0.2, 0.0, 1.0]])
        b = np.array([3.0, -1.0, 0.5])
        Y = X @ A.T + b
        g2 = GaussianModel(A @ g.mean + b, A @ g.covariance @ A.T)
        d2_t = g2.mahalanobis_d2(Y)
        np.testing.assert_allclose(d2_t, d2, rtol=1e-8)


class TestClassifyAndCalibrate:
    def _model(self, threshold=0.9):
        return ProminenceModel(
            transform=YeoJohnsonTransform(np.ones(3)),
            gaussian=GaussianModel(np.zeros(3), np.eye(3)),
            threshold_d2=threshold,
            speaker_id="s",
        )

    def test_mean_never_prominent(self):
        model = self._model(threshold=1e-6)
        assert not classify_prominent(np.zeros(3), model)

    def test_above_threshold_prominent(self):
        # d2 = 1.05 with threshold 0.9 (inside the reported 0.7-1.1 band)
        model = self._model(threshold=0.9)
        vec = np.array([np.sqrt(1.05), 0.0, 0.0])
        assert classify_prominent(vec, model)

    def test_boundary_inclusive(self):
        model = self._model(threshold=0.9)
        vec = np.array([np.sqrt(0.9), 0.0, 0.0])
        assert classify_prominent(vec, model)

    def test_decision_depends_only_on_d2(self):
        model = self._model(threshold=1.7)
        rng = np.random.default_rng(4)
        for _ in range(50):
            v = rng.normal(size=3)
            d2 = model.gaussian.mahalanobis_d2(model.transform.apply(v.reshape(1, -1)))[0]
            assert classify_prominent(v, model) == (d2 >= model.threshold_d2)

    def test_threshold_three_positives(self):
        assert threshold_from_positive_d2([1.0, 2.0, 3.0], 0.02) == pytest.approx(1.0)

    def test_threshold_all_equal(self):
        assert threshold_from_positive_d2([5.0, 5.0, 5.0], 0.02) == pytest.approx(5.0)

    def test_threshold_seeded_oracle(self):
        """At most 2 of 100 positives fall below the returned threshold,
        and the threshold is maximal with that property."""
        rng = np.random.default_rng(99)
        d2 = rng.chisquare(3, size=100)
        thr = threshold_from_positive_d2(d2, 0.02)
        srt = np.sort(d2)
        assert thr == pytest.approx(srt[2])  # oracle: sort and index
        assert np.sum(d2 < thr) <= 2
        assert np.sum(d2 < thr + 1e-9) > 2

    def test_calibrate_from_labeled_pairs(self):
        rng = np.random.default_rng(12)
        tf = YeoJohnsonTransform(np.ones(3))
        g = GaussianModel(np.zeros(3), np.eye(3))
        labeled = [(rng.normal(size=3) * 3, True) for _ in range(100)]
        labeled += [(rng.normal(size=3) * 0.1, False) for _ in range(100)]
        thr = calibrate_threshold(labeled, tf, g, target_miss_rate=0.02)
        pos_d2 = g.mahalanobis_d2(tf.apply(np.vstack([v for v, f in labeled if f])))
        assert np.mean(pos_d2 < thr) <= 0.02

    def test_no_positive_labels(self):
        tf = YeoJohnsonTransform(np.ones(3))
        g = GaussianModel(np.zeros(3), np.eye(3))
        with pytest.raises(NoPositiveLabels):
            calibrate_threshold([(np.zeros(3), False)], tf, g)


class TestProminencePersistence:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(8)
        X = np.abs(rng.normal(size=(60, 3))) * [5.0, 2.0, 40.0]
        model = fit_prominence_model(X, speaker_id="narrator0")
        path = tmp_path / "prom.json"
        model.save(path)
        again = ProminenceModel.load(path)
        np.testing.assert_array_equal(again.transform.lambdas, model.transform.lambdas)
        np.testing.assert_allclose(again.gaussian.mean, model.gaussian.mean)
        np.testing.assert_allclose(again.gaussian.covariance, model.gaussian.covariance)
        assert again.threshold_d2 == model.threshold_d2
        assert again.speaker_id == "narrator0"

    def test_accent_matrix_shape(self):
        feats = [AccentFeatures(1.0, -0.5, 10.0, 0), AccentFeatures(2.0, 0.0, 5.0, 1)]
        assert accent_matrix(feats).shape == (2, 3)

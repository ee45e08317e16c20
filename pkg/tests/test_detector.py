"""Streaming variance detectors: window statistics, patience logic, EMA variants."""

import numpy as np
import pytest

from varstop.detector import (
    EmvDetector,
    Verdict,
    WmvDetector,
    run_detector,
    smooth_ema,
    windowed_variance,
)
from varstop.signals import Image


def scalars(values):
    return [Image(np.array([float(v)]), 1, 1) for v in values]


class TestWindowedVariance:
    def test_identical_frames_zero(self):
        frames = [Image(np.full(6, 0.3), 2, 3)] * 5
        assert windowed_variance(frames) == 0.0

    def test_hand_value(self):
        assert windowed_variance(scalars([1, 2, 3])) == pytest.approx(2.0 / 3.0)

    def test_matches_moment_formula(self):
        # (1/W) sum ||x||^2 - ||mean||^2 -- numerically fragile, but a fine
        # oracle on well-scaled random frames.
        rng = np.random.default_rng(0)
        for _ in range(20):
            frames = [Image(rng.random(12), 12, 1) for _ in range(6)]
            stacked = np.stack([f.data for f in frames])
            moment = float(np.mean(np.sum(stacked ** 2, axis=1))
                           - np.sum(stacked.mean(axis=0) ** 2))
            assert windowed_variance(frames) == pytest.approx(moment, abs=1e-10)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(1)
        frames = [Image(rng.random(8), 8, 1) for _ in range(7)]
        base = windowed_variance(frames)
        for _ in range(5):
            perm = [frames[i] for i in rng.permutation(7)]
            assert windowed_variance(perm) == pytest.approx(base, rel=1e-12)

    def test_shift_invariant(self):
        rng = np.random.default_rng(2)
        frames = [Image(rng.random(8), 8, 1) for _ in range(5)]
        shifted = [Image(f.data + 3.7, 8, 1) for f in frames]
        assert windowed_variance(shifted) == pytest.approx(
            windowed_variance(frames), abs=1e-10)

    def test_scaling_is_quadratic(self):
        rng = np.random.default_rng(3)
        frames = [Image(rng.random(8), 8, 1) for _ in range(5)]
        scaled = [Image(2.5 * f.data, 8, 1) for f in frames]
        assert windowed_variance(scaled) == pytest.approx(
            2.5 ** 2 * windowed_variance(frames), rel=1e-12)

    def test_empty_and_mismatched_rejected(self):
        with pytest.raises(ValueError):
            windowed_variance([])
        with pytest.raises(ValueError):
            windowed_variance([Image(np.zeros(4), 2, 2), Image(np.zeros(4), 4, 1)])


class TestWmvDetector:
    def test_constant_stream_stops_at_window_plus_patience(self):
        for window, patience in ((5, 7), (3, 10), (1, 4)):
            det = WmvDetector(window=window, patience=patience)
            verdict = run_detector(det, scalars([1.0] * 1000))
            assert verdict.stopped
            assert verdict.stop_iteration == window + patience
            assert verdict.best_iteration == window
            assert verdict.best_variance == 0.0

    def test_first_window_of_geometric_ramp(self):
        # x_t = 1 - 0.5^t: the first two iterates are 0 and 0.5, whose
        # two-frame variance is 0.0625.
        values = [1.0 - 0.5 ** t for t in range(6)]
        det = WmvDetector(window=2, patience=100)
        for img in scalars(values):
            det.step(img)
        trace = det.finalize().variance_trace
        assert trace[0] == (2, pytest.approx(0.0625))

    def test_best_is_argmin_of_trace(self):
        # Dispersion shrinks then grows; the snapshot must sit at the
        # brute-force argmin of the emitted variance trace.
        rng = np.random.default_rng(4)
        for _ in range(5):
            mid = int(rng.integers(80, 140))
            amp = [(abs(t - mid) + 3) / 500 for t in range(260)]
            values = [a * (-1.0) ** t for t, a in enumerate(amp)]
            det = WmvDetector(window=6, patience=10 ** 6)
            verdict = run_detector(det, scalars(values))
            assert not verdict.stopped
            trace = np.array(verdict.variance_trace)
            assert verdict.best_iteration == int(trace[np.argmin(trace[:, 1]), 0])
            assert verdict.best_variance == pytest.approx(float(trace[:, 1].min()))

    def test_patience_fires_after_the_valley(self):
        amp = [(abs(t - 60) + 2) / 100 for t in range(400)]
        values = [a * (-1.0) ** t for t, a in enumerate(amp)]
        det = WmvDetector(window=4, patience=30)
        verdict = run_detector(det, scalars(values))
        assert verdict.stopped
        assert verdict.stop_iteration < 400
        assert verdict.stop_iteration - verdict.best_iteration <= 30 + 4

    def test_best_frame_is_latest_iterate_at_min(self):
        det = WmvDetector(window=3, patience=50)
        values = [5, 4, 3, 3, 3, 3, 9, 0]  # variance bottoms once frames repeat
        verdict = run_detector(det, scalars(values))
        best = verdict.best_iteration
        assert verdict.best_frame.data[0] == values[best - 1]

    def test_replay_determinism(self):
        rng = np.random.default_rng(5)
        frames = [Image(rng.random(10), 10, 1) for _ in range(300)]
        verdicts = [run_detector(WmvDetector(8, 40), frames) for _ in range(2)]
        a, b = verdicts
        assert a.variance_trace == b.variance_trace
        assert (a.stopped, a.stop_iteration, a.best_iteration) == \
               (b.stopped, b.stop_iteration, b.best_iteration)
        np.testing.assert_array_equal(a.best_frame.data, b.best_frame.data)

    def test_stop_best_separation_bound(self):
        rng = np.random.default_rng(6)
        for trial in range(10):
            frames = [Image(rng.normal(size=5), 5, 1) for _ in range(200)]
            verdict = run_detector(WmvDetector(5, 12), frames)
            assert verdict.stop_iteration - verdict.best_iteration <= 12 + 5

    def test_dimension_change_rejected(self):
        det = WmvDetector(window=2, patience=2)
        det.step(Image(np.zeros(4), 2, 2))
        with pytest.raises(ValueError):
            det.step(Image(np.zeros(4), 4, 1))

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            WmvDetector(window=0)
        with pytest.raises(ValueError):
            WmvDetector(patience=0)


class TestEmvDetector:
    def test_one_step_hand_recursion(self):
        det = EmvDetector(alpha=0.5, patience=10)
        det.step(scalars([2.0])[0])
        assert det.ema[0] == pytest.approx(1.0)
        assert det.emv == pytest.approx(1.0)

    def test_two_step_hand_recursion(self):
        det = EmvDetector(alpha=0.5, patience=10)
        for img in scalars([2.0, 2.0]):
            det.step(img)
        assert det.ema[0] == pytest.approx(1.5)
        assert det.emv == pytest.approx(0.75)

    def test_constant_stream_closed_form(self):
        # From a zero initial state a constant stream c gives
        # emv_k = c^2 a^k (1 - a^k) with a = 1 - alpha: geometric decay,
        # never increasing once alpha >= 0.5.
        c, alpha = 3.0, 0.5
        a = 1.0 - alpha
        det = EmvDetector(alpha=alpha, patience=10 ** 6)
        emvs = []
        for img in scalars([c] * 40):
            det.step(img)
            emvs.append(det.emv)
        expected = [c * c * a ** k * (1 - a ** k) for k in range(1, 41)]
        np.testing.assert_allclose(emvs, expected, rtol=1e-12)
        assert all(x >= y - 1e-15 for x, y in zip(emvs, emvs[1:]))
        assert all(v >= 0 for v in emvs)

    def test_slow_alpha_hump_controls_stopping(self):
        # With alpha = 0.1 the constant-stream emv rises until (0.9)^k ~ 0.5
        # and undercuts its first value only at k = 22; short patience stops
        # inside the hump, long patience rides it out and never stops.
        verdict = run_detector(EmvDetector(alpha=0.1, patience=5),
                               scalars([1.0] * 100))
        assert verdict.stopped
        assert verdict.stop_iteration == 6
        assert verdict.best_iteration == 1

        verdict = run_detector(EmvDetector(alpha=0.1, patience=50),
                               scalars([1.0] * 100))
        assert not verdict.stopped
        assert verdict.best_iteration == 100

    def test_emv_nonnegative_on_random_streams(self):
        rng = np.random.default_rng(7)
        det = EmvDetector(alpha=0.3, patience=10 ** 6)
        for _ in range(200):
            det.step(Image(rng.normal(size=6), 6, 1))
        assert all(v >= 0.0 for _, v in det.trace)

    def test_ema_is_convex_combination(self):
        rng = np.random.default_rng(8)
        frames = [Image(rng.random(4), 4, 1) for _ in range(50)]
        det = EmvDetector(alpha=0.2, patience=10 ** 6)
        for f in frames:
            det.step(f)
        stacked = np.stack([f.data for f in frames])
        lo = stacked.min(axis=0)
        hi = stacked.max(axis=0)
        # zero init drags the combination toward 0, so only the upper
        # envelope is a hard bound; the lower one holds up to the 0 anchor
        assert np.all(det.ema <= hi + 1e-12)
        assert np.all(det.ema >= np.minimum(lo, 0.0) - 1e-12)

    def test_stop_best_separation_bound(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            frames = [Image(rng.normal(size=5), 5, 1) for _ in range(200)]
            verdict = run_detector(EmvDetector(0.2, 15), frames)
            assert verdict.stop_iteration - verdict.best_iteration <= 15

    def test_alpha_validation(self):
        for alpha in (0.0, 1.0, -0.5, 1.5):
            with pytest.raises(ValueError):
                EmvDetector(alpha=alpha)


class TestSmoothEma:
    def test_constant_stream_geometric_convergence(self):
        c, alpha = 0.8, 0.25
        out = list(smooth_ema(scalars([c] * 30), alpha))
        expected = [c * (1 - (1 - alpha) ** k) for k in range(1, 31)]
        np.testing.assert_allclose([o.data[0] for o in out], expected, rtol=1e-12)

    def test_alpha_bounds(self):
        with pytest.raises(ValueError):
            list(smooth_ema(scalars([1.0]), 1.0))
        with pytest.raises(ValueError):
            list(smooth_ema(scalars([1.0]), 0.0))

    def test_filtered_stream_feeds_wmv(self):
        rng = np.random.default_rng(10)
        frames = [Image(rng.random(6), 6, 1) for _ in range(120)]
        verdict = run_detector(WmvDetector(5, 20), smooth_ema(frames, 0.3))
        assert verdict.stop_iteration <= 120
        assert verdict.best_iteration >= 5
        assert np.isfinite(verdict.best_variance)


class TestVerdict:
    def test_best_cannot_exceed_stop_when_stopped(self):
        with pytest.raises(ValueError):
            Verdict(stopped=True, stop_iteration=10, best_iteration=11,
                    best_variance=0.0, best_frame=None, variance_trace=())

    def test_trace_is_normalized_to_tuples(self):
        v = Verdict(stopped=False, stop_iteration=3, best_iteration=2,
                    best_variance=0.5, best_frame=None,
                    variance_trace=[(np.int64(2), np.float64(0.5))])
        assert v.variance_trace == ((2, 0.5),)
        assert isinstance(v.variance_trace[0][0], int)

"""Metrics: alignments, MPJPE, MMD vs brute-force oracle, ambiguity, views, fusion."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ambiflow.evalkit import (
    ViewFrame,
    align,
    align_set,
    ambiguity_std,
    mmd,
    mmd_sq_per_scale,
    mpjpe,
    select_view,
    stereo_fuse,
)


def joint_set(seed=0, scale=50.0):
    """A (42, 3) joint set with dyadic-friendly values (exact float arithmetic)."""
    rng = np.random.default_rng(seed)
    return np.round(rng.normal(scale=scale, size=(42, 3)) * 4) / 4


class TestAlign:
    def test_global_is_identity(self):
        js = joint_set(0)
        a, b = align(js, js, "Global")
        assert np.array_equal(a, js) and np.array_equal(b, js)

    def test_translation_is_removed_exactly(self):
        gt = joint_set(1)
        pred = gt + np.array([10.0, 0.0, 0.0])
        for mode in ("RR", "RRR"):
            a, b = align(pred, gt, mode)
            assert np.array_equal(a, b), mode

    def test_left_hand_shift_distinguishes_rr_from_rrr(self):
        gt = joint_set(2)
        pred = gt.copy()
        pred[21:] += np.array([5.0, 0.0, 0.0])
        a_rr, b_rr = align(pred, gt, "RR")
        assert np.array_equal(a_rr, b_rr)
        a_rrr, b_rrr = align(pred, gt, "RRR")
        diff = a_rrr - b_rrr
        assert np.array_equal(diff[:21], np.zeros((21, 3)))
        assert np.all(diff[21:, 0] == 5.0)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            align_set(joint_set(0), "Procrustes")


class TestMpjpe:
    def test_zero_for_identical_sets(self):
        js = joint_set(3)
        for mode in ("Global", "RRR", "RR"):
            assert mpjpe(js, js, mode) == 0.0

    def test_global_shift_triple(self):
        gt = joint_set(4)
        pred = gt + np.array([10.0, 0.0, 0.0])
        assert mpjpe(pred, gt, "Global") == 10.0
        assert mpjpe(pred, gt, "RRR") == 0.0
        assert mpjpe(pred, gt, "RR") == 0.0

    def test_left_hand_shift_means(self):
        gt = joint_set(5)
        pred = gt.copy()
        pred[21:] += np.array([5.0, 0.0, 0.0])
        assert mpjpe(pred, gt, "RR") == 0.0
        assert mpjpe(pred, gt, "RRR") == 2.5  # 21 of 42 joints off by 5mm
        assert mpjpe(pred, gt, "Global") == 2.5

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mpjpe(joint_set(0), joint_set(0)[:10], "Global")


def mmd_oracle(sets_a, sets_b, scales, mode):
    """Brute-force double-sum V-statistic, independent of the vectorized path."""
    a = np.stack([align_set(s, mode).reshape(-1) for s in sets_a])
    b = np.stack([align_set(s, mode).reshape(-1) for s in sets_b])

    def kernel(x, y, sigma):
        return np.exp(-float((x - y) @ (x - y)) / (2.0 * sigma**2))

    per_scale = []
    for sigma in scales:
        kaa = np.mean([[kernel(x, y, sigma) for y in a] for x in a])
        kbb = np.mean([[kernel(x, y, sigma) for y in b] for x in b])
        kab = np.mean([[kernel(x, y, sigma) for y in b] for x in a])
        per_scale.append(kaa + kbb - 2 * kab)
    return float(np.sqrt(max(np.mean(per_scale), 0.0)))


class TestMmd:
    scales = (10.0, 20.0, 50.0)

    def test_identical_multisets_score_zero(self):
        sets = np.stack([joint_set(s) for s in range(5)])
        assert mmd(sets, sets.copy(), self.scales, "Global") < 1e-12

    def test_singleton_closed_form(self):
        x = joint_set(6)
        y = joint_set(7)
        d2 = float(np.sum((x - y) ** 2))
        for sigma in (25.0, 80.0):
            got = mmd_sq_per_scale(x.reshape(1, -1), y.reshape(1, -1), [sigma])[0]
            expected = 2.0 - 2.0 * np.exp(-d2 / (2 * sigma**2))
            assert abs(got - expected) < 1e-12

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(8)
        sets_a = np.stack([joint_set(10 + i) for i in range(3)])
        sets_b = np.stack([joint_set(20 + i) for i in range(4)])
        for mode in ("Global", "RRR", "RR"):
            got = mmd(sets_a, sets_b, self.scales, mode)
            expected = mmd_oracle(sets_a, sets_b, self.scales, mode)
            assert abs(got - expected) < 1e-12

    def test_symmetry_exact(self):
        sets_a = np.stack([joint_set(30 + i) for i in range(3)])
        sets_b = np.stack([joint_set(40 + i) for i in range(5)])
        assert mmd(sets_a, sets_b, self.scales) == mmd(sets_b, sets_a, self.scales)

    def test_squared_values_non_negative(self):
        rng = np.random.default_rng(9)
        a = rng.normal(size=(6, 126))
        b = rng.normal(size=(6, 126)) + 0.3
        assert np.all(mmd_sq_per_scale(a, b, (1.0, 5.0, 10.0)) >= -1e-12)

    def test_separation_ordering(self):
        # clouds at growing mean separation give strictly increasing MMD
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            base = rng.normal(scale=10.0, size=(100, 42, 3))
            ref = rng.normal(scale=10.0, size=(100, 42, 3))
            values = []
            for sep in (0.0, 10.0, 50.0):
                shifted = base + np.array([sep, 0.0, 0.0])
                values.append(mmd(shifted, ref, (10.0, 20.0, 50.0, 100.0, 200.0), "Global"))
            assert values[0] < values[1] < values[2], f"seed {seed}: {values}"

    def test_dirac_prediction_scores_worse_than_the_set_itself(self):
        rng = np.random.default_rng(10)
        annotations = rng.normal(scale=15.0, size=(40, 42, 3)) + 500.0
        dirac = np.repeat(annotations.mean(axis=0)[None], 40, axis=0)
        scales = (10.0, 20.0, 50.0, 100.0, 200.0)
        self_score = mmd(annotations, annotations, scales, "Global")
        dirac_score = mmd(dirac, annotations, scales, "Global")
        assert dirac_score > self_score

    def test_empty_sets_rejected(self):
        with pytest.raises(ValueError):
            mmd_sq_per_scale(np.zeros((0, 5)), np.ones((2, 5)), (1.0,))


class TestAmbiguityStd:
    def test_identical_samples_score_zero(self):
        samples = np.repeat(joint_set(11)[None], 5, axis=0)
        assert ambiguity_std(samples) == 0.0

    def test_single_joint_single_axis(self):
        samples = np.zeros((2, 42, 3))
        samples[0, 7, 1] = 1.0
        samples[1, 7, 1] = -1.0
        expected = 1.0 / (np.sqrt(3.0) * 42.0)
        assert abs(ambiguity_std(samples) - expected) < 1e-15

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(12)
        samples = rng.normal(scale=7.0, size=(30, 42, 3))
        # naive per-joint, per-axis two-pass standard deviation
        total = 0.0
        for j in range(42):
            acc = 0.0
            for ax in range(3):
                vals = samples[:, j, ax]
                mean = sum(vals) / len(vals)
                var = sum((v - mean) ** 2 for v in vals) / len(vals)
                acc += var
            total += np.sqrt(acc / 3.0)
        assert abs(ambiguity_std(samples) - total / 42.0) < 1e-12

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            ambiguity_std(joint_set(0)[None])

    def test_rotation_invariance(self):
        rng = np.random.default_rng(13)
        samples = rng.normal(size=(20, 42, 3))
        theta = 0.7
        rot = np.array([[np.cos(theta), -np.sin(theta), 0],
                        [np.sin(theta), np.cos(theta), 0], [0, 0, 1.0]])
        assert abs(ambiguity_std(samples) - ambiguity_std(samples @ rot.T)) < 1e-12


class TestSelectView:
    def _frame(self, spread, err, rng, n=30):
        gt = joint_set(14)
        samples = gt[None] + rng.normal(scale=spread, size=(n, 42, 3))
        estimate = gt + np.array([err, 0.0, 0.0])
        return ViewFrame(samples=samples, estimate=estimate, gt=gt)

    def test_identical_cameras_tie_with_zero_regret(self):
        rng = np.random.default_rng(15)
        frame = self._frame(5.0, 3.0, rng)
        scores = select_view({"camA": [frame], "camB": [frame]})
        assert scores[0].ambiguity == scores[1].ambiguity
        assert scores[0].regret == 0.0 and scores[1].regret == 0.0

    def test_occluded_camera_ranks_and_regrets_worse(self):
        rng = np.random.default_rng(16)
        clear = [self._frame(2.0, 1.0, rng) for _ in range(4)]
        murky = [self._frame(12.0, 9.0, rng) for _ in range(4)]
        scores = select_view({"camA": clear, "camB": murky})
        by_cam = {s.cam_id: s for s in scores}
        assert by_cam["camA"].rank < by_cam["camB"].rank
        assert by_cam["camA"].regret < by_cam["camB"].regret
        assert by_cam["camA"].regret == 0.0

    def test_best_view_regret_not_above_average(self):
        rng = np.random.default_rng(17)
        cams = {f"cam{i}": [self._frame(2.0 + 3 * i, 1.0 + 2 * i, rng) for _ in range(3)]
                for i in range(5)}
        scores = select_view(cams)
        avg = np.mean([s.regret for s in scores])
        assert scores[0].regret <= avg

    def test_needs_two_cameras(self):
        rng = np.random.default_rng(18)
        with pytest.raises(ValueError):
            select_view({"camA": [self._frame(1.0, 0.0, rng)]})


class TestStereoFuse:
    def test_product_of_gaussians_example(self):
        # 1-D: (mu=0, var=4) x (mu=2, var=4) -> mu=1, var=2
        a = np.zeros((2, 1, 3))
        a[0, 0, 0] = -2.0
        a[1, 0, 0] = 2.0
        b = np.zeros((2, 1, 3))
        b[0, 0, 0] = 0.0
        b[1, 0, 0] = 4.0
        mean, var, _ = stereo_fuse(a, b)
        assert abs(mean[0, 0] - 1.0) < 1e-12
        assert abs(var[0, 0] - 2.0) < 1e-12

    def test_identical_views_halve_the_variance(self):
        rng = np.random.default_rng(19)
        samples = rng.normal(scale=4.0, size=(50, 42, 3)) + 100.0
        _, var, score = stereo_fuse(samples, samples.copy())
        single_var = samples.var(axis=0, ddof=0)
        assert np.abs(var - single_var / 2.0).max() < 1e-9
        assert abs(score - float((single_var / 2.0).sum(axis=-1).mean())) < 1e-9

    def test_orthogonal_ambiguity_axes_disambiguate(self):
        # view A uncertain along z, view B along x: the product is tight everywhere
        rng = np.random.default_rng(20)
        base = rng.normal(scale=1.0, size=(200, 42, 3))
        a = base.copy()
        a[..., 2] *= 25.0
        b = base.copy()
        b[..., 0] *= 25.0
        _, _, score_ab = stereo_fuse(a, b)
        _, _, score_aa = stereo_fuse(a, a.copy())
        _, _, score_bb = stereo_fuse(b, b.copy())
        assert score_ab < min(score_aa, score_bb)

    def test_fused_variance_never_exceeds_inputs(self):
        rng = np.random.default_rng(21)
        a = rng.normal(scale=3.0, size=(40, 42, 3))
        b = rng.normal(scale=5.0, size=(40, 42, 3))
        _, var, _ = stereo_fuse(a, b)
        va = np.maximum(a.var(axis=0, ddof=0), 1e-6)
        vb = np.maximum(b.var(axis=0, ddof=0), 1e-6)
        assert np.all(var <= va + 1e-12)
        assert np.all(var <= vb + 1e-12)

    def test_zero_variance_axis_is_floored(self):
        a = np.zeros((3, 2, 3))  # degenerate: zero variance everywhere
        b = np.ones((3, 2, 3))
        mean, var, score = stereo_fuse(a, b)
        assert np.all(var > 0.0) and np.isfinite(score)


@given(st.integers(0, 10_000), st.floats(1.0, 500.0))
@settings(max_examples=25, deadline=None)
def test_mmd_nonnegative_and_symmetric_property(seed, sigma):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(4, 9))
    b = rng.normal(size=(6, 9)) + rng.normal()
    fwd = mmd_sq_per_scale(a, b, (sigma,))[0]
    rev = mmd_sq_per_scale(b, a, (sigma,))[0]
    assert fwd >= -1e-12
    assert fwd == rev

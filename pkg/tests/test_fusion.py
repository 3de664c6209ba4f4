import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from tonefuse.fusion import (
    CONSTRAINED,
    EPSILON,
    PLAIN,
    ConfidenceMaps,
    fuse,
    fuse_constrained,
    fuse_plain,
    interpolate,
    normalize_maps,
)


def random_plain_instance(rng, n=3, h=4, w=4):
    solutions = [rng.random((h, w, 3)) for _ in range(n)]
    maps = ConfidenceMaps(PLAIN, tuple(rng.uniform(-0.5, 1.5, (h, w, 3))
                                       for _ in range(n)))
    return solutions, maps


def random_constrained_instance(rng, n=3, h=4, w=4):
    solutions = [rng.random((h, w, 3)) for _ in range(n)]
    maps = ConfidenceMaps(CONSTRAINED, tuple(rng.random((h, w))
                                             for _ in range(n)))
    return solutions, maps


def scalar_fuse_plain(solutions, maps):
    # brute-force oracle: per-pixel, per-channel python loop
    h, w, _ = solutions[0].shape
    out = np.zeros((h, w, 3))
    for y in range(h):
        for x in range(w):
            for c in range(3):
                acc = 0.0
                for v, m in zip(solutions, maps.maps):
                    acc += v[y, x, c] * m[y, x, c]
                out[y, x, c] = acc
    return out


def scalar_interpolate(solutions, maps, weights):
    # brute-force oracle mirroring the weight-ratio definition
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.max()
    h, wd, _ = solutions[0].shape
    out = np.zeros((h, wd, 3))
    for y in range(h):
        for x in range(wd):
            denom = EPSILON
            for m, wi in zip(maps.maps, w):
                denom += m[y, x] * wi
            for c in range(3):
                acc = 0.0
                for v, m, wi in zip(solutions, maps.maps, w):
                    acc += v[y, x, c] * (m[y, x] * wi / denom)
                out[y, x, c] = acc
    return out


class TestConfidenceMaps:
    def test_rejects_mixed_shapes(self):
        with pytest.raises(ValueError):
            ConfidenceMaps(PLAIN, (np.zeros((4, 4, 3)), np.zeros((4, 5, 3))))

    def test_rejects_out_of_range_constrained(self):
        with pytest.raises(ValueError):
            ConfidenceMaps(CONSTRAINED, (np.full((4, 4), 1.2),))

    def test_rejects_wrong_channel_count(self):
        with pytest.raises(ValueError):
            ConfidenceMaps(PLAIN, (np.zeros((4, 4)),))
        with pytest.raises(ValueError):
            ConfidenceMaps(CONSTRAINED, (np.zeros((4, 4, 3)),))


class TestFusePlain:
    def test_degenerate_maps_select_one_solution(self):
        rng = np.random.default_rng(0)
        solutions = [rng.random((4, 4, 3)) for _ in range(3)]
        maps = ConfidenceMaps(PLAIN, (np.ones((4, 4, 3)),
                                      np.zeros((4, 4, 3)),
                                      np.zeros((4, 4, 3))))
        assert_array_equal(fuse_plain(solutions, maps), solutions[0])

    def test_partition_of_unity(self):
        rng = np.random.default_rng(1)
        v = rng.random((5, 4, 3))
        maps = ConfidenceMaps(PLAIN, tuple(np.full((5, 4, 3), 1 / 3)
                                           for _ in range(3)))
        assert_allclose(fuse_plain([v, v, v], maps), v, rtol=0, atol=1e-15)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            solutions, maps = random_plain_instance(rng)
            assert_array_equal(fuse_plain(solutions, maps),
                               scalar_fuse_plain(solutions, maps))

    def test_linearity_by_superposition(self):
        rng = np.random.default_rng(3)
        solutions, maps = random_plain_instance(rng)
        extra = rng.random((4, 4, 3))
        bumped = [solutions[0] + 2.0 * extra] + solutions[1:]
        lhs = fuse_plain(bumped, maps)
        rhs = fuse_plain(solutions, maps) + 2.0 * extra * maps.maps[0]
        assert_allclose(lhs, rhs, rtol=0, atol=1e-12)

    def test_dimension_mismatch_rejected(self):
        rng = np.random.default_rng(4)
        solutions, maps = random_plain_instance(rng)
        with pytest.raises(ValueError):
            fuse_plain(solutions[:2], maps)
        with pytest.raises(ValueError):
            fuse_plain([np.zeros((9, 9, 3))] * 3, maps)

    def test_mode_mismatch_rejected(self):
        rng = np.random.default_rng(5)
        solutions, maps = random_constrained_instance(rng)
        with pytest.raises(ValueError):
            fuse_plain(solutions, maps)


class TestNormalizeMaps:
    def test_equal_thirds(self):
        maps = ConfidenceMaps(CONSTRAINED, tuple(np.full((2, 2), 0.2)
                                                 for _ in range(3)))
        out = normalize_maps(maps)
        for m in out.maps:
            assert_allclose(m, 1 / 3, rtol=1e-7)

    def test_one_hot_stays_one_hot(self):
        maps = ConfidenceMaps(CONSTRAINED, (np.ones((2, 2)),
                                            np.zeros((2, 2)),
                                            np.zeros((2, 2))))
        out = normalize_maps(maps)
        assert_allclose(out.maps[0], 1.0, rtol=1e-7)
        assert_array_equal(out.maps[1], 0.0)

    def test_sums_to_one(self):
        rng = np.random.default_rng(6)
        _, maps = random_constrained_instance(rng)
        out = normalize_maps(maps)
        total = sum(out.maps)
        assert_allclose(total, 1.0, rtol=0, atol=1e-6)


class TestInterpolate:
    def test_equal_weights_match_normalized_fusion_exactly(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            solutions, maps = random_constrained_instance(rng)
            via_interp = interpolate(solutions, maps, [2.5, 2.5, 2.5])
            via_norm = fuse_constrained(solutions, maps)
            assert_array_equal(via_interp, via_norm)

    def test_power_of_two_scaling_is_bitwise_invariant(self):
        rng = np.random.default_rng(8)
        solutions, maps = random_constrained_instance(rng)
        w = rng.uniform(0.1, 5.0, 3)
        base = interpolate(solutions, maps, w)
        for k in (-8, -1, 1, 13):
            assert_array_equal(interpolate(solutions, maps, w * 2.0 ** k), base)

    def test_arbitrary_scaling_is_invariant_to_rounding(self):
        rng = np.random.default_rng(9)
        solutions, maps = random_constrained_instance(rng)
        w = rng.uniform(0.1, 5.0, 3)
        base = interpolate(solutions, maps, w)
        for c in (3.7, 0.013, 123.456):
            assert_allclose(interpolate(solutions, maps, w * c), base,
                            rtol=1e-13, atol=1e-15)

    def test_dominant_weight_converges_to_solution(self):
        rng = np.random.default_rng(10)
        solutions = [rng.random((4, 4, 3)) for _ in range(3)]
        maps = ConfidenceMaps(CONSTRAINED,
                              (rng.uniform(0.1, 1.0, (4, 4)),
                               rng.random((4, 4)),
                               rng.random((4, 4))))
        out = interpolate(solutions, maps, [1e9, 1.0, 1.0])
        assert np.abs(out - solutions[0]).max() < 1e-6

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            solutions, maps = random_constrained_instance(rng)
            w = rng.uniform(0.05, 4.0, 3)
            assert np.abs(interpolate(solutions, maps, w)
                          - scalar_interpolate(solutions, maps, w)).max() <= 1e-12

    def test_convexity_of_output(self):
        rng = np.random.default_rng(12)
        solutions, maps = random_constrained_instance(rng)
        out = interpolate(solutions, maps, [0.7, 1.3, 2.9])
        stacked = np.stack(solutions)
        lo = stacked.min(axis=0)
        hi = stacked.max(axis=0)
        # epsilon regularization can only pull toward zero weight totals
        assert np.all(out >= np.minimum(lo, 0.0) - 1e-12)
        assert np.all(out <= hi + 1e-12)

    def test_rejects_bad_weights(self):
        rng = np.random.default_rng(13)
        solutions, maps = random_constrained_instance(rng)
        with pytest.raises(ValueError):
            interpolate(solutions, maps, [1.0, -0.5, 1.0])
        with pytest.raises(ValueError):
            interpolate(solutions, maps, [1.0, 0.0, 1.0])
        with pytest.raises(ValueError):
            interpolate(solutions, maps, [1.0, 1.0])

    def test_rejects_plain_mode(self):
        rng = np.random.default_rng(14)
        solutions, maps = random_plain_instance(rng)
        with pytest.raises(ValueError, match="constrained"):
            interpolate(solutions, maps, [1.0, 1.0, 1.0])


class TestFuseDispatch:
    def test_plain_dispatch(self):
        rng = np.random.default_rng(15)
        solutions, maps = random_plain_instance(rng)
        assert_array_equal(fuse(solutions, maps), fuse_plain(solutions, maps))

    def test_constrained_dispatch(self):
        rng = np.random.default_rng(16)
        solutions, maps = random_constrained_instance(rng)
        assert_array_equal(fuse(solutions, maps),
                           fuse_constrained(solutions, maps))

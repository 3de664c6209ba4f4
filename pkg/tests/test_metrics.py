import numpy as np
import pytest
from numpy.testing import assert_allclose

from tonefuse.metrics import (
    DEFAULT_WINDOW,
    QualityReport,
    l2_loss,
    l2_loss_and_grad,
    psnr,
    quality_report,
    ssim,
    ssim_and_grad,
    ssim_loss,
    ssim_loss_and_grad,
    total_pair_loss,
)

C1 = 0.02 ** 2
C2 = 0.03 ** 2


def reference_ssim(a, b, window=DEFAULT_WINDOW):
    """Independent straightforward oracle: explicit loops over valid windows."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    h, w, ch = a.shape
    scores = []
    for c in range(ch):
        vals = []
        for y in range(h - window + 1):
            for x in range(w - window + 1):
                pa = a[y:y + window, x:x + window, c]
                pb = b[y:y + window, x:x + window, c]
                mu_a = pa.mean()
                mu_b = pb.mean()
                var_a = pa.var()
                var_b = pb.var()
                cov = ((pa - mu_a) * (pb - mu_b)).mean()
                vals.append(
                    ((2 * mu_a * mu_b + C1) * (2 * cov + C2))
                    / ((mu_a ** 2 + mu_b ** 2 + C1) * (var_a + var_b + C2))
                )
        scores.append(np.mean(vals))
    return float(np.mean(scores))


class TestL2Loss:
    def test_identical_is_zero(self):
        a = np.random.default_rng(0).random((5, 5, 3))
        assert l2_loss(a, a) == 0.0

    def test_uniform_difference(self):
        a = np.zeros((4, 4, 3))
        b = np.full((4, 4, 3), 0.5)
        assert l2_loss(a, b) == 0.25

    def test_matches_scalar_double_loop(self):
        rng = np.random.default_rng(1)
        a = rng.random((4, 4, 3))
        b = rng.random((4, 4, 3))
        total = 0.0
        for y in range(4):
            for x in range(4):
                for c in range(3):
                    total += (a[y, x, c] - b[y, x, c]) ** 2
        assert l2_loss(a, b) == pytest.approx(total / (4 * 4 * 3), abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            l2_loss(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a = rng.random((6, 7, 3))
        b = rng.random((6, 7, 3))
        assert l2_loss(a, b) == l2_loss(b, a)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        a = rng.random((5, 4, 3))
        b = rng.random((5, 4, 3))
        _, grad = l2_loss_and_grad(a, b)
        eps = 1e-6
        for _ in range(20):
            y, x, c = rng.integers(5), rng.integers(4), rng.integers(3)
            ap = a.copy()
            ap[y, x, c] += eps
            am = a.copy()
            am[y, x, c] -= eps
            fd = (l2_loss(ap, b) - l2_loss(am, b)) / (2 * eps)
            assert grad[y, x, c] == pytest.approx(fd, rel=1e-6, abs=1e-10)


class TestSsim:
    def test_identical_is_one(self):
        a = np.random.default_rng(4).random((20, 20, 3))
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_negated_structure_degrades(self):
        a = np.random.default_rng(5).random((20, 20, 3))
        assert ssim(a, 1.0 - a) < 1.0

    def test_matches_reference_oracle(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            a = rng.random((32, 32, 3))
            b = rng.random((32, 32, 3))
            assert ssim(a, b) == pytest.approx(reference_ssim(a, b), abs=1e-10)

    def test_correlated_pair_against_oracle(self):
        rng = np.random.default_rng(7)
        a = rng.random((32, 32, 3))
        b = np.clip(a + 0.05 * rng.standard_normal(a.shape), 0, 1)
        assert ssim(a, b) == pytest.approx(reference_ssim(a, b), abs=1e-10)

    def test_symmetry(self):
        rng = np.random.default_rng(8)
        a = rng.random((16, 16, 3))
        b = rng.random((16, 16, 3))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-14)

    def test_bounds(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            a = rng.random((14, 14, 3))
            b = rng.random((14, 14, 3))
            assert -1.0 <= ssim(a, b) <= 1.0

    def test_rejects_small_images(self):
        with pytest.raises(ValueError, match="window"):
            ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        a = rng.random((16, 16, 3))
        b = rng.random((16, 16, 3))
        _, grad = ssim_and_grad(a, b)
        eps = 1e-6
        worst = 0.0
        for _ in range(30):
            y, x, c = rng.integers(16), rng.integers(16), rng.integers(3)
            ap = a.copy()
            ap[y, x, c] += eps
            am = a.copy()
            am[y, x, c] -= eps
            fd = (ssim(ap, b) - ssim(am, b)) / (2 * eps)
            scale = max(abs(fd), abs(grad[y, x, c]), 1e-6)
            worst = max(worst, abs(fd - grad[y, x, c]) / scale)
        assert worst < 1e-4


class TestSsimLoss:
    def test_identical_is_zero(self):
        a = np.random.default_rng(11).random((16, 16, 3))
        assert ssim_loss(a, a) == pytest.approx(0.0, abs=1e-12)

    def test_is_one_minus_ssim(self):
        rng = np.random.default_rng(12)
        a = rng.random((16, 16, 3))
        b = rng.random((16, 16, 3))
        assert ssim_loss(a, b) == pytest.approx(1.0 - ssim(a, b), abs=1e-15)
        assert 0.0 <= ssim_loss(a, b) <= 2.0

    def test_grad_is_negated_ssim_grad(self):
        rng = np.random.default_rng(13)
        a = rng.random((14, 14, 3))
        b = rng.random((14, 14, 3))
        _, g1 = ssim_and_grad(a, b)
        _, g2 = ssim_loss_and_grad(a, b)
        assert_allclose(g2, -g1, rtol=0, atol=0)


class TestTotalPairLoss:
    def test_identical_is_zero(self):
        a = np.random.default_rng(14).random((16, 16, 3))
        assert total_pair_loss(a, a) == pytest.approx(0.0, abs=1e-12)

    def test_zero_weight_reduces_to_l2(self):
        rng = np.random.default_rng(15)
        a = rng.random((6, 6, 3))  # too small for the window: must still work
        b = rng.random((6, 6, 3))
        assert total_pair_loss(a, b, ssim_weight=0.0) == l2_loss(a, b)

    def test_combines_components(self):
        rng = np.random.default_rng(16)
        a = rng.random((16, 16, 3))
        b = rng.random((16, 16, 3))
        expected = l2_loss(a, b) + 0.1 * ssim_loss(a, b)
        assert total_pair_loss(a, b, ssim_weight=0.1) == pytest.approx(
            expected, abs=1e-15)

    def test_rejects_negative_weight(self):
        with pytest.raises(ValueError):
            total_pair_loss(np.zeros((16, 16, 3)), np.zeros((16, 16, 3)),
                            ssim_weight=-0.1)


class TestPsnr:
    def test_identical_is_infinite(self):
        a = np.random.default_rng(17).random((8, 8, 3))
        assert psnr(a, a) == float("inf")

    def test_mse_001_is_20db(self):
        a = np.zeros((10, 10, 3))
        b = np.full((10, 10, 3), 0.1)
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_full_scale_is_zero_db(self):
        a = np.zeros((4, 4, 3))
        b = np.ones((4, 4, 3))
        assert psnr(a, b) == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(18)
        a = rng.random((8, 8, 3))
        b = rng.random((8, 8, 3))
        assert psnr(a, b) == psnr(b, a)


class TestQualityReport:
    def test_clamps_before_scoring(self):
        rng = np.random.default_rng(19)
        a = rng.random((16, 16, 3))
        report = quality_report(a + 0.0, a)
        assert report.psnr == float("inf")
        assert report.ssim == pytest.approx(1.0, abs=1e-12)
        # out-of-range values are clamped, not scored raw
        report2 = quality_report(np.clip(a, 0, 1) + 2.0, np.clip(a, 0, 1) + 2.0)
        assert isinstance(report2, QualityReport)
        assert report2.psnr == float("inf")

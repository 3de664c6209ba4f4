"""PSNR, windowed SSIM, and the paired fitting loss.

SSIM uses a uniform 13x13 window over valid positions only (no padding),
stabilizers ``C_i = (K_i * L)^2`` with K1=0.02, K2=0.03 and dynamic range
L=1, and population (1/n) window statistics.  Channels are scored
independently and averaged.  The loss variants also expose analytic
gradients with respect to the first argument, which is what the optimizer
consumes; none of the loss functions clamp their inputs, so they stay
differentiable on raw fusion outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_WINDOW = 13
K1 = 0.02
K2 = 0.03
C1 = (K1 * 1.0) ** 2
C2 = (K2 * 1.0) ** 2


@dataclass(frozen=True)
class QualityReport:
    """PSNR in dB (inf for identical inputs) and mean SSIM in [-1, 1]."""

    psnr: float
    ssim: float


def _check_same_shape(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")


def _channels(a: np.ndarray):
    if a.ndim == 2:
        return [a]
    if a.ndim == 3:
        return [a[..., c] for c in range(a.shape[2])]
    raise ValueError(f"expected a 2-D plane or an (H, W, C) image, got {a.shape}")


def _box_sum_valid(x: np.ndarray, k: int) -> np.ndarray:
    """Sum over every k-by-k window fully inside ``x`` (integral image)."""
    h, w = x.shape
    s = np.empty((h + 1, w + 1))
    s[0, :] = 0.0
    s[1:, 0] = 0.0
    np.cumsum(x, axis=0, out=s[1:, 1:])
    np.cumsum(s[1:, 1:], axis=1, out=s[1:, 1:])
    return s[k:, k:] - s[:-k, k:] - s[k:, :-k] + s[:-k, :-k]


def _box_scatter(c: np.ndarray, k: int) -> np.ndarray:
    """Adjoint of the valid window sum: per pixel, sum over covering windows."""
    hc, wc = c.shape
    padded = np.zeros((hc + 2 * (k - 1), wc + 2 * (k - 1)))
    padded[k - 1:k - 1 + hc, k - 1:k - 1 + wc] = c
    return _box_sum_valid(padded, k)


class PairedSsim:
    """SSIM against one fixed reference, with its window stats precomputed.

    The optimizer evaluates SSIM against the same reference thousands of
    times, so the reference-side sums are hoisted out of the loop here.
    """

    def __init__(self, reference: np.ndarray, window: int = DEFAULT_WINDOW):
        reference = np.asarray(reference, dtype=np.float64)
        h, w = reference.shape[:2]
        if h < window or w < window:
            raise ValueError(
                f"image {h}x{w} is smaller than the {window}x{window} SSIM window"
            )
        self.shape = reference.shape
        self.window = window
        self.n = window * window
        self._refs = []
        for y in _channels(reference):
            gy = y.mean()
            y0 = y - gy
            mu_y0 = _box_sum_valid(y0, window) / self.n
            var_y = _box_sum_valid(y0 * y0, window) / self.n - mu_y0 * mu_y0
            self._refs.append((y, y0, mu_y0, mu_y0 + gy, var_y))

    def _plane(self, x: np.ndarray, ref):
        _, y0, mu_y0, mu_y, var_y = ref
        k, n = self.window, self.n
        # centering by the global mean keeps the E[x^2]-mu^2 cancellation benign
        gx = x.mean()
        x0 = x - gx
        mu_x0 = _box_sum_valid(x0, k) / n
        mu_x = mu_x0 + gx
        var_x = _box_sum_valid(x0 * x0, k) / n - mu_x0 * mu_x0
        cov = _box_sum_valid(x0 * y0, k) / n - mu_x0 * mu_y0
        a1 = 2.0 * mu_x * mu_y + C1
        a2 = 2.0 * cov + C2
        b1 = mu_x * mu_x + mu_y * mu_y + C1
        b2 = var_x + var_y + C2
        s = (a1 * a2) / (b1 * b2)
        return s, mu_x, a1, a2, b1, b2

    def value(self, result: np.ndarray) -> float:
        result = np.asarray(result, dtype=np.float64)
        if result.shape != self.shape:
            raise ValueError(
                f"image dimensions differ: {result.shape} vs {self.shape}"
            )
        scores = [
            self._plane(x, ref)[0].mean()
            for x, ref in zip(_channels(result), self._refs)
        ]
        return float(np.mean(scores))

    def value_and_grad(self, result: np.ndarray):
        result = np.asarray(result, dtype=np.float64)
        if result.shape != self.shape:
            raise ValueError(
                f"image dimensions differ: {result.shape} vs {self.shape}"
            )
        k, n = self.window, self.n
        grad = np.zeros_like(result)
        scores = []
        for c, (x, ref) in enumerate(zip(_channels(result), self._refs)):
            y = ref[0]
            mu_y = ref[3]
            s, mu_x, a1, a2, b1, b2 = self._plane(x, ref)
            scores.append(s.mean())
            common = 2.0 / (n * b1 * b2)
            c0 = common * (mu_y * (a2 - a1) + s * mu_x * (b1 - b2))
            c1 = common * a1
            c2 = -common * s * b1
            g = (
                _box_scatter(c0, k)
                + y * _box_scatter(c1, k)
                + x * _box_scatter(c2, k)
            ) / s.size
            if result.ndim == 2:
                grad += g
            else:
                grad[..., c] = g
        mean_ssim = float(np.mean(scores))
        return mean_ssim, grad / len(self._refs)


def ssim(result: np.ndarray, reference: np.ndarray, window: int = DEFAULT_WINDOW) -> float:
    """Mean structural similarity over all valid ``window``-sized patches."""
    result = np.asarray(result, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    _check_same_shape(result, reference)
    return PairedSsim(reference, window).value(result)


def ssim_and_grad(
    result: np.ndarray, reference: np.ndarray, window: int = DEFAULT_WINDOW
):
    """Mean SSIM plus its analytic gradient with respect to ``result``."""
    result = np.asarray(result, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    _check_same_shape(result, reference)
    return PairedSsim(reference, window).value_and_grad(result)


def ssim_loss(result, reference, window: int = DEFAULT_WINDOW) -> float:
    """``1 - ssim``; zero for identical images, at most 2."""
    return 1.0 - ssim(result, reference, window)


def ssim_loss_and_grad(result, reference, window: int = DEFAULT_WINDOW):
    value, grad = ssim_and_grad(result, reference, window)
    return 1.0 - value, -grad


def l2_loss(result: np.ndarray, reference: np.ndarray) -> float:
    """Mean squared difference over all pixels and channels."""
    result = np.asarray(result, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    _check_same_shape(result, reference)
    diff = result - reference
    return float(np.mean(diff * diff))


def l2_loss_and_grad(result: np.ndarray, reference: np.ndarray):
    result = np.asarray(result, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    _check_same_shape(result, reference)
    diff = result - reference
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff


def total_pair_loss(
    result,
    reference,
    ssim_weight: float = 0.1,
    window: int = DEFAULT_WINDOW,
) -> float:
    """The fitting objective: ``l2 + ssim_weight * (1 - ssim)``."""
    if ssim_weight < 0.0:
        raise ValueError(f"ssim_weight must be >= 0, got {ssim_weight}")
    loss = l2_loss(result, reference)
    if ssim_weight > 0.0:
        loss += ssim_weight * ssim_loss(result, reference, window)
    return loss


def psnr(result: np.ndarray, reference: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit peak; inf when identical."""
    mse = l2_loss(result, reference)
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def quality_report(result: np.ndarray, reference: np.ndarray) -> QualityReport:
    """PSNR/SSIM of the two images after clamping both to [0, 1]."""
    a = np.clip(np.asarray(result, dtype=np.float64), 0.0, 1.0)
    b = np.clip(np.asarray(reference, dtype=np.float64), 0.0, 1.0)
    return QualityReport(psnr=psnr(a, b), ssim=ssim(a, b))

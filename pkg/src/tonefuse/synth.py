"""Synthetic images and degradation models for tests, demos, and defaults.

Real photo corpora are out of scope, so trend experiments run on generated
pairs: a smooth random "well-exposed" reference is pushed through strong
invertible tone degradations (gamma, S-curve, per-channel tint) to make the
input; fitting then has to learn the inverse mapping.  Spatially varying
pairs apply two different degradations to the left and right halves with a
smooth blend in between.
"""

from __future__ import annotations

import numpy as np

from .imageio import resize


def smooth_random_image(size: int, rng: np.random.Generator,
                        detail: float = 0.08) -> np.ndarray:
    """A smooth random RGB image in [0.02, 0.98] with mild texture."""
    coarse = rng.random((6, 6, 3))
    base = resize(coarse, size=(size, size))
    medium = resize(rng.random((max(2, size // 4), max(2, size // 4), 3)),
                    size=(size, size))
    img = 0.75 * base + 0.25 * medium + detail * (rng.random((size, size, 3)) - 0.5)
    lo, hi = img.min(), img.max()
    if hi - lo < 1e-9:
        return np.full_like(img, 0.5)
    return 0.02 + 0.96 * (img - lo) / (hi - lo)


def s_curve(x: np.ndarray, strength: float) -> np.ndarray:
    """Contrast S-curve on [0,1]; strength 0 is identity, ~6 is strong."""
    if strength <= 0:
        return x
    z = 1.0 / (1.0 + np.exp(-strength * (x - 0.5)))
    z0 = 1.0 / (1.0 + np.exp(strength * 0.5))
    z1 = 1.0 / (1.0 + np.exp(-strength * 0.5))
    return (z - z0) / (z1 - z0)


def random_tone_degradation(rng: np.random.Generator):
    """A strong invertible per-channel tone map reference -> degraded input."""
    gammas = rng.uniform(2.2, 3.2, size=3)
    strengths = rng.uniform(3.0, 6.0, size=3)
    tints = rng.uniform(0.72, 0.98, size=3)

    def degrade(rgb: np.ndarray) -> np.ndarray:
        out = np.empty_like(rgb)
        for c in range(3):
            x = np.clip(rgb[..., c], 0.0, 1.0)
            x = x ** gammas[c]
            x = s_curve(x, strengths[c])
            out[..., c] = tints[c] * x
        return out

    return degrade


def global_pair(size: int, rng: np.random.Generator):
    """(degraded input, reference) related by one global tone map."""
    reference = smooth_random_image(size, rng)
    degraded = random_tone_degradation(rng)(reference)
    return degraded, reference


def split_pair(size: int, rng: np.random.Generator, transition: int = 8):
    """(input, reference) whose halves were degraded by two different maps.

    The two degradations blend over ``transition`` columns around the image
    center, so the ideal confidence maps vary smoothly in space.
    """
    reference = smooth_random_image(size, rng)
    left = random_tone_degradation(rng)(reference)
    right = random_tone_degradation(rng)(reference)
    cols = np.arange(size, dtype=np.float64)
    ramp = np.clip((cols - (size - transition) / 2.0) / max(transition, 1), 0.0, 1.0)
    mask = ramp[None, :, None]
    degraded = left * (1.0 - mask) + right * mask
    return degraded, reference


def gamma_pair(size: int, rng: np.random.Generator, gamma: float = 2.2):
    """(input, reference) with reference = input ** (1/gamma) per channel."""
    inp = smooth_random_image(size, rng)
    return inp, np.clip(inp, 0.0, 1.0) ** (1.0 / gamma)


def auto_contrast(rgb: np.ndarray, lo_pct: float = 1.0,
                  hi_pct: float = 99.0) -> np.ndarray:
    """Per-channel percentile stretch to [0,1]; a stand-in reference target."""
    out = np.empty_like(rgb, dtype=np.float64)
    for c in range(3):
        x = rgb[..., c]
        lo = np.percentile(x, lo_pct)
        hi = np.percentile(x, hi_pct)
        if hi - lo < 1e-6:
            out[..., c] = x
        else:
            out[..., c] = np.clip((x - lo) / (hi - lo), 0.0, 1.0)
    return out

"""Blending of globally adjusted results via per-pixel confidence maps.

Two map flavors exist.  Plain maps carry three unconstrained channels per
solution and are combined by a raw multiply-add, which is the most accurate
fusion.  Constrained maps carry a single channel in [0,1] per solution and
are normalized per pixel, which makes the result a convex combination of the
solutions and lets a user re-weight them with scalar sliders.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

PLAIN = "plain"
CONSTRAINED = "constrained"

#: Guard added to normalizing denominators so all-zero confidence pixels
#: stay finite and differentiable.
EPSILON = 1e-8


@dataclass(frozen=True)
class ConfidenceMaps:
    """N per-solution weight grids; mode fixes channel count and value range."""

    mode: str
    maps: tuple

    def __post_init__(self):
        if self.mode not in (PLAIN, CONSTRAINED):
            raise ValueError(f"unknown fusion mode {self.mode!r}")
        maps = tuple(np.asarray(m, dtype=np.float64) for m in self.maps)
        if not maps:
            raise ValueError("need at least one confidence map")
        shapes = {m.shape for m in maps}
        if len(shapes) != 1:
            raise ValueError(f"confidence maps disagree on shape: {shapes}")
        shape = maps[0].shape
        if self.mode == PLAIN:
            if len(shape) != 3 or shape[2] != 3:
                raise ValueError(f"plain maps must be (H, W, 3), got {shape}")
        else:
            if len(shape) != 2:
                raise ValueError(f"constrained maps must be (H, W), got {shape}")
            for m in maps:
                if m.size and (m.min() < 0.0 or m.max() > 1.0):
                    raise ValueError("constrained map values must lie in [0, 1]")
        object.__setattr__(self, "maps", maps)

    def __len__(self) -> int:
        return len(self.maps)

    @property
    def spatial_shape(self) -> tuple:
        return self.maps[0].shape[:2]


def _check_solutions(solutions: Sequence[np.ndarray], maps: ConfidenceMaps):
    if len(solutions) != len(maps):
        raise ValueError(
            f"{len(solutions)} solutions but {len(maps)} confidence maps"
        )
    for v in solutions:
        if v.shape[:2] != maps.spatial_shape or v.ndim != 3 or v.shape[2] != 3:
            raise ValueError(
                f"solution shape {v.shape} does not match maps "
                f"{maps.spatial_shape}"
            )


def fuse_plain(solutions: Sequence[np.ndarray], maps: ConfidenceMaps) -> np.ndarray:
    """Elementwise multiply-add of solutions with three-channel maps.

    The raw sum is returned unclamped; clamping to [0,1] happens only when
    an image is exported, so optimization gradients stay alive.
    """
    if maps.mode != PLAIN:
        raise ValueError("fuse_plain needs plain-mode maps")
    _check_solutions(solutions, maps)
    out = np.zeros_like(np.asarray(solutions[0], dtype=np.float64))
    for v, c in zip(solutions, maps.maps):
        out += v * c
    return out


def normalize_maps(maps: ConfidenceMaps) -> ConfidenceMaps:
    """Divide constrained maps by their per-pixel sum (guarded by EPSILON)."""
    if maps.mode != CONSTRAINED:
        raise ValueError("normalize_maps needs constrained-mode maps")
    denom = np.zeros(maps.spatial_shape)
    for m in maps.maps:
        denom = denom + m
    denom = denom + EPSILON
    return ConfidenceMaps(CONSTRAINED, tuple(m / denom for m in maps.maps))


def fuse_constrained(
    solutions: Sequence[np.ndarray], maps: ConfidenceMaps
) -> np.ndarray:
    """Convex per-pixel blend with normalized single-channel maps.

    Identical arithmetic to :func:`interpolate` with all weights equal.
    """
    if maps.mode != CONSTRAINED:
        raise ValueError("fuse_constrained needs constrained-mode maps")
    _check_solutions(solutions, maps)
    normalized = normalize_maps(maps)
    out = np.zeros_like(np.asarray(solutions[0], dtype=np.float64))
    for v, c in zip(solutions, normalized.maps):
        out += v * c[..., None]
    return out


def fuse(solutions: Sequence[np.ndarray], maps: ConfidenceMaps) -> np.ndarray:
    """Mode-dispatching fusion: raw sum for plain, normalized for constrained."""
    if maps.mode == PLAIN:
        return fuse_plain(solutions, maps)
    return fuse_constrained(solutions, maps)


def interpolate(
    solutions: Sequence[np.ndarray],
    maps: ConfidenceMaps,
    weights: Sequence[float],
) -> np.ndarray:
    """Steer constrained fusion toward preferred solutions by scalar weights.

    Each map is scaled by its weight and the scaled maps are re-normalized
    per pixel, so only weight *ratios* matter.  Weights are divided by their
    maximum up front, which makes equal weights reduce to plain normalized
    fusion exactly, and makes rescaling all weights by a power of two a
    bitwise no-op.
    """
    if maps.mode != CONSTRAINED:
        raise ValueError("interpolation requires constrained mode")
    _check_solutions(solutions, maps)
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or len(w) != len(maps):
        raise ValueError(f"need {len(maps)} weights, got {w.shape}")
    if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
        raise ValueError("adjustment weights must be strictly positive")
    w = w / w.max()
    scaled = ConfidenceMaps(
        CONSTRAINED, tuple(m * wi for m, wi in zip(maps.maps, w))
    )
    return fuse_constrained(solutions, scaled)

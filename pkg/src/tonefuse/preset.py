"""Preset directories: portable serialized solution sets.

Layout: ``preset.json`` holds the format version, fit configuration echo,
and every curve parameter as full-precision decimals; each confidence map
is a 16-bit PNG sidecar (``map_<i>.png``, grayscale for constrained maps,
RGB for plain ones) with its stored value range recorded in the manifest.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from . import fusion
from .curves import CurveTriple, PiecewiseCurve
from .fusion import CONSTRAINED, PLAIN, ConfidenceMaps
from .imageio import Image, load_png, resize, save_png
from .fit import SolutionSet

FORMAT_VERSION = 1
MANIFEST_NAME = "preset.json"


class PresetError(ValueError):
    """Base class for unreadable or inconsistent preset directories."""


class PresetVersionError(PresetError):
    pass


class MissingSidecarError(PresetError):
    pass


def _map_filename(i: int) -> str:
    return f"map_{i}.png"


def save_preset(solution_set: SolutionSet, directory) -> None:
    """Write the manifest and one 16-bit PNG sidecar per confidence map."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    maps = solution_set.maps
    manifest_maps = []
    map_ranges = []
    for i, m in enumerate(maps.maps):
        if maps.mode == CONSTRAINED:
            lo, hi = 0.0, 1.0
        else:
            lo = float(m.min())
            hi = float(m.max())
            if hi <= lo:
                hi = lo + 1.0
        scaled = (m - lo) / (hi - lo)
        save_png(scaled, directory / _map_filename(i), bit_depth=16)
        manifest_maps.append(_map_filename(i))
        map_ranges.append([lo, hi])
    first = solution_set.triples[0].r
    manifest = {
        "format_version": FORMAT_VERSION,
        "n_solutions": solution_set.n_solutions,
        "pieces": first.pieces,
        "iterations": first.iterations,
        "fusion_mode": maps.mode,
        "curves": [
            [
                {"knots": list(map(float, ch.knots)),
                 "alphas": list(map(float, ch.alphas))}
                for ch in triple.channels
            ]
            for triple in solution_set.triples
        ],
        "maps": manifest_maps,
        "map_range": map_ranges,
    }
    text = json.dumps(manifest, indent=2, sort_keys=True)
    (directory / MANIFEST_NAME).write_text(text, encoding="utf-8")


def load_preset(directory) -> SolutionSet:
    """Reconstruct a solution set; validates every structural invariant."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        raise PresetError(f"no {MANIFEST_NAME} in {directory}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise PresetError(f"manifest is not valid JSON: {e}") from e
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise PresetVersionError(
            f"unsupported preset format_version {version!r} "
            f"(this build reads {FORMAT_VERSION})"
        )
    try:
        n = int(manifest["n_solutions"])
        pieces = int(manifest["pieces"])
        iterations = int(manifest["iterations"])
        mode = manifest["fusion_mode"]
        curves = manifest["curves"]
        map_names = manifest["maps"]
        map_ranges = manifest["map_range"]
    except KeyError as e:
        raise PresetError(f"manifest missing field {e}") from e
    if mode not in (PLAIN, CONSTRAINED):
        raise PresetError(f"unknown fusion_mode {mode!r}")
    if len(curves) != n or len(map_names) != n or len(map_ranges) != n:
        raise PresetError(
            f"manifest arrays disagree with n_solutions={n}: "
            f"{len(curves)} curve entries, {len(map_names)} maps, "
            f"{len(map_ranges)} ranges"
        )
    triples = []
    for entry in curves:
        if len(entry) != 3:
            raise PresetError("each solution needs exactly 3 channel curves")
        chans = []
        for ch in entry:
            knots = np.asarray(ch["knots"], dtype=np.float64)
            alphas = np.asarray(ch["alphas"], dtype=np.float64)
            if len(knots) != pieces + 1 or len(alphas) != pieces:
                raise PresetError(
                    f"curve arrays inconsistent with pieces={pieces}: "
                    f"{len(knots)} knots, {len(alphas)} alphas"
                )
            try:
                chans.append(
                    PiecewiseCurve(knots=knots, alphas=alphas, iterations=iterations)
                )
            except ValueError as e:
                raise PresetError(f"invalid curve parameters: {e}") from e
        triples.append(CurveTriple(*chans))
    maps = []
    for name, (lo, hi) in zip(map_names, map_ranges):
        path = directory / name
        if not path.is_file():
            raise MissingSidecarError(f"confidence map sidecar {name!r} missing")
        img = load_png(path)
        if mode == CONSTRAINED:
            stored = img.pixels[..., 0]
        else:
            stored = img.pixels
        maps.append(stored * (hi - lo) + lo)
    if mode == CONSTRAINED:
        maps = [np.clip(m, 0.0, 1.0) for m in maps]
    return SolutionSet(
        triples=tuple(triples), maps=ConfidenceMaps(mode, tuple(maps))
    )


def apply_preset(image, solution_set: SolutionSet, map_policy: str = "stored",
                 lut_resolution: int = 65536) -> np.ndarray:
    """Apply a (possibly loaded) solution set to an image; clamped output.

    ``map_policy="stored"`` uses the set's own maps, resized bilinearly if
    the image dimensions differ; ``"uniform"`` replaces them with constant
    1/N maps, which is the sensible default when the preset was fitted on a
    different image.
    """
    if map_policy not in ("stored", "uniform"):
        raise ValueError(f"map_policy must be 'stored' or 'uniform', got {map_policy!r}")
    rgb = image.pixels if isinstance(image, Image) else np.asarray(image, dtype=np.float64)
    adjusted = [t.apply_via_lut(rgb, lut_resolution) for t in solution_set.triples]
    maps = solution_set.maps
    n = len(maps)
    target = rgb.shape[:2]
    if map_policy == "uniform":
        if maps.mode == PLAIN:
            uniform = np.full((*target, 3), 1.0 / n)
        else:
            uniform = np.full(target, 1.0 / n)
        maps = ConfidenceMaps(maps.mode, tuple(uniform.copy() for _ in range(n)))
    elif maps.spatial_shape != target:
        resized = tuple(resize(m, size=target) for m in maps.maps)
        if maps.mode == CONSTRAINED:
            resized = tuple(np.clip(m, 0.0, 1.0) for m in resized)
        maps = ConfidenceMaps(maps.mode, resized)
    fused = fusion.fuse(adjusted, maps)
    return np.clip(fused, 0.0, 1.0)

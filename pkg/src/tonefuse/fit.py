"""Direct per-image fitting of the full enhancement parameter space.

Instead of a trained estimator, every parameter the pipeline consumes --
N curve triples (knots and curvatures) plus N confidence maps -- is
optimized for one (input, reference) pair by Adam on the paired loss
``l2 + w_s * (1 - ssim)`` of the fused output.  Curvatures live behind a
tanh so they stay in [-1, 1]; constrained maps live behind a sigmoid so
they stay in [0, 1].  All state is plain float64 numpy, single threaded
and bitwise deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import fusion, metrics
from .curves import CurveTriple, PiecewiseCurve
from .fusion import CONSTRAINED, EPSILON, PLAIN, ConfidenceMaps
from .imageio import Image, resize
from .metrics import QualityReport


class DivergedError(RuntimeError):
    """Fitting hit a non-finite loss; carries the trace recorded so far."""

    def __init__(self, message: str, trace: "FitTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters of a fit; defaults follow the reference pipeline."""

    solutions: int = 3
    pieces: int = 7
    iterations: int = 4
    steps: int = 2000
    learning_rate: float = 0.01
    ssim_weight: float = 0.1
    fusion_mode: str = PLAIN
    monotone_knots: bool = False
    seed: int = 0
    fit_scale: int = 1

    def __post_init__(self):
        if self.solutions < 1:
            raise ValueError("solutions must be >= 1")
        if self.pieces < 1:
            raise ValueError("pieces must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be > 0")
        if self.ssim_weight < 0.0:
            raise ValueError("ssim_weight must be >= 0")
        if self.fusion_mode not in (PLAIN, CONSTRAINED):
            raise ValueError(f"unknown fusion mode {self.fusion_mode!r}")
        if self.fit_scale not in (1, 2, 3, 4):
            raise ValueError("fit_scale must be one of 1, 2, 3, 4")


@dataclass(frozen=True)
class SolutionSet:
    """N curve triples plus their confidence maps: the full output space."""

    triples: tuple
    maps: ConfidenceMaps

    def __post_init__(self):
        triples = tuple(self.triples)
        if len(triples) != len(self.maps):
            raise ValueError(
                f"{len(triples)} curve triples but {len(self.maps)} maps"
            )
        ms = {t.r.pieces for t in triples}
        ns = {t.r.iterations for t in triples}
        if len(ms) != 1 or len(ns) != 1:
            raise ValueError("all curve triples must share M and n")
        object.__setattr__(self, "triples", triples)

    @property
    def n_solutions(self) -> int:
        return len(self.triples)

    def adjusted(self, rgb: np.ndarray) -> list:
        """The N globally adjusted results for an (H, W, 3) input."""
        return [t.apply(rgb) for t in self.triples]

    def fuse(self, rgb: np.ndarray) -> np.ndarray:
        """Apply all triples and blend with the confidence maps (unclamped)."""
        return fusion.fuse(self.adjusted(rgb), self.maps)


@dataclass(frozen=True)
class TraceRecord:
    step: int
    total: float
    l2: float
    ssim_term: float


@dataclass
class FitTrace:
    """Loss history at recorded steps plus the final quality report."""

    records: list = field(default_factory=list)
    report: Optional[QualityReport] = None

    @property
    def initial_loss(self) -> float:
        return self.records[0].total

    @property
    def final_loss(self) -> float:
        return self.records[-1].total


RECORD_EVERY = 10

ProgressFn = Callable[[int, int, float, float], None]


def _as_rgb(image) -> np.ndarray:
    if isinstance(image, Image):
        return image.pixels
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got {arr.shape}")
    return arr


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _isotonic_nondecreasing(v: np.ndarray) -> np.ndarray:
    """L2 projection onto nondecreasing vectors (pool adjacent violators)."""
    means = []
    counts = []
    for x in v:
        means.append(float(x))
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, c2 = means.pop(), counts.pop()
            m1, c1 = means.pop(), counts.pop()
            c = c1 + c2
            means.append((m1 * c1 + m2 * c2) / c)
            counts.append(c)
    out = np.empty_like(v)
    pos = 0
    for m, c in zip(means, counts):
        out[pos:pos + c] = m
        pos += c
    return out


def _init_params(config: FitConfig, shape: tuple) -> dict:
    n, m = config.solutions, config.pieces
    h, w = shape
    knots = np.broadcast_to(
        np.arange(m + 1, dtype=np.float64) / m, (n, 3, m + 1)
    ).copy()
    alpha_latent = np.zeros((n, 3, m))
    if config.fusion_mode == PLAIN:
        map_latent = np.full((n, h, w, 3), 1.0 / n)
    else:
        p = 1.0 / n
        z = 30.0 if n == 1 else float(np.log(p / (1.0 - p)))
        map_latent = np.full((n, h, w), z)
    return {"knots": knots, "alpha_latent": alpha_latent, "map_latent": map_latent}


def _params_to_maps(config: FitConfig, map_latent: np.ndarray) -> ConfidenceMaps:
    if config.fusion_mode == PLAIN:
        return ConfidenceMaps(PLAIN, tuple(map_latent))
    return ConfidenceMaps(CONSTRAINED, tuple(_sigmoid(map_latent)))


def _params_to_solution_set(
    config: FitConfig, params: dict, full_shape: Optional[tuple] = None
) -> SolutionSet:
    alphas = np.tanh(params["alpha_latent"])
    triples = []
    for i in range(config.solutions):
        chans = [
            PiecewiseCurve(
                knots=params["knots"][i, c].copy(),
                alphas=alphas[i, c].copy(),
                iterations=config.iterations,
            )
            for c in range(3)
        ]
        triples.append(CurveTriple(*chans))
    maps = _params_to_maps(config, params["map_latent"])
    if full_shape is not None and maps.spatial_shape != tuple(full_shape):
        resized = tuple(
            resize(m, size=full_shape, method="bilinear") for m in maps.maps
        )
        if maps.mode == CONSTRAINED:
            resized = tuple(np.clip(m, 0.0, 1.0) for m in resized)
        maps = ConfidenceMaps(maps.mode, resized)
    return SolutionSet(triples=tuple(triples), maps=maps)


def init_solution_set(config: FitConfig, image_shape: tuple) -> SolutionSet:
    """Identity curves plus uniform 1/N maps: reproduces any input image."""
    return _params_to_solution_set(config, _init_params(config, tuple(image_shape)))


class _Objective:
    """Forward/backward evaluation of the paired loss for one image pair.

    Piece assignments depend only on the input image, so they are gathered
    once; each evaluation then runs the bending recurrence and its alpha
    derivative per solution and channel.
    """

    def __init__(self, input_rgb: np.ndarray, reference_rgb: np.ndarray,
                 config: FitConfig, freeze_maps: bool = False):
        if input_rgb.shape != reference_rgb.shape:
            raise ValueError(
                f"input {input_rgb.shape} and reference {reference_rgb.shape} differ"
            )
        self.config = config
        self.freeze_maps = freeze_maps
        self.reference = reference_rgb
        h, w = input_rgb.shape[:2]
        n, m = config.solutions, config.pieces
        x = np.moveaxis(input_rgb, 2, 0)          # (3, H, W)
        z = x * m
        self.piece_idx = np.clip(z.astype(np.int64), 0, m - 1)
        self.frac = np.clip(z - self.piece_idx, 0.0, 1.0)
        self._chan = np.arange(3)[:, None, None]
        # flattened scatter bins per (solution, channel) parameter row
        row = np.arange(n)[:, None, None, None] * 3 + self._chan
        self._alpha_bins = (row * m + self.piece_idx).ravel()
        self._knot_bins_lo = (row * (m + 1) + self.piece_idx).ravel()
        self._knot_bins_hi = self._knot_bins_lo + 1
        self.ssim_active = (
            config.ssim_weight > 0.0
            and min(h, w) >= metrics.DEFAULT_WINDOW
        )
        self._ssim = (
            metrics.PairedSsim(reference_rgb) if self.ssim_active else None
        )
        self._ref_chw = np.moveaxis(reference_rgb, 2, 0)

    def _forward_curves(self, params: dict, with_alpha_grad: bool):
        cfg = self.config
        alphas = np.tanh(params["alpha_latent"])
        knots = params["knots"]
        j = self.piece_idx
        a = alphas[:, self._chan, j]              # (N, 3, H, W)
        lo = knots[:, self._chan, j]
        span = knots[:, self._chan, j + 1] - lo
        bend = np.broadcast_to(self.frac, a.shape)
        dbend = np.zeros_like(a) if with_alpha_grad else None
        if with_alpha_grad:
            for _ in range(cfg.iterations):
                dbend = dbend * (1.0 + a - 2.0 * a * bend) + bend * (1.0 - bend)
                bend = bend + a * bend * (1.0 - bend)
        else:
            for _ in range(cfg.iterations):
                bend = bend + a * bend * (1.0 - bend)
        v = lo + span * bend
        return v, (bend, dbend, span), alphas

    def _fuse(self, params: dict, v: np.ndarray):
        if self.config.fusion_mode == PLAIN:
            maps = np.moveaxis(params["map_latent"], 3, 1)   # (N, 3, H, W) view
            fused = np.einsum("nchw,nchw->chw", v, maps)
            return fused, None
        cmaps = _sigmoid(params["map_latent"])               # (N, H, W)
        denom = cmaps.sum(axis=0) + EPSILON
        weights = cmaps / denom
        fused = np.einsum("nchw,nhw->chw", v, weights)
        return fused, (cmaps, denom, weights)

    def _loss_terms(self, fused: np.ndarray):
        diff = fused - self._ref_chw
        l2 = float(np.mean(diff * diff))
        return l2, diff

    def loss(self, params: dict):
        v, _, _ = self._forward_curves(params, with_alpha_grad=False)
        fused, _ = self._fuse(params, v)
        l2, _ = self._loss_terms(fused)
        ssim_term = 0.0
        if self.ssim_active:
            ssim_term = 1.0 - self._ssim.value(np.moveaxis(fused, 0, 2))
        return l2 + self.config.ssim_weight * ssim_term, l2, ssim_term

    def loss_and_grad(self, params: dict):
        cfg = self.config
        v, (bend, dbend, span), alphas = self._forward_curves(
            params, with_alpha_grad=True)
        fused, fuse_cache = self._fuse(params, v)

        l2, diff = self._loss_terms(fused)
        d_fused = (2.0 / diff.size) * diff                   # (3, H, W)
        ssim_term = 0.0
        if self.ssim_active:
            value, g = self._ssim.value_and_grad(np.moveaxis(fused, 0, 2))
            ssim_term = 1.0 - value
            d_fused = d_fused - cfg.ssim_weight * np.moveaxis(g, 2, 0)
        total = l2 + cfg.ssim_weight * ssim_term

        grads = {"map_latent": np.zeros_like(params["map_latent"])}
        if cfg.fusion_mode == PLAIN:
            maps = np.moveaxis(params["map_latent"], 3, 1)
            d_v = d_fused[None] * maps
            if not self.freeze_maps:
                grads["map_latent"][:] = np.moveaxis(d_fused[None] * v, 1, 3)
        else:
            cmaps, denom, weights = fuse_cache
            d_v = d_fused[None] * weights[:, None]
            if not self.freeze_maps:
                d_c = np.einsum("chw,nchw->nhw", d_fused / denom,
                                v - fused[None])
                grads["map_latent"][:] = d_c * cmaps * (1.0 - cmaps)

        n, m = cfg.solutions, cfg.pieces
        w_alpha = d_v * span * dbend
        grads["alpha_latent"] = (
            np.bincount(self._alpha_bins, weights=w_alpha.ravel(),
                        minlength=n * 3 * m).reshape(n, 3, m)
            * (1.0 - alphas * alphas)
        )
        d_knots = np.bincount(self._knot_bins_lo,
                              weights=(d_v * (1.0 - bend)).ravel(),
                              minlength=n * 3 * (m + 1))
        d_knots += np.bincount(self._knot_bins_hi,
                               weights=(d_v * bend).ravel(),
                               minlength=n * 3 * (m + 1))
        grads["knots"] = d_knots.reshape(n, 3, m + 1)
        return total, l2, ssim_term, grads


class _Adam:
    """Adaptive-moment descent with the standard bias correction."""

    def __init__(self, params: dict, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p) for k, p in params.items()}
        self.v = {k: np.zeros_like(p) for k, p in params.items()}

    def step(self, params: dict, grads: dict):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            p -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)


def _run_fit(
    input_rgb: np.ndarray,
    reference_rgb: np.ndarray,
    config: FitConfig,
    freeze_maps: bool,
    on_progress: Optional[ProgressFn],
):
    full_shape = input_rgb.shape[:2]
    if config.fit_scale > 1:
        factor = 1.0 / config.fit_scale
        fit_in = resize(input_rgb, factor=factor)
        fit_ref = resize(reference_rgb, factor=factor)
    else:
        fit_in, fit_ref = input_rgb, reference_rgb

    params = _init_params(config, fit_in.shape[:2])
    objective = _Objective(fit_in, fit_ref, config, freeze_maps=freeze_maps)
    adam = _Adam(params, lr=config.learning_rate)

    trace = FitTrace()
    best_loss = np.inf
    best_params = None
    for step in range(config.steps):
        total, l2, ssim_term, grads = objective.loss_and_grad(params)
        if not np.isfinite(total):
            raise DivergedError(f"non-finite loss at step {step}", trace)
        if total < best_loss:
            best_loss = total
            best_params = {k: p.copy() for k, p in params.items()}
            best_components = (l2, ssim_term)
        if step % RECORD_EVERY == 0:
            trace.records.append(TraceRecord(step, total, l2, ssim_term))
            if on_progress is not None:
                on_progress(step, config.steps, total, _psnr_proxy(l2))
        adam.step(params, grads)
        if config.monotone_knots:
            k = params["knots"]
            for i in range(config.solutions):
                for c in range(3):
                    k[i, c] = _isotonic_nondecreasing(k[i, c])

    trace.records.append(
        TraceRecord(config.steps, best_loss, *best_components)
    )
    solution = _params_to_solution_set(config, best_params, full_shape)
    final = solution.fuse(input_rgb)
    clipped = np.clip(final, 0.0, 1.0)
    if min(full_shape) >= metrics.DEFAULT_WINDOW:
        trace.report = metrics.quality_report(clipped, reference_rgb)
    else:
        trace.report = QualityReport(
            psnr=metrics.psnr(clipped, np.clip(reference_rgb, 0.0, 1.0)),
            ssim=float("nan"),
        )
    if on_progress is not None:
        on_progress(config.steps, config.steps, best_loss,
                    _psnr_proxy(best_components[0]))
    return solution, trace


def _psnr_proxy(l2: float) -> float:
    if l2 <= 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / l2))


def fit_pair(
    input_image,
    reference_image,
    config: FitConfig = FitConfig(),
    on_progress: Optional[ProgressFn] = None,
):
    """Fit curves and maps so the fused input matches the reference.

    Returns ``(SolutionSet, FitTrace)`` where the set holds the best
    parameters seen over the run (so the final recorded loss never exceeds
    the initial one).  With ``fit_scale > 1`` the loss is optimized on a
    downsampled pair and the maps are upsampled bilinearly afterwards.
    """
    input_rgb = _as_rgb(input_image)
    reference_rgb = _as_rgb(reference_image)
    return _run_fit(input_rgb, reference_rgb, config, False, on_progress)


def fit_global_only(
    input_image,
    reference_image,
    config: FitConfig = FitConfig(),
    on_progress: Optional[ProgressFn] = None,
):
    """Single-curve baseline: N=1, confidence map frozen at one everywhere."""
    cfg = replace(config, solutions=1, fusion_mode=PLAIN)
    input_rgb = _as_rgb(input_image)
    reference_rgb = _as_rgb(reference_image)
    return _run_fit(input_rgb, reference_rgb, cfg, True, on_progress)


def _random_params(config: FitConfig, shape: tuple, rng: np.random.Generator) -> dict:
    n, m = config.solutions, config.pieces
    h, w = shape
    knots = np.sort(rng.uniform(0.0, 1.0, size=(n, 3, m + 1)), axis=-1)
    alpha_latent = rng.uniform(-1.2, 1.2, size=(n, 3, m))
    if config.fusion_mode == PLAIN:
        map_latent = rng.uniform(0.0, 2.0 / n, size=(n, h, w, 3))
    else:
        map_latent = rng.uniform(-2.0, 2.0, size=(n, h, w))
    return {"knots": knots, "alpha_latent": alpha_latent, "map_latent": map_latent}


def gradient_check(
    config: FitConfig = FitConfig(),
    trials: int = 20,
    epsilon: float = 1e-5,
    seed: int = 42,
    image_size: int = 8,
    freeze_maps: bool = False,
    max_map_checks: int = 48,
):
    """Compare analytic full-objective gradients against central differences.

    Runs ``trials`` random (image pair, parameter set) instances and returns
    the worst relative error per parameter class as a dict with keys
    ``knots``, ``alpha_latent``, ``map_latent``.  All knots and curvature
    latents are checked; map latents are spot-checked up to
    ``max_map_checks`` entries per trial to bound runtime.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = {"knots": 0.0, "alpha_latent": 0.0, "map_latent": 0.0}
    for _ in range(trials):
        shape = (image_size, image_size)
        inp = rng.random((*shape, 3))
        ref = rng.random((*shape, 3))
        params = _random_params(config, shape, rng)
        objective = _Objective(inp, ref, config, freeze_maps=freeze_maps)
        _, _, _, grads = objective.loss_and_grad(params)
        for name in worst:
            flat = params[name].reshape(-1)
            gflat = grads[name].reshape(-1)
            if name == "map_latent" and freeze_maps:
                worst[name] = max(worst[name], float(np.max(np.abs(gflat))))
                continue
            idx = np.arange(flat.size)
            if name == "map_latent" and flat.size > max_map_checks:
                idx = rng.choice(flat.size, size=max_map_checks, replace=False)
            for k in idx:
                orig = flat[k]
                flat[k] = orig + epsilon
                up, _, _ = objective.loss(params)
                flat[k] = orig - epsilon
                down, _, _ = objective.loss(params)
                flat[k] = orig
                numeric = (up - down) / (2.0 * epsilon)
                analytic = gflat[k]
                scale = max(abs(analytic), abs(numeric), 1e-6)
                worst[name] = max(worst[name], abs(analytic - numeric) / scale)
    return worst

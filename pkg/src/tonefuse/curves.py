"""Piecewise nonlinear tone curves.

A curve is assembled from ``M`` pieces over the input range [0, 1].  Knot
values anchor the output level at each piece boundary, and one curvature
parameter per piece bends the ramp inside the piece by iterating the basic
quadratic map ``x + alpha*x*(1-x)``.  Everything here is closed-form
differentiable in the knots and curvature parameters, which is what the
fitting module relies on.

All math is float64; evaluation works elementwise on scalars or arrays of
any shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def basic_curve(x, alpha):
    """One quadratic bending step ``x + alpha*x*(1-x)``.

    Maps [0,1] onto [0,1] monotonically for ``|alpha| <= 1`` and keeps the
    endpoints fixed.
    """
    return x + alpha * x * (1.0 - x)


def iterated_curve(x, alpha, n):
    """Apply :func:`basic_curve` ``n`` times (n >= 1) to amplify curvature."""
    if n < 1:
        raise ValueError(f"iteration count must be >= 1, got {n}")
    y = np.asarray(x, dtype=np.float64)
    for _ in range(int(n)):
        y = y + alpha * y * (1.0 - y)
    if np.ndim(x) == 0:
        return float(y)
    return y


def ramp_clamp(y):
    """Clamp to [0,1]; the linear ramp that makes pieces join continuously."""
    return np.clip(y, 0.0, 1.0)


def _piece_coords(x, pieces):
    """Owning piece index and fractional coordinate for inputs in [0,1].

    Inputs at a piece boundary belong to the left piece (fraction 1.0), so
    evaluation and parameter gradients agree from both sides.
    """
    z = np.asarray(x, dtype=np.float64) * pieces
    j = np.clip(z.astype(np.int64), 0, pieces - 1)
    f = np.clip(z - j, 0.0, 1.0)
    return j, f


def _iterate_with_alpha_grad(f, a, n):
    """Run the bending recurrence and its derivative w.r.t. alpha together."""
    F = f
    dF = np.zeros_like(F)
    for _ in range(int(n)):
        dF = dF * (1.0 + a - 2.0 * a * F) + F * (1.0 - F)
        F = F + a * F * (1.0 - F)
    return F, dF


@dataclass(frozen=True)
class PiecewiseCurve:
    """A tone curve with ``len(alphas)`` pieces.

    knots:  M+1 output levels anchoring the piece boundaries.
    alphas: per-piece curvature in [-1, 1]; 0 gives a straight ramp.
    iterations: how many times the quadratic map is composed per piece.
    """

    knots: np.ndarray
    alphas: np.ndarray
    iterations: int = 4

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=np.float64)
        alphas = np.asarray(self.alphas, dtype=np.float64)
        if knots.ndim != 1 or alphas.ndim != 1:
            raise ValueError("knots and alphas must be one-dimensional")
        if len(knots) != len(alphas) + 1 or len(alphas) < 1:
            raise ValueError(
                f"need len(knots) == len(alphas)+1 with at least one piece, "
                f"got {len(knots)} knots and {len(alphas)} alphas"
            )
        if not np.all(np.isfinite(knots)):
            raise ValueError("knots must be finite")
        if np.any(np.abs(alphas) > 1.0) or not np.all(np.isfinite(alphas)):
            raise ValueError("every alpha must lie in [-1, 1]")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        knots.setflags(write=False)
        alphas.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "iterations", int(self.iterations))

    @property
    def pieces(self) -> int:
        return len(self.alphas)

    @classmethod
    def identity(cls, pieces: int = 7, iterations: int = 4) -> "PiecewiseCurve":
        """Uniform knots with zero curvature: evaluates to the input exactly."""
        knots = np.arange(pieces + 1, dtype=np.float64) / pieces
        return cls(knots=knots, alphas=np.zeros(pieces), iterations=iterations)

    def __call__(self, x):
        """Evaluate at scalar or array ``x`` in [0,1].

        Equal to ``k_0 + sum_m (k_{m+1}-k_m) * G_m(x)`` with
        ``G_m = iterated_curve(ramp_clamp(x*M - m))``; computed here in the
        telescoped per-piece form ``k_j + (k_{j+1}-k_j) * F^n(frac)``.
        """
        j, f = _piece_coords(x, self.pieces)
        a = self.alphas[j]
        lo = self.knots[j]
        span = self.knots[j + 1] - lo
        F = f
        for _ in range(self.iterations):
            F = F + a * F * (1.0 - F)
        out = lo + span * F
        if np.ndim(x) == 0:
            return float(out)
        return out

    def gradients(self, x):
        """Analytic d(value)/d(knots) and d(value)/d(alphas) at scalar ``x``.

        At piece boundaries the interior one-sided derivative applies; knot
        gradients agree from both sides there.
        """
        if np.ndim(x) != 0:
            raise ValueError("gradients() takes a scalar input")
        j, f = _piece_coords(float(x), self.pieces)
        j = int(j)
        a = self.alphas[j]
        span = self.knots[j + 1] - self.knots[j]
        F, dF = _iterate_with_alpha_grad(float(f), float(a), self.iterations)
        d_knots = np.zeros(self.pieces + 1)
        d_knots[j] = 1.0 - F
        d_knots[j + 1] = F
        d_alphas = np.zeros(self.pieces)
        d_alphas[j] = span * dF
        return d_knots, d_alphas

    def to_lut(self, resolution: int) -> np.ndarray:
        """Sample the curve at ``resolution`` uniform points over [0,1]."""
        if resolution < 2:
            raise ValueError(f"resolution must be >= 2, got {resolution}")
        xs = np.linspace(0.0, 1.0, resolution)
        return np.asarray(self(xs), dtype=np.float64)


def apply_lut(plane: np.ndarray, lut: np.ndarray) -> np.ndarray:
    """Apply a sampled curve to a plane by linear interpolation of the table."""
    r = lut.shape[0]
    z = plane * (r - 1)
    i0 = np.clip(z.astype(np.int64), 0, r - 2)
    base = lut.take(i0)
    return base + (lut.take(i0 + 1) - base) * (z - i0)


@dataclass(frozen=True)
class CurveTriple:
    """One curve per RGB channel; all three share piece count and iterations."""

    r: PiecewiseCurve
    g: PiecewiseCurve
    b: PiecewiseCurve

    def __post_init__(self):
        ms = {c.pieces for c in (self.r, self.g, self.b)}
        ns = {c.iterations for c in (self.r, self.g, self.b)}
        if len(ms) != 1 or len(ns) != 1:
            raise ValueError("all three channel curves must share M and n")

    @property
    def channels(self) -> tuple[PiecewiseCurve, PiecewiseCurve, PiecewiseCurve]:
        return (self.r, self.g, self.b)

    @classmethod
    def identity(cls, pieces: int = 7, iterations: int = 4) -> "CurveTriple":
        c = PiecewiseCurve.identity(pieces, iterations)
        return cls(r=c, g=c, b=c)

    def apply(self, rgb: np.ndarray) -> np.ndarray:
        """Exact per-channel evaluation of an (H, W, 3) array."""
        out = np.empty_like(rgb, dtype=np.float64)
        for c, curve in enumerate(self.channels):
            out[..., c] = curve(rgb[..., c])
        return out

    def apply_via_lut(self, rgb: np.ndarray, resolution: int = 65536) -> np.ndarray:
        """Fast application through per-channel lookup tables."""
        out = np.empty_like(rgb, dtype=np.float64)
        for c, curve in enumerate(self.channels):
            out[..., c] = apply_lut(rgb[..., c], curve.to_lut(resolution))
        return out

"""Convergence-time estimation and related analytic diagnostics.

The central object is the integral

    F(lambda, rho, eta) = int_eta^xi dx / (x - xi*lambda(1-rho(1-x)))

which approximates the number of decoding iterations needed to push the
erasure probability below eta.  The integrand is smooth but can be very
large wherever the gap pinches, so the quadrature is seeded at the gap
minimum.  Also here: the flatness profile (the derivative of the one-step
map, which approaches 1 for density-efficient near-capacity ensembles)
and the B bound function used by the tradeoff analysis.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .de import _golden_min, gap
from .ensemble import Channel, Ensemble

__all__ = [
    "EstimateReport",
    "FlatnessProfile",
    "MinGapResult",
    "NonDecodingError",
    "NearSingularError",
    "estimate_F",
    "flatness_profile",
    "map_derivative",
    "b_function",
    "min_gap",
]

NEAR_SINGULAR_GAP = 1e-12


class NonDecodingError(ValueError):
    """The gap is nonpositive somewhere on [eta, xi]; F diverges."""


class NearSingularError(ValueError):
    """The gap drops below the singularity floor; F is effectively infinite."""


@dataclass(frozen=True)
class MinGapResult:
    x_star: float
    gap: float


def min_gap(ensemble: Ensemble, channel: Channel, lo: float, hi: float,
            grid_size: int = 2001) -> MinGapResult:
    """Minimum of the gap on [lo, hi]: grid scan plus golden-section refine.

    The refinement brackets the best grid point by its neighbors, so the
    result is accurate to ~1e-10 in x for any polynomial gap.
    """
    if not 0.0 < lo < hi <= channel.xi + 1e-15:
        raise ValueError(f"need 0 < lo < hi <= xi, got [{lo}, {hi}]")
    xs = np.linspace(lo, hi, grid_size)
    gaps = gap(ensemble, channel, xs)
    k = int(np.argmin(gaps))
    a = xs[max(k - 1, 0)]
    b = xs[min(k + 1, grid_size - 1)]
    x_star, g_star = _golden_min(lambda x: gap(ensemble, channel, x), a, b)
    # endpoints win when the minimum sits on the boundary of [lo, hi]
    for xe, ge in ((float(xs[0]), float(gaps[0])), (float(xs[-1]), float(gaps[-1]))):
        if ge < g_star:
            x_star, g_star = xe, ge
    if gaps[k] < g_star:
        x_star, g_star = float(xs[k]), float(gaps[k])
    return MinGapResult(x_star=float(x_star), gap=float(g_star))


@dataclass(frozen=True)
class EstimateReport:
    F_value: float
    eta: float
    quadrature_error_estimate: float
    min_gap_on_interval: float


def estimate_F(ensemble: Ensemble, channel: Channel, eta: float) -> EstimateReport:
    """Adaptive quadrature of 1/gap over [eta, xi].

    Raises NonDecodingError when the gap is nonpositive on the interval and
    NearSingularError when it falls below 1e-12 (the integral would be
    astronomically large and dominated by roundoff -- a deterministic way
    to separate "slow" from "not decoding").
    """
    xi = channel.xi
    if not 0.0 < eta < xi:
        raise ValueError(f"eta must be in (0, xi), got {eta}")
    pinch = min_gap(ensemble, channel, eta, xi)
    if pinch.gap <= 0.0:
        raise NonDecodingError(
            f"non-decoding ensemble: gap {pinch.gap:.3e} at x={pinch.x_star:.6g}")
    if pinch.gap < NEAR_SINGULAR_GAP:
        raise NearSingularError(
            f"near-singular gap {pinch.gap:.3e} at x={pinch.x_star:.6g}")

    def integrand(x):
        return 1.0 / gap(ensemble, channel, x)

    interior = [pinch.x_star] if eta < pinch.x_star < xi else None
    value, err = quad(integrand, eta, xi, points=interior, limit=500,
                      epsabs=0.0, epsrel=1e-9)
    # sanity bracket from the extreme gaps on the interval
    xs = np.linspace(eta, xi, 2001)
    gaps = gap(ensemble, channel, xs)
    lo_bound = (xi - eta) / float(gaps.max())
    hi_bound = (xi - eta) / pinch.gap
    if not lo_bound - 1e-9 <= value <= hi_bound + 1e-9:
        raise RuntimeError(f"quadrature value {value} escapes bracket [{lo_bound}, {hi_bound}]")
    return EstimateReport(F_value=float(value), eta=float(eta),
                          quadrature_error_estimate=float(err),
                          min_gap_on_interval=pinch.gap)


def map_derivative(ensemble: Ensemble, channel: Channel, x):
    """d/dx of xi*lambda(1-rho(1-x)) via the chain rule:

        xi * lambda'(1-rho(1-x)) * rho'(1-x)
    """
    arr = np.asarray(x, dtype=float)
    inner = 1.0 - ensemble.rho.evaluate(1.0 - arr)
    val = channel.xi * ensemble.lam.derivative(inner) * ensemble.rho.derivative(1.0 - arr)
    return float(val) if np.isscalar(x) or arr.ndim == 0 else val


@dataclass(frozen=True)
class FlatnessProfile:
    """Derivative of the one-step map sampled on a grid over (0, xi].

    For capacity-approaching, density-efficient ensembles this derivative
    is close to 1 across the interval; sup_deviation quantifies how close.
    """

    grid: np.ndarray = field(repr=False)
    derivative: np.ndarray = field(repr=False)
    sup_deviation: float

    def to_csv(self, path_or_buf, float_fmt: str = "%.6g") -> None:
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w", encoding="utf-8", newline="") if own else path_or_buf
        try:
            fh.write("x,derivative\n")
            for x, d in zip(self.grid, self.derivative):
                fh.write(f"{float_fmt % x},{float_fmt % d}\n")
        finally:
            if own:
                fh.close()

    def to_csv_string(self, float_fmt: str = "%.6g") -> str:
        buf = io.StringIO()
        self.to_csv(buf, float_fmt=float_fmt)
        return buf.getvalue()


def flatness_profile(ensemble: Ensemble, channel: Channel,
                     grid_size: int = 1001) -> FlatnessProfile:
    if grid_size < 100:
        raise ValueError("grid_size must be >= 100")
    xs = np.linspace(channel.xi / grid_size, channel.xi, grid_size)
    deriv = map_derivative(ensemble, channel, xs)
    return FlatnessProfile(grid=xs, derivative=deriv,
                           sup_deviation=float(np.max(np.abs(deriv - 1.0))))


def b_function(ensemble: Ensemble, channel: Channel, delta_r: float, x: float) -> float:
    """B(dR, b, x) = sqrt( 2 dR / ((xi + dR)(1 - xi) rho(1-x)) )."""
    if delta_r <= 0:
        raise ValueError(f"delta_r must be positive, got {delta_r}")
    if not 0.0 < x < channel.xi:
        raise ValueError(f"x must be in (0, xi), got {x}")
    rho_val = ensemble.rho.evaluate(1.0 - x)
    if rho_val <= 0:
        raise ValueError(f"rho(1-x) vanishes at x={x}")
    return float(np.sqrt(2.0 * delta_r / ((channel.xi + delta_r) * (1.0 - channel.xi) * rho_val)))

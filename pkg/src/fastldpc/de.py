"""Density evolution on the binary erasure channel.

For an ensemble (lambda, rho) and channel parameter xi the message erasure
probability evolves as

    p <- xi * lambda(1 - rho(1 - p))

starting from p0 = xi.  Decoding succeeds (in the infinite-length limit)
iff the one-step map stays strictly below the identity on (0, xi], i.e.
gap(x) = x - xi*lambda(1-rho(1-x)) > 0 there.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .ensemble import Channel, Ensemble

__all__ = [
    "DeTrace",
    "SuccessCheck",
    "gap",
    "de_step",
    "run_de",
    "success_condition",
    "threshold_search",
]

DEFAULT_MAX_ITER = 100_000
DEFAULT_GRID = 10_001

_INV_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def gap(ensemble: Ensemble, channel: Channel, x):
    """x - xi*lambda(1-rho(1-x)), the per-iteration decoding margin at x."""
    arr = np.asarray(x, dtype=float)
    val = arr - channel.xi * ensemble.lam.evaluate(1.0 - ensemble.rho.evaluate(1.0 - arr))
    return float(val) if np.isscalar(x) or arr.ndim == 0 else val


def de_step(ensemble: Ensemble, channel: Channel, p: float) -> float:
    """One application of the erasure recursion; maps [0, xi] into itself."""
    if not -1e-15 <= p <= channel.xi + 1e-15:
        raise ValueError(f"erasure probability {p} outside [0, {channel.xi}]")
    p = min(max(p, 0.0), channel.xi)
    return channel.xi * ensemble.lam.evaluate(1.0 - ensemble.rho.evaluate(1.0 - p))


@dataclass(frozen=True)
class DeTrace:
    """Message erasure probabilities along a density-evolution run.

    ``probs[0]`` is the channel output xi, ``probs[l]`` the probability
    after l applications of the recursion.  ``t_eta`` is the convergence
    time at level eta: the number of recursion applications needed to
    drive the erasure probability from the all-unknown state p = 1 down to
    at most eta.  Since the first application maps 1 to exactly xi, this
    equals (number of probs entries above eta) + 1.  This counting is the
    one that reproduces the published convergence times for the reference
    ensembles shipped with the package.
    """

    xi: float
    eta: float
    probs: np.ndarray = field(repr=False)
    converged: bool
    t_eta: int | None

    def __len__(self) -> int:
        return len(self.probs)

    def to_csv(self, path_or_buf, float_fmt: str = "%.6g") -> None:
        """Write (iteration, erasure_probability) rows."""
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w", encoding="utf-8", newline="") if own else path_or_buf
        try:
            fh.write("iteration,erasure_probability\n")
            for l, p in enumerate(self.probs):
                fh.write(f"{l},{float_fmt % p}\n")
        finally:
            if own:
                fh.close()

    def to_csv_string(self, float_fmt: str = "%.6g") -> str:
        buf = io.StringIO()
        self.to_csv(buf, float_fmt=float_fmt)
        return buf.getvalue()


def run_de(ensemble: Ensemble, channel: Channel, eta: float,
           max_iter: int = DEFAULT_MAX_ITER) -> DeTrace:
    """Iterate the recursion from p0 = xi until p <= eta or max_iter steps.

    A run that stalls (the map has a fixed point above eta) or exhausts
    max_iter comes back with converged=False and t_eta=None; that is a
    statement about the ensemble, not an error.
    """
    if not 0.0 < eta < channel.xi:
        raise ValueError(f"eta must be in (0, xi), got {eta}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    p = channel.xi
    probs = [p]
    converged = p <= eta
    for _ in range(max_iter):
        if converged:
            break
        nxt = de_step(ensemble, channel, p)
        if nxt >= p:
            break  # fixed point above eta: no further progress possible
        probs.append(nxt)
        p = nxt
        converged = p <= eta
    arr = np.array(probs)
    t_eta = int(np.sum(arr > eta)) + 1 if converged else None
    return DeTrace(xi=channel.xi, eta=eta, probs=arr, converged=converged, t_eta=t_eta)


@dataclass(frozen=True)
class SuccessCheck:
    ok: bool
    min_gap: float
    argmin_x: float


def _golden_min(f, lo: float, hi: float, xtol: float = 1e-10) -> tuple[float, float]:
    """Golden-section minimization of a unimodal-enough bracket."""
    a, b = lo, hi
    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def success_condition(ensemble: Ensemble, channel: Channel,
                      grid_size: int = DEFAULT_GRID) -> SuccessCheck:
    """Check gap(x) > 0 on (0, xi] on a uniform grid plus local refinement.

    The gap is a polynomial, so a fine grid finds the neighborhood of the
    true minimum and a golden-section pass sharpens it.
    """
    if grid_size < 100:
        raise ValueError("grid_size must be >= 100")
    xi = channel.xi
    xs = np.linspace(xi / grid_size, xi, grid_size)
    gaps = gap(ensemble, channel, xs)
    k = int(np.argmin(gaps))
    lo = xs[max(k - 1, 0)] if k > 0 else xs[0] / 2.0
    hi = xs[min(k + 1, grid_size - 1)]
    x_star, g_star = _golden_min(lambda x: gap(ensemble, channel, x), lo, hi)
    if gaps[k] < g_star:
        x_star, g_star = float(xs[k]), float(gaps[k])
    return SuccessCheck(ok=bool(g_star > 0.0), min_gap=float(g_star), argmin_x=float(x_star))


def threshold_search(ensemble: Ensemble, tol: float = 1e-6,
                     grid_size: int = DEFAULT_GRID) -> float:
    """Largest xi (within tol) at which the success condition still holds.

    Success is monotone in xi -- shrinking xi both scales down the map and
    shrinks the interval -- so plain bisection over (0, 1) applies.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if success_condition(ensemble, Channel(mid), grid_size=grid_size).ok:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)

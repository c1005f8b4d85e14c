"""Edge-perspective degree distributions, channels and code ensembles.

A degree distribution is the polynomial sum_d c_d x^(d-1) where c_d is the
fraction of edges attached to nodes of degree d.  Everything downstream
(density evolution, the convergence-time integral, the optimizer) is built
on this small algebra: evaluation, derivatives, functional inversion, the
average degree, the design rate and the mass/average-preserving
perturbation used by the right-concentration arguments.

All types are immutable after construction and all operations are pure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "DegreeDistribution",
    "Channel",
    "Ensemble",
    "ShokrollahiCheck",
    "design_rate",
    "shokrollahi_bound",
    "perturb",
    "regular",
    "distribution_to_records",
    "distribution_from_records",
    "load_ensemble",
    "save_ensemble",
    "dump_ensemble",
    "parse_ensemble",
]

# Inputs whose coefficient sum deviates from 1 by more than this are
# rejected; anything closer is renormalized so the stored fractions sum to 1
# to machine precision.  Published tables are printed to 4 decimals and can
# be off by a few 1e-4, so the gate has to be looser than the stored-state
# tolerance of 1e-12.
_SUM_REJECT_TOL = 1e-3


class DegreeDistribution:
    """Immutable edge-perspective degree distribution.

    Maps node degree d (>= 2) to the fraction of edges incident to
    degree-d nodes.  Evaluation is the polynomial sum_d c_d x^(d-1), so
    ``dist(1) == 1`` and ``dist(0) == 0``.
    """

    __slots__ = ("_degrees", "_fractions", "_text")

    def __init__(self, coeffs: Mapping[int, float] | Iterable[tuple[int, float]],
                 fraction_text: Mapping[int, str] | None = None):
        items = dict(coeffs).items()
        cleaned = []
        for d, c in items:
            d = int(d)
            c = float(c)
            if d < 2:
                raise ValueError(f"degree {d} below the minimum of 2")
            if c < 0:
                raise ValueError(f"negative fraction {c} for degree {d}")
            if c > 0:
                cleaned.append((d, c))
        if not cleaned:
            raise ValueError("distribution has no positive coefficients")
        cleaned.sort()
        degrees = np.array([d for d, _ in cleaned], dtype=np.int64)
        if len(np.unique(degrees)) != len(degrees):
            raise ValueError("duplicate degrees")
        fractions = np.array([c for _, c in cleaned], dtype=float)
        total = float(fractions.sum())
        if abs(total - 1.0) > _SUM_REJECT_TOL:
            raise ValueError(f"fractions sum to {total}, not 1")
        fractions /= total
        self._degrees = degrees
        self._fractions = fractions
        self._text = dict(fraction_text) if fraction_text else {}

    # -- basic accessors -------------------------------------------------

    @property
    def coeffs(self) -> dict[int, float]:
        return {int(d): float(c) for d, c in zip(self._degrees, self._fractions)}

    @property
    def degrees(self) -> np.ndarray:
        return self._degrees.copy()

    @property
    def fractions(self) -> np.ndarray:
        return self._fractions.copy()

    @property
    def min_degree(self) -> int:
        return int(self._degrees[0])

    @property
    def max_degree(self) -> int:
        return int(self._degrees[-1])

    def __eq__(self, other) -> bool:
        if not isinstance(other, DegreeDistribution):
            return NotImplemented
        return (self._degrees.shape == other._degrees.shape
                and bool(np.all(self._degrees == other._degrees))
                and bool(np.all(self._fractions == other._fractions)))

    def __hash__(self) -> int:
        return hash((tuple(self._degrees), tuple(self._fractions)))

    def __repr__(self) -> str:
        terms = " + ".join(f"{c:.4g}*x^{d - 1}" for d, c in zip(self._degrees, self._fractions))
        return f"DegreeDistribution({terms})"

    # -- polynomial algebra ----------------------------------------------

    def evaluate(self, x):
        """sum_d c_d x^(d-1).  Accepts scalars or arrays in [0, 1]."""
        arr = np.asarray(x, dtype=float)
        if np.any(arr < -1e-15) or np.any(arr > 1 + 1e-15):
            raise ValueError("argument outside [0, 1]")
        arr = np.clip(arr, 0.0, 1.0)
        out = np.zeros_like(arr)
        for d, c in zip(self._degrees, self._fractions):
            out += c * arr ** (int(d) - 1)
        return float(out) if np.isscalar(x) or arr.ndim == 0 else out

    __call__ = evaluate

    def derivative(self, x):
        """sum_d c_d (d-1) x^(d-2); nonnegative on [0, 1]."""
        arr = np.asarray(x, dtype=float)
        if np.any(arr < -1e-15) or np.any(arr > 1 + 1e-15):
            raise ValueError("argument outside [0, 1]")
        arr = np.clip(arr, 0.0, 1.0)
        out = np.zeros_like(arr)
        for d, c in zip(self._degrees, self._fractions):
            if d == 2:
                out += c
            else:
                out += c * (int(d) - 1) * arr ** (int(d) - 2)
        return float(out) if np.isscalar(x) or arr.ndim == 0 else out

    def inverse(self, y: float) -> float:
        """The unique x in [0, 1] with evaluate(x) == y.

        Bracketed bisection (evaluation is monotone because all
        coefficients are nonnegative) down to an interval of width 1e-12,
        then one round of Newton polish.
        """
        y = float(y)
        if not 0.0 <= y <= 1.0:
            raise ValueError("argument outside [0, 1]")
        if y == 0.0:
            return 0.0
        if y == 1.0:
            return 1.0
        lo, hi = 0.0, 1.0
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            if self.evaluate(mid) < y:
                lo = mid
            else:
                hi = mid
        x = 0.5 * (lo + hi)
        for _ in range(3):
            slope = self.derivative(x)
            if slope <= 0:
                break
            step = (self.evaluate(x) - y) / slope
            x = min(max(x - step, lo - 1e-12), hi + 1e-12)
        return min(max(x, 0.0), 1.0)

    def average_degree(self) -> float:
        """1 / sum_d c_d / d, the reciprocal of the integral over [0, 1]."""
        return 1.0 / float(np.sum(self._fractions / self._degrees))

    def integral(self) -> float:
        """Integral of the polynomial over [0, 1], i.e. sum_d c_d / d."""
        return float(np.sum(self._fractions / self._degrees))

    def fraction_text(self, degree: int) -> str | None:
        """Verbatim source text of a coefficient, if it came from a file."""
        return self._text.get(int(degree))


def regular(degree: int) -> DegreeDistribution:
    """Single-degree distribution x^(degree-1)."""
    return DegreeDistribution({degree: 1.0})


@dataclass(frozen=True)
class Channel:
    """Binary erasure channel with erasure probability xi in (0, 1)."""

    xi: float

    def __post_init__(self):
        if not 0.0 < self.xi < 1.0:
            raise ValueError(f"erasure probability must be in (0, 1), got {self.xi}")

    @property
    def capacity(self) -> float:
        return 1.0 - self.xi

    def capacity_gap(self, ensemble: "Ensemble") -> float:
        """Delta R = capacity - design rate."""
        return self.capacity - ensemble.rate


class Ensemble:
    """A (lambda, rho) degree-distribution pair with derived quantities.

    ``rate``      1 - int(rho)/int(lambda)        (the design rate)
    ``a``         average right degree, 1/int(rho)
    ``b``         1/a
    """

    __slots__ = ("lam", "rho", "rate", "a", "b")

    def __init__(self, lam: DegreeDistribution, rho: DegreeDistribution):
        rate = 1.0 - rho.integral() / lam.integral()
        if not 0.0 < rate < 1.0:
            raise ValueError(f"design rate {rate} outside (0, 1)")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "rate", rate)
        object.__setattr__(self, "a", rho.average_degree())
        object.__setattr__(self, "b", 1.0 / rho.average_degree())

    def __setattr__(self, *args):
        raise AttributeError("Ensemble is immutable")

    def __repr__(self) -> str:
        return (f"Ensemble(rate={self.rate:.4f}, a={self.a:.4f}, "
                f"lam={self.lam!r}, rho={self.rho!r})")


def design_rate(ensemble: Ensemble) -> float:
    """1 - (sum rho_j/j) / (sum lambda_i/i)."""
    return 1.0 - ensemble.rho.integral() / ensemble.lam.integral()


@dataclass(frozen=True)
class ShokrollahiCheck:
    holds: bool
    lhs: float
    rhs: float


def shokrollahi_bound(ensemble: Ensemble, channel: Channel) -> ShokrollahiCheck:
    """Density/capacity tradeoff check: (1-xi)^a <= dR / (xi + dR).

    Any ensemble that decodes reliably at erasure rate xi with rate gap
    dR = (1-xi) - rate has to satisfy this; a violation proves the design
    target unreachable at the given average right degree.
    """
    delta_r = channel.capacity_gap(ensemble)
    if delta_r <= 0:
        raise ValueError(f"rate {ensemble.rate} is at or above capacity {channel.capacity}")
    lhs = channel.capacity ** ensemble.a
    rhs = delta_r / (channel.xi + delta_r)
    return ShokrollahiCheck(holds=bool(lhs <= rhs), lhs=lhs, rhs=rhs)


def perturb(dist: DegreeDistribution, i: int, beta: float) -> DegreeDistribution:
    """Mass- and average-preserving perturbation around exponent i.

    Adds beta*x^i and removes i/(2(i+1))*beta*x^(i-1) plus
    (i+2)/(2(i+1))*beta*x^(i+1).  In degree terms that touches degrees
    i, i+1, i+2: the weights are chosen so both sum(c_d) and sum(c_d/d)
    are unchanged, hence so is the average degree.  The difference
    new(x) - old(x) changes sign exactly once on (0, 1), at x = i/(i+2):
    negative below, positive above.

    beta must be small enough that the coefficients at degrees i and i+2
    stay nonnegative (and the top coefficient stays positive when
    i+2 is the maximal degree, so the maximal degree is preserved).
    """
    i = int(i)
    beta = float(beta)
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    coeffs = dist.coeffs
    lo_deg, mid_deg, hi_deg = i, i + 1, i + 2
    if lo_deg not in coeffs or hi_deg not in coeffs:
        raise ValueError(
            f"perturbation at exponent {i} needs positive coefficients at degrees {lo_deg} and {hi_deg}")
    if beta == 0.0:
        return DegreeDistribution(coeffs)
    w_lo = i / (2.0 * (i + 1.0)) * beta
    w_hi = (i + 2.0) / (2.0 * (i + 1.0)) * beta
    new = dict(coeffs)
    new[lo_deg] = new[lo_deg] - w_lo
    new[mid_deg] = new.get(mid_deg, 0.0) + beta
    new[hi_deg] = new[hi_deg] - w_hi
    if new[lo_deg] < 0 or new[hi_deg] < 0:
        raise ValueError(f"beta={beta} drives a coefficient negative")
    if hi_deg == dist.max_degree and new[hi_deg] == 0.0:
        raise ValueError(f"beta={beta} removes the maximal degree {hi_deg}")
    return DegreeDistribution(new)


# -- serialization -------------------------------------------------------
#
# The on-disk form is a JSON object
#   {"lambda": [{"degree": 2, "fraction": "0.1863"}, ...],
#    "rho":    [{"degree": 7, "fraction": "0.5330"}, ...]}
# with fractions kept as decimal strings so a load/save round trip
# preserves published tables byte for byte.


def distribution_to_records(dist: DegreeDistribution) -> list[dict]:
    records = []
    for d, c in zip(dist.degrees, dist.fractions):
        text = dist.fraction_text(int(d))
        records.append({"degree": int(d), "fraction": text if text is not None else repr(float(c))})
    return records


def distribution_from_records(records: Iterable[Mapping]) -> DegreeDistribution:
    coeffs = {}
    text = {}
    for rec in records:
        d = int(rec["degree"])
        raw = rec["fraction"]
        coeffs[d] = float(raw)
        if isinstance(raw, str):
            text[d] = raw
    return DegreeDistribution(coeffs, fraction_text=text)


def dump_ensemble(ensemble: Ensemble, name: str | None = None) -> str:
    obj = {
        "lambda": distribution_to_records(ensemble.lam),
        "rho": distribution_to_records(ensemble.rho),
    }
    if name:
        obj["name"] = name
    return json.dumps(obj, indent=2) + "\n"


def parse_ensemble(text: str) -> Ensemble:
    obj = json.loads(text)
    try:
        lam = distribution_from_records(obj["lambda"])
        rho = distribution_from_records(obj["rho"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed ensemble record: {exc}") from exc
    return Ensemble(lam, rho)


def load_ensemble(path) -> Ensemble:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_ensemble(fh.read())


def save_ensemble(ensemble: Ensemble, path, name: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_ensemble(ensemble, name=name))

"""Degree-distribution search for minimal decoding convergence time.

The program being solved: minimize F(lambda, rho, eta) over (lambda, rho)
subject to the decodability condition xi*lambda(1-rho(1-x)) < x on (0, xi],
the rate pin int(rho)/int(lambda) = 1 - rate, and both coefficient vectors
living on the probability simplex.

Jointly this is nonconvex, but the optimum's check side concentrates on at
most two consecutive degrees, so the outer loop enumerates exactly those
candidates: rho = t*x^(j-1) + (1-t)*x^j over consecutive pairs (j, j+1)
and a mixing grid.  For each fixed rho the inner problem over lambda is
convex -- the discretized objective is a sum of reciprocals of positive
affine functions of lambda -- and is solved with a log-barrier Newton
method on the equality-constrained formulation.

The KKT diagnostic evaluates, for each check degree j,

    I_j = int_eta^xi g(x) j (1-x)^(j-1) dx,
    g(x) = xi * lambda'(1-rho(1-x)) / gap(x)^2,

which at a stationary point is affine in j across the support of rho.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import linprog

from .de import gap, run_de
from .ensemble import Channel, DegreeDistribution, Ensemble, shokrollahi_bound
from .estimator import estimate_F

__all__ = [
    "DesignSpec",
    "OptimizationResult",
    "NoFeasibleDesignError",
    "enumerate_rho_candidates",
    "optimize_lambda",
    "optimize",
    "kkt_integrals",
    "kkt_residual",
    "concentration_oracle",
]


class NoFeasibleDesignError(RuntimeError):
    """Every candidate check-side distribution is infeasible for the spec."""


@dataclass(frozen=True)
class DesignSpec:
    """Target for the degree-distribution search.

    The design rate is (1 - xi) - delta_r; gap_margin is the slack that
    turns the strict decodability inequality into a checkable one (it also
    keeps F finite and the validated DE run fast below eta).
    """

    xi: float
    delta_r: float
    max_left_degree: int
    max_right_degree: int
    eta: float
    gap_margin: float = 1e-6
    mix_grid: int = 101           # t values per consecutive-degree pair
    constraint_grid: int = 2001   # decodability grid over [eta/10, xi]
    objective_grid: int = 512     # Chebyshev nodes for the discretized F

    def __post_init__(self):
        if not 0.0 < self.xi < 1.0:
            raise ValueError(f"xi must be in (0, 1), got {self.xi}")
        if not 0.0 < self.delta_r < 1.0 - self.xi:
            raise ValueError(f"delta_r must be in (0, capacity), got {self.delta_r}")
        if self.max_left_degree < 2 or self.max_right_degree < 2:
            raise ValueError("maximal degrees must be >= 2")
        if not 0.0 < self.eta < self.xi:
            raise ValueError(f"eta must be in (0, xi), got {self.eta}")
        if self.gap_margin <= 0:
            raise ValueError("gap_margin must be positive")
        if self.mix_grid < 2:
            raise ValueError("mix_grid must be >= 2")

    @property
    def rate(self) -> float:
        return (1.0 - self.xi) - self.delta_r


@dataclass(frozen=True)
class OptimizationResult:
    ensemble: Ensemble
    F_value: float
    t_eta: int
    kkt_max_residual: float
    rho_support: tuple[int, ...]
    solver_trace: list[dict] = field(repr=False)

    def to_record(self) -> dict:
        from .ensemble import distribution_to_records

        return {
            "lambda": distribution_to_records(self.ensemble.lam),
            "rho": distribution_to_records(self.ensemble.rho),
            "rate": self.ensemble.rate,
            "avg_right_degree": self.ensemble.a,
            "F_value": self.F_value,
            "t_eta": self.t_eta,
            "kkt_max_residual": self.kkt_max_residual,
            "rho_support": list(self.rho_support),
            "solver_trace": self.solver_trace,
        }


def enumerate_rho_candidates(spec: DesignSpec) -> list[DegreeDistribution]:
    """All two-consecutive-degree check distributions up to max_right_degree.

    For each pair (j, j+1) the mixing fraction t (weight on the lower
    degree) runs over a uniform grid; the t = 0/1 endpoints collapse to
    single degrees and are deduplicated.
    """
    if spec.max_right_degree < 3:
        raise ValueError("max_right_degree must be >= 3 to enumerate pairs")
    seen = set()
    out = []
    for j in range(2, spec.max_right_degree):
        for t in np.linspace(0.0, 1.0, spec.mix_grid):
            t = float(t)
            if t <= 0.0:
                coeffs = {j + 1: 1.0}
            elif t >= 1.0:
                coeffs = {j: 1.0}
            else:
                coeffs = {j: t, j + 1: 1.0 - t}
            key = tuple(sorted(coeffs.items()))
            if key in seen:
                continue
            seen.add(key)
            out.append(DegreeDistribution(coeffs))
    return out


# -- inner convex problem ------------------------------------------------


class _InnerProblem:
    """Discretization of min F over lambda for a fixed check side.

    Variables are the lambda coefficients on degrees 2..d_v.  Constraints:

      * G lam <= h          decodability with margin on the constraint grid
      * lam >= 0
      * sum lam = 1,  sum lam_i/i = int(rho)/(1 - rate)

    Objective: sum_k w_k / (x_k - (U lam)_k) on a Chebyshev grid of
    [eta, xi] with Chebyshev-Gauss weights; each term is a reciprocal of a
    positive affine function of lambda, hence convex.
    """

    def __init__(self, rho: DegreeDistribution, spec: DesignSpec, margin: float):
        self.spec = spec
        self.degrees = np.arange(2, spec.max_left_degree + 1)
        self.m = len(self.degrees)
        self.int_target = rho.integral() / (1.0 - spec.rate)

        xs_con = np.linspace(spec.eta * 0.1, spec.xi, spec.constraint_grid)
        u_con = 1.0 - rho.evaluate(1.0 - xs_con)
        self.G = spec.xi * u_con[:, None] ** (self.degrees[None, :] - 1)
        self.h = xs_con - margin

        n = spec.objective_grid
        k = np.arange(1, n + 1)
        t = np.cos((2 * k - 1) * np.pi / (2 * n))
        half = 0.5 * (spec.xi - spec.eta)
        self.x_obj = 0.5 * (spec.xi + spec.eta) + half * t
        self.w = (np.pi / n) * half * np.sqrt(1.0 - t ** 2)
        u_obj = 1.0 - rho.evaluate(1.0 - self.x_obj)
        self.U = spec.xi * u_obj[:, None] ** (self.degrees[None, :] - 1)

        self.A = np.vstack([np.ones(self.m), 1.0 / self.degrees])
        self.b = np.array([1.0, self.int_target])

    def int_target_reachable(self) -> bool:
        # sum lam_i/i on the simplex spans [1/d_v, 1/2]
        return 1.0 / self.degrees[-1] - 1e-14 <= self.int_target <= 0.5 + 1e-14

    def phase1(self, rng: np.random.Generator | None = None):
        """Max-slack feasibility LP; returns a strictly interior point or None.

        With an rng, a random linear objective replaces max-slack (still
        subject to a positive-slack floor) to produce varied feasible
        starts for convexity checks.
        """
        n_con = self.G.shape[0]
        c = np.zeros(self.m + 1)
        c[-1] = -1.0
        A_ub = np.vstack([
            np.hstack([self.G, np.ones((n_con, 1))]),
            np.hstack([-np.eye(self.m), np.ones((self.m, 1))]),
        ])
        b_ub = np.concatenate([self.h, np.zeros(self.m)])
        A_eq = np.hstack([self.A, np.zeros((2, 1))])
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=self.b,
                      bounds=[(None, None)] * self.m + [(None, None)], method="highs")
        if not res.success or res.x[-1] <= 1e-12:
            return None
        center = res.x[: self.m]
        if rng is None:
            return center
        # random vertex of the slack-floored region, blended toward the center
        s_floor = 0.5 * res.x[-1]
        c2 = np.concatenate([rng.standard_normal(self.m), [0.0]])
        res2 = linprog(c2, A_ub=A_ub, b_ub=b_ub - 0.0, A_eq=A_eq, b_eq=self.b,
                       bounds=[(None, None)] * self.m + [(s_floor, None)], method="highs")
        if not res2.success:
            return center
        theta = rng.uniform(0.2, 0.8)
        return theta * center + (1.0 - theta) * res2.x[: self.m]

    # objective and barrier pieces, all closed form

    def objective(self, lam: np.ndarray) -> float:
        d = self.x_obj - self.U @ lam
        return float(np.sum(self.w / d))

    def _merit(self, lam, t):
        d = self.x_obj - self.U @ lam
        slack = self.h - self.G @ lam
        if np.any(d <= 0) or np.any(slack <= 0) or np.any(lam <= 0):
            return np.inf
        return t * np.sum(self.w / d) - np.sum(np.log(slack)) - np.sum(np.log(lam))

    def solve(self, x0: np.ndarray, barrier_tol: float = 1e-9) -> np.ndarray:
        """Equality-constrained Newton along the central path from x0."""
        lam = np.asarray(x0, dtype=float).copy()
        n_ineq = self.G.shape[0] + self.m
        t = max(n_ineq / max(self.objective(lam), 1.0), 1.0)
        KKT = np.zeros((self.m + 2, self.m + 2))
        KKT[: self.m, self.m:] = self.A.T
        KKT[self.m:, : self.m] = self.A
        rhs = np.zeros(self.m + 2)
        while True:
            for _ in range(100):
                d = self.x_obj - self.U @ lam
                slack = self.h - self.G @ lam
                g = (t * (self.U.T @ (self.w / d ** 2))
                     + self.G.T @ (1.0 / slack) - 1.0 / lam)
                H = ((self.U.T * (2.0 * t * self.w / d ** 3)) @ self.U
                     + (self.G.T * (1.0 / slack ** 2)) @ self.G
                     + np.diag(1.0 / lam ** 2))
                KKT[: self.m, : self.m] = H
                rhs[: self.m] = -g
                try:
                    step = np.linalg.solve(KKT, rhs)[: self.m]
                except np.linalg.LinAlgError:
                    step = np.linalg.lstsq(KKT, rhs, rcond=None)[0][: self.m]
                decrement = float(-g @ step)
                if decrement * 0.5 < 1e-10:
                    break
                merit0 = self._merit(lam, t)
                alpha = 1.0
                while alpha > 1e-14:
                    trial = lam + alpha * step
                    if self._merit(trial, t) <= merit0 - 0.25 * alpha * decrement:
                        break
                    alpha *= 0.5
                lam = lam + alpha * step
            if n_ineq / t < barrier_tol:
                return lam
            t *= 20.0


def _cleanup(lam: np.ndarray, degrees: np.ndarray, int_target: float,
             drop_tol: float = 1e-8) -> dict[int, float] | None:
    """Drop barrier dust and re-project exactly onto the two equalities.

    The correction is spread over the two largest coefficients by solving
    the 2x2 system for (delta_mass, delta_integral); it is of the order of
    the dropped mass, far below feasibility slack.
    """
    keep = lam > drop_tol
    if keep.sum() < 2:
        return None
    d = degrees[keep].astype(float)
    v = lam[keep].copy()
    need_mass = 1.0 - v.sum()
    need_int = int_target - np.sum(v / d)
    order = np.argsort(-v)
    i1, i2 = order[0], order[1]
    M = np.array([[1.0, 1.0], [1.0 / d[i1], 1.0 / d[i2]]])
    try:
        delta = np.linalg.solve(M, [need_mass, need_int])
    except np.linalg.LinAlgError:
        return None
    v[i1] += delta[0]
    v[i2] += delta[1]
    if np.any(v <= 0):
        return None
    return {int(dd): float(vv) for dd, vv in zip(degrees[keep], v)}


def _certify(lam: DegreeDistribution, rho: DegreeDistribution, spec: DesignSpec,
             margin: float) -> bool:
    """Re-check the decodability margin at 10x the constraint resolution."""
    xs = np.linspace(spec.eta * 0.1, spec.xi, 10 * spec.constraint_grid)
    ens = Ensemble(lam, rho)
    return bool(np.min(gap(ens, Channel(spec.xi), xs)) >= margin * (1.0 - 1e-9))


def optimize_lambda(rho: DegreeDistribution, spec: DesignSpec,
                    start: np.ndarray | None = None) -> DegreeDistribution | None:
    """Best left distribution for a fixed check side, or None if infeasible.

    Feasibility is decided by a max-slack LP over the same constraint set;
    the convex objective is then minimized by the barrier solver, barrier
    dust is dropped, the two equality constraints are re-imposed exactly,
    and the margin is certified at 10x grid resolution (with one margin
    bump-and-retry if certification fails between grid nodes).
    """
    for margin in (spec.gap_margin, 1.5 * spec.gap_margin):
        problem = _InnerProblem(rho, spec, margin)
        if not problem.int_target_reachable():
            return None
        x0 = np.asarray(start, dtype=float) if start is not None else problem.phase1()
        if x0 is None:
            return None
        lam_vec = problem.solve(x0)
        coeffs = _cleanup(lam_vec, problem.degrees, problem.int_target)
        if coeffs is None:
            return None
        lam = DegreeDistribution(coeffs)
        if _certify(lam, rho, spec, spec.gap_margin):
            return lam
        start = None  # retry at larger margin from a fresh phase-1 point
    return None


def optimize(spec: DesignSpec, validate_max_iter: int = 100_000) -> OptimizationResult:
    """Outer enumeration of concentrated check sides + inner convex solves.

    Candidates whose average right degree violates the achievable-rate
    bound (1-xi)^a <= dR/(xi+dR) are pruned without solving: no left side
    can make them decode at the target rate.  The survivor with least
    exact F wins; ties within 1e-6 go to the larger average right degree,
    then to the smaller mixing fraction.  The winner is validated by an
    actual density-evolution run and the KKT diagnostic.
    """
    channel = Channel(spec.xi)
    rhs_bound = spec.delta_r / (spec.xi + spec.delta_r)
    trace: list[dict] = []
    best = None  # (F, a, t_mix, lam, rho)
    for rho in enumerate_rho_candidates(spec):
        support = tuple(int(d) for d in rho.degrees)
        t_mix = float(rho.fractions[0]) if len(support) == 2 else 1.0
        entry = {"rho_support": list(support), "t": t_mix}
        a = rho.average_degree()
        if (1.0 - spec.xi) ** a > rhs_bound:
            entry["status"] = "pruned-shokrollahi"
            trace.append(entry)
            continue
        lam = optimize_lambda(rho, spec)
        if lam is None:
            entry["status"] = "infeasible"
            trace.append(entry)
            continue
        ens = Ensemble(lam, rho)
        F = estimate_F(ens, channel, spec.eta).F_value
        entry["status"] = "feasible"
        entry["F"] = F
        trace.append(entry)
        cand = (F, a, t_mix, lam, rho)
        if best is None:
            best = cand
        else:
            dF = F - best[0]
            if dF < -1e-6:
                best = cand
            elif dF <= 1e-6 and (a > best[1] + 1e-12
                                 or (abs(a - best[1]) <= 1e-12 and t_mix < best[2])):
                best = cand
    if best is None:
        raise NoFeasibleDesignError(
            f"no feasible design for rate {spec.rate} at xi={spec.xi} "
            f"with d_v<={spec.max_left_degree}, d_c<={spec.max_right_degree}")
    F, _, _, lam, rho = best
    ens = Ensemble(lam, rho)
    de = run_de(ens, channel, spec.eta, max_iter=validate_max_iter)
    if not de.converged:
        raise NoFeasibleDesignError("winning candidate failed density-evolution validation")
    residuals = kkt_residual(ens, channel, spec.eta)
    return OptimizationResult(
        ensemble=ens,
        F_value=F,
        t_eta=de.t_eta,
        kkt_max_residual=float(max(abs(r) for r in residuals.values())),
        rho_support=tuple(int(d) for d in rho.degrees),
        solver_trace=trace,
    )


# -- stationarity diagnostic ----------------------------------------------


def kkt_integrals(ensemble: Ensemble, channel: Channel, eta: float,
                  degrees: Sequence[int]) -> dict[int, float]:
    """I_j = int_eta^xi g(x) j (1-x)^(j-1) dx for the requested degrees."""
    if not 0.0 < eta < channel.xi:
        raise ValueError(f"eta must be in (0, xi), got {eta}")

    def g(x):
        z = 1.0 - ensemble.rho.evaluate(1.0 - x)
        return channel.xi * ensemble.lam.derivative(z) / gap(ensemble, channel, x) ** 2

    out = {}
    for j in degrees:
        j = int(j)
        val, _ = quad(lambda x: g(x) * j * (1.0 - x) ** (j - 1),
                      eta, channel.xi, limit=500, epsabs=0.0, epsrel=1e-9)
        out[j] = float(val)
    return out


def kkt_residual(ensemble: Ensemble, channel: Channel, eta: float) -> dict[int, float]:
    """Residuals of the affine fit I_j ~ alpha + beta*j over rho's support.

    Stationarity of the check side makes I_j exactly affine on the active
    degrees, so near-zero residuals are the first-order optimality signal.
    A support of size <= 2 is fitted exactly; larger (non-concentrated)
    supports expose their deviation here.
    """
    support = [int(d) for d in ensemble.rho.degrees]
    I = kkt_integrals(ensemble, channel, eta, support)
    js = np.array(support, dtype=float)
    vals = np.array([I[j] for j in support])
    if len(support) <= 2:
        fit = vals
    else:
        V = np.vstack([np.ones_like(js), js]).T
        coef, *_ = np.linalg.lstsq(V, vals, rcond=None)
        fit = V @ coef
    return {j: float(v - f) for j, v, f in zip(support, vals, fit)}


def concentration_oracle(a: float, d: int, x0: float) -> DegreeDistribution:
    """Brute-force maximizer of gamma(x0) at fixed average and max degree.

    Enumerates every degree pair (i, j), i < j <= d, solves the 2x2 system
    for nonnegative weights with average exactly a, evaluates at x0, and
    returns the best.  For x0 > 1 - 2/(d+1) the winner must be supported
    on {floor(a), floor(a)+1} (a single degree when a is an integer); the
    oracle asserts that prediction and raises if enumeration contradicts
    it, which is the point of having the oracle.
    """
    d = int(d)
    a = float(a)
    x0 = float(x0)
    if not 2.0 <= a <= d:
        raise ValueError(f"average degree {a} outside [2, {d}]")
    if not x0 > 1.0 - 2.0 / (d + 1.0):
        raise ValueError(f"x0={x0} below the concentration regime 1-2/(d+1)")
    best_val = -np.inf
    best: dict[int, float] | None = None
    for i in range(2, d + 1):
        if abs(a - i) < 1e-12:
            val = x0 ** (i - 1)
            if val > best_val:
                best_val, best = val, {i: 1.0}
        for j in range(i + 1, d + 1):
            if not i <= a <= j:
                continue
            u = i * (j - a) / (a * (j - i))
            v = j * (a - i) / (a * (j - i))
            if u < 0 or v < 0:
                continue
            val = u * x0 ** (i - 1) + v * x0 ** (j - 1)
            if val > best_val:
                best_val = val
                best = {i: u, j: v} if u > 0 and v > 0 else ({i: 1.0} if v <= 0 else {j: 1.0})
    if best is None:
        raise ValueError(f"no feasible support for average {a} with max degree {d}")
    lo = int(np.floor(a))
    predicted = {lo: 1.0} if abs(a - lo) < 1e-12 else None
    if predicted is None:
        u = lo * (lo + 1 - a) / a
        v = (lo + 1) * (a - lo) / a
        predicted = {lo: u, lo + 1: v} if u > 0 else {lo + 1: v}
    pred_val = sum(c * x0 ** (dd - 1) for dd, c in predicted.items())
    if best_val > pred_val * (1.0 + 1e-12) + 1e-15:
        raise RuntimeError(
            f"concentration prediction violated: support {sorted(best)} beats "
            f"{sorted(predicted)} at a={a}, d={d}, x0={x0}")
    return DegreeDistribution(predicted)

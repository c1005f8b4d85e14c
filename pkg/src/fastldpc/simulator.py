"""Finite-length validation: random Tanner graphs, erasure channels,
iterative decoding, Monte Carlo aggregation.

Graphs come from the configuration model: node counts per degree class are
apportioned from the edge-perspective distributions, each node grows
degree-many sockets, and variable sockets are matched to check sockets by
a seeded uniform permutation.  Multi-edges are kept (each parallel edge is
a separate socket pair during decoding).

The decoder runs in synchronized rounds -- every check with exactly one
erased neighbor fires per round -- so the round index lines up with the
density-evolution iteration index.  Alongside node resolutions it tracks
the extrinsic variable-to-check message states, whose erased fraction is
the finite-length analogue of the DE erasure probability.

Randomness uses counter-based Philox streams keyed by (seed, purpose);
per-trial noise streams are keyed by seed + trial index, so trials can be
evaluated in any order or in parallel without coordination.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .ensemble import Channel, Ensemble

__all__ = [
    "TannerGraph",
    "PeelResult",
    "SimRecord",
    "build_graph",
    "transmit",
    "peel",
    "monte_carlo",
]

_GRAPH_STREAM = 1
_NOISE_STREAM = 2


def _rng(seed: int, purpose: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed & (2 ** 64 - 1), purpose]))


def _apportion(total: int, weights: np.ndarray) -> np.ndarray:
    """Largest-remainder rounding of total*weights to integers summing to total."""
    w = np.asarray(weights, dtype=float)
    raw = total * (w / w.sum())
    base = np.floor(raw).astype(np.int64)
    short = total - int(base.sum())
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return base


def _balance_sockets(counts: np.ndarray, degrees: np.ndarray, deficit: int,
                     budget: int = 64) -> np.ndarray | None:
    """Adjust class counts so sum(counts*degrees) grows by exactly deficit.

    Breadth-first search over per-class node increments/decrements, fewest
    node changes first with ties resolved toward lower degrees, keeping
    every count nonnegative.  Returns adjusted counts, or None when the
    deficit is not representable within the budget (degenerate tiny graphs
    or single-class distributions with incompatible socket totals).
    """
    if deficit == 0:
        return counts
    window = abs(deficit) + 2 * int(degrees.max())
    frontier: dict[int, tuple] = {0: tuple([0] * len(degrees))}
    seen = {0}
    for _ in range(budget):
        nxt: dict[int, tuple] = {}
        for reached, deltas in frontier.items():
            for idx in range(len(degrees)):
                for sign in (1, -1):
                    new_deltas = list(deltas)
                    new_deltas[idx] += sign
                    if counts[idx] + new_deltas[idx] < 0:
                        continue
                    total = reached + sign * int(degrees[idx])
                    if total == deficit:
                        return counts + np.array(new_deltas, dtype=np.int64)
                    if total not in seen and abs(total) <= window:
                        seen.add(total)
                        nxt[total] = tuple(new_deltas)
        if not nxt:
            return None
        frontier = nxt
    return None


@dataclass(frozen=True)
class TannerGraph:
    """Realized bipartite graph.  Edge k joins variable edge_var[k] to
    check edge_check[k]; the arrays list one entry per socket, so parallel
    edges appear as repeated (var, check) pairs."""

    n_vars: int
    n_checks: int
    var_degrees: np.ndarray = field(repr=False)
    check_degrees: np.ndarray = field(repr=False)
    edge_var: np.ndarray = field(repr=False)
    edge_check: np.ndarray = field(repr=False)
    seed: int
    socket_adjustment: dict

    @property
    def n_edges(self) -> int:
        return len(self.edge_var)


def build_graph(ensemble: Ensemble, n: int, seed: int) -> TannerGraph:
    """Sample a length-n graph from the ensemble, deterministically per seed.

    Node counts per degree class are apportioned with largest remainders
    (node fraction of degree d is proportional to coeff_d / d); the check
    side is then nudged by whole nodes until the socket counts match, with
    the adjustment recorded in the graph metadata.
    """
    if n < 100:
        raise ValueError(f"n must be >= 100, got {n}")
    lam_deg = ensemble.lam.degrees
    rho_deg = ensemble.rho.degrees
    var_counts = _apportion(n, ensemble.lam.fractions / lam_deg)
    n_edges = int(np.sum(var_counts * lam_deg))

    check_weights = ensemble.rho.fractions / rho_deg
    m_ideal = int(round(n_edges * float(check_weights.sum())))
    check_counts = _apportion(m_ideal, check_weights)
    deficit = n_edges - int(np.sum(check_counts * rho_deg))
    balanced = _balance_sockets(check_counts, rho_deg, deficit)
    if balanced is None:
        raise ValueError(
            f"cannot balance {deficit} leftover sockets across check degrees "
            f"{list(map(int, rho_deg))}; choose a friendlier n")
    adjustment = {int(d): int(b - c) for d, c, b in zip(rho_deg, check_counts, balanced)
                  if b != c}
    check_counts = balanced

    var_degrees = np.repeat(lam_deg, var_counts)
    check_degrees = np.repeat(rho_deg, check_counts)
    edge_var = np.repeat(np.arange(len(var_degrees), dtype=np.int64), var_degrees)
    check_sockets = np.repeat(np.arange(len(check_degrees), dtype=np.int64), check_degrees)
    perm = _rng(seed, _GRAPH_STREAM).permutation(n_edges)
    return TannerGraph(
        n_vars=len(var_degrees),
        n_checks=len(check_degrees),
        var_degrees=var_degrees,
        check_degrees=check_degrees,
        edge_var=edge_var,
        edge_check=check_sockets[perm],
        seed=int(seed),
        socket_adjustment=adjustment,
    )


def transmit(n: int, xi: float, seed: int) -> np.ndarray:
    """Bernoulli(xi) erasure pattern over n positions, one Philox stream per seed."""
    if not 0.0 < xi < 1.0:
        raise ValueError(f"xi must be in (0, 1), got {xi}")
    return _rng(seed, _NOISE_STREAM).random(n) < xi


@dataclass(frozen=True)
class PeelResult:
    """Per-round decoder trajectory.

    erasure_counts[r] is the number of still-erased variables after round
    r+1; message_erasures[r] the number of erased variable-to-check
    messages at the same instant.  Zero initial erasures terminate before
    any round, leaving both sequences empty.
    """

    erasure_counts: np.ndarray = field(repr=False)
    message_erasures: np.ndarray = field(repr=False)
    success: bool


def peel(graph: TannerGraph, erasures: np.ndarray, max_iter: int = 10_000) -> PeelResult:
    """Synchronized-round erasure decoding.

    Each round every check with exactly one erased incident edge resolves
    that variable; all such resolutions happen simultaneously so rounds
    align with DE iterations.  Message states are extrinsic: a variable
    counts as known toward check c once the channel or some other check
    supplies it.  Stops when a round makes no progress or nothing is left.
    """
    erased = np.asarray(erasures, dtype=bool)
    if erased.shape != (graph.n_vars,):
        raise ValueError(f"erasure pattern length {erased.shape} != n_vars {graph.n_vars}")
    ev, ec = graph.edge_var, graph.edge_check
    ch_known = ~erased
    msg_known = ch_known[ev].copy()
    resolved = ch_known.copy()
    var_counts: list[int] = []
    msg_counts: list[int] = []
    for _ in range(max_iter):
        if resolved.all():
            break
        unknown_in = np.bincount(ec, weights=~msg_known, minlength=graph.n_checks)
        # check-to-var known iff every *other* incoming message is known
        cv_known = (unknown_in[ec] - ~msg_known) == 0
        known_src = np.bincount(ev, weights=cv_known, minlength=graph.n_vars)
        new_resolved = ch_known | (known_src > 0)
        if np.array_equal(new_resolved, resolved):
            break
        resolved = new_resolved
        msg_known = ch_known[ev] | ((known_src[ev] - cv_known) > 0)
        var_counts.append(int(graph.n_vars - resolved.sum()))
        msg_counts.append(int(graph.n_edges - msg_known.sum()))
    return PeelResult(
        erasure_counts=np.array(var_counts, dtype=np.int64),
        message_erasures=np.array(msg_counts, dtype=np.int64),
        success=bool(resolved.all()),
    )


@dataclass(frozen=True)
class SimRecord:
    """Monte Carlo aggregate of per-iteration message erasure fractions.

    Index 0 is the channel output (before any decoding round); shorter
    trials are padded with their terminal value so the mean stays defined
    across the whole horizon.
    """

    trials: int
    per_iteration_mean_erasure: np.ndarray = field(repr=False)
    per_iteration_stderr: np.ndarray = field(repr=False)
    success_fraction: float

    def to_csv(self, path_or_buf, float_fmt: str = "%.6g") -> None:
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w", encoding="utf-8", newline="") if own else path_or_buf
        try:
            fh.write("iteration,mean_erasure,stderr\n")
            for i, (m, s) in enumerate(zip(self.per_iteration_mean_erasure,
                                           self.per_iteration_stderr)):
                fh.write(f"{i},{float_fmt % m},{float_fmt % s}\n")
        finally:
            if own:
                fh.close()

    def to_csv_string(self, float_fmt: str = "%.6g") -> str:
        buf = io.StringIO()
        self.to_csv(buf, float_fmt=float_fmt)
        return buf.getvalue()


def monte_carlo(ensemble: Ensemble, n: int, channel: Channel, trials: int,
                seed: int, fresh_graph_per_trial: bool = False) -> SimRecord:
    """Average decoder trajectories over independent noise realizations.

    The default matches the single-code experiment: one graph drawn from
    the seed, fresh erasures per trial.  With fresh_graph_per_trial=True a
    new graph is drawn for every trial from that trial's stream.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    graph = None if fresh_graph_per_trial else build_graph(ensemble, n, seed)
    curves: list[np.ndarray] = []
    successes = 0
    for t in range(trials):
        g = build_graph(ensemble, n, seed + t) if fresh_graph_per_trial else graph
        erased = transmit(g.n_vars, channel.xi, seed + t)
        initial = float(np.sum(g.var_degrees[erased])) / g.n_edges
        res = peel(g, erased, max_iter=10_000)
        successes += res.success
        curves.append(np.concatenate([[initial], res.message_erasures / g.n_edges]))
    horizon = max(len(c) for c in curves)
    mat = np.empty((trials, horizon))
    for i, c in enumerate(curves):
        mat[i, : len(c)] = c
        mat[i, len(c):] = c[-1]
    mean = mat.mean(axis=0)
    if trials > 1:
        stderr = mat.std(axis=0, ddof=1) / np.sqrt(trials)
    else:
        stderr = np.zeros(horizon)
    return SimRecord(
        trials=trials,
        per_iteration_mean_erasure=mean,
        per_iteration_stderr=stderr,
        success_fraction=successes / trials,
    )

"""Evidence-gathering diagnostics on a converged norm field.

All results here are bounds or graph verdicts obtained by simulation; none of
them is a certificate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from ..flow import SwitchingSignal
from ..matnum import expm

__all__ = [
    "NormFlowRun",
    "follow_extremal",
    "spread_starts",
    "VmEstimate",
    "seminorm_vm",
    "GapReport",
    "sup_vs_max_gap",
    "ConvexityReport",
    "convexity_audit",
    "UniquenessReport",
    "uniqueness_diagnostic",
]


@dataclass(frozen=True)
class NormFlowRun:
    times: np.ndarray
    states: np.ndarray      # (steps + 1, K, n)
    controls: np.ndarray    # (steps, K) vertex indices
    values: np.ndarray      # (steps + 1, K) field values along the runs

    def signal(self, k):
        """Run ``k`` as a SwitchingSignal (consecutive equal controls merged)."""
        h = self.times[1] - self.times[0]
        segs = []
        for u in self.controls[:, k]:
            if segs and segs[-1][1] == int(u):
                segs[-1][0] += h
            else:
                segs.append([h, int(u)])
        return SwitchingSignal(tuple((d, u) for d, u in segs))

    def drift(self):
        return np.abs(self.values - self.values[0]).max(axis=0)


def follow_extremal(sys, field, x0, horizon, h=None, stick_tol=None, initial_control=None):
    """Norm-guided extremal flow: at each step pick ``argmax_i v(e^{h A_i} x)``.

    The current control is kept unless another vertex is better by more than
    ``stick_tol``, which suppresses switching on interpolation ties.
    ``x0`` may be a single start or a (K, n) batch.
    """
    X = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    K, n = X.shape
    if h is None:
        h = 0.1 / max(sys.max_norm(), 1e-12)
    if stick_tol is None:
        stick_tol = 1e-3 * field.grid_error
    steps = int(np.ceil(horizon / h))
    E = np.array([expm(G, h) for G in sys.generators])
    m = len(E)
    states = np.empty((steps + 1, K, n))
    values = np.empty((steps + 1, K))
    controls = np.empty((steps, K), dtype=np.int64)
    states[0] = X
    values[0] = field.query(X)
    current = np.full(K, -1 if initial_control is None else int(initial_control))
    rows = np.arange(K)
    for s in range(steps):
        cand = np.einsum("uij,kj->kui", E, X)
        vals = field.query(cand.reshape(-1, n)).reshape(K, m)
        best = vals.argmax(axis=1)
        keep = (current >= 0) & (vals[rows, np.maximum(current, 0)] >= vals[rows, best] - stick_tol)
        u = np.where(keep, current, best)
        X = cand[rows, u]
        current = u
        controls[s] = u
        states[s + 1] = X
        values[s + 1] = vals[rows, u]
    times = h * np.arange(steps + 1)
    return NormFlowRun(times, states, controls, values)


def spread_starts(n, count, offset=0.37):
    """Deterministic well-spread unit vectors (angles for n = 2, Fibonacci points for n = 3)."""
    if n == 2:
        th = np.pi * (np.arange(count) + offset) / count
        return np.column_stack([np.cos(th), np.sin(th)])
    if n == 3:
        k = np.arange(count) + offset
        z = 1 - 2 * k / count
        r = np.sqrt(np.maximum(0.0, 1 - z * z))
        phi = np.pi * (3 - np.sqrt(5)) * k
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    raise ValueError("spread starts are available for n = 2 and n = 3")


def _late(times, frac):
    return times >= times[-1] * (1 - frac)


@dataclass(frozen=True)
class VmEstimate:
    value: float
    signal: SwitchingSignal
    strategy: str
    portfolio: dict = field(default_factory=dict)


def _greedy_linear(sys, m, x0, horizon, h):
    E = [expm(G, h) for G in sys.generators]
    mv = [m @ G for G in sys.generators]
    steps = int(np.ceil(horizon / h))
    x = np.array(x0, dtype=float)
    xs = [x]
    us = []
    for _ in range(steps):
        u = int(np.argmax([r @ x for r in mv]))
        x = E[u] @ x
        xs.append(x)
        us.append(u)
    return np.array(xs), us


def _signal_from_controls(us, h):
    segs = []
    for u in us:
        if segs and segs[-1][1] == u:
            segs[-1][0] += h
        else:
            segs.append([h, u])
    return SwitchingSignal(tuple((d, u) for d, u in segs))


def _random_signal_run(sys, x0, horizon, rng, mean_dwell):
    segs = []
    t = 0.0
    while t < horizon:
        d = min(float(rng.exponential(mean_dwell)) + 1e-3, horizon - t)
        segs.append((d, int(rng.integers(sys.m))))
        t += d
    return SwitchingSignal(tuple(segs))


def seminorm_vm(sys, m, x, horizon=100.0, restarts=8, field=None, h=None, late_fraction=0.25,
                seed=0, pair_runs=None):
    """Lower bound on ``sup limsup m^T x(t)`` from a portfolio of signals.

    Strategies: norm-guided extremal runs (when ``field`` is given), greedy
    maximization of ``d/dt m^T x``, and seeded random bang signals.
    ``pair_runs`` may supply extra (times, states, signal) triples, e.g. from
    the rank-one pair extremal flow.
    """
    from ..flow import propagate

    m = np.asarray(m, dtype=float)
    x = np.asarray(x, dtype=float)
    if not np.any(m):
        raise ValueError("m must be nonzero")
    if h is None:
        h = 0.05 / max(sys.max_norm(), 1e-12)
    results = {}

    def consider(name, times, states, signal):
        late = _late(times, late_fraction)
        val = float((states[late] @ m).max())
        if name not in results or val > results[name][0]:
            results[name] = (val, signal)

    if field is not None:
        run = follow_extremal(sys, field, x, horizon, h=h)
        consider("extremal", run.times, run.states[:, 0], run.signal(0))
    for times, states, signal in pair_runs or ():
        consider("extremal", times, states, signal)
    xs, us = _greedy_linear(sys, m, x, horizon, h)
    consider("greedy", h * np.arange(len(xs)), xs, _signal_from_controls(us, h))
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        sig = _random_signal_run(sys, x, horizon, rng, mean_dwell=1.0)
        traj = propagate(sys, sig, x, sample_step=h)
        consider("random", traj.times, traj.states, sig)
    name = max(results, key=lambda k: results[k][0])
    return VmEstimate(results[name][0], results[name][1], name,
                      {k: v[0] for k, v in results.items()})


@dataclass(frozen=True)
class GapReport:
    point: np.ndarray
    value: float
    best_limsup: float
    gap: float
    tolerance: float
    witness: bool
    best_signal: SwitchingSignal
    drifts: np.ndarray


def sup_vs_max_gap(sys, field, y, horizon=60.0, restarts=4, h=None, late_fraction=0.25, seed=0):
    """``v(y) - max limsup ||x(t)||`` over norm-guided extremal runs from ``y``.

    Runs start from ``y``, from each vertex as the initial control, and from
    ``restarts`` perturbations of ``y`` of size ~ grid error.  Only runs whose
    field value stays within 3x grid error count as extremal; if none do, the
    run with the least drift is used.
    """
    y = np.asarray(y, dtype=float)
    tol = 3 * field.grid_error
    rng = np.random.default_rng(seed)
    starts = [y] + [y + field.grid_error * np.linalg.norm(y) * rng.standard_normal(y.size)
                    for _ in range(restarts)]
    runs = []
    for ctrl in [None] + list(range(sys.m)):
        runs.append(follow_extremal(sys, field, np.array(starts), horizon, h=h, initial_control=ctrl))
    vy = field.query(y)
    best, best_sig, drifts = -np.inf, None, []
    candidates = []
    for run in runs:
        late = _late(run.times, late_fraction)
        norms = np.linalg.norm(run.states[late], axis=2).max(axis=0)
        drift = run.drift()
        for k in range(len(starts)):
            # rescale to the start's level so perturbed starts compare fairly
            scale = vy / run.values[0, k]
            candidates.append((drift[k], norms[k] * scale, run, k))
            drifts.append(drift[k])
    ok = [c for c in candidates if c[0] <= tol] or [min(candidates, key=lambda c: c[0])]
    for drift, val, run, k in ok:
        if val > best:
            best, best_sig = val, run.signal(k)
    gap = float(vy - best)
    return GapReport(y.copy(), float(vy), float(best), gap, tol, gap > tol, best_sig,
                     np.array(drifts))


@dataclass(frozen=True)
class ConvexityReport:
    segments: list          # list of (endpoint_a, endpoint_b) on the unit level set
    flagged_pairs: int
    tested_pairs: int
    flat_tol: float
    seg_tol: float

    @property
    def flagged(self):
        return len(self.segments) > 0


def _flat(field, P, Q, flat_tol):
    return field.query(0.5 * (P + Q)) >= 1.0 - flat_tol


def convexity_audit(field, pair_samples=20000, flat_tol=None, seg_tol=None, seed=0):
    """Look for segments lying on the unit level set.

    A pair of unit points is flagged when its midpoint still has value at least
    ``1 - flat_tol`` and the two points are more than ``seg_tol`` apart in angle.
    The default ``seg_tol`` is at least one step angle ``h * max ||A_i||`` of the
    iteration that produced the field.
    """
    grid = field.grid
    if flat_tol is None:
        flat_tol = 2 * grid.interpolation_error * field.kappa
    if seg_tol is None:
        # discrete-time fields carry flats about one step long
        seg_tol = max(10 * grid.spacing, float(field.provenance.get("step_angle", 0.0)))
    U = field.unit_sphere_points()
    if field.n == 2:
        return _convexity_circle(field, U, flat_tol, seg_tol)
    return _convexity_sphere(field, U, pair_samples, flat_tol, seg_tol, seed)


def _convexity_circle(field, U, flat_tol, seg_tol):
    N = len(U)
    dmax = N // 2 - 1
    lo = np.zeros(N, dtype=np.int64)     # largest offset known flat
    step = np.ones(N, dtype=np.int64)
    tested = 0
    # doubling search for the first non-flat offset, then bisection
    hi = np.full(N, -1, dtype=np.int64)
    active = np.ones(N, dtype=bool)
    while active.any():
        a = np.nonzero(active)[0]
        d = np.minimum(lo[a] + step[a], dmax)
        ok = _flat(field, U[a], U[(a + d) % N], flat_tol)
        tested += a.size
        lo[a[ok]] = d[ok]
        step[a[ok]] *= 2
        hi[a[~ok]] = d[~ok]
        done = (~ok) | (d >= dmax)
        active[a[done]] = False
    active = hi > lo + 1
    while active.any():
        a = np.nonzero(active)[0]
        d = (lo[a] + hi[a]) // 2
        ok = _flat(field, U[a], U[(a + d) % N], flat_tol)
        tested += a.size
        lo[a[ok]] = d[ok]
        hi[a[~ok]] = d[~ok]
        active = hi > lo + 1
    dtheta = 2 * np.pi / N
    long = np.nonzero(lo * dtheta > seg_tol)[0]
    intervals = [(int(i), int(i + lo[i])) for i in long]
    # keep maximal intervals (indices unwrapped on the circle)
    maximal = []
    for s, e in intervals:
        contained = any((s2 <= s and e <= e2) or (s2 <= s + N and e + N <= e2)
                        for s2, e2 in intervals if (s2, e2) != (s, e))
        if not contained:
            maximal.append((s, e))
    segments = [(U[s % N].copy(), U[e % N].copy()) for s, e in maximal]
    return ConvexityReport(segments, int(len(long)), int(tested), float(flat_tol), float(seg_tol))


def _convexity_sphere(field, U, pair_samples, flat_tol, seg_tol, seed):
    grid = field.grid
    rng = np.random.default_rng(seed)
    tree = cKDTree(grid.nodes)
    lo, hi = seg_tol, min(np.pi / 2, 6 * seg_tol)
    I = rng.integers(len(U), size=pair_samples)
    # partner: node nearest to a random tangent rotation by an angle in (seg_tol, 6 seg_tol]
    X = grid.nodes[I]
    T = rng.standard_normal(X.shape)
    T -= np.einsum("ij,ij->i", T, X)[:, None] * X
    T /= np.linalg.norm(T, axis=1)[:, None]
    ang = rng.uniform(lo, hi, size=len(I))
    _, J = tree.query(np.cos(ang)[:, None] * X + np.sin(ang)[:, None] * T)
    sep = np.arccos(np.clip(np.einsum("ij,ij->i", X, grid.nodes[J]), -1, 1))
    keep = sep > seg_tol
    P = np.column_stack([I[keep], J[keep]])
    if not len(P):
        return ConvexityReport([], 0, 0, float(flat_tol), float(seg_tol))
    ok = _flat(field, U[P[:, 0]], U[P[:, 1]], flat_tol)
    flagged = P[ok]
    segments = []
    if len(flagged):
        nodes = np.unique(flagged)
        pos = {v: k for k, v in enumerate(nodes)}
        r = [pos[a] for a in flagged[:, 0]]
        c = [pos[b] for b in flagged[:, 1]]
        g = coo_matrix((np.ones(len(r)), (r, c)), shape=(len(nodes), len(nodes)))
        ncomp, lab = connected_components(g, directed=False)
        for comp in range(ncomp):
            fp = flagged[lab[[pos[a] for a in flagged[:, 0]]] == comp]
            lengths = np.linalg.norm(U[fp[:, 0]] - U[fp[:, 1]], axis=1)
            a, b = fp[int(lengths.argmax())]
            segments.append((U[a].copy(), U[b].copy()))
    return ConvexityReport(segments, int(ok.sum()), int(len(P)), float(flat_tol), float(seg_tol))


@dataclass(frozen=True)
class UniquenessReport:
    omega_points: np.ndarray
    connectivity: str
    lambda_bar: float | None
    components: list
    epsilon: float


def uniqueness_diagnostic(sys, field, start_count=24, horizon=200.0, late_fraction=0.25, h=None,
                          max_points=4000, reference=None, runs=None):
    """Pool late-time extremal samples and test connectivity of their eps-graph.

    ``runs`` may supply precomputed late-time states (e.g. from the pair
    extremal flow); otherwise norm-guided runs start from spread unit vectors.
    ``reference`` is an optional second norm (callable) used for lambda_bar.
    """
    if runs is None:
        starts = spread_starts(sys.n, start_count)
        run = follow_extremal(sys, field, starts, horizon, h=h)
        late = _late(run.times, late_fraction)
        pts = run.states[late].reshape(-1, sys.n)
    else:
        pts = np.vstack(runs)
    pts = pts / field.query(pts)[:, None]
    # limit sets of a linear system are centrally symmetric
    pts = np.vstack([pts, -pts])
    if len(pts) > max_points:
        pts = pts[np.linspace(0, len(pts) - 1, max_points).astype(np.int64)]
    eps = 3 * field.grid.spacing
    tree = cKDTree(pts)
    pairs = tree.query_pairs(eps, output_type="ndarray")
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(pts), len(pts)))
    ncomp, lab = connected_components(g, directed=False)
    comps = []
    for c in range(ncomp):
        members = pts[lab == c]
        comps.append({"size": int(len(members)), "centroid": members.mean(axis=0)})
    comps.sort(key=lambda d: -d["size"])
    lam = None
    if reference is not None:
        nodes = field.grid.nodes
        lam = float((field.values / np.asarray(reference(nodes))).max())
    verdict = "connected" if ncomp == 1 else "disconnected"
    return UniquenessReport(pts, verdict, lam, comps, float(eps))

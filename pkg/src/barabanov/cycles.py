"""Periodic bang-bang orbits of a rank-one pair: shooting, audits, ordering, families.

A cycle is written from a base point at a transversal zero of ``c^T x`` with
``c^T A x > 0``.  Its four bang durations alternate between the generator
active first and the other one, and the factor zeros follow the pattern
c (t = 0), b, c, b, c (t = T).  A two-bang cycle is the same pattern with one
zero duration: a b-zero and a c-zero coincide there, both factors flip
together and the control does not switch.

Cycles are solved with a growth exponent ``sigma``: the normalized monodromy
``e^{-sigma T} M`` has the eigenvalue 1 and the shifted Hamiltonian
``l^T (A_u - sigma I) x`` vanishes.  On a tuned pair ``sigma`` is the
residual spectral offset and is reported alongside the cycle.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .extremal import best_initial_covector, integrate_extremal
from .matnum import Spectrum, expm, spectrum

__all__ = [
    "CycleCandidate",
    "Cycle",
    "CycleFamily",
    "IsolatedVerdict",
    "SurveyResult",
    "ShootingError",
    "AuditError",
    "CrossingNotFoundError",
    "ContinuationError",
    "monodromy_matrix",
    "f_det",
    "seed_from_path",
    "find_cycle",
    "floquet_audit",
    "orbit_samples",
    "arc_position",
    "classify_and_order",
    "attractivity",
    "pseudo_arclength",
    "continue_family",
    "multistart_cycle_survey",
    "field_anchor",
    "catalog_entries",
    "TunedPair",
    "tune_pair",
]

GENERATOR_ORDER = {"A-first": (0.0, 1.0), "perturbed-first": (1.0, 0.0)}

RESIDUAL_TOL = 1e-8
EIG_TOL = 1e-7
LIOUVILLE_TOL = 1e-8
EXCLUSION_RADIUS = 1e-3
DEDUP_TOL = 1e-5
RANK_TOL = 1e-6


class ShootingError(RuntimeError):
    pass


class AuditError(RuntimeError):
    def __init__(self, invariant, message):
        super().__init__(f"{invariant}: {message}")
        self.invariant = invariant


class CrossingNotFoundError(RuntimeError):
    pass


class ContinuationError(RuntimeError):
    def __init__(self, message, last_good):
        super().__init__(message)
        self.last_good = last_good


def _controls(start_generator):
    try:
        u1, u2 = GENERATOR_ORDER[start_generator]
    except KeyError:
        raise ValueError("start_generator must be 'A-first' or 'perturbed-first'") from None
    return (u1, u2, u1, u2)


def monodromy_matrix(pair, durations, start_generator="A-first"):
    """``e^{t4 A2} e^{t3 A1} e^{t2 A2} e^{t1 A1}`` with A1 chosen by ``start_generator``."""
    controls = _controls(start_generator)
    if len(durations) != 4:
        raise ValueError("four durations expected")
    M = np.eye(3)
    for t, u in zip(durations, controls):
        if t < 0:
            raise ValueError("durations must be nonnegative")
        if t > 0:
            M = expm(pair.matrix(u), t) @ M
    return M


def f_det(pair, durations, start_generator="A-first"):
    return float(np.linalg.det(monodromy_matrix(pair, durations, start_generator) - np.eye(3)))


@dataclass(frozen=True)
class CycleCandidate:
    durations: tuple
    base_x: np.ndarray
    base_l: np.ndarray
    residual: float = float("inf")
    start_generator: str = "A-first"
    growth: float = 0.0

    def __post_init__(self):
        d = np.asarray(self.durations, dtype=float)
        if d.shape != (4,) or not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("durations must be four finite nonnegative numbers")
        if np.sum(d > 0) < 2:
            raise ValueError("at least two durations must be positive")
        _controls(self.start_generator)
        object.__setattr__(self, "durations", tuple(float(t) for t in d))
        object.__setattr__(self, "base_x", np.asarray(self.base_x, dtype=float))
        object.__setattr__(self, "base_l", np.asarray(self.base_l, dtype=float))


@dataclass(frozen=True)
class Cycle:
    durations: tuple
    period: float
    base_x: np.ndarray
    base_l: np.ndarray
    monodromy: np.ndarray
    floquet: Spectrum
    bang_count: int
    order_key: float
    attractivity: tuple
    residual: float
    start_generator: str
    growth: float
    audit: dict = field(default_factory=dict, compare=False)
    family: bool = False

    @property
    def controls(self):
        return _controls(self.start_generator)

    def candidate(self):
        return CycleCandidate(self.durations, self.base_x, self.base_l, self.residual,
                              self.start_generator, self.growth)


@dataclass(frozen=True)
class CycleFamily:
    parameter_samples: np.ndarray
    cycles: list
    endpoints: tuple
    truncated: bool = False


@dataclass(frozen=True)
class IsolatedVerdict:
    smallest_singular_value: float
    rank_tol: float


# ----------------------------------------------------------------------------
# shooting system; unknowns z = (t1, t2, t3, t4, sigma, x0, l0)

def _split(z, fixed):
    d = np.array(z[:4], dtype=float)
    d[list(fixed)] = 0.0
    return d, float(z[4]), z[5:8], z[8:11]


def _bang_ends(pair, d, x0, l0, controls):
    """x and l at the end of each of the four bangs (unnormalized)."""
    xs, ls = [], []
    x, l = x0, l0
    for t, u in zip(d, controls):
        if t != 0.0:
            M = pair.matrix(u)
            x = expm(M, t) @ x
            l = expm(-M.T, t) @ l
        xs.append(x)
        ls.append(l)
    return xs, ls


def _residual(pair, z, fixed, controls):
    d, sigma, x0, l0 = _split(z, fixed)
    T = d.sum()
    xs, ls = _bang_ends(pair, d, x0, l0, controls)
    r = np.empty(13)
    r[0:3] = np.exp(-sigma * T) * xs[3] - x0
    r[3:6] = np.exp(sigma * T) * ls[3] - l0
    r[6] = pair.c @ x0
    r[7] = x0 @ x0 - 1.0
    r[8] = l0 @ x0 - 1.0
    r[9] = pair.b @ ls[0]
    r[10] = pair.c @ xs[1]
    r[11] = pair.b @ ls[2]
    # zero Hamiltonian of the shifted flow; periodic orbits otherwise form energy families
    r[12] = l0 @ (pair.A @ x0) - sigma * (l0 @ x0)
    return r


def _free(fixed):
    return [k for k in range(11) if k not in fixed]


def _jacobian(func, z, free, rel_step=1e-6):
    J = []
    for k in free:
        hstep = rel_step * max(abs(z[k]), 1.0)
        zp, zm = z.copy(), z.copy()
        zp[k] += hstep
        zm[k] -= hstep
        J.append((func(zp) - func(zm)) / (2 * hstep))
    return np.array(J).T


def _gauss_newton(func, z, free, tol, max_iter, extra=None, nonnegative=range(4)):
    """Levenberg-damped Gauss-Newton on ``func`` over the ``free`` coordinates.

    ``extra(z)`` optionally appends residual rows; the continuation corrector
    uses it for the arclength constraint.  Coordinates in ``nonnegative``
    (the shooting durations by default) are clamped at 0.
    """
    clamp = list(nonnegative)
    def full(zz):
        r = func(zz)
        return r if extra is None else np.concatenate([r, extra(zz)])

    r = full(z)
    lam = 1e-10
    for step in range(max_iter + 1):
        norm = float(np.linalg.norm(r))
        if norm < tol:
            return z, norm, step
        if step == max_iter:
            break
        J = _jacobian(full, z, free)
        g = J.T @ r
        H = J.T @ J
        accepted = False
        for _ in range(40):
            dz = -np.linalg.solve(H + lam * (np.diag(np.diag(H)) + 1e-14 * np.eye(len(free))), g)
            zn = z.copy()
            zn[free] += dz
            zn[clamp] = np.maximum(zn[clamp], 0.0)
            rn = full(zn)
            if np.linalg.norm(rn) < norm:
                z, r = zn, rn
                lam = max(lam / 10, 1e-14)
                accepted = True
                break
            lam *= 10
        if not accepted:
            break
    raise ShootingError(f"shooting did not converge (residual {float(np.linalg.norm(r)):.3e})")


def _initial_z(candidate):
    x0 = np.asarray(candidate.base_x, dtype=float)
    l0 = np.asarray(candidate.base_l, dtype=float)
    nx = np.linalg.norm(x0)
    x0 = x0 / nx
    l0 = l0 * nx
    l0 = l0 / (l0 @ x0)
    return np.concatenate([candidate.durations, [candidate.growth], x0, l0])


def _fixed_of(durations, zero_tol):
    return tuple(k for k in range(4) if durations[k] <= zero_tol)


# ----------------------------------------------------------------------------
# seeds from extremal runs

def _pattern_durations(marks, whichs):
    """Four durations from one loop c(0) ... c(T) of factor zeros, or None."""
    T = marks[-1]
    head, inner = whichs[0], list(zip(marks[1:-1], whichs[1:-1]))
    names = [w for _, w in inner]
    times = [m for m, _ in inner]
    if head == "c" and names == ["b", "c", "b"]:
        tb1, tc, tb2 = times
        return [tb1, tc - tb1, tb2 - tc, T - tb2]
    if head == "c" and names == ["both", "b"]:
        tc, tb2 = times
        return [tc, 0.0, tb2 - tc, T - tb2]
    if head == "c" and names == ["b", "both"]:
        tb1, tc = times
        return [tb1, tc - tb1, 0.0, T - tc]
    if head == "both" and names == ["b", "c"]:
        tb1, tc = times
        return [tb1, tc - tb1, T - tc, 0.0]
    if head == "both" and names == ["c", "b"]:
        tc, tb2 = times
        return [0.0, tc, tb2 - tc, T - tb2]
    return None


def seed_from_path(pair, path):
    """Candidate from the last complete loop of an extremal run, or None.

    The loop runs between the last two transversal c-zeros with
    ``c^T A x > 0``; the state after the first of them is the base point.
    """
    events = path.switch_times
    bangs = path.bangs
    starts = []
    for k, e in enumerate(events):
        if e.kind != "transversal" or e.which not in ("c", "both") or k + 1 >= len(bangs):
            continue
        if pair.c @ (pair.A @ bangs[k + 1][3]) > 0:
            starts.append(k)
    if len(starts) < 2:
        return None
    k0, k1 = starts[-2], starts[-1]
    loop = [e for e in events[k0:k1 + 1]]
    if any(e.kind != "transversal" for e in loop):
        return None
    t0 = loop[0].time
    d = _pattern_durations([e.time - t0 for e in loop], [e.which for e in loop])
    if d is None or sum(t > 0 for t in d) < 2:
        return None
    _, _, u_after, x0, l0 = bangs[k0 + 1]
    first = u_after if d[0] > 0 else 1.0 - u_after
    start = "perturbed-first" if first > 0.5 else "A-first"
    return CycleCandidate(tuple(d), x0, l0, float("inf"), start)


# ----------------------------------------------------------------------------
# orbit reconstruction and audits

def orbit_samples(pair, durations, start_generator, x0, l0, growth=0.0, per_bang=200):
    """Interior samples of each bang of the normalized orbit.

    Returns ``(times, X, L, U)``; sample times avoid the bang boundaries, so
    sign changes between consecutive samples count the zeros there.
    """
    controls = _controls(start_generator)
    times, X, L, U = [], [], [], []
    x, l, t0 = np.asarray(x0, dtype=float), np.asarray(l0, dtype=float), 0.0
    for t, u in zip(durations, controls):
        if t <= 0:
            continue
        M = pair.matrix(u)
        s = t * (np.arange(per_bang) + 0.5) / per_bang
        for si in s:
            tt = t0 + si
            X.append(np.exp(-growth * tt) * (expm(M, si) @ x))
            L.append(np.exp(growth * tt) * (expm(-M.T, si) @ l))
            times.append(tt)
            U.append(u)
        x = expm(M, t) @ x
        l = expm(-M.T, t) @ l
        t0 += t
    return np.array(times), np.array(X), np.array(L), np.array(U)


def _cyclic_sign_changes(values):
    s = np.sign(values)
    s = s[s != 0]
    return int(np.sum(s != np.roll(s, 1)))


def _direction_distance(vs, target):
    target = target / np.linalg.norm(target)
    u = vs / np.linalg.norm(vs, axis=1)[:, None]
    return float(min(np.linalg.norm(u - target, axis=1).min(),
                     np.linalg.norm(u + target, axis=1).min()))


def floquet_audit(pair, cycle, family=None):
    """Spectrum of the normalized monodromy plus a verdict dict.

    ``verdict["pass"]`` holds when the Cycle invariants hold; family members
    (``family=True``, or ``cycle.family``) only need the other multipliers
    inside ``1 + 1e-7``.
    """
    if family is None:
        family = cycle.family
    M = np.exp(-cycle.growth * sum(cycle.durations)) * monodromy_matrix(
        pair, cycle.durations, cycle.start_generator)
    spec = spectrum(M)
    ev = spec.eigenvalues
    dist = np.abs(ev - 1.0)
    order = np.argsort(dist, kind="stable")
    one_residual = float(dist[order[0]])
    separation = float(dist[order[1]])
    others = np.abs(ev[order[1:]])
    x = cycle.base_x
    closure = float(np.linalg.norm(M @ x - x) / np.linalg.norm(x))
    traces = sum(t * np.trace(pair.matrix(u)) for t, u in zip(cycle.durations, cycle.controls))
    liouville_ref = np.exp(traces - 3 * cycle.growth * sum(cycle.durations))
    liouville = float(abs(np.linalg.det(M) - liouville_ref) / liouville_ref)
    strict = bool(np.all(others < 1 - EIG_TOL))
    checks = {
        "closure": closure <= RESIDUAL_TOL,
        "eigenvalue_one": one_residual < EIG_TOL,
        "simple": separation > EIG_TOL,
        "multipliers_bounded": bool(np.all(others <= 1 + EIG_TOL)),
        "liouville": liouville <= LIOUVILLE_TOL,
    }
    if not family:
        checks["multipliers_inside"] = strict
    verdict = {
        "pass": all(checks.values()),
        "checks": checks,
        "closure": closure,
        "eigenvalue_one_residual": one_residual,
        "separation": separation,
        "other_moduli": [float(m) for m in others],
        "liouville_error": liouville,
        "strictly_inside": strict,
        "family": bool(family),
    }
    return spec, verdict


def _orbit_audit(pair, cycle):
    """Switching counts, maximum condition, exclusion and central symmetry."""
    times, X, L, U = orbit_samples(pair, cycle.durations, cycle.start_generator,
                                   cycle.base_x, cycle.base_l, cycle.growth)
    pb, pc = L @ pair.b, X @ pair.c
    nb, nc = _cyclic_sign_changes(pb), _cyclic_sign_changes(pc)
    phi = pb * pc
    scale = np.linalg.norm(L, axis=1) * np.linalg.norm(X, axis=1) * np.linalg.norm(pair.b) * np.linalg.norm(pair.c)
    clear = np.abs(phi) > 1e-9 * scale
    maximum_ok = bool(np.all((phi[clear] > 0) == (U[clear] > 0.5)))
    out = {"sign_changes_b": nb, "sign_changes_c": nc, "maximum_condition": maximum_ok}
    geom = pair.geometry
    if geom is not None:
        out["distance_x_star"] = _direction_distance(X, geom.x_star)
        out["distance_l_star"] = _direction_distance(L, geom.l_star)
    # central symmetry: if the orbit meets its reflection it must be antiperiodic
    U_dir = X / np.linalg.norm(X, axis=1)[:, None]
    gap = float(np.min(np.linalg.norm(U_dir[:, None, :] + U_dir[None, ::7, :], axis=2)))
    out["reflection_gap"] = gap
    if gap < DEDUP_TOL:
        T = sum(cycle.durations)
        half = _state_at(pair, cycle, T / 2)
        out["antiperiodic_error"] = float(np.linalg.norm(half + cycle.base_x) / np.linalg.norm(cycle.base_x))
    return out


def _state_at(pair, cycle, t):
    x, t0 = np.asarray(cycle.base_x, dtype=float), 0.0
    for dur, u in zip(cycle.durations, cycle.controls):
        if t <= t0 + dur:
            return np.exp(-cycle.growth * t) * (expm(pair.matrix(u), t - t0) @ x)
        x = expm(pair.matrix(u), dur) @ x
        t0 += dur
    return np.exp(-cycle.growth * t) * x


def _hard_failures(verdict, orbit):
    fails = []
    for name in ("closure", "eigenvalue_one", "simple", "multipliers_bounded", "liouville"):
        if not verdict["checks"][name]:
            fails.append(name)
    if orbit["sign_changes_b"] != 2 or orbit["sign_changes_c"] != 2:
        fails.append("switching_count")
    if not orbit["maximum_condition"]:
        fails.append("maximum_condition")
    if orbit.get("distance_x_star", np.inf) <= EXCLUSION_RADIUS:
        fails.append("exclusion_x_star")
    if orbit.get("distance_l_star", np.inf) <= EXCLUSION_RADIUS:
        fails.append("exclusion_l_star")
    if orbit.get("antiperiodic_error", 0.0) > EIG_TOL:
        fails.append("central_symmetry")
    return fails


# ----------------------------------------------------------------------------
# polishing

def find_cycle(pair, field=None, seed=None, newton_tol=1e-10, max_iter=60, zero_tol=1e-9):
    """Polish a seed (CycleCandidate or ExtremalPath) into an audited Cycle.

    The base point is rescaled onto the unit sphere of ``field`` with
    ``l^T x = v(x)``; without a field the Euclidean sphere is used.  Raises
    ShootingError when Newton stalls and AuditError naming the first failed
    invariant otherwise.
    """
    if seed is None:
        raise ValueError("find_cycle needs a seed")
    if not isinstance(seed, CycleCandidate):
        cand = seed_from_path(pair, seed)
        if cand is None:
            raise ShootingError("no complete loop in the tail of the extremal run")
        seed = cand
    controls = _controls(seed.start_generator)
    fixed = _fixed_of(seed.durations, zero_tol)
    z0 = _initial_z(seed)
    func = lambda zz: _residual(pair, zz, fixed, controls)
    z, res, steps = _gauss_newton(func, z0, _free(fixed), newton_tol, max_iter)
    d, sigma, x0, l0 = _split(z, fixed)
    cyc = _assemble(pair, field, d, sigma, x0, l0, seed.start_generator, res, zero_tol)
    cyc.audit["newton_steps"] = steps
    fails = cyc.audit["failures"]
    if fails:
        raise AuditError(fails[0], f"polished orbit violates {', '.join(fails)}")
    return cyc


def _assemble(pair, field, d, sigma, x0, l0, start_generator, res, zero_tol, family=False):
    scale = float(field.query(x0)) if field is not None else float(np.linalg.norm(x0))
    x0 = x0 / scale
    l0 = l0 * scale
    d = tuple(float(t) for t in d)
    T = float(sum(d))
    M = np.exp(-sigma * T) * monodromy_matrix(pair, d, start_generator)
    positive = sum(t > zero_tol for t in d)
    cyc = Cycle(d, T, x0, l0, M, spectrum(M), 4 if positive == 4 else 2, float("nan"),
                ("unknown", "unknown"), float(res), start_generator, float(sigma), {}, family)
    spec, verdict = floquet_audit(pair, cyc, family)
    orbit = _orbit_audit(pair, cyc)
    cyc.audit.update(verdict=verdict, orbit=orbit, failures=_hard_failures(verdict, orbit))
    return cyc


# ----------------------------------------------------------------------------
# ordering along the c-arc

def _arc_frame(pair):
    geom = pair.geometry
    if geom is None:
        raise CrossingNotFoundError("pair geometry is degenerate")
    xs = geom.x_star / np.linalg.norm(geom.x_star)
    c = pair.c
    e = np.cross(c, xs)
    e = e - (e @ xs) * xs
    e /= np.linalg.norm(e)
    if c @ (pair.A @ e) < 0:
        e = -e
    return xs, e


def arc_position(pair, field, x, samples=2048):
    """Length along the arc ``{c^T x = 0, c^T A x > 0}`` of the unit sphere from ``x_star``."""
    xs, e = _arc_frame(pair)
    x = np.asarray(x, dtype=float)
    if abs(pair.c @ x) > 1e-8 * np.linalg.norm(x) * np.linalg.norm(pair.c):
        raise CrossingNotFoundError("point is off the plane c^T x = 0")
    psi = float(np.arctan2(x @ e, x @ xs))
    if not 0 < psi < np.pi:
        raise CrossingNotFoundError("point is on the negative side c^T A x <= 0")
    ps = np.linspace(0.0, psi, samples)
    dirs = np.outer(np.cos(ps), xs) + np.outer(np.sin(ps), e)
    scale = field.query(dirs) if field is not None else np.ones(samples)
    pts = dirs / scale[:, None]
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def classify_and_order(cycles, pair, field=None, dedup_tol=DEDUP_TOL):
    """Dedup, assign arc positions and sort ascending."""
    keyed = []
    for cyc in cycles:
        if cyc.bang_count not in (2, 4):
            raise ValueError("bang_count must be 2 or 4")
        keyed.append(replace(cyc, order_key=arc_position(pair, field, cyc.base_x)))
    out = []
    for cyc in sorted(keyed, key=lambda c: c.order_key):
        dup = False
        for kept in out:
            if (np.linalg.norm(np.subtract(cyc.durations, kept.durations)) < dedup_tol
                    and np.linalg.norm(cyc.base_x - kept.base_x) < dedup_tol):
                dup = True
                break
        if not dup:
            out.append(cyc)
    return out


# ----------------------------------------------------------------------------
# attractivity

def field_anchor(field, dual=None):
    """Map ``x -> l`` picking the best approximate subgradient of ``field`` at ``x``."""
    from .norm.dual import dual_field, subdifferential

    if dual is None:
        dual = dual_field(field)
    return lambda x: subdifferential(field, x, dual=dual).best


def _crossing_positions(pair, field, path):
    out = []
    for k, e in enumerate(path.switch_times):
        if e.kind == "transversal" and e.which in ("c", "both") and k + 1 < len(path.bangs):
            x = path.bangs[k + 1][3]
            if pair.c @ (pair.A @ x) > 0:
                try:
                    out.append(arc_position(pair, field, x, samples=512))
                except CrossingNotFoundError:
                    pass
    return np.array(out)


def attractivity(pair, field, cycle, probe_offsets=(5e-2,), periods=30, dual=None):
    """(inner, outer) verdicts from extremal runs started off the cycle on the arc.

    The inner side is toward ``x_star``.  A side attracts when the last return
    to the arc is closer to the cycle than a quarter of the starting offset,
    and repels when it is farther than four times the offset or the run stops
    returning.  Offsets below the field resolution give unknown.
    """
    from .norm.dual import dual_field

    if dual is None:
        dual = dual_field(field)
    anchor = field_anchor(field, dual)
    xs, e = _arc_frame(pair)
    x = cycle.base_x
    psi0 = float(np.arctan2(x @ e, x @ xs))
    key0 = arc_position(pair, field, x)
    floor = 3 * field.grid_error
    verdicts = {}
    for side, sgn in (("inner", -1.0), ("outer", 1.0)):
        votes = []
        for off in probe_offsets:
            psi = psi0 + sgn * off
            if not 0 < psi < np.pi:
                votes.append("unknown")
                continue
            p = np.cos(psi) * xs + np.sin(psi) * e
            p = p / float(field.query(p))
            d0 = abs(arc_position(pair, field, p) - key0)
            if d0 <= floor:
                votes.append("unknown")
                continue
            path = integrate_extremal(pair, p, anchor(p), periods * cycle.period, anchor=anchor)
            pos = _crossing_positions(pair, field, path)
            if pos.size < 2:
                votes.append("repel")
                continue
            d1 = abs(pos[-1] - key0)
            if d1 < d0 / 4:
                votes.append("attract")
            elif d1 > 4 * d0:
                votes.append("repel")
            else:
                votes.append("unknown")
        known = set(v for v in votes if v != "unknown")
        verdicts[side] = known.pop() if len(known) == 1 else "unknown"
    return (verdicts["inner"], verdicts["outer"])


# ----------------------------------------------------------------------------
# continuation

def pseudo_arclength(func, z0, tangent, step, max_points, free=None, stop=None,
                     tol=1e-10, max_iter=30, min_step=1e-8, nonnegative=()):
    """Pseudo-arclength continuation of ``func(z) = 0`` along a one-dimensional branch.

    ``stop(z)`` returns a scalar test; the branch ends where it turns from
    positive to nonpositive, located by bisection on the arclength step.
    Coordinates listed in ``nonnegative`` are clamped at 0 by the corrector.
    Returns ``(points, stopped)``.
    """
    z = np.asarray(z0, dtype=float).copy()
    if free is None:
        free = list(range(len(z)))
    tau = np.zeros_like(z)
    tau[free] = tangent / np.linalg.norm(tangent)
    points = [z.copy()]
    h = step

    def correct(zp, t_dir):
        extra = lambda zz: np.array([t_dir @ (zz - zp)])
        return _gauss_newton(func, zp.copy(), free, tol, max_iter, extra=extra,
                             nonnegative=nonnegative)[0]

    while len(points) < max_points:
        zp = z + h * tau
        try:
            zn = correct(zp, tau)
        except ShootingError:
            h /= 2
            if h < min_step:
                raise ContinuationError("continuation step failed", z.copy()) from None
            continue
        if stop is not None and stop(zn) <= 0:
            lo, hi = 0.0, h
            for _ in range(60):
                mid = (lo + hi) / 2
                try:
                    zm = correct(z + mid * tau, tau)
                except ShootingError:
                    hi = mid
                    continue
                if stop(zm) > 0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo < 1e-12:
                    break
            zend = correct(z + hi * tau, tau)
            points.append(zend)
            return points, True
        J = _jacobian(func, zn, free)
        _, _, vt = np.linalg.svd(J)
        t_new = np.zeros_like(z)
        t_new[free] = vt[-1]
        if t_new @ tau < 0:
            t_new = -t_new
        points.append(zn)
        z, tau = zn, t_new
    return points, False


def continue_family(pair, field, seed_cycle, arc_step=1e-2, max_points=200, rank_tol=RANK_TOL,
                    zero_tol=1e-9):
    """CycleFamily through ``seed_cycle`` or IsolatedVerdict when the shooting Jacobian has full rank."""
    controls = seed_cycle.controls
    fixed = _fixed_of(seed_cycle.durations, zero_tol)
    free = _free(fixed)
    z0 = _initial_z(seed_cycle.candidate())
    func = lambda zz: _residual(pair, zz, fixed, controls)
    J = _jacobian(func, z0, free)
    _, sv, vt = np.linalg.svd(J)
    smin = float(sv[-1])
    if smin > rank_tol:
        return IsolatedVerdict(smin, rank_tol)

    def stop(zz):
        return float(min(zz[k] for k in range(4) if k not in fixed))

    branches = []
    truncated = False
    for sgn in (1.0, -1.0):
        pts, stopped = pseudo_arclength(func, z0, sgn * vt[-1], arc_step, max_points // 2,
                                        free=free, stop=stop, nonnegative=range(4))
        truncated |= not stopped
        branches.append(pts)
    pts = branches[1][::-1] + branches[0][1:]
    s = np.concatenate([-np.cumsum([0.0] + [np.linalg.norm(b - a) for a, b in
                                             zip(branches[1][:-1], branches[1][1:])])[::-1],
                        np.cumsum([np.linalg.norm(b - a) for a, b in
                                   zip(branches[0][:-1], branches[0][1:])])])
    cycles = []
    for k, zz in enumerate(pts):
        d, sigma, x0, l0 = _split(zz, fixed)
        d = np.where(d <= 1e-9, 0.0, d)
        res = float(np.linalg.norm(func(zz)))
        cycles.append(_assemble(pair, field, d, sigma, x0, l0, seed_cycle.start_generator,
                                res, 1e-9, family=True))
    ends = tuple(c for c in (cycles[0], cycles[-1]) if c.bang_count == 2)
    return CycleFamily(np.asarray(s), cycles, ends, truncated)


# ----------------------------------------------------------------------------
# survey

@dataclass(frozen=True)
class SurveyResult:
    catalog: list
    families: list
    isolated: list
    log: list
    verdict: str


def _survey_start(args):
    pair, field, x0, horizon, probe_horizon = args
    from .norm.dual import dual_field, subdifferential

    dual = dual_field(field)
    anchor = field_anchor(field, dual)
    x0 = x0 / float(field.query(x0))
    sub = subdifferential(field, x0, dual=dual)
    picks = sub.supports[np.linspace(0, len(sub.supports) - 1, min(8, len(sub.supports))).astype(int)]
    l0, _ = best_initial_covector(pair, x0, picks, probe_horizon, field, anchor=anchor)
    path = integrate_extremal(pair, x0, l0, horizon, anchor=anchor)
    return seed_from_path(pair, path), len(path.switch_times)


def multistart_cycle_survey(pair, field, start_count=12, horizon=150.0, probe_horizon=3.0,
                            workers=1, newton_tol=1e-10, attract=True, families=True):
    """Anchored extremal runs from spread starts, polished and catalogued."""
    from .norm.diagnostics import spread_starts

    starts = spread_starts(3, start_count)
    tasks = [(pair, field, x, horizon, probe_horizon) for x in starts]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            seeds = list(ex.map(_survey_start, tasks))
    else:
        seeds = [_survey_start(t) for t in tasks]
    log = []
    found = []
    for k, (cand, n_events) in enumerate(seeds):
        if cand is None:
            log.append({"start": k, "status": "no-loop", "events": n_events})
            continue
        try:
            cyc = find_cycle(pair, field, cand, newton_tol=newton_tol)
        except ShootingError as err:
            log.append({"start": k, "status": "shooting-failed", "message": str(err)})
            continue
        except AuditError as err:
            log.append({"start": k, "status": "audit-failed", "invariant": err.invariant})
            continue
        log.append({"start": k, "status": "ok", "durations": list(cyc.durations)})
        found.append(cyc)
    catalog = classify_and_order(found, pair, field)
    fams, isolated = [], []
    out = []
    for cyc in catalog:
        if attract:
            cyc = replace(cyc, attractivity=attractivity(pair, field, cyc))
        if families:
            res = continue_family(pair, field, cyc)
            if isinstance(res, CycleFamily):
                fams.append(res)
                cyc = replace(cyc, family=True)
            else:
                isolated.append(res)
        out.append(cyc)
    if not fams:
        verdict = "finite-catalog"
    elif not isolated:
        verdict = "family-found"
    else:
        verdict = "mixed"
    return SurveyResult(out, fams, isolated, log, verdict)


@dataclass(frozen=True)
class TunedPair:
    system: object
    shift: float
    rho_initial: float
    cycle_growth: float
    rho_final: float
    field: object
    survey: SurveyResult


def tune_pair(system, rho_tol=1e-4, field=None, start_count=12, horizon=150.0, workers=1,
              attract=True, families=True, max_rounds=3):
    """Shift a pair until its extremal cycles neither grow nor decay.

    The first shift is the estimated exponent; each further round shifts by
    the largest growth among the surveyed cycles and re-polishes them.
    Returns a TunedPair whose survey is run on the final instance.
    """
    from .model import spectral_shift
    from .norm.bellman import approximate_barabanov_norm, estimate_rho

    rho0 = estimate_rho(system, tol=rho_tol).value
    shift = rho0
    tuned = spectral_shift(system, shift)
    if field is None:
        field = approximate_barabanov_norm(tuned, check_irreducible=False)
    survey = multistart_cycle_survey(tuned.pair, field, start_count, horizon, workers=workers,
                                     attract=False, families=False)
    growth = 0.0
    for _ in range(max_rounds):
        if not survey.catalog:
            break
        growth = max(c.growth for c in survey.catalog)
        if abs(growth) < 1e-13:
            break
        shift += growth
        tuned = spectral_shift(system, shift)
        polished = []
        for c in survey.catalog:
            seed = replace(c.candidate(), growth=c.growth - growth)
            try:
                polished.append(find_cycle(tuned.pair, field, seed))
            except (ShootingError, AuditError):
                pass
        survey = replace(survey, catalog=classify_and_order(polished, tuned.pair, field))
    catalog = []
    fams, isolated = [], []
    for cyc in survey.catalog:
        if attract:
            cyc = replace(cyc, attractivity=attractivity(tuned.pair, field, cyc))
        if families:
            res = continue_family(tuned.pair, field, cyc)
            if isinstance(res, CycleFamily):
                fams.append(res)
                cyc = replace(cyc, family=True)
            else:
                isolated.append(res)
        catalog.append(cyc)
    verdict = "finite-catalog" if not fams else ("family-found" if not isolated else "mixed")
    survey = SurveyResult(catalog, fams, isolated, survey.log, verdict)
    rho1 = estimate_rho(tuned, tol=rho_tol).value
    return TunedPair(tuned, float(shift), float(rho0), float(shift - rho0), float(rho1), field, survey)


def catalog_entries(cycles):
    """JSON-ready records for a cycle catalog."""
    out = []
    for c in cycles:
        out.append({
            "durations": list(c.durations),
            "period": c.period,
            "base_x": list(map(float, c.base_x)),
            "base_l": list(map(float, c.base_l)),
            "floquet": [[float(z.real), float(z.imag)] for z in c.floquet.eigenvalues],
            "bang_count": c.bang_count,
            "order_key": c.order_key,
            "attractivity": list(c.attractivity),
            "residual": c.residual,
            "growth": c.growth,
            "start_generator": c.start_generator,
            "family": c.family,
        })
    return out

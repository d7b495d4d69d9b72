"""Bang-bang extremal flow of a rank-one pair ``{A, A + b c^T}``.

Along the flow ``x' = (A + u b c^T) x`` and ``l' = -(A + u b c^T)^T l`` with
``u = 1`` where ``phi = (b^T l)(c^T x) > 0`` and ``u = 0`` where ``phi < 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .io import write_csv, write_json
from .matnum import expm

__all__ = [
    "SwitchingValues",
    "DegenerateZeroError",
    "switching_values",
    "classify_zero",
    "ExtremalPath",
    "SwitchEvent",
    "integrate_extremal",
    "project_covector",
    "sign_change_stats",
    "best_initial_covector",
    "default_scan_step",
]


class DegenerateZeroError(ValueError):
    """Both derivative tests vanish at a zero of a switching factor."""


@dataclass(frozen=True)
class SwitchingValues:
    phi_b: float
    phi_c: float
    phi: float
    dphi_b: float
    ddphi_b_core: float
    dphi_c: float
    ddphi_c_core: float


def switching_values(pair, x, l):
    A, b, c = pair.A, pair.b, pair.c
    x = np.asarray(x, dtype=float)
    l = np.asarray(l, dtype=float)
    Atl = A.T @ l
    Ax = A @ x
    phi_b = float(b @ l)
    phi_c = float(c @ x)
    return SwitchingValues(
        phi_b=phi_b,
        phi_c=phi_c,
        phi=phi_b * phi_c,
        dphi_b=float(-(b @ Atl)),
        ddphi_b_core=float(b @ (A.T @ Atl)),
        dphi_c=float(c @ Ax),
        ddphi_c_core=float(c @ (A @ Ax)),
    )


def _deriv_scale(pair, vec):
    return np.linalg.norm(pair.A) * max(np.linalg.norm(pair.b), np.linalg.norm(pair.c)) * np.linalg.norm(vec)


def classify_zero(pair, x, l, which, deriv_tol=1e-9):
    """``"transversal"`` or ``"tangential"`` for a zero of ``b^T l`` or ``c^T x``.

    ``deriv_tol`` is relative to ``||A|| ||b or c|| ||l or x||``.
    """
    sv = switching_values(pair, x, l)
    if which == "b":
        d1, d2, scale = sv.dphi_b, sv.ddphi_b_core, _deriv_scale(pair, l)
    elif which == "c":
        d1, d2, scale = sv.dphi_c, sv.ddphi_c_core, _deriv_scale(pair, x)
    else:
        raise ValueError("which must be 'b' or 'c'")
    tol = deriv_tol * max(scale, 1e-300)
    if abs(d1) > tol:
        return "transversal"
    if abs(d2) > tol * np.linalg.norm(pair.A):
        return "tangential"
    raise DegenerateZeroError(f"{which}-zero with vanishing first and second derivatives")


@dataclass(frozen=True)
class SwitchEvent:
    time: float
    which: str
    kind: str


@dataclass(frozen=True)
class ExtremalPath:
    times: np.ndarray
    x_states: np.ndarray
    l_states: np.ndarray
    u_values: np.ndarray
    switch_times: tuple
    bangs: tuple = field(default=(), repr=False)   # (start, duration, u, x_start, l_start)

    @property
    def horizon(self):
        return float(self.times[-1])

    def hamiltonian(self, pair):
        """``l^T (A + u b c^T) x`` at the samples, relative to ``||l|| ||x||``."""
        H = []
        for x, l, u in zip(self.x_states, self.l_states, self.u_values):
            H.append(l @ (pair.matrix(u) @ x) / (np.linalg.norm(l) * np.linalg.norm(x)))
        return np.array(H)

    def switching(self, pair):
        return self.l_states @ pair.b, self.x_states @ pair.c

    def write(self, csv_path, events_path, pair):
        pb, pc = self.switching(pair)
        rows = []
        for k, t in enumerate(self.times):
            rows.append([t, *self.x_states[k], *self.l_states[k], int(self.u_values[k]), pb[k], pc[k]])
        header = ["time", "x1", "x2", "x3", "l1", "l2", "l3", "u", "phi_b", "phi_c"]
        write_csv(csv_path, header, rows)
        write_json(events_path, [{"time": e.time, "which": e.which, "kind": e.kind}
                                 for e in self.switch_times])


def default_scan_step(pair):
    return 1e-3 / max(np.linalg.norm(pair.A, 2), np.linalg.norm(pair.B, 2))


def project_covector(pair, x, l):
    """Smallest change of ``l`` keeping ``l^T x`` and making ``max_u l^T A_u x = 0``."""
    x = np.asarray(x, dtype=float)
    l = np.asarray(l, dtype=float)
    out = l
    for _ in range(3):
        u = 1.0 if (pair.b @ out) * (pair.c @ x) > 0 else 0.0
        g = pair.matrix(u) @ x
        C = np.vstack([x, g])
        r = np.array([0.0, -(out @ g)])
        out = out + C.T @ np.linalg.lstsq(C @ C.T, r, rcond=None)[0]
    return out


def _sign_after(value, d1, d2):
    """Sign of a factor just after a time where it takes ``value``."""
    for s in (value, d1, d2):
        if s > 0:
            return 1
        if s < 0:
            return -1
    return 0


def integrate_extremal(pair, x0, l0, horizon, h_scan=None, time_tol=1e-12, sample_step=0.01,
                       project=True, block=256, anchor=None):
    """Event-driven integration of the coupled bang-bang flow.

    Each bang is propagated with exact exponentials of the active generator;
    factor zeros are bracketed on a scan grid of step ``h_scan`` and refined
    by Brent's method to ``time_tol``.  Transversal zeros flip the sign of
    their factor, tangential zeros keep it; ``u`` follows the sign of the
    product.

    The adjoint is unstable forward in time near attracting cycles, so small
    covector errors grow.  ``anchor`` (a map ``x -> l``, e.g. built from a norm
    field) is applied at every c-zero to pull ``l`` back to an approximate
    subgradient; the anchored covector keeps ``l^T x`` and is projected onto
    ``max_u l^T A_u x = 0``.
    """
    if not np.isfinite(horizon) or horizon <= 0:
        raise ValueError("horizon must be positive and finite")
    x = np.asarray(x0, dtype=float).copy()
    l = np.asarray(l0, dtype=float).copy()
    if not np.any(x) or not np.any(l):
        raise ValueError("x0 and l0 must be nonzero")
    if project:
        l = project_covector(pair, x, l)
    b, c = pair.b, pair.c
    if h_scan is None:
        h_scan = default_scan_step(pair)
    stride = max(1, int(round(sample_step / h_scan)))
    sv = switching_values(pair, x, l)
    # sign of each factor just after t = 0
    sb = _sign_after(sv.phi_b if abs(sv.phi_b) > 1e-14 * np.linalg.norm(l) else 0.0,
                     sv.dphi_b, sv.ddphi_b_core)
    sc = _sign_after(sv.phi_c if abs(sv.phi_c) > 1e-14 * np.linalg.norm(x) else 0.0,
                     sv.dphi_c, sv.ddphi_c_core)
    events = []
    bangs = []
    times, xs, ls, us = [], [], [], []
    t = 0.0
    cache = {}

    def powers(u):
        if u not in cache:
            M = pair.matrix(u)
            E = expm(M, h_scan)
            F = expm(-M.T, h_scan)
            PE = np.empty((block, 3, 3))
            PF = np.empty((block, 3, 3))
            PE[0], PF[0] = E, F
            for k in range(1, block):
                PE[k] = E @ PE[k - 1]
                PF[k] = F @ PF[k - 1]
            cache[u] = (M, PE, PF)
        return cache[u]

    while t < horizon - time_tol:
        u = 1.0 if sb * sc > 0 else 0.0
        M, PE, PF = powers(u)
        xb, lb, tb = x.copy(), l.copy(), t
        event = None
        xs_cur, ls_cur, offset = xb, lb, 0
        while event is None:
            X = PE @ xs_cur          # states at offset + 1 .. offset + block scan steps
            L = PF @ ls_cur
            fb = L @ b
            fc = X @ c
            steps_t = tb + h_scan * (offset + 1 + np.arange(block))
            wrong_b = np.nonzero(np.sign(fb) == -sb)[0]
            wrong_c = np.nonzero(np.sign(fc) == -sc)[0]
            kb = wrong_b[0] if wrong_b.size else block
            kc = wrong_c[0] if wrong_c.size else block
            past = np.nonzero(steps_t >= horizon)[0]
            kh = past[0] if past.size else block
            k = min(kb, kc, kh)
            # record samples on the stride grid before index k
            for j in range(k):
                idx = offset + 1 + j
                if idx % stride == 0:
                    times.append(steps_t[j])
                    xs.append(X[j])
                    ls.append(L[j])
                    us.append(u)
            if k == block:
                xs_cur, ls_cur = X[-1], L[-1]
                offset += block
                continue
            lo = tb + h_scan * (offset + k)
            hi = steps_t[k]
            if kh <= min(kb, kc):
                event = ("end", min(horizon, hi))
                break
            zeros = {}
            if kb == k:
                f = lambda s: float(b @ (expm(-M.T, s - tb) @ lb))
                zeros["b"] = _refine(f, lo, hi, tb, time_tol)
            if kc == k:
                f = lambda s: float(c @ (expm(M, s - tb) @ xb))
                zeros["c"] = _refine(f, lo, hi, tb, time_tol)
            # the other factor may vanish just after the first zero in the same bracket
            te = min(zeros.values())
            for name, f in (("b", lambda s: float(b @ (expm(-M.T, s - tb) @ lb))),
                            ("c", lambda s: float(c @ (expm(M, s - tb) @ xb)))):
                if name not in zeros:
                    val = f(te)
                    ref = np.linalg.norm(lb if name == "b" else xb)
                    if abs(val) <= 1e-9 * ref:
                        zeros[name] = te
            event = ("switch", zeros)
        if event[0] == "end":
            te = event[1]
            x = expm(M, te - tb) @ xb
            l = expm(-M.T, te - tb) @ lb
            bangs.append((tb, te - tb, u, xb, lb))
            t = te
            break
        zeros = event[1]
        te = min(zeros.values())
        together = [w for w, z in zeros.items() if z - te <= 10 * time_tol]
        x = expm(M, te - tb) @ xb
        l = expm(-M.T, te - tb) @ lb
        bangs.append((tb, te - tb, u, xb, lb))
        which = "both" if len(together) == 2 else together[0]
        kinds = []
        for w in together:
            kind = classify_zero(pair, x, l, w)
            kinds.append(kind)
            if kind == "transversal":
                if w == "b":
                    sb = -sb
                else:
                    sc = -sc
        kind = "transversal" if "transversal" in kinds else "tangential"
        events.append(SwitchEvent(float(te), which, kind))
        t = te
        if anchor is not None and "c" in together and "b" not in together:
            new = np.asarray(anchor(x), dtype=float)
            new = new * ((l @ x) / (new @ x))
            new = project_covector(pair, x, new)
            lb_val = float(b @ new)
            if abs(lb_val) > 1e-9 * np.linalg.norm(new):
                sb = 1 if lb_val > 0 else -1
            l = new
    times = np.array([0.0] + times + ([t] if not times or times[-1] < t else []))
    x_states = [np.asarray(x0, dtype=float)] + xs
    l_states = [bangs[0][4] if bangs else l] + ls
    u_values = [bangs[0][2] if bangs else 0.0] + us
    if len(x_states) < len(times):
        x_states.append(x)
        l_states.append(l)
        u_values.append(bangs[-1][2] if bangs else 0.0)
    return ExtremalPath(times, np.array(x_states), np.array(l_states), np.array(u_values),
                        tuple(events), tuple(bangs))


def _refine(f, lo, hi, t_start, time_tol):
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0 or np.sign(flo) == np.sign(fhi):
        return hi
    return brentq(f, lo, hi, xtol=time_tol, rtol=4 * np.finfo(float).eps)


def sign_change_stats(path, window):
    """Transversal zeros of ``b^T l`` and ``c^T x`` inside ``[t_lo, t_hi)``."""
    lo, hi = window
    nb = nc = 0
    for e in path.switch_times:
        if lo <= e.time < hi and e.kind == "transversal":
            if e.which in ("b", "both"):
                nb += 1
            if e.which in ("c", "both"):
                nc += 1
    return nb, nc


def best_initial_covector(pair, x0, candidates, probe_horizon, field, **kwargs):
    """Among up to 8 candidate covectors keep the one whose probe run drifts least in ``field``."""
    best, best_drift = None, np.inf
    for l0 in list(candidates)[:8]:
        path = integrate_extremal(pair, x0, l0, probe_horizon, **kwargs)
        vals = field.query(path.x_states)
        drift = float(np.abs(vals - vals[0]).max())
        if drift < best_drift:
            best, best_drift = np.asarray(l0, dtype=float), drift
    return best, best_drift

"""Command-line entry point: ``barabanov <command> [options]``.

Every command writes its outputs and a ``manifest.json`` into ``--out``.
Exit codes: 0 success, 1 validation or convergence failure, 2 input error.
"""
from __future__ import annotations

import argparse
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import examples as ex
from .io import write_csv, write_json
from .model import (SystemFormatError, irreducibility_check, load_system, system_to_dict,
                    validate_pair)

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

EXAMPLES = {
    "example1": ex.example1,
    "example2": ex.example2,
    "supgap": ex.supgap_system,
    "sample-pair": ex.sample_pair,
}


class InputError(Exception):
    pass


# ----------------------------------------------------------------------------
# helpers

def _vector(text, name):
    try:
        v = np.array(json.loads(text), dtype=float)
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise InputError(f"{name}: expected a JSON list of numbers") from exc
    if v.ndim != 1 or not np.all(np.isfinite(v)):
        raise InputError(f"{name}: expected a finite vector")
    return v


def _state(text, name, n, default=None):
    """Nonzero length-``n`` vector from a JSON option, or ``default`` when absent."""
    if not text:
        return default
    v = _vector(text, name)
    if v.size != n:
        raise InputError(f"{name}: expected length {n}")
    if not np.any(v):
        raise InputError(f"{name}: must be nonzero")
    return v


def _system(args):
    if args.system and args.example:
        raise InputError("give either --system or --example, not both")
    if args.system:
        try:
            return load_system(args.system)
        except FileNotFoundError as exc:
            raise InputError(f"system file not found: {args.system}") from exc
    if args.example:
        if args.example == "example2":
            return ex.example2(args.alpha)
        return EXAMPLES[args.example]()
    raise InputError("a system is required (--system PATH or --example NAME)")


def _pair(sys_):
    if sys_.pair is None:
        raise InputError("this command needs a rank-one pair system (with a 'pair' entry)")
    return sys_.pair


def _field(args, sys_):
    from .norm.bellman import approximate_barabanov_norm

    if getattr(args, "field", None):
        fld = _load_field(args.field)
        if fld.n != sys_.n:
            raise InputError("field dimension does not match the system")
        return fld
    return approximate_barabanov_norm(sys_, grid_resolution=args.grid_resolution, h=args.h,
                                      tol=args.field_tol, max_iters=args.max_iters,
                                      check_irreducible=False)


def _load_field(path):
    from .norm.field import load_field

    try:
        return load_field(path)
    except FileNotFoundError as exc:
        raise InputError(f"field file not found: {path}") from exc
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise InputError(f"field file: {exc}") from exc


def _out(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _versions():
    import scipy

    from importlib.metadata import PackageNotFoundError, version

    try:
        own = version("artifact")
    except PackageNotFoundError:
        own = "unknown"
    return {"artifact": own, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _manifest(out, args, tolerances, outputs):
    config = {k: v for k, v in sorted(vars(args).items())
              if k not in ("out", "func", "config") and not callable(v)}
    write_json(out / "manifest.json", {
        "command": args.command,
        "config": config,
        "versions": _versions(),
        "tolerances": tolerances,
        "outputs": sorted(outputs),
    })


# ----------------------------------------------------------------------------
# commands

def cmd_validate(args):
    from .matnum import spectrum

    sys_ = _system(args)
    out = _out(args)
    if sys_.pair is not None:
        p = sys_.pair
        rep = validate_pair(p.A, p.b, p.c)
        record = {
            "kind": "pair",
            "hurwitz_vertices": list(rep.hurwitz_vertices),
            "controllable_b": rep.controllable_b,
            "controllable_c": rep.controllable_c,
            "detB_value": rep.detB_value,
            "detB_ok": rep.detB_ok,
            "irreducible": rep.irreducible.irreducible,
            "irreducible_conclusive": rep.irreducible.conclusive,
            "delta_affinity_error": rep.delta_affinity_error(),
            "hull_abscissa_profile": [list(t) for t in rep.hull_abscissa_profile],
            "delta_profile": [list(t) for t in rep.delta_profile],
        }
        passed = rep.passed and rep.irreducible.irreducible
    else:
        irr = irreducibility_check(sys_, seed=args.seed)
        record = {
            "kind": "generators",
            "vertex_abscissas": [spectrum(G).abscissa for G in sys_.generators],
            "irreducible": irr.irreducible,
            "irreducible_conclusive": irr.conclusive,
            "span_dimension": irr.span_dimension,
        }
        passed = irr.irreducible
    record["passed"] = bool(passed)
    write_json(out / "validation.json", record)
    _manifest(out, args, {}, ["validation.json"])
    return EXIT_OK if passed else EXIT_FAIL


def _random_signal(sys_, horizon, rng):
    segs, t = [], 0.0
    while t < horizon:
        d = min(float(rng.exponential(1.0)) + 1e-3, horizon - t)
        if d <= 0:
            break
        segs.append((d, int(rng.integers(sys_.m))))
        t += d
    return segs


def _signal(args, sys_):
    from .flow import SwitchingSignal

    if args.signal:
        try:
            data = json.loads(Path(args.signal).read_text())
        except FileNotFoundError as exc:
            raise InputError(f"signal file not found: {args.signal}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"signal: invalid JSON ({exc.msg})") from exc
        segs = data.get("segments") if isinstance(data, dict) else data
        if not isinstance(segs, list):
            raise InputError("signal: expected a list of [duration, control] segments")
        try:
            return SwitchingSignal(tuple((s[0], s[1]) for s in segs))
        except (TypeError, IndexError, ValueError) as exc:
            raise InputError(f"signal: {exc}") from exc
    rng = np.random.default_rng(args.seed)
    return SwitchingSignal(tuple(_random_signal(sys_, args.horizon, rng)))


def cmd_simulate(args):
    from .flow import adjoint_propagate, propagate, write_trajectory_csv

    sys_ = _system(args)
    x0 = _state(args.x0, "x0", sys_.n, np.eye(sys_.n)[0])
    l0 = _state(args.l0, "l0", sys_.n)
    sig = _signal(args, sys_)
    try:
        traj = propagate(sys_, sig, x0, sample_step=args.sample_step)
        adj = None if l0 is None else adjoint_propagate(sys_, sig, l0, sample_step=args.sample_step)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = _out(args)
    write_trajectory_csv(out / "trajectory.csv", traj, adj)
    write_json(out / "signal.json", {"segments": [list(s) for s in sig.segments]})
    _manifest(out, args, {}, ["trajectory.csv", "signal.json"])
    return EXIT_OK


def cmd_extremal(args):
    from .cycles import field_anchor
    from .extremal import integrate_extremal

    sys_ = _system(args)
    pair = _pair(sys_)
    x0 = _state(args.x0, "x0", 3, np.array([1.0, 0.0, 0.0]))
    fld = _field(args, sys_) if (args.field or args.anchor) else None
    anchor = field_anchor(fld) if args.anchor else None
    l0 = _state(args.l0, "l0", 3)
    if l0 is None:
        l0 = field_anchor(fld)(x0) if fld is not None else x0.copy()
    if not args.horizon > 0:
        raise InputError("horizon: must be positive")
    path = integrate_extremal(pair, x0, l0, args.horizon, sample_step=args.sample_step, anchor=anchor)
    out = _out(args)
    path.write(out / "extremal.csv", out / "events.json", pair)
    H = path.hamiltonian(pair)
    write_json(out / "extremal_summary.json", {
        "events": len(path.switch_times),
        "max_abs_hamiltonian": float(np.abs(H).max()),
        # re-anchoring rescales l to keep l^T x, so the drift is meaningful either way
        "duality_drift": float(np.abs(np.einsum("ij,ij->i", path.l_states, path.x_states)
                                      - path.l_states[0] @ path.x_states[0]).max()),
    })
    _manifest(out, args, {"time_tol": 1e-12}, ["extremal.csv", "events.json", "extremal_summary.json"])
    return EXIT_OK


def cmd_rho(args):
    from .norm.bellman import HorizonPolicy, InconclusiveError, estimate_rho

    sys_ = _system(args)
    out = _out(args)
    pol = HorizonPolicy(h=args.h, grid_resolution=args.grid_resolution)
    try:
        est = estimate_rho(sys_, tol=args.tol, horizon_policy=pol)
    except InconclusiveError as exc:
        write_json(out / "rho.json", {"status": "inconclusive", "message": str(exc),
                                      "band": list(exc.band)})
        _manifest(out, args, {"tol": args.tol}, ["rho.json"])
        return EXIT_FAIL
    write_json(out / "rho.json", {"status": "ok", "value": est.value, "bracket": list(est.bracket),
                                  "iterations": est.iterations, "trace": est.method_trace})
    _manifest(out, args, {"tol": args.tol}, ["rho.json"])
    return EXIT_OK


def cmd_norm(args):
    from .norm.bellman import (CollapseError, DivergenceError, ReducibleSystemError,
                               approximate_barabanov_norm)

    sys_ = _system(args)
    out = _out(args)
    try:
        fld = approximate_barabanov_norm(sys_, grid_resolution=args.grid_resolution, h=args.h,
                                         tol=args.field_tol, max_iters=args.max_iters,
                                         convexify=args.convexify)
    except (DivergenceError, CollapseError, ReducibleSystemError) as exc:
        write_json(out / "norm_error.json", {"error": type(exc).__name__, "message": str(exc)})
        _manifest(out, args, {"field_tol": args.field_tol}, ["norm_error.json"])
        return EXIT_FAIL
    fld.save(out / "field.json")
    fld.write_obj(out / "level_set.obj")
    _manifest(out, args, {"field_tol": args.field_tol, "grid_error": fld.grid_error},
              ["field.json", "level_set.obj"])
    return EXIT_OK if fld.provenance.get("converged") else EXIT_FAIL


def cmd_dual(args):
    from .norm.dual import dual_field, polar_residual

    if not args.field:
        raise InputError("dual needs --field PATH")
    fld = _load_field(args.field)
    out = _out(args)
    d = dual_field(fld)
    d.save(out / "dual_field.json")
    d.write_obj(out / "dual_level_set.obj")
    res = polar_residual(fld)
    write_json(out / "dual_summary.json", {"polar_residual": res, "grid_error": fld.grid_error,
                                           "within_tolerance": res <= 2 * fld.grid_error})
    _manifest(out, args, {"polar": "2*grid_error"},
              ["dual_field.json", "dual_level_set.obj", "dual_summary.json"])
    return EXIT_OK


def cmd_cycles(args):
    from .cycles import catalog_entries, multistart_cycle_survey, tune_pair
    from .norm.bellman import estimate_rho

    sys_ = _system(args)
    _pair(sys_)
    out = _out(args)
    summary = {}
    if args.tune:
        tp = tune_pair(sys_, rho_tol=args.rho_tol, start_count=args.starts, horizon=args.horizon,
                       workers=args.workers)
        tuned, survey = tp.system, tp.survey
        summary.update(shift=tp.shift, rho_initial=tp.rho_initial, cycle_growth=tp.cycle_growth,
                       rho_final=tp.rho_final)
    else:
        tuned = sys_
        rho = estimate_rho(tuned, tol=args.rho_tol).value
        summary.update(rho_final=rho)
        if abs(rho) > args.tol:
            write_json(out / "survey.json", dict(summary, status="untuned",
                                                 message="|rho| exceeds --tol; rerun with --tune"))
            _manifest(out, args, {"tol": args.tol}, ["survey.json"])
            return EXIT_FAIL
        fld = _field(args, tuned)
        survey = multistart_cycle_survey(tuned.pair, fld, args.starts, args.horizon,
                                         workers=args.workers)
    summary.update(verdict=survey.verdict, cycles=len(survey.catalog), families=len(survey.families),
                   isolated_singular_values=[v.smallest_singular_value for v in survey.isolated],
                   log=survey.log, audits=[{"failures": c.audit["failures"],
                                            "verdict": c.audit["verdict"],
                                            "orbit": c.audit["orbit"]} for c in survey.catalog])
    write_json(out / "catalog.json", catalog_entries(survey.catalog))
    fams = [{"parameter_samples": list(map(float, f.parameter_samples)),
             "cycles": catalog_entries(f.cycles), "truncated": f.truncated} for f in survey.families]
    write_json(out / "families.json", fams)
    write_json(out / "tuned_system.json", system_to_dict(tuned))
    ok = abs(summary["rho_final"]) <= args.tol and all(not c.audit["failures"] for c in survey.catalog)
    summary["status"] = "ok" if ok else "failed"
    write_json(out / "survey.json", summary)
    _manifest(out, args, {"tol": args.tol, "newton_tol": 1e-10, "dedup_tol": 1e-5, "rank_tol": 1e-6,
                          "exclusion_radius": 1e-3},
              ["catalog.json", "families.json", "tuned_system.json", "survey.json"])
    return EXIT_OK if ok else EXIT_FAIL


def cmd_omega(args):
    from .flow import StationaryPointError, build_section, omega_estimate, propagate
    from .norm.diagnostics import follow_extremal

    sys_ = _system(args)
    fld = _field(args, sys_)
    x0 = _state(args.x0, "x0", sys_.n, np.eye(sys_.n)[0])
    run = follow_extremal(sys_, fld, x0, args.horizon)
    sig = run.signal(0)
    traj = propagate(sys_, sig, x0, sample_step=args.sample_step)
    z = traj.states[len(traj.states) // 2]
    out = _out(args)
    try:
        sec = build_section(sys_, z, seed=args.seed)
    except StationaryPointError as exc:
        write_json(out / "omega.json", {"kind": "no-section", "message": str(exc)})
        _manifest(out, args, {}, ["omega.json"])
        return EXIT_FAIL
    rep = omega_estimate(sys_, traj, args.horizon, sec)
    write_json(out / "omega.json", {
        "kind": rep.kind, "representative_points": rep.representative_points,
        "period_estimate": rep.period_estimate, "residual": rep.residual,
        "crossings": len(rep.crossing_times), "monotone": rep.monotone,
        "max_inversion": rep.max_inversion, "diagnostic_only": rep.diagnostic_only,
        "section_normal": sec.normal, "section_offset": sec.offset,
        "max_field_drift": float(run.drift()[0]),
    })
    _manifest(out, args, {"point_tol": 1e-6}, ["omega.json"])
    return EXIT_OK


def _uniqueness_record(rep):
    return {"connectivity": rep.connectivity, "components": [
        {"size": c["size"], "centroid": c["centroid"]} for c in rep.components],
        "epsilon": rep.epsilon, "lambda_bar": rep.lambda_bar, "points": len(rep.omega_points)}


def cmd_diag_uniqueness(args):
    from .norm.diagnostics import uniqueness_diagnostic

    sys_ = _system(args)
    fld = _field(args, sys_)
    rep = uniqueness_diagnostic(sys_, fld, start_count=args.starts, horizon=args.horizon)
    out = _out(args)
    write_json(out / "uniqueness.json", _uniqueness_record(rep))
    write_csv(out / "omega_points.csv", [f"x_{i + 1}" for i in range(sys_.n)], rep.omega_points)
    _manifest(out, args, {"epsilon": rep.epsilon}, ["uniqueness.json", "omega_points.csv"])
    return EXIT_OK


def _convexity_record(rep):
    return {"flagged": rep.flagged, "segments": [[a, b] for a, b in rep.segments],
            "flagged_pairs": rep.flagged_pairs, "tested_pairs": rep.tested_pairs,
            "flat_tol": rep.flat_tol, "seg_tol": rep.seg_tol}


def cmd_diag_convexity(args):
    from .norm.diagnostics import convexity_audit

    if args.field:
        fld = _load_field(args.field)
    else:
        fld = _field(args, _system(args))
    rep = convexity_audit(fld, seed=args.seed)
    out = _out(args)
    write_json(out / "convexity.json", _convexity_record(rep))
    _manifest(out, args, {"flat_tol": rep.flat_tol, "seg_tol": rep.seg_tol}, ["convexity.json"])
    return EXIT_OK


def _gap_record(reps):
    return [{"point": r.point, "value": r.value, "best_limsup": r.best_limsup, "gap": r.gap,
             "tolerance": r.tolerance, "witness": r.witness} for r in reps]


def _supgap_points(count):
    curve = ex.supgap_curve()
    half = np.vstack([curve.b_arc, curve.a_segment])
    idx = np.linspace(0, len(half) - 1, count + 2)[1:-1].astype(int)
    return half[idx]


def cmd_diag_supgap(args):
    from .norm.diagnostics import sup_vs_max_gap

    sys_ = _system(args)
    fld = _field(args, sys_)
    if args.points:
        try:
            pts = np.array(json.loads(Path(args.points).read_text()), dtype=float)
        except (FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
            raise InputError(f"points: {exc}") from exc
        if pts.ndim != 2 or pts.shape[1] != sys_.n:
            raise InputError("points: expected a list of state vectors")
    else:
        pts = _supgap_points(args.samples)
    reps = [sup_vs_max_gap(sys_, fld, y, horizon=args.horizon, seed=args.seed) for y in pts]
    out = _out(args)
    write_json(out / "supgap.json", _gap_record(reps))
    _manifest(out, args, {"gap_tol": "3*grid_error"}, ["supgap.json"])
    return EXIT_OK


# ----------------------------------------------------------------------------
# bundled reproductions

def _check(record, name, ok, **values):
    record["checks"].append(dict(name=name, passed=bool(ok), **values))


def reproduce_example1(args, out):
    from .flow import SwitchingSignal, propagate
    from .norm.bellman import approximate_barabanov_norm, estimate_rho
    from .norm.diagnostics import follow_extremal, spread_starts, uniqueness_diagnostic

    sys_ = ex.example1()
    rec = {"example": "example1", "checks": []}
    rho = estimate_rho(sys_, tol=args.tol)
    _check(rec, "rho_near_zero", abs(rho.value) <= 1e-2, value=rho.value, bracket=list(rho.bracket))
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(50):
        sig = SwitchingSignal(tuple(_random_signal(sys_, 20.0, rng)))
        x0 = rng.standard_normal(3)
        traj = propagate(sys_, sig, x0, sample_step=0.05)
        n = np.linalg.norm(traj.states, axis=1)
        worst = max(worst, float(np.maximum(np.diff(n), 0.0).max()))
    _check(rec, "norm_nonincreasing", worst <= 1e-8, max_increase=worst)
    fld = approximate_barabanov_norm(sys_, max_iters=40000)
    run = follow_extremal(sys_, fld, spread_starts(3, 24), 200.0)
    m = np.minimum(np.abs(run.states[..., 1]), np.abs(run.states[..., 2]))
    reached = bool(np.all((m < 1e-2).any(axis=0)))
    _check(rec, "extremal_runs_reach_coordinate_planes", reached, final_max=float(m[-1].max()))
    late = run.states[run.times >= 150.0].reshape(-1, 3)
    uq = uniqueness_diagnostic(sys_, fld, runs=[late])
    _check(rec, "omega_connected", uq.connectivity == "connected", components=len(uq.components))
    write_csv(out / "example1_extremal.csv", ["time", "x_1", "x_2", "x_3"],
              [[t, *run.states[k, 0]] for k, t in enumerate(run.times)][::20])
    fld.write_obj(out / "example1_level_set.obj")
    return rec


def reproduce_example2(args, out):
    from .matnum import expm
    from .norm.bellman import approximate_barabanov_norm, default_step
    from .norm.diagnostics import uniqueness_diagnostic

    sys_ = ex.example2(args.alpha)
    rec = {"example": "example2", "alpha": args.alpha, "checks": []}
    fld = approximate_barabanov_norm(sys_)
    nodes = fld.nodes
    err = float(np.abs(fld.values - ex.v_beta(nodes, 1.0)).max())
    _check(rec, "field_matches_max_norm", err <= 2 * fld.grid_error, max_error=err,
           grid_error=fld.grid_error)
    h = default_step(sys_)
    for beta in (0.5, 1.0, 2.0):
        v0 = ex.v_beta(nodes, beta)
        imgs = np.array([ex.v_beta(nodes @ expm(G, h).T, beta) for G in sys_.generators])
        up = float((imgs - v0).max())
        low = float((imgs.max(axis=0) - v0).min())
        _check(rec, f"v_beta_{beta:g}_discrete_barabanov", up <= 1e-9 and low >= -1e-9,
               max_increase=up, min_max_deficit=low)
    uq = uniqueness_diagnostic(sys_, fld)
    four = uq.connectivity == "disconnected" and len(uq.components) == 4
    _check(rec, "omega_four_points", four, components=len(uq.components),
           centroids=[c["centroid"] for c in uq.components])
    fld.write_obj(out / "example2_level_set.obj")
    return rec


def reproduce_supgap(args, out):
    from .norm.bellman import approximate_barabanov_norm, estimate_rho
    from .norm.diagnostics import convexity_audit, sup_vs_max_gap

    tan = ex.supgap_tangency()
    rec = {"example": "supgap", "checks": [], "alpha": tan.alpha, "tangency_time": tan.time,
           "tangency_point": tan.point}
    _check(rec, "alpha_near_reference", abs(tan.alpha - 0.8896) <= 5e-3, value=tan.alpha)
    sys_ = ex.supgap_system(tan.alpha)
    rho = estimate_rho(sys_, tol=args.tol)
    _check(rec, "rho_within_tol", abs(rho.value) <= args.tol, value=rho.value, bracket=list(rho.bracket))
    fld = approximate_barabanov_norm(sys_)
    conv = convexity_audit(fld, seed=args.seed)
    _check(rec, "convexity_flags_segment", conv.flagged, segments=len(conv.segments))
    pts = _supgap_points(args.samples)
    reps = [sup_vs_max_gap(sys_, fld, y, seed=args.seed) for y in pts]
    wins = sum(r.witness for r in reps)
    _check(rec, "gap_on_curve", wins >= 3, witnesses=wins, sampled=len(reps),
           min_gap=min(r.gap for r in reps), tolerance=reps[0].tolerance)
    rec["gaps"] = _gap_record(reps)
    rec["convexity"] = _convexity_record(conv)
    curve = ex.supgap_curve()
    write_csv(out / "supgap_curve.csv", ["x_1", "x_2"], curve.points)
    write_csv(out / "supgap_level_set.csv", ["x_1", "x_2"], fld.unit_sphere_points())
    return rec


REPRODUCERS = {"example1": reproduce_example1, "example2": reproduce_example2,
               "supgap": reproduce_supgap}


def cmd_reproduce(args):
    out = _out(args)
    rec = REPRODUCERS[args.name](args, out)
    rec["passed"] = all(c["passed"] for c in rec["checks"])
    name = f"{args.name}_report.json"
    write_json(out / name, rec)
    outputs = sorted(p.name for p in out.iterdir() if p.name != "manifest.json")
    _manifest(out, args, {"tol": args.tol}, outputs)
    return EXIT_OK if rec["passed"] else EXIT_FAIL


# ----------------------------------------------------------------------------
# parser

def _common(p, tol=1e-3):
    p.add_argument("--config", help="JSON file whose keys override option defaults")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=".")
    p.add_argument("--tol", type=float, default=tol)


def _system_opts(p):
    p.add_argument("--system", help="system JSON file")
    p.add_argument("--example", choices=sorted(EXAMPLES))
    p.add_argument("--alpha", type=float, default=2.0, help="alpha for example2")


def _field_opts(p):
    p.add_argument("--field", help="precomputed field JSON (otherwise computed)")
    p.add_argument("--grid-resolution", type=int, default=None)
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--field-tol", type=float, default=1e-10)
    p.add_argument("--max-iters", type=int, default=40000)


def build_parser():
    parser = argparse.ArgumentParser(prog="barabanov", description="Extremal norms of switched linear systems.")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    def add(name, func, help_, tol=1e-3):
        p = sub.add_parser(name, help=help_)
        _common(p, tol)
        p.set_defaults(func=func)
        subs[name] = p
        return p

    p = add("validate", cmd_validate, "structural checks of a system")
    _system_opts(p)

    p = add("simulate", cmd_simulate, "propagate a trajectory under a switching signal")
    _system_opts(p)
    p.add_argument("--signal", help="JSON list of [duration, control] segments (random if absent)")
    p.add_argument("--x0")
    p.add_argument("--l0", help="also propagate the adjoint from this covector")
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--sample-step", type=float, default=0.01)

    p = add("extremal", cmd_extremal, "bang-bang extremal flow of a pair")
    _system_opts(p)
    _field_opts(p)
    p.add_argument("--x0")
    p.add_argument("--l0")
    p.add_argument("--anchor", action="store_true", help="re-anchor the covector to the field at c-zeros")
    p.add_argument("--horizon", type=float, default=50.0)
    p.add_argument("--sample-step", type=float, default=0.01)

    p = add("rho", cmd_rho, "estimate the largest Lyapunov exponent")
    _system_opts(p)
    p.add_argument("--grid-resolution", type=int, default=None)
    p.add_argument("--h", type=float, default=None)

    p = add("norm", cmd_norm, "approximate an extremal norm by value iteration")
    _system_opts(p)
    _field_opts(p)
    p.add_argument("--convexify", action="store_true")

    p = add("dual", cmd_dual, "polar field of a saved field")
    p.add_argument("--field")

    p = add("cycles", cmd_cycles, "survey periodic extremal cycles of a pair")
    _system_opts(p)
    _field_opts(p)
    p.add_argument("--tune", action="store_true", help="shift the pair until its cycles are neutral")
    p.add_argument("--rho-tol", type=float, default=1e-4)
    p.add_argument("--starts", type=int, default=12)
    p.add_argument("--horizon", type=float, default=150.0)

    p = add("omega", cmd_omega, "limit behaviour of a norm-guided extremal run")
    _system_opts(p)
    _field_opts(p)
    p.add_argument("--x0")
    p.add_argument("--horizon", type=float, default=100.0)
    p.add_argument("--sample-step", type=float, default=0.01)

    p = add("diag-uniqueness", cmd_diag_uniqueness, "connectivity of the pooled limit set")
    _system_opts(p)
    _field_opts(p)
    p.add_argument("--starts", type=int, default=24)
    p.add_argument("--horizon", type=float, default=200.0)

    p = add("diag-convexity", cmd_diag_convexity, "flat segments of the unit level set")
    _system_opts(p)
    _field_opts(p)

    p = add("diag-supgap", cmd_diag_supgap, "value minus best limsup of the Euclidean norm")
    _system_opts(p)
    _field_opts(p)
    p.add_argument("--points", help="JSON list of states (default: samples of the glued curve)")
    p.add_argument("--samples", type=int, default=8)
    p.add_argument("--horizon", type=float, default=60.0)

    p = add("reproduce", cmd_reproduce, "bundled example reproductions")
    p.add_argument("name", choices=sorted(REPRODUCERS))
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--samples", type=int, default=8)
    return parser, subs


def _apply_config(parser, subs, argv):
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except FileNotFoundError as exc:
        raise InputError(f"config file not found: {args.config}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"config: invalid JSON ({exc.msg})") from exc
    if not isinstance(cfg, dict):
        raise InputError("config: expected an object")
    p = subs[args.command]
    known = {a.dest for a in p._actions}
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise InputError(f"config: unknown keys {', '.join(unknown)}")
    p.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv=None):
    parser, subs = build_parser()
    try:
        args = _apply_config(parser, subs, argv)
        return args.func(args)
    except (InputError, SystemFormatError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ArithmeticError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

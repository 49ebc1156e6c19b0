"""Command-line interface: ``sslq <command> PROBLEM.json [options]``.

Exit codes: 0 success (or ``well_posed``), 2 ``not_well_posed`` or a failed
controllability test, 3 ``inconclusive``, 4 solver or assumption errors,
64 usage and problem-file errors.  ``reproduce`` exits 1 when any check
misses its tolerance.
"""

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import _linalg as la
from . import problem as pr
from .controllability import check_h3, witness_residuals
from .errors import DimensionError, ProblemFileError, SSLQError
from .pencil import is_regular, kronecker_structure, weierstrass
from .reduction import assemble, check_assumptions, suggest_feedback, verify_k
from .riccati import (feedback_finite, feedback_infinite, finite_residuals, solve_are,
                      solve_finite, solve_finite_adaptive)
from .simulate import (SimConfig, scalar_closed_loop, simulate_closed_loop,
                       truncation_horizon)
from .wellposed import INCONCLUSIVE, NOT_WELL_POSED, WELL_POSED, analyze, check_strongly_regular

EXIT_OK = 0
EXIT_NOT_WELL_POSED = 2
EXIT_INCONCLUSIVE = 3
EXIT_SOLVE = 4
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 64

ANALYZE_EXIT = {WELL_POSED: EXIT_OK, NOT_WELL_POSED: EXIT_NOT_WELL_POSED,
                INCONCLUSIVE: EXIT_INCONCLUSIVE}

P0_EX62 = 2 * math.cos(2 * math.pi / 9) - 1
LAMBDA_EX62 = (-0.347296, -0.532089, 0.0)
EXPONENTS_EX62 = (-1.7450, 0.6527)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def jsonable(obj):
    """Convert numpy data, complex numbers and non-finite floats to plain JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        if obj.imag == 0:
            return jsonable(float(obj.real))
        return {"re": jsonable(float(obj.real)), "im": jsonable(float(obj.imag))}
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if obj is None or isinstance(obj, str):
        return obj
    try:
        return float(obj)
    except (TypeError, ValueError):
        return str(obj)


def _emit(report, args):
    text = json.dumps(jsonable(report), indent=2)
    print(text)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(text + "\n")


def _write_csv(args, name, header, rows):
    if not args.out_dir:
        return None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return str(path)


def _load(args):
    return pr.load(args.problem, exact=args.exact)


def _seed(args, pf, default=0):
    if args.seed is not None:
        return args.seed
    return int(pf.options.get("seed", pf.options.get("sim", {}).get("seed", default)))


def reduce_problem(pf, exact=False, tol=None):
    """Reduced LQ data: the file's certificate, else ``K = 0``, else a feedback search."""
    if pf.weights is None:
        raise ProblemFileError("problem file has no weights")
    sysm = pf.system
    source = "certificate"
    if pf.certificate is not None:
        c = pf.certificate
        K, M1, N1, blocks = c.K, c.M1, c.N1, c.block_sizes
    else:
        v = check_strongly_regular(sysm, exact=exact, tol=tol)
        if v.well_posed:
            K, M1, N1, blocks = np.zeros((sysm.r, sysm.n)), v.form.M, v.form.N, v.form.block_sizes
            source = "K=0"
        else:
            s = suggest_feedback(sysm, exact=exact)
            if s is None:
                raise SSLQError("no certificate supplied and no pre-compensating feedback found")
            K, M1, N1, blocks = s.K, s.M1, s.N1, s.block_sizes
            source = f"feedback search ({s.tried} candidates)"
    red = assemble(sysm, K, M1, N1, blocks, pf.weights, exact=exact, tol=tol)
    return red, source


def _reduced_summary(red):
    return {"h": red.h, "A1": red.A1, "B1": red.B1, "C11": red.C11, "Dtilde1": red.Dtilde1,
            "Qhat": red.Qhat, "S": red.S, "Rhat": red.Rhat, "Hhat": red.Hhat, "x10": red.x10,
            "K": red.K, "M1": red.M1, "N1": red.N1, "block_sizes": red.block_sizes}


def cmd_analyze(args):
    pf = _load(args)
    sysm = pf.system
    reg = is_regular(sysm.pencil, exact=args.exact)
    diag = {"regular": reg.regular, "witness": reg.witness,
            "det_at_witness": reg.det_at_witness}
    if reg.regular:
        wf = weierstrass(sysm.pencil, exact=args.exact)
        diag["weierstrass"] = {"h": wf.h, "block_sizes": wf.block_sizes,
                               "nilpotent_index": wf.nilpotent_index,
                               "cond_M": wf.cond_M, "cond_N": wf.cond_N,
                               "A1_eigenvalues": np.linalg.eigvals(la.to_float(wf.A1))
                               if wf.h else []}
    else:
        ks = kronecker_structure(sysm.pencil, exact=args.exact)
        diag["kronecker"] = {"zero_block": ks.zero_block, "left_indices": ks.left_indices,
                             "right_indices": ks.right_indices,
                             "nilpotent_sizes": ks.nilpotent_sizes,
                             "finite_block_order": ks.finite_block_order}
    v = analyze(sysm, exact=args.exact, seed=_seed(args, pf))
    report = {"problem": pf.name, "status": v.status, "case": v.case_used,
              "failed_conditions": v.failed_conditions, "conditions": v.conditions,
              "initial_condition_ok": v.initial_condition_ok, "notes": v.notes,
              "pencil": diag}
    if v.form is not None:
        report["certificate"] = {"M": la.to_float(v.form.M), "N": la.to_float(v.form.N),
                                 "block_sizes": v.form.block_sizes}
    if pf.certificate is not None:
        c = pf.certificate
        vk = verify_k(sysm, c.K, c.M1, c.N1, c.block_sizes, exact=args.exact)
        report["supplied_certificate"] = {"status": vk.status, "conditions": vk.conditions}
    _emit(report, args)
    return ANALYZE_EXIT[v.status]


def _finite_rows(sol, F):
    h = sol.P.shape[1]
    iu = np.triu_indices(h)
    for t, P, Psi, Fi in zip(sol.grid, sol.P, sol.Psi, F):
        yield [t] + list(P[iu]) + list(Psi.ravel()) + list(Fi.ravel())


def cmd_solve_finite(args):
    pf = _load(args)
    red, source = reduce_problem(pf, exact=args.exact)
    T = pf.weights.T
    if T is None or not math.isfinite(T):
        raise ProblemFileError("solve-finite needs a finite horizon T in the weights")
    steps = args.steps or pf.options.get("steps")
    sol = solve_finite(red, T, steps)
    oracle = solve_finite_adaptive(red, T)
    F = feedback_finite(sol, red.K, red.N1)
    h, r, n = red.h, red.r, red.n
    header = (["t"] + [f"P{i + 1}{j + 1}" for i, j in zip(*np.triu_indices(h))]
              + [f"Psi{i + 1}{j + 1}" for i in range(r) for j in range(h)]
              + [f"F{i + 1}{j + 1}" for i in range(r) for j in range(n)])
    csv_path = _write_csv(args, "riccati.csv", header, _finite_rows(sol, F))
    res = finite_residuals(red, sol)
    report = {"problem": pf.name, "horizon": "finite", "T": T, "reduction_source": source,
              "assumptions": check_assumptions(pf.system, red.K, red.N1, red.B2, pf.weights),
              "reduced": _reduced_summary(red), "value": sol.value, "P0": sol.P0,
              "P0_adaptive": oracle.P0, "integrator_gap": float(np.abs(sol.P0 - oracle.P0).max()),
              "max_residual": float(res.max()) if res.size else 0.0,
              "gain_at_0": F[0], "gain_at_T": F[-1], "steps": sol.integrator_stats["steps"],
              "riccati_csv": csv_path}
    _emit(report, args)
    return EXIT_OK


def _are_options(args, pf):
    o = pf.options.get("are", {})
    return {"T_step": args.t_step or o.get("T_step", 1.0),
            "max_T": args.max_t or o.get("max_T", 200.0),
            "tol_conv": args.tol_conv or o.get("tol_conv", 1e-10)}


def cmd_solve_infinite(args):
    pf = _load(args)
    red, source = reduce_problem(pf, exact=args.exact)
    are = solve_are(red, **_are_options(args, pf))
    F = feedback_infinite(are, red)
    h = red.h
    iu = np.triu_indices(h)
    header = ["T"] + [f"P{i + 1}{j + 1}" for i, j in zip(*iu)]
    rows = ([T] + list(P[iu]) for T, P in zip(are.horizons_used, are.iterates))
    csv_path = _write_csv(args, "riccati.csv", header, rows)
    report = {"problem": pf.name, "horizon": "infinite", "reduction_source": source,
              "assumptions": check_assumptions(pf.system, red.K, red.N1, red.B2, pf.weights,
                                               "infinite"),
              "reduced": _reduced_summary(red), "value": are.value, "P0": are.P0,
              "Lambda0": are.Lambda0, "gain": F, "residual": are.residual,
              "horizons_used": are.horizons_used[-1], "final_delta": are.final_delta,
              "newton_steps": are.newton_steps, "monotone": are.monotone,
              "riccati_csv": csv_path}
    _emit(report, args)
    return EXIT_OK


def cmd_check_controllability(args):
    pf = _load(args)
    red, source = reduce_problem(pf, exact=args.exact)
    rep = check_h3(red, tol=args.tol_rank)
    report = {"problem": pf.name, "reduction_source": source, "h": rep.h,
              "rank_Dtilde1": rep.rank_D1, "terminal_controllable": rep.terminal_controllable,
              "M2": rep.M2, "K1": rep.K1, "P": rep.P, "P1": rep.P1, "B1tilde": rep.B1tilde,
              "reachable_dim": rep.reachable_dim, "subspace_verdict": rep.subspace_verdict,
              "pbh_verdict": rep.pbh_verdict, "criteria_agree": rep.criteria_agree,
              "h3_holds": rep.h3_holds, "notes": rep.notes}
    if rep.witness is not None:
        report["witness"] = {**rep.witness, "residuals": witness_residuals(
            rep.P, rep.P1, rep.B1tilde, rep.witness)}
    _emit(report, args)
    return EXIT_OK if rep.h3_holds else EXIT_NOT_WELL_POSED


def _sim_setup(args, pf, red):
    o = pf.options.get("sim", {})
    finite = pf.weights.T is not None and math.isfinite(pf.weights.T)
    notes = []
    if finite:
        sol = solve_finite(red, pf.weights.T, args.steps or pf.options.get("steps"))
        gain = (sol.grid, feedback_finite(sol, red.K, red.N1))
        horizon, kind, value = pf.weights.T, "finite", sol.value
    else:
        are = solve_are(red, **_are_options(args, pf))
        gain = feedback_infinite(are, red)
        T_tr, alpha = truncation_horizon(red, gain)
        horizon = args.horizon or o.get("horizon") or T_tr
        notes.append(f"second-moment decay rate {alpha:.6g}; 0.1% tail horizon {T_tr:.4g}; "
                     f"tail factor at the used horizon {math.exp(-alpha * horizon):.3g}")
        kind, value = "infinite_truncated", are.value
    cfg = SimConfig(dt=args.dt or o.get("dt", 1e-3), horizon=float(horizon),
                    n_paths=args.paths or o.get("n_paths", 1000), seed=_seed(args, pf),
                    keep_paths=4)
    cfg.record_every = max(1, cfg.n_steps // 1000)
    return gain, cfg, kind, value, notes


def cmd_simulate(args):
    pf = _load(args)
    red, source = reduce_problem(pf, exact=args.exact)
    gain, cfg, kind, value, notes = _sim_setup(args, pf, red)
    t0 = time.perf_counter()
    res = simulate_closed_loop(red, gain, cfg, kind)
    elapsed = time.perf_counter() - t0
    sp = res.sample_paths
    header = (["path", "t"] + [f"x{i + 1}" for i in range(red.n)]
              + [f"u{i + 1}" for i in range(red.r)])
    rows = ([p, t] + list(sp["x"][p, k]) + list(sp["u"][p, k])
            for p in range(sp["x"].shape[0]) for k, t in enumerate(sp["t"]))
    csv_path = _write_csv(args, "paths.csv", header, rows)
    report = {"problem": pf.name, "horizon_kind": kind, "horizon": cfg.horizon, "dt": cfg.dt,
              "n_paths": cfg.n_paths, "seed": cfg.seed, "cost_mean": res.cost_mean,
              "cost_stderr": res.cost_stderr, "ci95": res.ci95, "ci99": res.ci(0.99),
              "value": value, "constraint_residual": res.constraint_residual,
              "reduction_source": source, "elapsed_s": elapsed, "notes": notes,
              "paths_csv": csv_path}
    _emit(report, args)
    return EXIT_OK


def _check(lines, name, ok, detail):
    lines.append((name, bool(ok), detail))
    return ok


def reproduce_ex62(args):
    pf = pr.load_bundled("ex62")
    red, _ = reduce_problem(pf)
    lines = []
    t0 = time.perf_counter()
    are = solve_are(red, **_are_options(args, pf))
    P0 = float(are.P0[0, 0])
    _check(lines, "P0 = 2cos(2pi/9) - 1", abs(P0 - P0_EX62) <= 1e-8,
           f"P0 = {P0:.12f}, closed form {P0_EX62:.12f}, gap {abs(P0 - P0_EX62):.2e}, "
           f"{time.perf_counter() - t0:.2f} s")
    cubic = P0**3 + 3 * P0**2 - 1
    _check(lines, "P0^3 + 3P0^2 - 1 = 0", abs(cubic) <= 1e-10, f"residual {cubic:.2e}")
    lam = are.Lambda0.ravel()
    gap = float(np.abs(lam - np.array(LAMBDA_EX62)).max())
    _check(lines, "Lambda0", gap <= 1e-6,
           f"({', '.join(f'{v:.6f}' for v in lam)}) vs {LAMBDA_EX62}, gap {gap:.1e}")
    F = feedback_infinite(are, red)
    a, sigma = scalar_closed_loop(red, F)
    drift = a - sigma**2 / 2
    _check(lines, "closed-loop exponents",
           abs(drift - EXPONENTS_EX62[0]) <= 5e-4 and abs(sigma - EXPONENTS_EX62[1]) <= 5e-4,
           f"x1(t) = exp({drift:.4f} t + {sigma:.4f} W(t)) vs exp({EXPONENTS_EX62[0]} t + "
           f"{EXPONENTS_EX62[1]} W(t))")
    rep = check_h3(red)
    _check(lines, "exact controllability", rep.h3_holds,
           f"P = {rep.P.ravel()}, P1 = {rep.P1.ravel()}, Bt1 = {rep.B1tilde.ravel()}")
    _, cfg, kind, value, notes = _sim_setup(args, pf, red)
    t0 = time.perf_counter()
    res = simulate_closed_loop(red, F, cfg, kind)
    _check(lines, "Monte Carlo cost", abs(res.cost_mean - value) <= 3 * res.cost_stderr,
           f"{res.cost_mean:.5f} +- {res.cost_stderr:.5f} vs {value:.5f} "
           f"({cfg.n_paths} paths, dt {cfg.dt:g}, horizon {cfg.horizon:g}, "
           f"{time.perf_counter() - t0:.1f} s)")
    return lines


def reproduce_ex61(args):
    lines = []
    for exact in (False, True):
        pf = pr.load_bundled("ex61", exact=exact)
        c = pf.certificate
        v = verify_k(pf.system, c.K, c.M1, c.N1, c.block_sizes, exact=exact)
        _check(lines, f"certificate ({'exact' if exact else 'float'})", v.well_posed,
               f"K = {la.to_float(c.K).ravel()}, 5*M1 = {(5 * la.to_float(c.M1)).round(12).tolist()}, "
               f"N1 = I, blocks {c.block_sizes}; failed {v.failed_conditions}")
    pf = pr.load_bundled("ex61")
    red, _ = reduce_problem(pf)
    asm = check_assumptions(pf.system, red.K, red.N1, red.B2, pf.weights)
    _check(lines, "(H1)", asm["H1"], f"tests {asm['tests']}")
    T = pf.weights.T
    sol = solve_finite(red, T, args.steps or pf.options.get("steps"))
    oracle = solve_finite_adaptive(red, T)
    gap = float(np.abs(sol.P0 - oracle.P0).max())
    _check(lines, "RK4 vs DOP853 P(0)", gap <= 1e-6,
           f"P(0) = {sol.P0.round(8).tolist()}, gap {gap:.1e}")
    F = feedback_finite(sol, red.K, red.N1)
    lines.append(("feedback", True,
                  "u = F(t) x with F(t) = K - Psi(t) (I 0) N1^-1; "
                  + "; ".join(f"F({t:g}) = {F[i].round(6).ravel().tolist()}"
                              for t, i in ((0, 0), (T / 2, len(F) // 2), (T, -1)))))
    lines.append(("value", True, f"J* = {sol.value:.10f}"))
    return lines


REPRODUCERS = {"ex61": reproduce_ex61, "ex62": reproduce_ex62}


def cmd_reproduce(args):
    if args.example not in REPRODUCERS:
        raise UsageError(f"unknown example {args.example!r}; choose from {sorted(REPRODUCERS)}")
    lines = REPRODUCERS[args.example](args)
    width = max(len(n) for n, _, _ in lines)
    for name, ok, detail in lines:
        print(f"[{'PASS' if ok else 'FAIL'}] {name:<{width}}  {detail}")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(jsonable(
            [{"check": n, "pass": ok, "detail": d} for n, ok, d in lines]), indent=2) + "\n")
    return EXIT_OK if all(ok for _, ok, _ in lines) else EXIT_CHECK_FAILED


def build_parser():
    p = _Parser(prog="sslq", description="Stochastic singular LQ toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol-rank", type=float, help="relative singular-value threshold")
    common.add_argument("--exact", action="store_true", help="rational arithmetic for decisions")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", help="directory for report.json and CSV sidecars")
    common.add_argument("--steps", type=int, help="RK4 steps for the finite horizon")
    common.add_argument("--t-step", type=float, help="horizon increment for the ARE")
    common.add_argument("--max-t", type=float, help="largest horizon tried for the ARE")
    common.add_argument("--tol-conv", type=float, help="ARE convergence tolerance")
    common.add_argument("--paths", type=int, help="Monte Carlo paths")
    common.add_argument("--dt", type=float, help="Euler-Maruyama step")
    common.add_argument("--horizon", type=float, help="truncation horizon for infinite runs")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn, target in (("analyze", cmd_analyze, "problem"),
                             ("solve-finite", cmd_solve_finite, "problem"),
                             ("solve-infinite", cmd_solve_infinite, "problem"),
                             ("check-controllability", cmd_check_controllability, "problem"),
                             ("simulate", cmd_simulate, "problem"),
                             ("reproduce", cmd_reproduce, "example")):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument(target)
        sp.set_defaults(func=fn)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    saved = la.config.tol_rank
    if args.tol_rank is not None:
        la.config.tol_rank = args.tol_rank
    try:
        return args.func(args)
    except (UsageError, ProblemFileError, DimensionError) as exc:
        print(f"sslq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SSLQError as exc:
        print(f"sslq: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    finally:
        la.config.tol_rank = saved


if __name__ == "__main__":
    sys.exit(main())

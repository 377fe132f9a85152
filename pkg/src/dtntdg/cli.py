"""Command line front-end.

::

    dtntdg check --config two_layer_lossless
    dtntdg solve --config case.toml --out run/ --set p=20 --set theta=-pi/4
    dtntdg sweep --config three_layer_eps2 --out sweep/
    dtntdg modes --config guided_eps2
    dtntdg efficiencies --config two_layer_lossy --set M=10

``--config`` takes a TOML file or the name of a bundled example.  Exit
status is 0 on success, 1 on a numerical failure and 2 on a configuration
error, whose message names the offending field.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .errors import (ConfigError, DegenerateIncidence, DomainError, GeometryError, InvalidInput,
                     NotApplicable, ResonanceDetected, SingularSystem)
from .config import bundled_cases, load_case, number, study_values

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2
NUMERIC_ERRORS = (SingularSystem, ResonanceDetected, InvalidInput, DomainError,
                  NotApplicable, DegenerateIncidence, np.linalg.LinAlgError, FloatingPointError)


def _out_dir(args):
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"--out: directory {out} is not writable ({exc.strerror})", "--out") from None
    return out


def _plots_enabled(args, case):
    return not args.no_plots and case.output.get("plots", True)


def _reference_field(case, config, mesh, M, p):
    """Oracle field if configured, else a refined discrete solution."""
    from .solver import solve_problem

    oracle = case.oracle()
    if oracle is not None:
        return oracle(config), "oracle"
    p_ref = int(case.reference.get("p_ref", p + 5))
    M_ref = case.reference.get("M_ref", M)
    return solve_problem(config, mesh, p_ref, M_ref, case.rotation), "refined"


def _write_efficiencies(path, eff):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("order", "reflected", "transmitted"))
        for n, r, t in zip(eff.orders, eff.reflected, eff.transmitted):
            writer.writerow((int(n), f"{r:.12e}", f"{t:.12e}"))
        writer.writerow(("total", f"{eff.total:.12e}", ""))


def _solve(case):
    from .solver import solve_problem

    mesh = case.mesh()
    M = case.truncation()
    sol = solve_problem(case.config, mesh, case.p, M, case.rotation)
    return sol, mesh, M


def cmd_solve(args, case):
    from .analysis import diffraction_efficiencies, error_norms, extended_domain_check
    from .solver import export_field

    out = _out_dir(args)
    sol, mesh, M = _solve(case)
    print(f"{case.name}: {mesh.n_elements} elements, p={case.p}, M={M}, N={sol.basis.N}")
    print(f"condition estimate {sol.condition_estimate:.3e}, backward error {sol.backward_error:.3e}")
    with open(out / "coefficients.txt", "w") as fh:
        fh.write(f"# N={sol.basis.N} p={case.p} M={M} elements={mesh.n_elements}\n")
        fh.write("index re im\n")
        for i, c in enumerate(sol.coeffs):
            fh.write(f"{i} {c.real:.17g} {c.imag:.17g}\n")

    nx = int(case.output.get("nx", 160))
    ny = int(case.output.get("ny", 160))
    pts, u = export_field(sol, out / "field.txt", nx, ny)

    report = {"name": case.name, "elements": mesh.n_elements, "p": case.p, "M": M, "N": sol.basis.N,
              "condition_estimate": sol.condition_estimate, "backward_error": sol.backward_error}
    if case.reference:
        ref, kind = _reference_field(case, case.config, mesh, M, case.p)
        err = error_norms(sol, ref, mesh, reference=kind)
        report["error"] = {"reference": kind, "l2_abs": err.l2_abs, "l2_rel": err.l2_rel,
                           "h1_abs": err.h1_abs, "h1_rel": err.h1_rel}
        print(f"relative error vs {kind}: L2 {err.l2_rel:.3e}, H1 {err.h1_rel:.3e}")
    eff = None
    try:
        eff = diffraction_efficiencies(sol)
    except DegenerateIncidence as exc:
        print(f"efficiencies skipped: {exc}")
    if eff is not None:
        _write_efficiencies(out / "efficiencies.csv", eff)
        report["efficiency_total"] = eff.total
        print(f"efficiency total {eff.total:.10f}")
    if case.extended:
        factor = int(case.extended.get("factor", 2))
        ext = extended_domain_check(case.config, mesh, factor, case.p, M)
        report["extended"] = {"factor": factor, "l2_rel": ext.l2_rel, "h1_rel": ext.h1_rel}
        print(f"extended domain x{factor}: L2 discrepancy {ext.l2_rel:.3e}, H1 discrepancy {ext.h1_rel:.3e}")
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")

    if _plots_enabled(args, case):
        from . import plotting

        plotting.plot_field(pts, u, nx, ny, out / "field.png", title=case.name, mesh=mesh)
        if eff is not None:
            plotting.plot_efficiencies(eff, out / "efficiencies.png")
    return EXIT_OK


def cmd_efficiencies(args, case):
    from .analysis import diffraction_efficiencies

    out = _out_dir(args)
    sol, _, _ = _solve(case)
    eff = diffraction_efficiencies(sol)
    _write_efficiencies(out / "efficiencies.csv", eff)
    print(f"{'order':>6} {'reflected':>14} {'transmitted':>14}")
    for n, r, t in zip(eff.orders, eff.reflected, eff.transmitted):
        if r or t:
            print(f"{int(n):>6} {r:14.10f} {t:14.10f}")
    print(f"total {eff.total:.10f}")
    if _plots_enabled(args, case):
        from . import plotting

        plotting.plot_efficiencies(eff, out / "efficiencies.png")
    return EXIT_OK


def build_study(case):
    """Translate the ``[study]`` and ``[reference]`` sections into a study."""
    from .analysis import ConvergenceStudy

    study = case.study
    sweep = study.get("sweep")
    if sweep not in ("p", "M", "h", "theta"):
        raise ConfigError(f"study.sweep: expected p, M, h or theta, got {sweep!r}", "study.sweep")
    values = study_values(study)
    if sweep in ("p", "M"):
        if any(v != int(v) or v < (1 if sweep == "p" else 0) for v in values):
            raise ConfigError(f"study.values: {sweep} sweep needs integer values", "study.values")
        values = tuple(int(v) for v in values)
    M = case.M
    if sweep != "M" and M is None:
        case.truncation()  # raises for lossy configurations
    ref = case.reference
    return ConvergenceStudy(
        config=case.config,
        mesh_factory=lambda cfg, h: case.mesh(cfg, h),
        sweep=sweep,
        values=values,
        p=case.p,
        M=M,
        h=case.h,
        oracle=case.oracle(),
        p_ref=int(ref["p_ref"]) if "p_ref" in ref else None,
        M_ref=int(ref["M_ref"]) if "M_ref" in ref else None,
    )


def cmd_sweep(args, case):
    from .analysis import CSV_HEADER, run_convergence

    study = build_study(case)
    out = _out_dir(args)
    if study.oracle is None and study.sweep in ("p", "M"):
        study.reference_file = str(out / "reference.npz")
    path = out / "convergence.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        fh.flush()

        def progress(row):
            writer.writerow(row.csv_fields())
            fh.flush()
            print(f"{study.sweep}={row.value:<22g} L2 {row.l2_rel:.3e}  H1 {row.h1_rel:.3e}  "
                  f"cond {row.cond:.2e}  {row.seconds:.2f}s", flush=True)

        table = run_convergence(study, progress)
    if study.sweep == "M":
        print(f"plateau at M = {table.plateau}")
    if _plots_enabled(args, case):
        from . import plotting

        plotting.plot_convergence(table, out / "convergence.png", title=case.name)
    return EXIT_OK


def cmd_modes(args, case):
    from .oracles import find_guided_modes

    spec = case.modes or case.reference
    if "eps_in" not in spec or "d" not in spec:
        raise ConfigError("modes: needs eps_in and d (in [modes] or a three_layer [reference])", "modes")
    eps_in = number(spec["eps_in"], "modes.eps_in")
    d = number(spec["d"], "modes.d")
    cfg = case.config
    modes = find_guided_modes(cfg.k, eps_in, cfg.eps_plus, d, cfg.L)
    out = _out_dir(args)
    header = ("branch", "k2", "k3", "k1", "C", "theta_critical", "n_critical")
    with open(out / "modes.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for m in modes:
            tc = "" if m.theta_critical is None else f"{m.theta_critical:.15f}"
            writer.writerow((m.branch, f"{m.k2:.15f}", f"{m.k3:.15f}", f"{m.k1:.15f}", f"{m.C:.15f}", tc,
                             "" if m.n_critical is None else m.n_critical))
    print(f"{len(modes)} guided mode(s) for eps_in={eps_in:g}, d={d:g}, k={cfg.k:g}")
    print(f"{'branch':>6} {'k2':>19} {'k3':>19} {'k1':>19} {'theta_critical':>19}")
    for m in modes:
        tc = "-" if m.theta_critical is None else f"{m.theta_critical:.15f}"
        print(f"{m.branch:>6} {m.k2:19.15f} {m.k3:19.15f} {m.k1:19.15f} {tc:>19}")
    return EXIT_OK


def cmd_check(args, case):
    from .geometry import check_non_trapping
    from .spectral import m_star, rayleigh_wood_distance

    cfg = case.config
    print(f"{case.name}: k={cfg.k:g}, theta={cfg.theta:.15g}, L={cfg.L:.15g}, H={cfg.H:g}")
    if cfg.eps_minus.imag == 0:
        ms = m_star(cfg)
        print(f"M* = {ms:.10f}")
        print(f"recommended M = {math.ceil(ms)} (smallest flux-preserving order)")
        print(f"auto M = {math.ceil(ms) + 1}")
        if case.M is not None:
            status = "ok" if case.M >= math.ceil(ms) else "below ceil(M*): flux not preserved"
            print(f"configured M = {case.M} ({status})")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            dp, dm, delta = rayleigh_wood_distance(cfg)
        print(f"delta+ = {dp:.10f}")
        print(f"delta- = {dm:.10f}")
        print(f"delta  = {delta:.10f}")
        for w in caught:
            print(f"warning: {w.message}")
    else:
        print("M* = n/a (complex eps_minus)")
        print(f"configured M = {case.M if case.M is not None else 'auto (invalid: set M explicitly)'}")
    report = check_non_trapping(cfg)
    print(f"non-trapping {'satisfied' if report.satisfied else 'not satisfied'}")
    for v in report.violations[:10]:
        print(f"  - {v}")
    if len(report.violations) > 10:
        print(f"  ... {len(report.violations) - 10} more")
    for w in report.warnings:
        print(f"  note: {w}")
    mesh = case.mesh()
    print(f"mesh: {mesh.n_elements} elements, max diameter {float(np.max(mesh.diameters())):.4f}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "modes": cmd_modes,
            "check": cmd_check, "efficiencies": cmd_efficiencies}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH",
                        help="TOML file or bundled example name (%s)" % ", ".join(bundled_cases()))
    common.add_argument("--out", default="dtntdg-out", metavar="DIR", help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="overrides",
                        help="override a config value, e.g. p=20, theta=-pi/4, mesh.h=0.75 (repeatable)")
    common.add_argument("--threads", type=int, default=None, metavar="N", help="BLAS/LAPACK threads")
    common.add_argument("--no-plots", action="store_true", help="skip PNG output")
    parser = argparse.ArgumentParser(prog="dtntdg", description="Trefftz DG solver for grating scattering")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve one configuration and write field files")
    sub.add_parser("sweep", parents=[common], help="run the [study] convergence sweep")
    sub.add_parser("modes", parents=[common], help="tabulate guided modes of the slab")
    sub.add_parser("check", parents=[common], help="truncation, anomaly and non-trapping diagnostics")
    sub.add_parser("efficiencies", parents=[common], help="diffraction efficiencies per order")
    return parser


def _thread_limit(n):
    if n is None:
        return nullcontext()
    if n < 1:
        raise ConfigError("--threads: must be positive", "--threads")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        case = load_case(args.config, args.overrides)
        with _thread_limit(args.threads):
            return COMMANDS[args.command](args, case)
    except (ConfigError, GeometryError) as exc:
        field = getattr(exc, "field", None)
        print(f"config error: {exc}", file=sys.stderr)
        if field:
            print(f"field: {field}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except Exception as exc:  # keep the exit-code contract for anything unforeseen
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Command line: validate / assemble / solve / verify / convergence.

Every subcommand takes a configuration file, prints one PASS/FAIL line per
check it runs, writes a machine-readable failure list to the output
directory, and exits 0 exactly when all selected checks pass.  Check
identifiers are stable strings documented in the README.

Environment overrides: WILLISWAVE_OUTPUT_DIR replaces the configured output
directory; WILLISWAVE_WORKERS > 1 runs convergence grids in parallel
(single-threaded runs are bitwise reproducible, parallel runs reproduce the
pass/fail outcome).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import assembly, io, verify
from .config import ConfigError, RunConfig, parse_config
from .grid import BOX, Grid
from .solver import DefinitenessError, SchemeConfig, WillisProblem
from .state import compatibility_sequence, initial_state
from .tensors import (
    MaterialSpec,
    derivative_crosscheck,
    validate_coupling,
    validate_elastic,
)


@dataclass
class CheckResult:
    check: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.check}: value={self.value:.6e} tol={self.tolerance:.6e} {self.detail}"


class Reporter:
    def __init__(self):
        self.results: list[CheckResult] = []

    def add(self, check, passed, value, tolerance, detail="") -> CheckResult:
        res = CheckResult(check, bool(passed), float(value), float(tolerance), detail)
        self.results.append(res)
        print(res.line())
        return res

    def ok(self) -> bool:
        return all(r.passed for r in self.results)

    def dump(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, "failures.json")
        with open(path, "w") as f:
            json.dump(
                [r.__dict__ for r in self.results if not r.passed],
                f,
                indent=2,
            )


def _load_config(path: str) -> RunConfig:
    with open(path) as f:
        return parse_config(f.read())


def _output_dir(cfg: RunConfig) -> str:
    return os.environ.get("WILLISWAVE_OUTPUT_DIR", cfg.output_directory)


def _sample_points(grid: Grid, per_axis: int = 3):
    coords = [grid.axis_coords(a) for a in range(3)]
    picks = [c[:: max(1, len(c) // per_axis)][:per_axis] for c in coords]
    return [(x, y, z) for x in picks[0] for y in picks[1] for z in picks[2]]


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def cmd_validate(cfg: RunConfig, rep: Reporter) -> None:
    spec = cfg.spec
    times = (0.0,) if spec.constant_in_time() else (0.0, 0.5 * cfg.t_final, cfg.t_final)
    worst_sym, worst_cc, min_eig_c = 0.0, 0.0, np.inf
    for t in times:
        for x in _sample_points(cfg.grid):
            sample = spec.sample(x[0], x[1], x[2], t)
            er = validate_elastic(sample.c, rtol=1e-12)
            worst_sym = max(
                er.minor_first_violation, er.minor_second_violation, er.major_violation, worst_sym
            )
            min_eig_c = min(min_eig_c, er.min_eigenvalue)
            cr = validate_coupling(sample.s)
            worst_cc = max(worst_cc, cr.first_pair_violation, cr.cyclic_violation)
    scale = 1e-12 * max(
        1.0, float(np.max(np.abs(spec.sample(0, 0, 0, 0.0).c)))
    )
    rep.add("stiffness-symmetry", worst_sym <= scale, worst_sym, scale)
    rep.add("stiffness-positive", min_eig_c > 0.0, min_eig_c, 0.0, "min Sym(3) eigenvalue")
    rep.add("coupling-total-symmetry", worst_cc <= scale, worst_cc, scale)

    fd = derivative_crosscheck(spec, np.array([0.1, -0.2, 0.3]), 0.1)
    rep.add("derivative-crosscheck", fd <= 1e-6, fd, 1e-6, "vs central differences")

    # mass-matrix definiteness over the grid plus the two eigensolve routes
    problem = WillisProblem(
        cfg.spec, cfg.grid, cfg.scheme, cfg.lift, source="zero", definiteness="warn"
    )
    coeff = problem.coefficients(0.0)
    lo = assembly.a0_min_eigenvalue(coeff.a0)
    lo_ind = assembly.a0_min_eigenvalue_svd(coeff.a0)
    agree = abs(lo - lo_ind) <= 1e-10 * max(1.0, abs(lo))
    rep.add("mass-matrix-positive", lo > 0.0, lo, 0.0, "min eigenvalue over grid")
    rep.add("mass-matrix-eigensolve-agreement", agree, abs(lo - lo_ind), 1e-10)

    sample0 = spec.sample(0.0, 0.0, 0.0, 0.0)
    aks = tuple(assembly.assemble_Ak(sample0.c, k) for k in (1, 2, 3))
    dims = []
    worst_res, worst_quad = 0.0, 0.0
    for nu in assembly.BOX_FACE_NORMALS:
        bp = assembly.assemble_boundary(sample0.c, aks, nu)
        nn = assembly.check_maximal_nonnegative(bp)
        dims.append(nn.dim_ker_cnu)
        worst_res = max(worst_res, nn.anu_kernel_residual, nn.m_kernel_residual)
        worst_quad = max(worst_quad, nn.quad_max_abs)
    rep.add("boundary-kernel-structure", worst_res <= 1e-10, worst_res, 1e-10)
    rep.add("boundary-flux-nonnegative", worst_quad <= 1e-10, worst_quad, 1e-10)
    rep.add(
        "boundary-kernel-dimension-constant",
        len(set(dims)) == 1,
        float(max(dims) - min(dims)),
        0.0,
        f"face kernel dims {dims}",
    )


# ---------------------------------------------------------------------------
# assemble
# ---------------------------------------------------------------------------


def cmd_assemble(cfg: RunConfig, rep: Reporter, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    x = tuple(0.5 * (lo + hi) for lo, hi in zip(cfg.grid.lo, cfg.grid.hi))
    ps = assembly.assemble_point_system(cfg.spec, np.asarray(x), 0.0, cfg.lift)
    io.write_matrix(os.path.join(out_dir, "A0.txt"), ps.a0)
    for k in (1, 2, 3):
        io.write_matrix(os.path.join(out_dir, f"A{k}.txt"), ps.ak[k - 1])
    io.write_matrix(os.path.join(out_dir, "B.txt"), ps.b)
    io.write_matrix(os.path.join(out_dir, "w.txt"), ps.w.reshape(1, -1))
    sample = cfg.spec.sample(x[0], x[1], x[2], 0.0)
    aks = ps.ak
    for idx, nu in enumerate(assembly.BOX_FACE_NORMALS):
        bp = assembly.assemble_boundary(sample.c, aks, nu)
        io.write_matrix(os.path.join(out_dir, f"Cnu_face{idx}.txt"), bp.cnu)
        io.write_matrix(os.path.join(out_dir, f"Anu_face{idx}.txt"), bp.anu)
        io.write_matrix(os.path.join(out_dir, f"M_face{idx}.txt"), bp.m)
    sym_gap = max(float(np.max(np.abs(m - m.T))) for m in (ps.a0, *ps.ak))
    rep.add("assembled-matrix-symmetry", sym_gap == 0.0, sym_gap, 0.0, f"written to {out_dir}")


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def cmd_solve(cfg: RunConfig, rep: Reporter, out_dir: str) -> None:
    problem = WillisProblem(
        cfg.spec,
        cfg.grid,
        cfg.scheme,
        cfg.lift,
        source="lift",
        definiteness=cfg.definiteness,
    )
    v0 = initial_state(cfg.initial, cfg.lift, cfg.spec, cfg.grid.meshgrid(), cfg.grid)
    try:
        traj = problem.run(
            v0,
            cfg.t_final,
            n_snapshots=cfg.snapshots,
            support_threshold=cfg.support_threshold,
        )
    except DefinitenessError as exc:
        rep.add("solver-definiteness-gate", False, 0.0, 0.0, str(exc))
        return
    io.write_trajectory(out_dir, traj, cfg.output_format)
    rep.add(
        "solve-completed",
        True,
        float(traj.times[-1]),
        cfg.t_final,
        f"{traj.steps} steps, {len(traj.states)} snapshots in {out_dir}",
    )
    if cfg.grid.mode == BOX and traj.boundary_residual is not None:
        rep.add(
            "boundary-corner-residual",
            True,
            float(traj.boundary_residual.max()),
            np.inf,
            "reported, not asserted",
        )


# ---------------------------------------------------------------------------
# verify suites
# ---------------------------------------------------------------------------


def _suite_kernels(cfg: RunConfig, rep: Reporter) -> None:
    sample = cfg.spec.sample(0.0, 0.0, 0.0, 0.0)
    aks = tuple(assembly.assemble_Ak(sample.c, k) for k in (1, 2, 3))
    dims, worst_res, worst_quad = [], 0.0, 0.0
    for nu in assembly.BOX_FACE_NORMALS:
        bp = assembly.assemble_boundary(sample.c, aks, nu)
        nn = assembly.check_maximal_nonnegative(bp)
        dims.append(nn.dim_ker_cnu)
        worst_res = max(worst_res, nn.anu_kernel_residual, nn.m_kernel_residual)
        worst_quad = max(worst_quad, nn.quad_max_abs)
    rep.add("kernels-membership", worst_res <= 1e-10, worst_res, 1e-10)
    rep.add("kernels-flux-zero", worst_quad <= 1e-10, worst_quad, 1e-10)
    rep.add("kernels-dim-constant", len(set(dims)) == 1, max(dims) - min(dims), 0.0, f"{dims}")


def _suite_reduction(cfg: RunConfig, rep: Reporter, out_dir: str) -> None:
    if not (cfg.spec.constant_in_space() and cfg.spec.constant_in_time()):
        rep.add("reduction-constant-coefficients", False, 1.0, 0.0,
                "reduction suite requires constant coefficients")
        return
    if cfg.initial_velocity is None:
        rep.add("reduction-velocity-data", False, 1.0, 0.0,
                "reduction suite requires [initial] v1..v3")
        return
    u0 = tuple(e.text for e in cfg.initial.u0)
    v0 = tuple(e.text for e in cfg.initial_velocity)
    diffs, spacings = [], []
    for n in cfg.verify_cells:
        grid = Grid(cells=(n, n, n), lo=cfg.grid.lo, hi=cfg.grid.hi, mode="periodic")
        r = verify.remark1_check(cfg.spec, u0, v0, grid, cfg.verify_t_final,
                                 order=cfg.scheme.order)
        diffs.append(r.final_diff)
        spacings.append(r.h)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "reduction.csv"), "w") as f:
        f.write("cells,h,displacement_diff\n")
        for n, h, d in zip(cfg.verify_cells, spacings, diffs):
            f.write(f"{n},{h:.17g},{d:.17g}\n")
    rep.add("reduction-cyclic-symmetry", r.max_cyclic_violation == 0.0,
            r.max_cyclic_violation, 0.0)
    orders = verify.observed_orders(spacings, diffs)
    rep.add(
        "reduction-difference-converges",
        bool(orders.size and orders.min() >= cfg.scheme.order - 0.5),
        float(orders.min()) if orders.size else 0.0,
        cfg.scheme.order - 0.5,
        f"diffs {['%.3e' % d for d in diffs]}",
    )


def _suite_invariance(cfg: RunConfig, rep: Reporter) -> None:
    n = min(cfg.verify_cells)
    grid = Grid(cells=(n, n, n), lo=cfg.grid.lo, hi=cfg.grid.hi, mode=BOX)
    problem = WillisProblem(cfg.spec, grid, cfg.scheme, source="zero")
    v0 = initial_state(cfg.initial, cfg.lift, cfg.spec, grid.meshgrid())
    traj = problem.run(v0, cfg.verify_t_final, n_snapshots=5)
    rng = np.random.default_rng(2024)
    gaps = [
        verify.galilean_check(traj, verify.GalileanTransform.random_e3(rng, 0.5), cfg.spec).gap
        for _ in range(10)
    ]
    rep.add("invariance-rigid-modes", max(gaps) <= 1e-10, max(gaps), 1e-10,
            "10 random transforms")


def _suite_energy(cfg: RunConfig, rep: Reporter) -> None:
    n = min(cfg.verify_cells)
    grid = Grid(cells=(n, n, n), lo=cfg.grid.lo, hi=cfg.grid.hi, mode=cfg.grid.mode)
    problem = WillisProblem(cfg.spec, grid, cfg.scheme, source="zero",
                            definiteness=cfg.definiteness)
    v0 = initial_state(cfg.initial, cfg.lift, cfg.spec, grid.meshgrid())
    traj = problem.run(v0, cfg.verify_t_final, n_snapshots=7)
    eb = verify.check_energy_bound(traj, problem)
    rep.add("energy-growth-bound", eb.satisfied, eb.max_ratio, 1.0,
            f"C={eb.c_bound:.3e}, fitted rate={eb.fitted_rate:.3e}")


def _suite_recovery(cfg: RunConfig, rep: Reporter) -> None:
    spec0 = MaterialSpec(cfg.spec.rho, cfg.spec.elastic, MaterialSpec._coupling_entries(None))
    n = min(cfg.verify_cells)
    grid = Grid(cells=(n, n, n), lo=cfg.grid.lo, hi=cfg.grid.hi, mode=cfg.grid.mode)
    problem = WillisProblem(spec0, grid, cfg.scheme, source="zero",
                            definiteness=cfg.definiteness)
    v0 = initial_state(cfg.initial, cfg.lift, spec0, grid.meshgrid())
    traj = problem.run(v0, cfg.verify_t_final, n_snapshots=4)
    err = verify.hooke_recovery_error(traj, spec0)
    rep.add("recovery-elastic-limit", err <= 1e-12, err, 1e-12, "coupling removed")


def _suite_compatibility(cfg: RunConfig, rep: Reporter) -> None:
    residual_tails = []
    for n in cfg.verify_cells:
        grid = Grid(cells=(n, n, n), lo=cfg.grid.lo, hi=cfg.grid.hi, mode=BOX)
        v0 = initial_state(cfg.initial, cfg.lift, cfg.spec, grid.meshgrid(), grid)
        seq = compatibility_sequence(v0, cfg.spec, grid, s=2, order=cfg.scheme.order)
        residual_tails.append(max(seq.residuals))
    decreasing = all(b <= a * 0.9 + 1e-14 for a, b in zip(residual_tails, residual_tails[1:]))
    rep.add(
        "compatibility-residuals-converge",
        decreasing or residual_tails[-1] <= 1e-10,
        residual_tails[-1],
        residual_tails[0],
        f"residual maxima {['%.3e' % r for r in residual_tails]}",
    )


def cmd_verify(cfg: RunConfig, rep: Reporter, out_dir: str) -> None:
    suites = cfg.verify_suite or ("kernels",)
    for name in suites:
        if name == "kernels":
            _suite_kernels(cfg, rep)
        elif name == "reduction":
            _suite_reduction(cfg, rep, out_dir)
        elif name == "invariance":
            _suite_invariance(cfg, rep)
        elif name == "energy":
            _suite_energy(cfg, rep)
        elif name == "recovery":
            _suite_recovery(cfg, rep)
        elif name == "compatibility":
            _suite_compatibility(cfg, rep)


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------


def _convergence_error(args) -> float:
    cfg_text, n, order, t_final = args
    cfg = parse_config(cfg_text)
    manufactured = verify.ManufacturedSolution(
        "0.1*sin(x1)*cos(x2)*sin(x3)*cos(t)",
        "0.05*cos(x1)*sin(x2)*sin(x3)*sin(t)",
        "0.08*sin(x1)*sin(x2)*cos(x3)*cos(2*t)",
    )
    grid = Grid(cells=(n, n, n), lo=(-np.pi,) * 3, hi=(np.pi,) * 3, mode="periodic")
    problem = WillisProblem(
        cfg.spec,
        grid,
        SchemeConfig(order=order, cfl=cfg.scheme.cfl),
        source=manufactured.source_for(cfg.spec, grid),
    )
    coords = grid.meshgrid()
    traj = problem.run(manufactured.state(coords, 0.0), t_final, n_snapshots=2)
    from .grid import l2_norm

    return l2_norm(traj.states[-1] - manufactured.state(coords, t_final), grid)


def cmd_convergence(cfg: RunConfig, rep: Reporter, cfg_text: str) -> None:
    cells = cfg.verify_cells
    order = cfg.scheme.order
    t_final = cfg.verify_t_final
    workers = int(os.environ.get("WILLISWAVE_WORKERS", "1"))
    args = [(cfg_text, n, order, t_final) for n in cells]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            errors = list(pool.map(_convergence_error, args))
    else:
        errors = [_convergence_error(a) for a in args]
    spacings = [2 * np.pi / n for n in cells]
    orders = verify.observed_orders(spacings, errors)
    rep.add(
        "convergence-observed-order",
        bool(orders.size and orders.min() >= order - 0.2),
        float(orders.min()) if orders.size else 0.0,
        order - 0.2,
        f"errors {['%.3e' % e for e in errors]}",
    )


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="williswave",
        description="Coupled elastodynamics via a first-order symmetric hyperbolic system",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("validate", "check material, mass matrix, and boundary structure"),
        ("assemble", "write system and boundary matrices at a sample point"),
        ("solve", "integrate the configured problem and write snapshots"),
        ("verify", "run the configured verification suites"),
        ("convergence", "manufactured-solution refinement study"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="path to the configuration file")
    ns = parser.parse_args(argv)

    try:
        with open(ns.config) as f:
            cfg_text = f.read()
        cfg = parse_config(cfg_text)
    except (OSError, ConfigError) as exc:
        print(f"FAIL configuration: {exc}", file=sys.stderr)
        return 2

    rep = Reporter()
    out_dir = _output_dir(cfg)
    try:
        if ns.command == "validate":
            cmd_validate(cfg, rep)
        elif ns.command == "assemble":
            cmd_assemble(cfg, rep, out_dir)
        elif ns.command == "solve":
            cmd_solve(cfg, rep, out_dir)
        elif ns.command == "verify":
            cmd_verify(cfg, rep, out_dir)
        elif ns.command == "convergence":
            cmd_convergence(cfg, rep, cfg_text)
    except Exception as exc:  # noqa: BLE001 - surface as a failed check
        rep.add(f"{ns.command}-aborted", False, 0.0, 0.0, f"{type(exc).__name__}: {exc}")
    rep.dump(out_dir)
    return 0 if rep.ok() else 1


if __name__ == "__main__":
    sys.exit(main())

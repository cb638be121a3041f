"""Run configuration: a plain-text section/key format with a fixed schema.

A run file is INI-style.  Unknown sections or keys are errors, every
expression must parse, and structural invariants (admissible moduli,
coupling symmetry, CFL range) are checked up front so a failed run cannot
start.  See the README for the full schema and a worked example.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .expressions import Expression, ExpressionError
from .grid import BOX, PERIODIC, Grid
from .solver import SchemeConfig
from .state import InitialData
from .tensors import (
    BoundaryLift,
    MaterialSpec,
    SYMMETRIC10_TRIPLES,
    validate_coupling,
)


class ConfigError(ValueError):
    """Aggregated configuration problems, one per line."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


_KNOWN_KEYS = {
    "material": {
        "rho", "elastic", "lambda", "mu",
        *(f"c{i}{j}" for i in range(1, 7) for j in range(i, 7)),
        "coupling",
        *(f"s{i}{j}{k}" for i in range(1, 4) for j in range(1, 4) for k in range(1, 4)),
    },
    "grid": {"cells", "extent", "mode"},
    "scheme": {"order", "cfl", "dissipation"},
    "initial": {"u1", "u2", "u3", "mu1", "mu2", "mu3", "v1", "v2", "v3"},
    "lift": {"u1", "u2", "u3"},
    "run": {"t_final", "snapshots", "support_threshold", "definiteness"},
    "output": {"directory", "format"},
    "verify": {"suite", "cells", "t_final"},
}

VERIFY_SUITES = ("reduction", "invariance", "energy", "recovery", "kernels", "compatibility")


@dataclass
class RunConfig:
    """Validated inputs for one run or verification suite."""

    spec: MaterialSpec
    grid: Grid
    scheme: SchemeConfig
    initial: InitialData
    lift: BoundaryLift
    t_final: float
    snapshots: int = 9
    support_threshold: float | None = None
    definiteness: str = "refuse"
    output_directory: str = "out"
    output_format: str = "text"
    verify_suite: tuple = ()
    verify_cells: tuple = (12, 16)
    verify_t_final: float = 0.2
    initial_velocity: tuple | None = None
    raw: dict = field(default_factory=dict)


def _parse_expression(problems, where: str, text: str) -> Expression | None:
    try:
        return Expression.parse(text)
    except ExpressionError as exc:
        problems.append(f"[{where}] {exc}")
        return None


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises ConfigError listing every problem found."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    problems: list[str] = []
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([str(exc).replace("\n", " ")]) from exc

    for section in cp.sections():
        if section not in _KNOWN_KEYS:
            problems.append(f"unknown section [{section}]")
            continue
        for key in cp[section]:
            if key not in _KNOWN_KEYS[section]:
                problems.append(f"unknown key {key!r} in section [{section}]")
    for required in ("material", "grid", "run"):
        if not cp.has_section(required):
            problems.append(f"missing required section [{required}]")
    if problems:
        raise ConfigError(problems)

    mat = cp["material"]
    rho = _parse_expression(problems, "material] rho", mat.get("rho", "1.0"))
    elastic_kind = mat.get("elastic", "isotropic").strip().lower()
    coupling_kind = mat.get("coupling", "none").strip().lower()

    coupling_params = None
    if coupling_kind == "symmetric10":
        coupling_params = {}
        for (a, b, c) in SYMMETRIC10_TRIPLES:
            key = f"s{a + 1}{b + 1}{c + 1}"
            if key in mat:
                e = _parse_expression(problems, f"material] {key}", mat[key])
                if e is not None:
                    coupling_params[(a, b, c)] = e
    elif coupling_kind == "entries27":
        entries = np.empty((3, 3, 3), dtype=object)
        zero = Expression.constant(0.0)
        entries[...] = zero
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    key = f"s{i + 1}{j + 1}{k + 1}"
                    if key in mat:
                        e = _parse_expression(problems, f"material] {key}", mat[key])
                        if e is not None:
                            entries[i, j, k] = e
        coupling_params = entries
    elif coupling_kind != "none":
        problems.append(
            f"[material] coupling must be 'none', 'symmetric10', or 'entries27', "
            f"got {coupling_kind!r}"
        )

    spec = None
    if rho is not None:
        if elastic_kind == "isotropic":
            lam = _parse_expression(problems, "material] lambda", mat.get("lambda", "0.0"))
            mu = _parse_expression(problems, "material] mu", mat.get("mu", ""))
            if "mu" not in mat:
                problems.append("[material] isotropic stiffness requires mu")
            elif lam is not None and mu is not None:
                if lam.is_constant and mu.is_constant:
                    mv, lv = mu.constant_value(), lam.constant_value()
                    if mv <= 0.0 or 3 * lv + 2 * mv <= 0.0:
                        problems.append(
                            f"[material] inadmissible isotropic moduli lambda={lv}, mu={mv}"
                        )
                spec = MaterialSpec.isotropic(lam, mu, rho, coupling_params)
        elif elastic_kind == "voigt":
            voigt = {}
            for i in range(1, 7):
                for j in range(i, 7):
                    key = f"c{i}{j}"
                    if key in mat:
                        e = _parse_expression(problems, f"material] {key}", mat[key])
                        if e is not None:
                            voigt[(i, j)] = e
            if not voigt:
                problems.append("[material] voigt stiffness requires at least one cIJ entry")
            else:
                spec = MaterialSpec.general(rho, voigt, coupling_params)
        else:
            problems.append(
                f"[material] elastic must be 'isotropic' or 'voigt', got {elastic_kind!r}"
            )

    if spec is not None and coupling_kind in ("symmetric10", "entries27"):
        sample = None
        try:
            sample = spec.sample(0.0, 0.0, 0.0, 0.0)
        except Exception as exc:  # reported, not raised: rho may be bad too
            problems.append(f"[material] sampling failed: {exc}")
        if sample is not None:
            rep = validate_coupling(sample.s, tol=1e-12 * max(1.0, float(np.max(np.abs(sample.s)))))
            if rep.symmetry_status != "totally-symmetric":
                problems.append(
                    "[material] coupling entries violate total symmetry "
                    "(the symmetric-hyperbolic form needs it): "
                    f"first-pair violation {rep.first_pair_violation:.3e}, "
                    f"cyclic violation {rep.cyclic_violation:.3e}"
                )

    grid = None
    if cp.has_section("grid"):
        g = cp["grid"]
        try:
            cells = tuple(int(v) for v in g.get("cells", "").split())
            if len(cells) == 1:
                cells = cells * 3
            if len(cells) != 3:
                raise ValueError(f"cells needs 1 or 3 integers, got {g.get('cells')!r}")
            extent = tuple(float(v) for v in g.get("extent", "-1 1").split())
            if len(extent) == 2:
                lo, hi = (extent[0],) * 3, (extent[1],) * 3
            elif len(extent) == 6:
                lo, hi = extent[0::2], extent[1::2]
            else:
                raise ValueError(f"extent needs 2 or 6 numbers, got {g.get('extent')!r}")
            mode = g.get("mode", PERIODIC).strip().lower()
            if mode not in (PERIODIC, BOX):
                raise ValueError(f"mode must be periodic or box, got {mode!r}")
            grid = Grid(cells=cells, lo=lo, hi=hi, mode=mode)
        except ValueError as exc:
            problems.append(f"[grid] {exc}")

    scheme = SchemeConfig()
    if cp.has_section("scheme"):
        s = cp["scheme"]
        try:
            scheme = SchemeConfig(
                order=s.getint("order", 2),
                cfl=s.getfloat("cfl", 0.4),
                dissipation=s.getfloat("dissipation", 0.0),
            )
        except ValueError as exc:
            problems.append(f"[scheme] {exc}")

    initial = InitialData.zero()
    initial_velocity = None
    if cp.has_section("initial"):
        ini = cp["initial"]
        has_mu = any(f"mu{i}" in ini for i in (1, 2, 3))
        has_vel = any(f"v{i}" in ini for i in (1, 2, 3))
        u0 = [
            _parse_expression(problems, f"initial] u{i}", ini.get(f"u{i}", "0"))
            for i in (1, 2, 3)
        ]
        if has_mu and has_vel:
            problems.append("[initial] give either mu1..mu3 or v1..v3, not both")
        elif not problems and spec is not None:
            if has_vel:
                vel = tuple(
                    _parse_expression(problems, f"initial] v{i}", ini.get(f"v{i}", "0"))
                    for i in (1, 2, 3)
                )
                if not problems:
                    initial = InitialData.from_velocity(tuple(u0), vel, spec)
                    initial_velocity = vel
            else:
                mu0 = tuple(
                    _parse_expression(problems, f"initial] mu{i}", ini.get(f"mu{i}", "0"))
                    for i in (1, 2, 3)
                )
                if not problems:
                    initial = InitialData(u0=tuple(u0), mu0=mu0)

    lift = BoundaryLift.zero()
    if cp.has_section("lift"):
        lf = cp["lift"]
        comps = [
            _parse_expression(problems, f"lift] u{i}", lf.get(f"u{i}", "0")) for i in (1, 2, 3)
        ]
        if all(c is not None for c in comps):
            lift = BoundaryLift(*comps)

    t_final, snapshots, support_threshold, definiteness = 0.0, 9, None, "refuse"
    if cp.has_section("run"):
        r = cp["run"]
        try:
            t_final = r.getfloat("t_final", 0.0)
            if t_final <= 0.0:
                problems.append("[run] t_final must be positive")
            snapshots = r.getint("snapshots", 9)
            if "support_threshold" in r:
                support_threshold = r.getfloat("support_threshold")
            definiteness = r.get("definiteness", "refuse").strip().lower()
            if definiteness not in ("refuse", "warn"):
                problems.append(
                    f"[run] definiteness must be 'refuse' or 'warn', got {definiteness!r}"
                )
        except ValueError as exc:
            problems.append(f"[run] {exc}")

    out_dir, out_fmt = "out", "text"
    if cp.has_section("output"):
        o = cp["output"]
        out_dir = o.get("directory", "out")
        out_fmt = o.get("format", "text").strip().lower()
        if out_fmt not in ("text", "binary"):
            problems.append(f"[output] format must be 'text' or 'binary', got {out_fmt!r}")

    suites: tuple = ()
    verify_cells: tuple = (12, 16)
    verify_t_final = 0.2
    if cp.has_section("verify"):
        vs = cp["verify"]
        names = tuple(w.strip() for w in vs.get("suite", "").split() if w.strip())
        for name in names:
            if name not in VERIFY_SUITES:
                problems.append(
                    f"[verify] unknown suite {name!r}; known: {', '.join(VERIFY_SUITES)}"
                )
        suites = names
        try:
            if "cells" in vs:
                verify_cells = tuple(int(v) for v in vs["cells"].split())
            verify_t_final = vs.getfloat("t_final", 0.2)
        except ValueError as exc:
            problems.append(f"[verify] {exc}")

    if problems or spec is None or grid is None:
        if not problems:
            problems.append("incomplete configuration")
        raise ConfigError(problems)

    return RunConfig(
        spec=spec,
        grid=grid,
        scheme=scheme,
        initial=initial,
        lift=lift,
        t_final=t_final,
        snapshots=snapshots,
        support_threshold=support_threshold,
        definiteness=definiteness,
        output_directory=out_dir,
        output_format=out_fmt,
        verify_suite=suites,
        verify_cells=verify_cells,
        verify_t_final=verify_t_final,
        initial_velocity=initial_velocity,
        raw={s: dict(cp[s]) for s in cp.sections()},
    )

"""Method-of-lines integration of the first-order system L v = w.

The semi-discrete operator is dv/dt = A0^{-1} (w - sum_k A_k D_k v - B v)
with central differences D_k, advanced by the classic four-stage
Runge-Kutta scheme under a CFL-limited step.  Periodic grids emulate the
whole-space problem (valid while the support never wraps, which the support
trace makes checkable); box grids enforce the Dirichlet-type boundary
condition after every stage by projecting the gradient block onto the
kernel of the boundary constraint and zeroing the displacement block.

Stepping is data-parallel over nodes against a read-only coefficient cache;
nothing mutates the state field except the integrator itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import assembly
from .grid import BOX, Grid, derivative, dissipation, l2_norm, radius_field
from .tensors import BoundaryLift, MaterialSpec


class DefinitenessError(RuntimeError):
    """The mass matrix failed its positivity check at some sampled point."""


class InstabilityError(RuntimeError):
    """The integration produced non-finite values."""


@dataclass(frozen=True)
class SchemeConfig:
    """Spatial order, CFL factor, and artificial-dissipation strength."""

    order: int = 2
    cfl: float = 0.4
    dissipation: float = 0.0
    integrator: str = "rk4"

    def __post_init__(self):
        if self.order not in (2, 4):
            raise ValueError(f"spatial order must be 2 or 4, got {self.order}")
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError(f"CFL factor must be in (0, 1], got {self.cfl}")
        if self.dissipation < 0.0:
            raise ValueError(f"dissipation must be nonnegative, got {self.dissipation}")
        if self.integrator != "rk4":
            raise ValueError(f"only the rk4 integrator is implemented, got {self.integrator!r}")


def cfl_dt(grid: Grid, max_speed: float, cfl_factor: float = 0.4) -> float:
    """Time step cfl * h_min / (3 * max_speed)."""
    if max_speed <= 0.0:
        raise ValueError(f"maximum speed must be positive, got {max_speed}")
    return cfl_factor * grid.min_spacing / (3.0 * max_speed)


def characteristic_speeds(a0: np.ndarray, anu: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    """Real spectrum of the pencil (Anu, A0), ascending.

    For positive definite A0 this reduces via Cholesky.  A positive
    semidefinite A0 is accepted when Anu vanishes on its kernel (the pencil
    restricts to the positive subspace); an indefinite A0 raises.
    """
    a0 = np.asarray(a0, dtype=float)
    anu = np.asarray(anu, dtype=float)
    try:
        chol = np.linalg.cholesky(a0)
    except np.linalg.LinAlgError:
        chol = None
    if chol is not None:
        w = np.linalg.solve(chol, anu)
        w = np.linalg.solve(chol, w.T).T
        return np.linalg.eigvalsh(w)
    eigs, vecs = np.linalg.eigh(a0)
    scale = float(np.max(np.abs(eigs)))
    if np.any(eigs < -rel_tol * scale):
        raise DefinitenessError(
            f"mass matrix is indefinite (min eigenvalue {eigs.min():.3e})"
        )
    keep = eigs > rel_tol * scale
    null_vecs = vecs[:, ~keep]
    if null_vecs.size and np.max(np.abs(anu @ null_vecs)) > rel_tol * (np.max(np.abs(anu)) + 1.0):
        raise DefinitenessError(
            "mass matrix is singular and the flux matrix does not vanish on its kernel"
        )
    v = vecs[:, keep]
    reduced = (v.T @ anu @ v) / np.sqrt(np.outer(eigs[keep], eigs[keep]))
    return np.linalg.eigvalsh(reduced)


def max_characteristic_speed(
    spec: MaterialSpec, grid: Grid, times=(0.0,), stride: int | None = None
) -> float:
    """Largest |pencil eigenvalue| over the axis normals on a sample lattice."""
    if spec.constant_in_space():
        points = [np.zeros(3)]
    else:
        coords = [grid.axis_coords(a) for a in range(3)]
        if stride is None:
            stride = max(1, min(grid.cells) // 4)
        points = [
            np.array([c1, c2, c3])
            for c1 in coords[0][::stride]
            for c2 in coords[1][::stride]
            for c3 in coords[2][::stride]
        ]
    worst = 0.0
    for t in times:
        for x in points:
            sample = spec.sample(x[0], x[1], x[2], float(t))
            a0 = assembly.assemble_A0(sample.c, sample.rho)
            for k in (1, 2, 3):
                ak = assembly.assemble_Ak(sample.c, k)
                speeds = characteristic_speeds(a0, ak)
                worst = max(worst, float(np.max(np.abs(speeds))))
    return worst


def support_radius(vfield: np.ndarray, grid: Grid, threshold: float) -> float:
    """Radius of the smallest origin-centered ball holding all active nodes."""
    norms = np.linalg.norm(np.asarray(vfield), axis=-1)
    mask = norms > threshold
    if not np.any(mask):
        return 0.0
    return float(radius_field(grid)[mask].max())


def energy(vfield: np.ndarray, a0: np.ndarray, grid: Grid) -> float:
    """Quadratic energy sum_nodes <A0 v, v> * cell volume."""
    av = (a0 @ vfield[..., None])[..., 0]
    return float(np.sum(av * vfield) * grid.cell_volume)


@dataclass
class EnergyTrace:
    """Energy samples with a fitted exponential growth constant."""

    t: np.ndarray
    e: np.ndarray

    def fitted_rate(self) -> float:
        """Least-squares slope of log E(t); 0 when the energy is too small."""
        mask = self.e > 0.0
        if mask.sum() < 2:
            return 0.0
        return float(np.polyfit(self.t[mask], np.log(self.e[mask]), 1)[0])


@dataclass
class Trajectory:
    """Snapshots with energy and support-radius traces at the same times."""

    times: np.ndarray
    states: list
    energy: np.ndarray
    support: np.ndarray
    dt: float
    steps: int
    grid: Grid
    boundary_residual: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def energy_trace(self) -> EnergyTrace:
        return EnergyTrace(t=self.times, e=self.energy)


@dataclass
class _CoefficientSet:
    t: float
    a0: np.ndarray
    a0_inv: np.ndarray
    ak: tuple
    b: np.ndarray
    w: np.ndarray | None


class WillisProblem:
    """A material spec bound to a grid and scheme, ready to integrate.

    source selects the right-hand side: "lift" assembles the forcing from
    the boundary lift, "zero" forces w = 0, and a callable t -> field
    supplies a manufactured source.
    """

    def __init__(
        self,
        spec: MaterialSpec,
        grid: Grid,
        scheme: SchemeConfig | None = None,
        lift: BoundaryLift | None = None,
        source="lift",
        definiteness: str = "refuse",
    ):
        self.spec = spec
        self.grid = grid
        self.scheme = scheme if scheme is not None else SchemeConfig()
        self.lift = lift if lift is not None else BoundaryLift.zero()
        if definiteness not in ("refuse", "warn"):
            raise ValueError(f"definiteness must be 'refuse' or 'warn', got {definiteness!r}")
        self.definiteness = definiteness
        if source not in ("lift", "zero") and not callable(source):
            raise ValueError("source must be 'lift', 'zero', or a callable t -> field")
        self.source = source
        self._coords = grid.meshgrid()
        self._static = spec.constant_in_time()
        self._static_source = self._static and (
            source == "zero" or (source == "lift" and self.lift.constant_in_time())
        )
        self._coeff_cache: dict[float, _CoefficientSet] = {}
        self._face_cache: dict[float, list] = {}
        self._max_speed: float | None = None

    # -- coefficients ------------------------------------------------------

    def _sample_args(self, t: float):
        if self.spec.constant_in_space():
            return (0.0, 0.0, 0.0, t)
        x1, x2, x3 = self._coords
        return (x1, x2, x3, t)

    def coefficients(self, t: float) -> _CoefficientSet:
        key = 0.0 if self._static else round(float(t), 14)
        cached = self._coeff_cache.get(key)
        if cached is not None:
            if not self._static_source and self.source != "zero":
                cached = _CoefficientSet(
                    t=t, a0=cached.a0, a0_inv=cached.a0_inv, ak=cached.ak, b=cached.b,
                    w=self._source_field(t),
                )
            return cached
        sample = self.spec.sample(*self._sample_args(t))
        a0 = assembly.assemble_A0(sample.c, sample.rho)
        coeff = _CoefficientSet(
            t=t,
            a0=a0,
            a0_inv=np.linalg.inv(a0),
            ak=tuple(assembly.assemble_Ak(sample.c, k) for k in (1, 2, 3)),
            b=assembly.assemble_B(sample),
            w=self._source_field(t),
        )
        if len(self._coeff_cache) > 16:
            self._coeff_cache.clear()
        self._coeff_cache[key] = coeff
        return coeff

    def _source_field(self, t: float) -> np.ndarray | None:
        if self.source == "zero":
            return None
        if callable(self.source):
            return self.source(t)
        if self.lift.is_zero():
            return None
        x1, x2, x3 = self._coords
        sample = self.spec.sample(x1, x2, x3, t)
        ls = self.lift.sample(x1, x2, x3, t)
        e = assembly.boundary_source_e(ls, sample)
        return assembly.assemble_w(sample, e)

    # -- diagnostics ---------------------------------------------------------

    def min_mass_eigenvalue(self, t: float = 0.0) -> float:
        return assembly.a0_min_eigenvalue(self.coefficients(t).a0)

    def check_definiteness(self, times=(0.0,)) -> float:
        """Gate: smallest A0 eigenvalue over the grid; refuse or warn if <= 0."""
        lo = min(self.min_mass_eigenvalue(t) for t in times)
        if lo <= 0.0:
            msg = f"mass matrix not positive definite on the grid (min eigenvalue {lo:.6e})"
            if self.definiteness == "refuse":
                raise DefinitenessError(msg)
            import warnings

            warnings.warn(msg, stacklevel=2)
        return lo

    def max_speed(self, times=(0.0,)) -> float:
        if self._max_speed is None:
            self._max_speed = max_characteristic_speed(self.spec, self.grid, times)
        return self._max_speed

    # -- boundary enforcement ------------------------------------------------

    def _face_projectors(self, t: float) -> list:
        key = 0.0 if self._static else round(float(t), 14)
        faces = self._face_cache.get(key)
        if faces is not None:
            return faces
        faces = []
        x1, x2, x3 = self._coords
        for axis, side, slicer, normal in self.grid.boundary_faces():
            sample = self.spec.sample(x1[slicer], x2[slicer], x3[slicer], t)
            q9 = assembly.gradient_matrix9(sample.c)
            cnu = np.repeat(normal, 3)[:, None] * q9
            _, sing, vt = np.linalg.svd(cnu)
            smax = sing[..., 0:1]
            null_mask = np.where(smax > 0, sing <= assembly.KERNEL_RTOL * smax, True)
            proj = np.einsum("...ki,...kj,...k->...ij", vt, vt, null_mask.astype(float))
            faces.append((slicer, proj, cnu))
        if len(self._face_cache) > 16:
            self._face_cache.clear()
        self._face_cache[key] = faces
        return faces

    def enforce_boundary(self, v: np.ndarray, t: float) -> np.ndarray:
        """Project the gradient block onto ker(Cnu) and zero the displacement
        block on every face; edges and corners see each face in turn."""
        if self.grid.mode != BOX:
            return v
        for slicer, proj, _ in self._face_projectors(t):
            v[slicer + (slice(0, 9),)] = (proj @ v[slicer][..., :9, None])[..., 0]
            v[slicer + (slice(12, 15),)] = 0.0
        return v

    def boundary_condition_residual(self, v: np.ndarray, t: float) -> float:
        """Max over face nodes of the boundary-condition violation |M v|.

        After enforcement this is dominated by edge and corner nodes, where
        two or three face conditions meet; it is reported, not asserted.
        """
        if self.grid.mode != BOX:
            return 0.0
        worst = 0.0
        for slicer, _, cnu in self._face_projectors(t):
            vb = v[slicer]
            grad_part = (cnu @ vb[..., :9, None])[..., 0]
            worst = max(worst, float(np.max(np.abs(grad_part))))
            worst = max(worst, float(np.max(np.abs(vb[..., 12:15]))))
        return worst

    # -- integration -----------------------------------------------------------

    def apply_L(self, v: np.ndarray, t: float) -> np.ndarray:
        """dv/dt = A0^{-1} (w - sum_k A_k D_k v - B v) with discrete D_k."""
        coeff = self.coefficients(t)
        rhs = -(coeff.b @ v[..., None])[..., 0]
        for k in range(3):
            dkv = derivative(v, self.grid, k, self.scheme.order)
            rhs -= (coeff.ak[k] @ dkv[..., None])[..., 0]
        if coeff.w is not None:
            rhs = rhs + coeff.w
        out = (coeff.a0_inv @ rhs[..., None])[..., 0]
        return out

    def _rhs(self, v: np.ndarray, t: float) -> np.ndarray:
        out = self.apply_L(v, t)
        if self.scheme.dissipation > 0.0:
            c_ref = self.max_speed()
            for k in range(3):
                h = self.grid.spacing[k]
                out += (
                    self.scheme.dissipation
                    * (c_ref / h)
                    * dissipation(v, self.grid, k, self.scheme.order)
                )
        return out

    def step(self, v: np.ndarray, t: float, dt: float) -> np.ndarray:
        """One classic RK4 step; box mode re-imposes the boundary condition
        on every stage state and on the result."""
        box = self.grid.mode == BOX

        def bc(u, tau):
            return self.enforce_boundary(u, tau) if box else u

        v0 = bc(v.copy(), t)
        k1 = self._rhs(v0, t)
        k2 = self._rhs(bc(v0 + 0.5 * dt * k1, t + 0.5 * dt), t + 0.5 * dt)
        k3 = self._rhs(bc(v0 + 0.5 * dt * k2, t + 0.5 * dt), t + 0.5 * dt)
        k4 = self._rhs(bc(v0 + dt * k3, t + dt), t + dt)
        out = bc(v0 + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4), t + dt)
        if not np.all(np.isfinite(out)):
            raise InstabilityError(f"non-finite state after step to t={t + dt:.6g}")
        return out

    def run(
        self,
        v0: np.ndarray,
        t_final: float,
        n_snapshots: int = 9,
        dt: float | None = None,
        support_threshold: float | None = None,
        check: bool = True,
    ) -> Trajectory:
        """Integrate from t=0 to t_final recording snapshots and traces."""
        if check:
            times = (0.0,) if self._static else (0.0, 0.5 * t_final, t_final)
            self.check_definiteness(times)
        if dt is None:
            dt = cfl_dt(self.grid, self.max_speed(), self.scheme.cfl)
        n_steps = max(1, int(math.ceil(t_final / dt - 1e-12)))
        dt = t_final / n_steps
        snap_at = sorted(
            set(int(round(s)) for s in np.linspace(0, n_steps, max(2, n_snapshots)))
        )
        if support_threshold is None:
            scale = float(np.max(np.abs(v0)))
            support_threshold = 1e-8 * (scale if scale > 0 else 1.0)

        box = self.grid.mode == BOX
        v = v0.copy()
        if box:
            v = self.enforce_boundary(v, 0.0)
        times, states, e_trace, s_trace, b_trace = [], [], [], [], []

        def record(step_index, state):
            t = step_index * dt
            times.append(t)
            states.append(state.copy())
            e_trace.append(energy(state, self.coefficients(t).a0, self.grid))
            s_trace.append(support_radius(state, self.grid, support_threshold))
            if box:
                b_trace.append(self.boundary_condition_residual(state, t))

        record(0, v)
        for n in range(n_steps):
            v = self.step(v, n * dt, dt)
            if (n + 1) in snap_at:
                record(n + 1, v)
        return Trajectory(
            times=np.asarray(times),
            states=states,
            energy=np.asarray(e_trace),
            support=np.asarray(s_trace),
            dt=dt,
            steps=n_steps,
            grid=self.grid,
            boundary_residual=np.asarray(b_trace) if box else None,
            meta={"support_threshold": support_threshold},
        )


def wrap_check(trajectory: Trajectory, margin: float = 0.0) -> bool:
    """Whole-space surrogate validity: the support never reached the edge."""
    grid = trajectory.grid
    half_extent = min(
        min(abs(lo), abs(hi)) for lo, hi in zip(grid.lo, grid.hi)
    )
    return bool(np.all(trajectory.support <= half_extent - margin))

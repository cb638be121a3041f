"""Independent verification oracles.

Everything here deliberately avoids the solver's internal code paths:
residuals of the physical balance laws are formed from recovered fields
with their own finite differences, the reduction check integrates the
(displacement, momentum) system directly, plane-wave speeds come from the
acoustic tensor, and convergence studies drive the solver as a black box.
Oracles are pure over immutable trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import assembly
from .expressions import Expression, as_expression
from .grid import Grid, derivative, l2_norm
from .solver import SchemeConfig, Trajectory, WillisProblem, cfl_dt
from .state import pack_state, recover_fields, unpack_state
from .tensors import BoundaryLift, MaterialSpec, strain


# ---------------------------------------------------------------------------
# Manufactured solutions
# ---------------------------------------------------------------------------


class ManufacturedSolution:
    """A closed-form homogeneous displacement driving an exact source.

    The packed state, its exact time derivative, and its exact spatial
    derivatives come from symbolic differentiation, so the source
    w = A0 dt v + sum A_k d_k v + B v makes the manufactured field an exact
    solution of the semi-continuous system.
    """

    def __init__(self, u1, u2, u3):
        self.u = tuple(as_expression(e) for e in (u1, u2, u3))

    def _state_exprs(self):
        grad = [[self.u[a].diff(f"x{j + 1}") for a in range(3)] for j in range(3)]
        vel = [self.u[a].diff("t") for a in range(3)]
        return grad, vel, list(self.u)

    def _eval_triplet(self, grad_e, vel_e, disp_e, coords, t):
        x1, x2, x3 = coords
        shape = np.broadcast_shapes(np.shape(x1), np.shape(x2), np.shape(x3), np.shape(t))

        def ev(e):
            return np.broadcast_to(np.asarray(e(x1, x2, x3, t), dtype=float), shape)

        grad = np.stack(
            [np.stack([ev(grad_e[j][a]) for a in range(3)], axis=-1) for j in range(3)],
            axis=-2,
        )
        vel = np.stack([ev(e) for e in vel_e], axis=-1)
        disp = np.stack([ev(e) for e in disp_e], axis=-1)
        return pack_state(grad, vel, disp)

    def state(self, coords, t) -> np.ndarray:
        return self._eval_triplet(*self._state_exprs(), coords, t)

    def dt_state(self, coords, t) -> np.ndarray:
        grad, vel, disp = self._state_exprs()
        grad = [[e.diff("t") for e in row] for row in grad]
        vel = [e.diff("t") for e in vel]
        disp = [e.diff("t") for e in disp]
        return self._eval_triplet(grad, vel, disp, coords, t)

    def dk_state(self, coords, t, k: int) -> np.ndarray:
        xk = f"x{k + 1}"
        grad, vel, disp = self._state_exprs()
        grad = [[e.diff(xk) for e in row] for row in grad]
        vel = [e.diff(xk) for e in vel]
        disp = [e.diff(xk) for e in disp]
        return self._eval_triplet(grad, vel, disp, coords, t)

    def displacement(self, coords, t) -> np.ndarray:
        x1, x2, x3 = coords
        shape = np.broadcast_shapes(np.shape(x1), np.shape(x2), np.shape(x3), np.shape(t))
        return np.stack(
            [
                np.broadcast_to(np.asarray(e(x1, x2, x3, t), dtype=float), shape)
                for e in self.u
            ],
            axis=-1,
        )

    def source_for(self, spec: MaterialSpec, grid: Grid):
        """Callable t -> w field making this displacement an exact solution.

        For coefficients constant in space the matrices collapse to single
        15x15 arrays; only the manufactured fields are evaluated per call.
        """
        coords = grid.meshgrid()
        const_space = spec.constant_in_space()
        sample_coords = (0.0, 0.0, 0.0) if const_space else coords

        def w(t: float) -> np.ndarray:
            sample = spec.sample(*sample_coords, t)
            a0 = assembly.assemble_A0(sample.c, sample.rho)
            aks = tuple(assembly.assemble_Ak(sample.c, k) for k in (1, 2, 3))
            b = assembly.assemble_B(sample)
            out = (a0 @ self.dt_state(coords, t)[..., None])[..., 0]
            for k in range(3):
                out += (aks[k] @ self.dk_state(coords, t, k)[..., None])[..., 0]
            out += (b @ self.state(coords, t)[..., None])[..., 0]
            return out

        return w


def sine_bump(axis: int, lo: float, hi: float, power: int = 4) -> Expression:
    """sin(pi (x-lo)/(hi-lo))^power, vanishing to order `power` at both ends."""
    length = hi - lo
    return Expression.parse(f"sin(pi*(x{axis + 1} - ({lo}))/({length}))^{power}")


# ---------------------------------------------------------------------------
# Residual reports
# ---------------------------------------------------------------------------


@dataclass
class ResidualReport:
    """Max and volume-weighted L2 residuals per equation over interior times."""

    max_residuals: dict
    l2_residuals: dict
    h: float
    times: np.ndarray

    def functional(self, name: str = "momentum_balance") -> float:
        return self.l2_residuals[name]


@dataclass
class PhysicalFields:
    """Snapshots of the physical fields on a common grid."""

    times: np.ndarray
    u: np.ndarray  # (nt, *grid, 3)
    dt_u: np.ndarray
    sigma: np.ndarray  # (nt, *grid, 3, 3)
    mu: np.ndarray


def fields_from_displacement(
    u: np.ndarray, dt_u: np.ndarray, times, spec: MaterialSpec, grid: Grid, order: int = 2
) -> PhysicalFields:
    """Constitutive closure with the oracle's own discrete strain.

    sigma = C.eps + S.dt_u and mu = rho dt_u + S^T.eps with
    eps = sym grad_h u, so the two constitutive residuals vanish by
    construction and the momentum balance is the observable.
    """
    times = np.asarray(times, dtype=float)
    const_space = spec.constant_in_space()
    coords = grid.meshgrid()
    sigma = np.empty(u.shape + (3,))
    mu = np.empty_like(u)
    for n, t in enumerate(times):
        sample = spec.sample(
            *((0.0, 0.0, 0.0) if const_space else coords), float(t)
        )
        grad = np.stack(
            [derivative(u[n], grid, axis, order) for axis in range(3)], axis=-2
        )
        eps = strain(grad)
        sigma[n] = np.einsum("...ijkl,...kl->...ij", sample.c, eps)
        sigma[n] += np.einsum("...ijk,...k->...ij", sample.s, dt_u[n])
        mu[n] = sample.rho[..., None] * dt_u[n] if np.ndim(sample.rho) else sample.rho * dt_u[n]
        mu[n] += np.einsum("...kli,...kl->...i", sample.s, eps)
    return PhysicalFields(times=times, u=u, dt_u=dt_u, sigma=sigma, mu=mu)


def fields_from_trajectory(
    traj: Trajectory, spec: MaterialSpec, lift: BoundaryLift | None = None
) -> PhysicalFields:
    """Recover (u, dt_u, sigma, mu) snapshots from a packed-state trajectory."""
    grid = traj.grid
    coords = grid.meshgrid()
    lift = lift if lift is not None else BoundaryLift.zero()
    u, dt_u, sigma, mu = [], [], [], []
    for t, v in zip(traj.times, traj.states):
        sample = spec.sample(*coords, float(t))
        ls = lift.sample(*coords, float(t)) if not lift.is_zero() else None
        rec = recover_fields(v, sample, ls)
        u.append(rec.u)
        dt_u.append(rec.dt_u)
        sigma.append(rec.sigma)
        mu.append(rec.mu)
    return PhysicalFields(
        times=np.asarray(traj.times),
        u=np.stack(u),
        dt_u=np.stack(dt_u),
        sigma=np.stack(sigma),
        mu=np.stack(mu),
    )


def _interior_uniform_triples(times: np.ndarray):
    """Indices k with equally spaced neighbours, for centered time stencils."""
    out = []
    for k in range(1, len(times) - 1):
        hm = times[k] - times[k - 1]
        hp = times[k + 1] - times[k]
        if abs(hp - hm) <= 1e-10 * max(hp, hm):
            out.append(k)
    return out


def residual_willis(
    fields: PhysicalFields, spec: MaterialSpec, grid: Grid, order: int = 2
) -> ResidualReport:
    """Discrete residuals of the three balance/constitutive laws.

    momentum_balance: dt mu_i - d_j sigma_ij
    stress_law:       sigma_ij - C_ijkl eps_kl - S_ijk dt_u_k
    velocity_law:     rho dt_u_i - mu_i + S_kli eps_kl

    Time derivatives use centered differences of the stored snapshots, so
    the report covers the interior snapshot times only.
    """
    coords = grid.meshgrid()
    const_space = spec.constant_in_space()
    picks = _interior_uniform_triples(fields.times)
    if not picks:
        raise ValueError("need at least three equally spaced snapshots")
    max_r = {"momentum_balance": 0.0, "stress_law": 0.0, "velocity_law": 0.0}
    l2_r = {"momentum_balance": 0.0, "stress_law": 0.0, "velocity_law": 0.0}
    for k in picks:
        t = float(fields.times[k])
        sample = spec.sample(*((0.0, 0.0, 0.0) if const_space else coords), t)
        dt_mu = (fields.mu[k + 1] - fields.mu[k - 1]) / (
            fields.times[k + 1] - fields.times[k - 1]
        )
        div_sigma = np.zeros_like(fields.mu[k])
        for j in range(3):
            div_sigma += derivative(fields.sigma[k][..., :, j], grid, j, order)
        r1 = dt_mu - div_sigma
        grad = np.stack(
            [derivative(fields.u[k], grid, axis, order) for axis in range(3)], axis=-2
        )
        eps = strain(grad)
        r2 = fields.sigma[k] - np.einsum("...ijkl,...kl->...ij", sample.c, eps)
        r2 -= np.einsum("...ijk,...k->...ij", sample.s, fields.dt_u[k])
        rho = sample.rho[..., None] if np.ndim(sample.rho) else sample.rho
        r3 = rho * fields.dt_u[k] - fields.mu[k] + np.einsum(
            "...kli,...kl->...i", sample.s, eps
        )
        for name, r in (("momentum_balance", r1), ("stress_law", r2), ("velocity_law", r3)):
            max_r[name] = max(max_r[name], float(np.max(np.abs(r))))
            l2_r[name] = max(l2_r[name], l2_norm(r, grid))
    return ResidualReport(
        max_residuals=max_r,
        l2_residuals=l2_r,
        h=grid.min_spacing,
        times=fields.times[picks],
    )


def residual_second_order(
    u_tilde: np.ndarray,
    times,
    spec: MaterialSpec,
    grid: Grid,
    lift: BoundaryLift | None = None,
    order: int = 2,
) -> ResidualReport:
    """Residual of the second-order displacement equation, every term included.

    rho dtt u - C d_j d_k u_l - (d_j C - dt S_kli) d_k u_l - d_j S dt u_k
    + dt rho dt u_i - (S_ijk - S_jki) d_j dt u_k + rho e
    with dtt/dt from centered differences of the snapshots and e assembled
    exactly from the lift.
    """
    times = np.asarray(times, dtype=float)
    coords = grid.meshgrid()
    lift = lift if lift is not None else BoundaryLift.zero()
    picks = _interior_uniform_triples(times)
    if not picks:
        raise ValueError("need at least three equally spaced snapshots")
    max_r, l2_r = 0.0, 0.0
    for k in picks:
        t = float(times[k])
        dt = times[k + 1] - times[k]
        sample = spec.sample(*coords, t)
        dtt_u = (u_tilde[k + 1] - 2 * u_tilde[k] + u_tilde[k - 1]) / dt**2
        dt_u = (u_tilde[k + 1] - u_tilde[k - 1]) / (2 * dt)
        grad = np.stack(
            [derivative(u_tilde[k], grid, axis, order) for axis in range(3)], axis=-2
        )
        grad2 = np.stack(
            [
                np.stack([derivative(grad[..., j, :], grid, kk, order) for kk in range(3)], axis=-2)
                for j in range(3)
            ],
            axis=-3,
        )  # [j, k, l]
        dt_grad = np.stack(
            [derivative(dt_u, grid, axis, order) for axis in range(3)], axis=-2
        )
        rho = sample.rho[..., None] if np.ndim(sample.rho) else sample.rho
        dt_rho = sample.dt_rho[..., None] if np.ndim(sample.dt_rho) else sample.dt_rho
        div_c = np.einsum("...jijkl->...ikl", sample.dc)
        dt_s_i = np.einsum("...kli->...ikl", sample.dt_s)
        r = rho * dtt_u
        r -= np.einsum("...ijkl,...jkl->...i", sample.c, grad2)
        r -= np.einsum("...ikl,...kl->...i", div_c - dt_s_i, grad)
        r -= np.einsum("...jijk,...k->...i", sample.ds, dt_u)
        r += dt_rho * dt_u
        r -= np.einsum("...ijk,...jk->...i", sample.s, dt_grad)
        r += np.einsum("...jki,...jk->...i", sample.s, dt_grad)
        if not lift.is_zero():
            ls = lift.sample(*coords, t)
            e = assembly.boundary_source_e(ls, sample)
            r += rho * e
        max_r = max(max_r, float(np.max(np.abs(r))))
        l2_r = max(l2_r, l2_norm(r, grid))
    return ResidualReport(
        max_residuals={"displacement_equation": max_r},
        l2_residuals={"displacement_equation": l2_r},
        h=grid.min_spacing,
        times=times[picks],
    )


# ---------------------------------------------------------------------------
# Acoustic-tensor speeds
# ---------------------------------------------------------------------------


def christoffel_speeds(c, rho: float, nu) -> np.ndarray:
    """Plane-wave speeds sqrt(eig(Gamma)/rho), Gamma_il = C_ijkl nu_j nu_k."""
    arr = c.entries if hasattr(c, "entries") else np.asarray(c, dtype=float)
    nu = np.asarray(nu, dtype=float)
    nu = nu / np.linalg.norm(nu)
    gamma = np.einsum("ijkl,j,k->il", arr, nu, nu)
    gamma = 0.5 * (gamma + gamma.T)
    eigs = np.linalg.eigvalsh(gamma) / float(rho)
    return np.sqrt(np.clip(eigs, 0.0, None))


def christoffel_max_speed(c, rho: float, directions=None) -> float:
    if directions is None:
        directions = [
            (1, 0, 0), (0, 1, 0), (0, 0, 1),
            (1, 1, 0), (1, 0, 1), (0, 1, 1), (1, 1, 1),
        ]
    return max(float(christoffel_speeds(c, rho, d)[-1]) for d in directions)


# ---------------------------------------------------------------------------
# Direct integration of the physical system (reduction oracle)
# ---------------------------------------------------------------------------


class DirectWillisProblem:
    """Independent method-of-lines integration in (displacement, momentum).

    dt u = (mu - S^T.eps(u)) / rho
    dt mu_i = d_j (H_ijkl eps_kl(u) + S_ijk mu_k / rho)

    This never touches the 15-component formulation, which makes it a
    two-sided witness for the reduction and equivalence checks.  The state
    is a single array field with 6 trailing components (u, mu).
    """

    def __init__(
        self,
        spec: MaterialSpec,
        grid: Grid,
        order: int = 2,
        cfl: float = 0.3,
    ):
        self.spec = spec
        self.grid = grid
        self.order = order
        self.cfl = cfl
        self._coords = grid.meshgrid()
        self._static = spec.constant_in_time()
        self._cache: dict[float, tuple] = {}

    def _coeff(self, t: float):
        key = 0.0 if self._static else round(float(t), 14)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        sample = self.spec.sample(
            *((0.0, 0.0, 0.0) if self.spec.constant_in_space() else self._coords), t
        )
        h = assembly.assemble_H(sample.c, sample.s, sample.rho)
        coeff = (sample, h)
        if len(self._cache) > 16:
            self._cache.clear()
        self._cache[key] = coeff
        return coeff

    def rhs(self, y: np.ndarray, t: float) -> np.ndarray:
        sample, h = self._coeff(t)
        u, mu = y[..., 0:3], y[..., 3:6]
        grad = np.stack(
            [derivative(u, self.grid, axis, self.order) for axis in range(3)], axis=-2
        )
        eps = strain(grad)
        rho = sample.rho[..., None] if np.ndim(sample.rho) else sample.rho
        dt_u = (mu - np.einsum("...kli,...kl->...i", sample.s, eps)) / rho
        sigma = np.einsum("...ijkl,...kl->...ij", h, eps)
        sigma += np.einsum("...ijk,...k->...ij", sample.s, mu) / (
            sample.rho[..., None, None] if np.ndim(sample.rho) else sample.rho
        )
        dt_mu = np.zeros_like(mu)
        for j in range(3):
            dt_mu += derivative(sigma[..., :, j], self.grid, j, self.order)
        out = np.empty_like(y)
        out[..., 0:3] = dt_u
        out[..., 3:6] = dt_mu
        return out

    def step(self, y: np.ndarray, t: float, dt: float) -> np.ndarray:
        k1 = self.rhs(y, t)
        k2 = self.rhs(y + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = self.rhs(y + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = self.rhs(y + dt * k3, t + dt)
        return y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    def max_speed(self) -> float:
        sample, _ = self._coeff(0.0)
        if sample.c.ndim == 4:
            return christoffel_max_speed(sample.c, float(np.min(sample.rho)))
        flat_c = sample.c.reshape(-1, 3, 3, 3, 3)
        flat_rho = np.broadcast_to(sample.rho, sample.c.shape[:-4]).reshape(-1)
        stride = max(1, flat_c.shape[0] // 64)
        return max(
            christoffel_max_speed(flat_c[i], float(flat_rho[i]))
            for i in range(0, flat_c.shape[0], stride)
        )

    def run(self, y0: np.ndarray, t_final: float, n_snapshots: int = 5):
        dt = cfl_dt(self.grid, self.max_speed(), self.cfl)
        n_steps = max(1, int(math.ceil(t_final / dt - 1e-12)))
        dt = t_final / n_steps
        snap_at = sorted(set(int(round(s)) for s in np.linspace(0, n_steps, max(2, n_snapshots))))
        times, states = [0.0], [y0.copy()]
        y = y0.copy()
        for n in range(n_steps):
            y = self.step(y, n * dt, dt)
            if (n + 1) in snap_at:
                times.append((n + 1) * dt)
                states.append(y.copy())
        return np.asarray(times), states


@dataclass
class Remark1Report:
    """Willis vs classical runs from identical data, plus the symmetry audit."""

    times: np.ndarray
    displacement_diff: np.ndarray
    final_diff: float
    max_cyclic_violation: float
    h: float


def _initial_direct_state(spec: MaterialSpec, grid: Grid, u0_exprs, vel_exprs) -> np.ndarray:
    """(u, mu) field with mu = rho v + S^T.eps(u0) evaluated exactly."""
    coords = grid.meshgrid()
    x1, x2, x3 = coords
    shape = np.broadcast_shapes(x1.shape, x2.shape, x3.shape)
    u0_e = [as_expression(e) for e in u0_exprs]
    vel_e = [as_expression(e) for e in vel_exprs]

    def ev(e):
        return np.broadcast_to(np.asarray(e(x1, x2, x3, 0.0), dtype=float), shape)

    u0 = np.stack([ev(e) for e in u0_e], axis=-1)
    vel = np.stack([ev(e) for e in vel_e], axis=-1)
    grad = np.stack(
        [np.stack([ev(u0_e[a].diff(f"x{j + 1}")) for a in range(3)], axis=-1) for j in range(3)],
        axis=-2,
    )
    eps = strain(grad)
    sample = spec.sample(x1, x2, x3, 0.0)
    rho = sample.rho[..., None] if np.ndim(sample.rho) else sample.rho
    mu = rho * vel + np.einsum("...kli,...kl->...i", sample.s, eps)
    out = np.empty(shape + (6,))
    out[..., 0:3] = u0
    out[..., 3:6] = mu
    return out


def remark1_check(
    spec: MaterialSpec,
    u0_exprs,
    vel_exprs,
    grid: Grid,
    t_final: float,
    order: int = 2,
    n_snapshots: int = 5,
) -> Remark1Report:
    """Compare the coupled and classical runs started from identical (u0, v0).

    Requires constant coefficients and a totally symmetric coupling; the
    classical side is the same integrator with the coupling removed.  The
    displacement difference is a pure coupling footprint: it vanishes with
    the grid at the scheme order for constant coefficients and stays O(1)
    for genuinely space-dependent coupling.
    """
    if not (spec.constant_in_space() and spec.constant_in_time()):
        raise ValueError("reduction check requires coefficients constant in space and time")
    sample = spec.sample(0.0, 0.0, 0.0, 0.0)
    cyc = float(np.max(np.abs(sample.s - sample.s.transpose(1, 2, 0))))
    classical = MaterialSpec(spec.rho, spec.elastic, MaterialSpec._coupling_entries(None))
    willis_prob = DirectWillisProblem(spec, grid, order=order)
    classical_prob = DirectWillisProblem(classical, grid, order=order)
    y0_w = _initial_direct_state(spec, grid, u0_exprs, vel_exprs)
    y0_c = _initial_direct_state(classical, grid, u0_exprs, vel_exprs)
    tw, sw = willis_prob.run(y0_w, t_final, n_snapshots)
    tc, sc = classical_prob.run(y0_c, t_final, n_snapshots)
    if len(tw) != len(tc) or np.max(np.abs(tw - tc)) > 1e-12:
        raise RuntimeError("snapshot cadences diverged between the two runs")
    diffs = np.array(
        [l2_norm(a[..., 0:3] - b[..., 0:3], grid) for a, b in zip(sw, sc)]
    )
    return Remark1Report(
        times=tw,
        displacement_diff=diffs,
        final_diff=float(diffs[-1]),
        max_cyclic_violation=cyc,
        h=grid.min_spacing,
    )


# ---------------------------------------------------------------------------
# Invariance checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GalileanTransform:
    """Rigid-mode shift u -> u + A(t) x + b(t) with A(t), b(t) affine in t.

    mode "e3": A constant and skew (infinitesimal rotation plus drift);
    mode "e4": A(t) = A0 + t A1 arbitrary (the extended variant).
    """

    a0: np.ndarray
    a1: np.ndarray
    b0: np.ndarray
    b1: np.ndarray
    mode: str = "e3"

    def __post_init__(self):
        a0 = np.asarray(self.a0, dtype=float)
        a1 = np.asarray(self.a1, dtype=float)
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "b0", np.asarray(self.b0, dtype=float))
        object.__setattr__(self, "b1", np.asarray(self.b1, dtype=float))
        if self.mode not in ("e3", "e4"):
            raise ValueError(f"mode must be 'e3' or 'e4', got {self.mode!r}")
        if self.mode == "e3":
            if np.max(np.abs(a0 + a0.T)) > 1e-12:
                raise ValueError("mode e3 requires a skew constant part")
            if np.max(np.abs(a1)) > 0.0:
                raise ValueError("mode e3 requires a time-independent matrix part")

    @classmethod
    def random_e3(cls, rng: np.random.Generator, scale: float = 1.0) -> "GalileanTransform":
        w = rng.standard_normal(3) * scale
        a0 = np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])
        return cls(a0=a0, a1=np.zeros((3, 3)), b0=rng.standard_normal(3) * scale,
                   b1=rng.standard_normal(3) * scale, mode="e3")

    @classmethod
    def random_e4(cls, rng: np.random.Generator, scale: float = 1.0) -> "GalileanTransform":
        return cls(
            a0=rng.standard_normal((3, 3)) * scale,
            a1=rng.standard_normal((3, 3)) * scale,
            b0=rng.standard_normal(3) * scale,
            b1=rng.standard_normal(3) * scale,
            mode="e4",
        )

    def displacement(self, coords, t: float) -> np.ndarray:
        x = np.stack(np.broadcast_arrays(*coords), axis=-1)
        a_t = self.a0 + t * self.a1
        return np.einsum("ij,...j->...i", a_t, x) + self.b0 + t * self.b1

    def velocity(self, coords, t: float) -> np.ndarray:
        x = np.stack(np.broadcast_arrays(*coords), axis=-1)
        return np.einsum("ij,...j->...i", self.a1, x) + self.b1


@dataclass
class GalileanReport:
    base: ResidualReport
    transformed: ResidualReport
    gap: float


def galilean_check(
    traj: Trajectory,
    transform: GalileanTransform,
    spec: MaterialSpec,
    lift: BoundaryLift | None = None,
    order: int = 2,
) -> GalileanReport:
    """Shift a trajectory by a rigid mode and compare residual functionals.

    Both sides close sigma and mu through the same discrete constitutive
    route, so the constitutive residuals vanish identically and the
    momentum-balance functional isolates the invariance question.
    """
    grid = traj.grid
    coords = grid.meshgrid()
    lift = lift if lift is not None else BoundaryLift.zero()
    times = np.asarray(traj.times)
    u, dt_u = [], []
    for t, v in zip(times, traj.states):
        grad, vel, disp = unpack_state(v)
        if lift.is_zero():
            u.append(disp)
            dt_u.append(vel)
        else:
            ls = lift.sample(*coords, float(t))
            u.append(disp + ls.u)
            dt_u.append(vel + ls.dt_u)
    u = np.stack(u)
    dt_u = np.stack(dt_u)
    base_fields = fields_from_displacement(u, dt_u, times, spec, grid, order)
    u_t = np.stack([u[n] + transform.displacement(coords, float(t)) for n, t in enumerate(times)])
    dtu_t = np.stack(
        [dt_u[n] + transform.velocity(coords, float(t)) for n, t in enumerate(times)]
    )
    trans_fields = fields_from_displacement(u_t, dtu_t, times, spec, grid, order)
    base = residual_willis(base_fields, spec, grid, order)
    trans = residual_willis(trans_fields, spec, grid, order)
    gap = abs(
        trans.l2_residuals["momentum_balance"] - base.l2_residuals["momentum_balance"]
    )
    return GalileanReport(base=base, transformed=trans, gap=gap)


# ---------------------------------------------------------------------------
# Convergence studies
# ---------------------------------------------------------------------------


@dataclass
class ConvergenceReport:
    cells: list
    spacings: np.ndarray
    errors: np.ndarray
    orders: np.ndarray

    @property
    def min_order(self) -> float:
        return float(self.orders.min()) if self.orders.size else float("nan")


def observed_orders(spacings, errors) -> np.ndarray:
    spacings = np.asarray(spacings, dtype=float)
    errors = np.asarray(errors, dtype=float)
    return np.array(
        [
            math.log(errors[i] / errors[i + 1]) / math.log(spacings[i] / spacings[i + 1])
            for i in range(len(errors) - 1)
        ]
    )


def convergence_study(
    spec: MaterialSpec,
    manufactured: ManufacturedSolution,
    cells_list,
    t_final: float,
    order: int = 2,
    lo=(-np.pi, -np.pi, -np.pi),
    hi=(np.pi, np.pi, np.pi),
    mode: str = "periodic",
    cfl: float = 0.4,
) -> ConvergenceReport:
    """Solver error against the manufactured solution across refinements."""
    errors, spacings = [], []
    for n in cells_list:
        grid = Grid(cells=(n, n, n), lo=lo, hi=hi, mode=mode)
        problem = WillisProblem(
            spec,
            grid,
            SchemeConfig(order=order, cfl=cfl),
            source=manufactured.source_for(spec, grid),
        )
        coords = grid.meshgrid()
        traj = problem.run(manufactured.state(coords, 0.0), t_final, n_snapshots=2)
        err = l2_norm(traj.states[-1] - manufactured.state(coords, t_final), grid)
        errors.append(err)
        spacings.append(grid.min_spacing)
    errors_arr = np.asarray(errors)
    if np.any(np.diff(errors_arr) >= 0.0):
        raise ValueError(f"errors are not monotonically decreasing: {errors_arr}")
    return ConvergenceReport(
        cells=list(cells_list),
        spacings=np.asarray(spacings),
        errors=errors_arr,
        orders=observed_orders(spacings, errors_arr),
    )


# ---------------------------------------------------------------------------
# Energy bound
# ---------------------------------------------------------------------------


@dataclass
class EnergyBoundReport:
    """Gronwall-type audit of the energy trace against the coefficient bound."""

    c_bound: float
    fitted_rate: float
    satisfied: bool
    max_ratio: float  # max over snapshots of E(t) / (E(0) exp(1.5 C t))


def _spectral_norm(m: np.ndarray) -> float:
    return float(np.linalg.svd(m, compute_uv=False)[..., 0].max())


def coefficient_bound(problem: WillisProblem, times=(0.0,)) -> float:
    """max ||A0^{-1}|| (||B|| + sum_k ||d_k A_k|| + ||dt A0||) over samples."""
    spec = problem.spec
    const_space = spec.constant_in_space()
    coords = problem.grid.meshgrid()
    worst = 0.0
    for t in times:
        sample = spec.sample(
            *((0.0, 0.0, 0.0) if const_space else coords), float(t), order2=True
        )
        a0 = assembly.assemble_A0(sample.c, sample.rho)
        inv_norm = 1.0 / float(np.linalg.eigvalsh(a0)[..., 0].min())
        b_norm = _spectral_norm(assembly.assemble_B(sample))
        dk_norm = 0.0
        for k in (1, 2, 3):
            dak = assembly.assemble_Ak(sample.dc[..., k - 1, :, :, :, :], k)
            for a in range(3):
                dak[..., 12 + a, 12 + a] = 0.0
            dk_norm += _spectral_norm(dak)
        dt_a0 = np.zeros_like(a0)
        dt_a0[..., :9, :9] = assembly.gradient_matrix9(sample.dt_c)
        for a in range(3):
            dt_a0[..., 9 + a, 9 + a] = sample.dt_rho
        dt_norm = _spectral_norm(dt_a0)
        worst = max(worst, inv_norm * (b_norm + dk_norm + dt_norm))
    return worst


def check_energy_bound(
    traj: Trajectory, problem: WillisProblem, factor: float = 1.5
) -> EnergyBoundReport:
    """E(t) <= E(0) exp(factor * C * t) snapshot by snapshot, for w = 0 runs."""
    c = coefficient_bound(problem, times=tuple(traj.times[:: max(1, len(traj.times) // 3)]))
    e0 = traj.energy[0]
    if e0 <= 0.0:
        return EnergyBoundReport(c_bound=c, fitted_rate=0.0, satisfied=True, max_ratio=0.0)
    bounds = e0 * np.exp(factor * c * traj.times)
    ratios = traj.energy / bounds
    return EnergyBoundReport(
        c_bound=c,
        fitted_rate=traj.energy_trace().fitted_rate(),
        satisfied=bool(np.all(ratios <= 1.0 + 1e-12)),
        max_ratio=float(ratios.max()),
    )


# ---------------------------------------------------------------------------
# Constitutive reduction check
# ---------------------------------------------------------------------------


def hooke_recovery_error(
    traj: Trajectory, spec: MaterialSpec, lift: BoundaryLift | None = None
) -> float:
    """Max relative gap between recovered stress and C.eps on a coupling-free run."""
    sample0 = spec.sample(0.0, 0.0, 0.0, 0.0)
    if float(np.max(np.abs(sample0.s))) != 0.0:
        raise ValueError("recovery comparison requires zero coupling")
    grid = traj.grid
    coords = grid.meshgrid()
    lift = lift if lift is not None else BoundaryLift.zero()
    worst = 0.0
    for t, v in zip(traj.times, traj.states):
        sample = spec.sample(*coords, float(t))
        ls = lift.sample(*coords, float(t)) if not lift.is_zero() else None
        rec = recover_fields(v, sample, ls)
        hooke = np.einsum("...ijkl,...kl->...ij", sample.c, rec.eps)
        scale = max(float(np.max(np.abs(hooke))), 1e-300)
        worst = max(worst, float(np.max(np.abs(rec.sigma - hooke))) / scale)
    return worst

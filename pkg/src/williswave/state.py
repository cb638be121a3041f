"""State packing, initial data, field recovery, compatibility recursion.

The 15-component state vector is ordered gradient / velocity / displacement:
v[3j+a] = d u_a/d x_{j+1}, v[9+i] = dt u_i, v[12+i] = u_i (all for the
homogeneous part of the displacement, i.e. after subtracting the lift).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import assembly
from .grid import BOX, Grid, derivative
from .tensors import (
    BoundaryLift,
    DensityError,
    MaterialSample,
    MaterialSpec,
    SYMMETRY_TOTAL,
    check_initial_boundary_compatibility,
    strain,
)
from .expressions import as_expression


def pack_state(grad: np.ndarray, velocity: np.ndarray, displacement: np.ndarray) -> np.ndarray:
    """Pack gradient (..,3,3 with [j,a] = d_j u_a), velocity, displacement."""
    grad = np.asarray(grad, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    displacement = np.asarray(displacement, dtype=float)
    lead = np.broadcast_shapes(grad.shape[:-2], velocity.shape[:-1], displacement.shape[:-1])
    out = np.empty(lead + (15,))
    out[..., 0:9] = np.broadcast_to(grad, lead + (3, 3)).reshape(lead + (9,))
    out[..., 9:12] = velocity
    out[..., 12:15] = displacement
    return out


def unpack_state(v: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of pack_state."""
    v = np.asarray(v, dtype=float)
    grad = v[..., 0:9].reshape(v.shape[:-1] + (3, 3))
    return grad, v[..., 9:12], v[..., 12:15]


@dataclass(frozen=True)
class InitialData:
    """Initial displacement and momentum density, one expression each."""

    u0: tuple
    mu0: tuple

    def __post_init__(self):
        object.__setattr__(self, "u0", tuple(as_expression(e) for e in self.u0))
        object.__setattr__(self, "mu0", tuple(as_expression(e) for e in self.mu0))

    @classmethod
    def zero(cls) -> "InitialData":
        return cls(u0=(0.0, 0.0, 0.0), mu0=(0.0, 0.0, 0.0))

    @classmethod
    def from_velocity(cls, u0, velocity, spec: MaterialSpec) -> "InitialData":
        """Build mu0 = rho * dt_u + S_kli d_k u_l from a prescribed velocity."""
        u0 = tuple(as_expression(e) for e in u0)
        velocity = tuple(as_expression(e) for e in velocity)
        mu0 = []
        for i in range(3):
            acc = spec.rho * velocity[i]
            for k in range(3):
                for l in range(3):
                    acc = acc + spec.coupling[k, l, i] * u0[l].diff(f"x{k + 1}")
            mu0.append(acc)
        return cls(u0=u0, mu0=tuple(mu0))

    def u0_values(self, x1, x2, x3) -> np.ndarray:
        shape = np.broadcast_shapes(np.shape(x1), np.shape(x2), np.shape(x3))
        return np.stack(
            [np.broadcast_to(np.asarray(e(x1, x2, x3, 0.0), dtype=float), shape) for e in self.u0],
            axis=-1,
        )

    def grad_u0_values(self, x1, x2, x3) -> np.ndarray:
        shape = np.broadcast_shapes(np.shape(x1), np.shape(x2), np.shape(x3))
        return np.stack(
            [
                np.stack(
                    [
                        np.broadcast_to(
                            np.asarray(e.diff(f"x{j + 1}")(x1, x2, x3, 0.0), dtype=float), shape
                        )
                        for e in self.u0
                    ],
                    axis=-1,
                )
                for j in range(3)
            ],
            axis=-2,
        )

    def mu0_values(self, x1, x2, x3) -> np.ndarray:
        shape = np.broadcast_shapes(np.shape(x1), np.shape(x2), np.shape(x3))
        return np.stack(
            [np.broadcast_to(np.asarray(e(x1, x2, x3, 0.0), dtype=float), shape) for e in self.mu0],
            axis=-1,
        )


def initial_state(
    data: InitialData,
    lift: BoundaryLift,
    spec: MaterialSpec,
    coords,
    grid: Grid | None = None,
) -> np.ndarray:
    """Initial 15-component state field from (u0, mu0) and the lift at t=0.

    Gradient and displacement blocks carry u0 - lift(., 0) and its exact
    gradient; the velocity block carries
    (mu0_i - S_ikl d_k(u0 + lift)_l) / rho0 - dt lift_i.  When the coupling
    is totally symmetric the S_ikl and S_kli contraction patterns agree and
    this is checked; otherwise the discrepancy is reported as a warning.
    """
    x1, x2, x3 = coords
    sample = spec.sample(x1, x2, x3, 0.0)
    if np.any(sample.rho <= 0.0):
        raise DensityError(f"initial density must be positive, min={np.min(sample.rho)}")
    ls = lift.sample(x1, x2, x3, 0.0)
    u0 = data.u0_values(x1, x2, x3)
    grad_u0 = data.grad_u0_values(x1, x2, x3)
    mu0 = data.mu0_values(x1, x2, x3)

    total_grad = grad_u0 + ls.grad
    g_first = mu0 - np.einsum("...ikl,...kl->...i", sample.s, total_grad)
    g_cyclic = mu0 - np.einsum("...kli,...kl->...i", sample.s, total_grad)
    mismatch = float(np.max(np.abs(g_first - g_cyclic)))
    scale = max(1.0, float(np.max(np.abs(g_first))))
    if spec.coupling_symmetry() == SYMMETRY_TOTAL:
        if mismatch > 1e-10 * scale:
            raise AssertionError(
                f"coupling contraction patterns disagree under total symmetry: {mismatch:.3e}"
            )
    elif mismatch > 1e-10 * scale:
        warnings.warn(
            f"coupling contraction pattern ambiguity in initial velocity: {mismatch:.3e}",
            stacklevel=2,
        )
    velocity = g_first / sample.rho[..., None] - ls.dt_u

    if grid is not None and grid.mode == BOX:
        face_u0 = np.concatenate(
            [u0[slicer].reshape(-1) for _, _, slicer, _ in grid.boundary_faces()]
        )
        face_lift = np.concatenate(
            [ls.u[slicer].reshape(-1) for _, _, slicer, _ in grid.boundary_faces()]
        )
        check_initial_boundary_compatibility(
            face_u0, face_lift, float(np.max(np.abs(u0))) if u0.size else 1.0
        )

    return pack_state(grad_u0 - ls.grad, velocity, u0 - ls.u)


@dataclass
class RecoveredFields:
    """Physical fields reconstructed from the packed state at one time."""

    u: np.ndarray
    dt_u: np.ndarray
    eps: np.ndarray
    sigma: np.ndarray
    mu: np.ndarray


def sigma_from_constitutive(sample: MaterialSample, eps: np.ndarray, dt_u: np.ndarray) -> np.ndarray:
    """Stress straight from the constitutive law, C.eps + S.dt_u."""
    return np.einsum("...ijkl,...kl->...ij", sample.c, eps) + np.einsum(
        "...ijk,...k->...ij", sample.s, dt_u
    )


def recover_fields(
    v: np.ndarray, sample: MaterialSample, lift_sample=None
) -> RecoveredFields:
    """Recover (u, dt_u, eps, sigma, mu) from the state and the lift.

    The momentum comes from the velocity law mu_i = rho dt_u_i + S_kli eps_kl
    and the stress from the velocity-eliminated form
    sigma = H.eps + S.mu / rho, which agrees identically with the
    constitutive stress C.eps + S.dt_u.
    """
    grad, vel, disp = unpack_state(v)
    if lift_sample is None:
        u = disp
        dt_u = vel
        eps = strain(grad)
    else:
        u = disp + lift_sample.u
        dt_u = vel + lift_sample.dt_u
        eps = strain(grad) + strain(lift_sample.grad)
    mu = sample.rho[..., None] * dt_u + np.einsum("...kli,...kl->...i", sample.s, eps)
    h = assembly.assemble_H(sample.c, sample.s, sample.rho)
    sigma = np.einsum("...ijkl,...kl->...ij", h, eps)
    sigma += np.einsum("...ijk,...k->...ij", sample.s, mu) / sample.rho[..., None, None]
    return RecoveredFields(u=u, dt_u=dt_u, eps=eps, sigma=sigma, mu=mu)


def gradient_consistency(v: np.ndarray, grid: Grid, order: int = 2) -> float:
    """Max discrete cross-derivative mismatch of the gradient block.

    For states packed from a smooth displacement, d_k v_(j,a) - d_j v_(k,a)
    converges to zero at the discretization order.
    """
    grad = unpack_state(v)[0]
    worst = 0.0
    for j in range(3):
        for k in range(j + 1, 3):
            djk = derivative(grad[..., j, :], grid, k, order)
            dkj = derivative(grad[..., k, :], grid, j, order)
            worst = max(worst, float(np.max(np.abs(djk - dkj))))
    return worst


# ---------------------------------------------------------------------------
# Compatibility recursion
# ---------------------------------------------------------------------------


@dataclass
class CompatibilitySequence:
    """Time-derivative jets of the initial state and their boundary residuals."""

    fields: list
    residuals: list


def _dt_A0(sample: MaterialSample) -> np.ndarray:
    out = np.zeros(sample.dt_c.shape[:-4] + (15, 15))
    out[..., :9, :9] = assembly.gradient_matrix9(sample.dt_c)
    for a in range(3):
        out[..., 9 + a, 9 + a] = sample.dt_rho
    return out


def _dt_Ak(sample: MaterialSample, k: int) -> np.ndarray:
    out = assembly.assemble_Ak(sample.dt_c, k)
    for a in range(3):
        out[..., 12 + a, 12 + a] = 0.0
    return out


def _dt_B(sample: MaterialSample) -> np.ndarray:
    div_dc = np.einsum("...jijkl->...ikl", sample.dt_dc)
    div_ds = np.einsum("...jijk->...ik", sample.dt_ds)
    lead = np.broadcast_shapes(div_dc.shape[:-3], np.shape(sample.dtt_rho))
    b = np.zeros(lead + (15, 15))
    grad_block = np.einsum("...kli->...ikl", sample.dtt_s) - div_dc
    b[..., 9:12, 0:9] = grad_block.reshape(grad_block.shape[:-3] + (3, 9))
    b[..., 9:12, 9:12] = -div_ds
    for a in range(3):
        b[..., 9 + a, 9 + a] += sample.dtt_rho
    return b


def boundary_residual_max(v: np.ndarray, spec: MaterialSpec, grid: Grid, t: float = 0.0) -> float:
    """Max over the box faces of |M v| (gradient constraint and displacement)."""
    if grid.mode != BOX:
        raise ValueError("boundary residuals require a box grid")
    x1, x2, x3 = grid.meshgrid()
    worst = 0.0
    for _, _, slicer, normal in grid.boundary_faces():
        sample = spec.sample(x1[slicer], x2[slicer], x3[slicer], t)
        q9 = assembly.gradient_matrix9(sample.c)
        cnu = np.repeat(normal, 3)[:, None] * q9
        vb = v[slicer]
        grad_part = (cnu @ vb[..., :9, None])[..., 0]
        resid = np.sqrt(np.sum(grad_part**2, axis=-1) + np.sum(vb[..., 12:15] ** 2, axis=-1))
        worst = max(worst, float(np.max(resid)))
    return worst


def compatibility_sequence(
    v0: np.ndarray,
    spec: MaterialSpec,
    grid: Grid,
    s: int,
    order: int = 2,
    w0: np.ndarray | None = None,
    dt_w0: np.ndarray | None = None,
) -> CompatibilitySequence:
    """Jets v_{0,p} for p = 0..s-1 by the operator recursion, with residuals.

    v_{0,p} = sum_i binom(p-1, i) G_i(0) v_{0,p-1-i} + d_t^{p-1}(A0^{-1} w)(0)
    where G_0 = -sum_k A0^{-1} A_k d_k - A0^{-1} B and G_i applies the i-th
    time derivative of the matrix products.  Time derivatives of the
    coefficients are exact (expression-level); supported up to s = 3.
    """
    if s < 1:
        raise ValueError(f"order s must be >= 1, got {s}")
    if s > 3:
        raise ValueError("compatibility recursion implemented for s <= 3")
    x1, x2, x3 = grid.meshgrid()
    sample = spec.sample(x1, x2, x3, 0.0, order2=(s >= 3))
    a0 = assembly.assemble_A0(sample.c, sample.rho)
    try:
        a0_inv = np.linalg.inv(a0)
    except np.linalg.LinAlgError as exc:
        raise ValueError("mass matrix is singular at some grid point") from exc
    aks = tuple(assembly.assemble_Ak(sample.c, k) for k in (1, 2, 3))
    b = assembly.assemble_B(sample)

    def mv(m, x):
        return (m @ x[..., None])[..., 0]

    def g0(field):
        out = -mv(a0_inv, mv(b, field))
        for k in range(3):
            out -= mv(a0_inv, mv(aks[k], derivative(field, grid, k, order)))
        return out

    fields = [np.asarray(v0, dtype=float)]
    if s >= 2:
        nxt = g0(fields[0])
        if w0 is not None:
            nxt = nxt + mv(a0_inv, w0)
        fields.append(nxt)
    if s >= 3:
        dt_a0 = _dt_A0(sample)
        dt_aks = tuple(_dt_Ak(sample, k) for k in (1, 2, 3))
        dt_b = _dt_B(sample)
        # d_t(A0^{-1} M) = A0^{-1} (d_t M - d_t A0 A0^{-1} M)
        def g1(field):
            out = -mv(a0_inv, mv(dt_b, field) - mv(dt_a0, mv(a0_inv, mv(b, field))))
            for k in range(3):
                dkf = derivative(field, grid, k, order)
                out -= mv(
                    a0_inv, mv(dt_aks[k], dkf) - mv(dt_a0, mv(a0_inv, mv(aks[k], dkf)))
                )
            return out

        nxt = g0(fields[1]) + g1(fields[0])
        # d_t(A0^{-1} w)(0) = A0^{-1} (d_t w - d_t A0 A0^{-1} w)
        if dt_w0 is not None:
            nxt = nxt + mv(a0_inv, dt_w0)
        if w0 is not None:
            nxt = nxt - mv(a0_inv, mv(dt_a0, mv(a0_inv, w0)))
        fields.append(nxt)

    residuals = [boundary_residual_max(f, spec, grid, 0.0) for f in fields]
    return CompatibilitySequence(fields=fields, residuals=residuals)

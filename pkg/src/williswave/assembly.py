"""Exact assembly of the first-order symmetric-hyperbolic system matrices.

The 15-component state is ordered (spatial gradient, velocity, displacement):
v[3j+a] = d u_a/d x_{j+1} for j,a in 0..2, v[9+i] = d u_i/dt, v[12+i] = u_i.

All assembly routines broadcast over leading point axes, so a whole grid of
matrices is built in one call.  Assembled matrices mirror entries of the
input tensors directly (no arithmetic beyond sign), which makes the symmetry
of A0 and A_k bitwise-exact whenever the stiffness carries its index
symmetries bitwise.

Sign conventions are fixed by requiring that the first-order system be
algebraically equivalent to the underlying second-order displacement
equation for arbitrary space- and time-dependent coefficients; see the
package README for the layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensors import (
    BoundaryLift,
    CouplingTensor,
    DensityError,
    ElasticTensor,
    LiftSample,
    MaterialSample,
    MaterialSpec,
)

KERNEL_RTOL = 1e-10  # singular values below this fraction of the largest count as zero


class SymmetrizationObstruction(ValueError):
    """The antisymmetric coupling residue blocks the symmetrizing row operations."""


def _c4(c) -> np.ndarray:
    arr = c.entries if isinstance(c, ElasticTensor) else np.asarray(c, dtype=float)
    if arr.shape[-4:] != (3, 3, 3, 3):
        raise ValueError(f"stiffness must end in 3x3x3x3, got {arr.shape}")
    return arr


def _s3(s) -> np.ndarray:
    arr = s.entries if isinstance(s, CouplingTensor) else np.asarray(s, dtype=float)
    if arr.shape[-3:] != (3, 3, 3):
        raise ValueError(f"coupling tensor must end in 3x3x3, got {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# Stiffness blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockSet:
    """The nine 3x3 stiffness blocks; block(j,k)[a,b] = C[a,j,b,k] (0-based)."""

    c: np.ndarray

    def block(self, j: int, k: int) -> np.ndarray:
        return self.c[..., :, j, :, k]

    def matrix9(self) -> np.ndarray:
        """9x9 gradient-block of A0: block row p, block column q holds block(q, p)."""
        return gradient_matrix9(self.c)


def elastic_blocks(c) -> BlockSet:
    return BlockSet(_c4(c))


def gradient_matrix9(c) -> np.ndarray:
    """Q[..., 3p+a, 3q+b] = C[..., a, q, b, p], the quadratic form on gradients."""
    arr = _c4(c)
    q = np.einsum("...aqbp->...paqb", arr)
    return q.reshape(q.shape[:-4] + (9, 9))


# ---------------------------------------------------------------------------
# System matrices
# ---------------------------------------------------------------------------


def assemble_A0(c, rho) -> np.ndarray:
    """Symmetric mass matrix diag(Q9(C), rho I3, I3)."""
    arr = _c4(c)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0.0):
        raise DensityError(f"rho must be positive, min={np.min(rho)}")
    lead = np.broadcast_shapes(arr.shape[:-4], rho.shape)
    a0 = np.zeros(lead + (15, 15))
    a0[..., :9, :9] = gradient_matrix9(arr)
    for a in range(3):
        a0[..., 9 + a, 9 + a] = rho
        a0[..., 12 + a, 12 + a] = 1.0
    return a0


def assemble_Ak(c, k: int) -> np.ndarray:
    """Symmetric flux matrix for direction k in {1,2,3}.

    Rows 0..8 couple the gradient block to the velocity block through the
    transposed stiffness blocks -(C_i^k)^T; rows 9..11 carry -C_j^k; the
    displacement block advects with the identity.
    """
    arr = _c4(c)
    if k not in (1, 2, 3):
        raise ValueError(f"direction k must be 1, 2 or 3, got {k}")
    ck = arr[..., :, :, :, k - 1]  # axes (..., a, j, b) = C[a, j, b, k-1]
    lead = ck.shape[:-3]
    ak = np.zeros(lead + (15, 15))
    upper = np.einsum("...bia->...iab", ck)  # (3i+a, b) = C[b, i, a, k-1]
    ak[..., 0:9, 9:12] = -upper.reshape(lead + (9, 3))
    ak[..., 9:12, 0:9] = -ck.reshape(lead + (3, 9))
    for a in range(3):
        ak[..., 12 + a, 12 + a] = 1.0
    return ak


def assemble_F(s) -> np.ndarray:
    """Antisymmetric coupling residues F[..., k, i, m] = S[k,m,i] - S[i,k,m].

    These sit in the velocity block of the unsymmetrized flux matrices and
    vanish exactly when the coupling tensor is totally symmetric.
    """
    arr = _s3(s)
    return np.einsum("...kmi->...kim", arr) - np.einsum("...ikm->...kim", arr)


@dataclass(frozen=True)
class UnsymmetrizedSystem:
    """The raw compatibility/momentum system before the symmetrizing rows."""

    a0: np.ndarray
    ak: tuple  # (A~_1, A~_2, A~_3)


def assemble_unsymmetrized(c, rho, s) -> UnsymmetrizedSystem:
    """Matrices read off directly from the compatibility and momentum rows."""
    arr = _c4(c)
    rho = np.asarray(rho, dtype=float)
    sarr = _s3(s)
    lead = np.broadcast_shapes(arr.shape[:-4], rho.shape, sarr.shape[:-3])
    a0 = np.zeros(lead + (15, 15))
    for a in range(9):
        a0[..., a, a] = 1.0
    for a in range(3):
        a0[..., 9 + a, 9 + a] = rho
        a0[..., 12 + a, 12 + a] = 1.0
    f = assemble_F(sarr)
    aks = []
    for k in range(3):
        ak = np.zeros(lead + (15, 15))
        ck = arr[..., :, :, :, k]
        for a in range(3):
            ak[..., 3 * k + a, 9 + a] = -1.0
            ak[..., 12 + a, 12 + a] = 1.0
        ak[..., 9:12, 0:9] = -ck.reshape(lead + (3, 9))
        ak[..., 9:12, 9:12] = f[..., k, :, :]
        aks.append(ak)
    return UnsymmetrizedSystem(a0=a0, ak=tuple(aks))


@dataclass(frozen=True)
class SymmetrizedSystem:
    a0: np.ndarray
    ak: tuple
    transform: np.ndarray  # the 15x15 left multiplier encoding the row operations


def symmetrize(unsym: UnsymmetrizedSystem, c) -> SymmetrizedSystem:
    """Apply the stiffness-weighted row operations that symmetrize the system.

    The transform replaces the nine compatibility rows by their combinations
    with weights taken from the stiffness blocks; left-multiplying all system
    matrices by it reproduces assemble_A0/assemble_Ak entry-for-entry.
    Raises SymmetrizationObstruction when any antisymmetric residue F_k is
    nonzero, quoting the offending entries.
    """
    arr = _c4(c)
    f = np.stack([a[..., 9:12, 9:12] for a in unsym.ak], axis=-3)
    if np.any(f != 0.0):
        bad = np.argwhere(f != 0.0)
        lines = []
        for idx in bad[:6]:
            k, i, m = (int(v) for v in idx[-3:])
            lines.append(f"F{k + 1}[{i + 1},{m + 1}] = {f[tuple(idx)]:.6g}")
        more = "" if len(bad) <= 6 else f" (+{len(bad) - 6} more)"
        raise SymmetrizationObstruction(
            "coupling tensor is not totally symmetric; nonzero residues: "
            + ", ".join(lines)
            + more
        )
    lead = np.broadcast_shapes(arr.shape[:-4], unsym.a0.shape[:-2])
    t = np.zeros(lead + (15, 15))
    t[..., :9, :9] = gradient_matrix9(arr)
    for a in range(6):
        t[..., 9 + a, 9 + a] = 1.0
    a0 = t @ unsym.a0
    aks = tuple(t @ ak for ak in unsym.ak)
    return SymmetrizedSystem(a0=a0, ak=aks, transform=t)


def assemble_B(sample: MaterialSample) -> np.ndarray:
    """Zeroth-order matrix from the coefficient derivatives.

    Velocity rows carry the derivative couplings D[k,l,i] = dt S_kli -
    div_j C_ijkl against the gradient block and (dt rho) I - div_j S_ijk
    against the velocity block; displacement rows close the compatibility
    identities.
    """
    div_c = np.einsum("...jijkl->...ikl", sample.dc)
    div_s = np.einsum("...jijk->...ik", sample.ds)
    lead = np.broadcast_shapes(
        div_c.shape[:-3], div_s.shape[:-2], np.shape(sample.dt_rho), sample.dt_s.shape[:-3]
    )
    b = np.zeros(lead + (15, 15))
    grad_block = np.einsum("...kli->...ikl", sample.dt_s) - div_c
    b[..., 9:12, 0:9] = grad_block.reshape(grad_block.shape[:-3] + (3, 9))
    b[..., 9:12, 9:12] = -div_s
    for a in range(3):
        b[..., 9 + a, 9 + a] += sample.dt_rho
        b[..., 12 + a, 9 + a] = -1.0
        for j in range(3):
            b[..., 12 + a, 3 * j + a] = -1.0
    return b


def assemble_H(c, s, rho) -> np.ndarray:
    """Velocity-eliminated stiffness H_ijkl = C_ijkl - S_ijm S_klm / rho."""
    arr = _c4(c)
    sarr = _s3(s)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0.0):
        raise DensityError(f"rho must be positive, min={np.min(rho)}")
    outer = np.einsum("...ijm,...klm->...ijkl", sarr, sarr)
    return arr - outer / rho[..., None, None, None, None]


def boundary_source_e(lift: LiftSample, sample: MaterialSample) -> np.ndarray:
    """Forcing generated by the boundary lift, rho e_i per the lifted equation.

    rho e_i = -C_ijkl d_j d_k u_l - (div_j S_ijk) dt u_k
              + (dt S_kli - div_j C_ijkl) d_k u_l
              + dt rho dt u_i + rho dtt u_i + (S_jki - S_ijk) dt d_j u_k
    """
    rho_e = -np.einsum("...ijkl,...jkl->...i", sample.c, lift.grad2)
    rho_e -= np.einsum("...jijk,...k->...i", sample.ds, lift.dt_u)
    rho_e += np.einsum("...kli,...kl->...i", sample.dt_s, lift.grad)
    rho_e -= np.einsum("...jijkl,...kl->...i", sample.dc, lift.grad)
    rho_e += sample.dt_rho[..., None] * lift.dt_u
    rho_e += sample.rho[..., None] * lift.dtt_u
    rho_e += np.einsum("...jki,...jk->...i", sample.s, lift.dt_grad)
    rho_e -= np.einsum("...ijk,...jk->...i", sample.s, lift.dt_grad)
    return rho_e / sample.rho[..., None]


def assemble_w(sample: MaterialSample, e: np.ndarray) -> np.ndarray:
    """Right-hand side carrying the lift forcing in the velocity rows.

    The velocity rows of the system read rho dt v + ... = -rho e once the
    lift terms are moved to the right, so w = (0, -rho e, 0).
    """
    e = np.asarray(e, dtype=float)
    lead = np.broadcast_shapes(np.shape(sample.rho), e.shape[:-1])
    w = np.zeros(lead + (15,))
    w[..., 9:12] = -sample.rho[..., None] * e
    return w


@dataclass(frozen=True)
class PointSystem:
    """All system matrices evaluated at one point and time."""

    a0: np.ndarray
    ak: tuple
    b: np.ndarray
    w: np.ndarray

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.a0)[..., 0].min())


def assemble_point_system(
    spec: MaterialSpec, x, t, lift: BoundaryLift | None = None
) -> PointSystem:
    x = np.asarray(x, dtype=float)
    sample = spec.sample(x[..., 0], x[..., 1], x[..., 2], t)
    a0 = assemble_A0(sample.c, sample.rho)
    ak = tuple(assemble_Ak(sample.c, k) for k in (1, 2, 3))
    b = assemble_B(sample)
    if lift is None or lift.is_zero():
        w = np.zeros(a0.shape[:-2] + (15,))
    else:
        ls = lift.sample(x[..., 0], x[..., 1], x[..., 2], t)
        w = assemble_w(sample, boundary_source_e(ls, sample))
    return PointSystem(a0=a0, ak=ak, b=b, w=w)


# ---------------------------------------------------------------------------
# Boundary analysis
# ---------------------------------------------------------------------------


def assemble_Cnu(c, nu) -> np.ndarray:
    """9x9 boundary constraint: block row r of Q9 scaled by nu_r."""
    q = gradient_matrix9(c)
    nu = np.asarray(nu, dtype=float)
    return np.repeat(nu, 3)[:, None] * q


def assemble_Anu(aks, nu) -> np.ndarray:
    """Boundary flux matrix sum_k nu_k A_k."""
    nu = np.asarray(nu, dtype=float)
    return nu[0] * aks[0] + nu[1] * aks[1] + nu[2] * aks[2]


def assemble_M(c, nu) -> np.ndarray:
    """Boundary condition matrix diag(Cnu, 0, I3)."""
    m = np.zeros((15, 15))
    m[:9, :9] = assemble_Cnu(c, nu)
    for a in range(3):
        m[12 + a, 12 + a] = 1.0
    return m


def kernel_basis(mat: np.ndarray, rel_tol: float = KERNEL_RTOL) -> np.ndarray:
    """Orthonormal null-space basis via SVD with a relative singular-value cut."""
    mat = np.asarray(mat, dtype=float)
    _, sing, vt = np.linalg.svd(mat)
    smax = sing[0] if sing.size else 0.0
    rank = int(np.sum(sing > rel_tol * smax)) if smax > 0.0 else 0
    return vt[rank:].T


@dataclass(frozen=True)
class BoundaryPoint:
    """Boundary matrices and numerically computed kernels at one point."""

    nu: np.ndarray
    cnu: np.ndarray
    anu: np.ndarray
    m: np.ndarray
    ker_cnu: np.ndarray
    ker_anu: np.ndarray
    ker_m: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.ker_cnu.shape[1], self.ker_anu.shape[1], self.ker_m.shape[1])


def assemble_boundary(c, aks, nu, rel_tol: float = KERNEL_RTOL) -> BoundaryPoint:
    nu = np.asarray(nu, dtype=float)
    if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
        raise ValueError(f"normal must be a unit vector, got |nu|={np.linalg.norm(nu)}")
    cnu = assemble_Cnu(c, nu)
    anu = assemble_Anu(aks, nu)
    m = assemble_M(c, nu)
    return BoundaryPoint(
        nu=nu,
        cnu=cnu,
        anu=anu,
        m=m,
        ker_cnu=kernel_basis(cnu, rel_tol),
        ker_anu=kernel_basis(anu, rel_tol),
        ker_m=kernel_basis(m, rel_tol),
    )


@dataclass(frozen=True)
class NonnegativityReport:
    """Quadratic-form values of Anu on ker M, and kernel characterizations."""

    quad_min: float
    quad_max_abs: float
    anu_kernel_residual: float
    m_kernel_residual: float
    dim_ker_cnu: int
    dim_ker_anu: int
    dim_ker_m: int

    def nonnegative(self, tol: float = 1e-10) -> bool:
        return self.quad_min >= -tol


def check_maximal_nonnegative(bp: BoundaryPoint) -> NonnegativityReport:
    """Verify <Anu z, z> >= 0 (in fact = 0) on ker M and the kernel structure.

    The kernel structure checks: members of ker Anu have vanishing velocity
    and displacement blocks with gradient block in ker Cnu, and members of
    ker M have vanishing displacement block with gradient block in ker Cnu.
    """
    quads = np.einsum("ij,jm,im->m", bp.anu, bp.ker_m, bp.ker_m) if bp.ker_m.size else np.zeros(0)
    quad_min = float(quads.min()) if quads.size else 0.0
    quad_max_abs = float(np.max(np.abs(quads))) if quads.size else 0.0

    def anu_residual(z):
        return max(float(np.max(np.abs(z[9:15]))), float(np.max(np.abs(bp.cnu @ z[:9]))))

    def m_residual(z):
        return max(float(np.max(np.abs(z[12:15]))), float(np.max(np.abs(bp.cnu @ z[:9]))))

    res_anu = max((anu_residual(bp.ker_anu[:, j]) for j in range(bp.ker_anu.shape[1])), default=0.0)
    res_m = max((m_residual(bp.ker_m[:, j]) for j in range(bp.ker_m.shape[1])), default=0.0)
    d_cnu, d_anu, d_m = bp.dims
    return NonnegativityReport(
        quad_min=quad_min,
        quad_max_abs=quad_max_abs,
        anu_kernel_residual=res_anu,
        m_kernel_residual=res_m,
        dim_ker_cnu=d_cnu,
        dim_ker_anu=d_anu,
        dim_ker_m=d_m,
    )


BOX_FACE_NORMALS = (
    np.array([-1.0, 0.0, 0.0]),
    np.array([1.0, 0.0, 0.0]),
    np.array([0.0, -1.0, 0.0]),
    np.array([0.0, 1.0, 0.0]),
    np.array([0.0, 0.0, -1.0]),
    np.array([0.0, 0.0, 1.0]),
)


# ---------------------------------------------------------------------------
# Mass-matrix definiteness
# ---------------------------------------------------------------------------


def a0_min_eigenvalue(a0: np.ndarray) -> float:
    """Smallest eigenvalue over all leading points, by symmetric eigensolve."""
    return float(np.linalg.eigvalsh(a0)[..., 0].min())


def a0_min_eigenvalue_svd(a0: np.ndarray) -> float:
    """Independent smallest-eigenvalue estimate via SVD and Rayleigh quotients.

    For a symmetric matrix the right singular vectors span the eigenspaces
    and the Rayleigh quotient on each recovers the signed eigenvalue.  Exact
    except when two eigenvalues of opposite sign share the same magnitude
    (then the singular subspace may mix them); sweep grids avoid such ties.
    """
    arr = np.asarray(a0, dtype=float)
    _, _, vt = np.linalg.svd(arr)
    v = vt.swapaxes(-1, -2)
    rayleigh = np.einsum("...ji,...jk,...ki->...i", v, arr, v)
    return float(rayleigh.min())


def isotropic_a0_sweep(lams, mus, rho: float = 1.0) -> list[dict]:
    """Scan A0 definiteness over isotropic moduli; the recorded sign pattern
    is positive exactly on lam < mu for admissible moduli."""
    from .tensors import make_isotropic

    records = []
    for lam in lams:
        for mu in mus:
            c = make_isotropic(lam, mu)
            a0 = assemble_A0(c.entries, rho)
            lo = a0_min_eigenvalue(a0)
            lo_ind = a0_min_eigenvalue_svd(a0)
            records.append(
                {
                    "lam": float(lam),
                    "mu": float(mu),
                    "rho": float(rho),
                    "min_eigenvalue": lo,
                    "min_eigenvalue_independent": lo_ind,
                    "positive": bool(lo > 0.0),
                }
            )
    return records

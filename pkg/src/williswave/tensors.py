"""Constitutive fields: stiffness, coupling tensor, density, boundary lift.

Stiffness tensors are stored as dense rank-4 arrays indexed C[i,j,k,l]
(0-based), coupling tensors as rank-3 arrays S[i,j,k].  Construction helpers
fill symmetry-related slots with the same float so the symmetries hold
bitwise, which the assembly-level exactness tests rely on.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .expressions import Expression, as_expression

# index pairs of the symmetric-matrix basis, Voigt order 11 22 33 23 13 12
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))

# the 10 independent entries of a totally symmetric rank-3 tensor (i<=j<=k)
SYMMETRIC10_TRIPLES = (
    (0, 0, 0), (0, 0, 1), (0, 0, 2), (0, 1, 1), (0, 1, 2),
    (0, 2, 2), (1, 1, 1), (1, 1, 2), (1, 2, 2), (2, 2, 2),
)

_PERMS3 = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))

# relative tolerance used when classifying expression-sampled tensors;
# constructed tensors are compared exactly
SAMPLED_RTOL = 1e-12


class DensityError(ValueError):
    """Density violated the positive lower bound."""


# ---------------------------------------------------------------------------
# Elastic tensor
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ElasticTensor:
    """Rank-4 stiffness with major/minor symmetries, entries[i,j,k,l] in Pa."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=float)
        if arr.shape != (3, 3, 3, 3):
            raise ValueError(f"stiffness must be 3x3x3x3, got {arr.shape}")
        object.__setattr__(self, "entries", arr)

    def apply(self, eps: np.ndarray) -> np.ndarray:
        """Contract against a 3x3 tensor: (C.eps)_ij = C_ijkl eps_kl."""
        return np.einsum("ijkl,...kl->...ij", self.entries, eps)


def make_isotropic(lam: float, mu: float) -> ElasticTensor:
    """Isotropic stiffness C_ijkl = lam d_ij d_kl + mu (d_ik d_jl + d_il d_jk)."""
    if mu <= 0.0:
        raise ValueError(f"shear modulus must be positive, got mu={mu}")
    if 3.0 * lam + 2.0 * mu <= 0.0:
        raise ValueError(f"bulk modulus must be positive, got 3*lam+2*mu={3 * lam + 2 * mu}")
    d = np.eye(3)
    c = lam * np.einsum("ij,kl->ijkl", d, d) + mu * (
        np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)
    )
    return ElasticTensor(c)


def mandel_matrix(c: np.ndarray) -> np.ndarray:
    """6x6 representation of C restricted to symmetric arguments.

    Uses the orthonormal basis of Sym(3) (off-diagonal pairs scaled by
    sqrt(2)), so its eigenvalues are exactly the eigenvalues of the map
    eps -> C.eps on Sym(3).
    """
    w = np.array([1.0, 1.0, 1.0, np.sqrt(2.0), np.sqrt(2.0), np.sqrt(2.0)])
    m = np.empty((6, 6))
    for a, (i, j) in enumerate(VOIGT_PAIRS):
        for b, (k, l) in enumerate(VOIGT_PAIRS):
            m[a, b] = w[a] * w[b] * c[i, j, k, l]
    return m


@dataclass(frozen=True)
class ElasticReport:
    """Symmetry violations and the Sym(3) spectrum bound of a stiffness."""

    minor_first_violation: float
    minor_second_violation: float
    major_violation: float
    min_eigenvalue: float
    symmetric: bool
    positive_definite: bool

    @property
    def ok(self) -> bool:
        return self.symmetric and self.positive_definite


def validate_elastic(c: ElasticTensor | np.ndarray, rtol: float = 0.0) -> ElasticReport:
    """Report (never raise) symmetry violations and the minimum Sym(3) eigenvalue.

    rtol=0 compares symmetries exactly, appropriate for constructed tensors;
    pass SAMPLED_RTOL for tensors evaluated from expressions.
    """
    arr = c.entries if isinstance(c, ElasticTensor) else np.asarray(c, dtype=float)
    scale = float(np.max(np.abs(arr))) if arr.size else 0.0
    tol = rtol * scale
    minor1 = float(np.max(np.abs(arr - arr.transpose(1, 0, 2, 3))))
    minor2 = float(np.max(np.abs(arr - arr.transpose(0, 1, 3, 2))))
    major = float(np.max(np.abs(arr - arr.transpose(2, 3, 0, 1))))
    min_eig = float(np.linalg.eigvalsh(mandel_matrix(arr))[0])
    return ElasticReport(
        minor_first_violation=minor1,
        minor_second_violation=minor2,
        major_violation=major,
        min_eigenvalue=min_eig,
        symmetric=max(minor1, minor2, major) <= tol,
        positive_definite=min_eig > 0.0,
    )


def random_elastic(rng: np.random.Generator, scale: float = 1.0) -> ElasticTensor:
    """Random stiffness with exact major/minor symmetries, positive on Sym(3).

    Draws a random symmetric positive definite 6x6 in the orthonormal Sym(3)
    basis and expands it, writing each independent value into every
    symmetry-related slot so the symmetries hold bitwise.
    """
    a = rng.standard_normal((6, 6))
    m = a @ a.T + 0.1 * np.eye(6)
    w = np.array([1.0, 1.0, 1.0, np.sqrt(2.0), np.sqrt(2.0), np.sqrt(2.0)])
    c = np.zeros((3, 3, 3, 3))
    for p, (i, j) in enumerate(VOIGT_PAIRS):
        for q, (k, l) in enumerate(VOIGT_PAIRS):
            v = scale * m[p, q] / (w[p] * w[q])
            for ii, jj in ((i, j), (j, i)):
                for kk, ll in ((k, l), (l, k)):
                    c[ii, jj, kk, ll] = v
                    c[kk, ll, ii, jj] = v
    return ElasticTensor(c)


# ---------------------------------------------------------------------------
# Coupling tensor
# ---------------------------------------------------------------------------

SYMMETRY_NONE = "none"
SYMMETRY_FIRST_PAIR = "first-pair"
SYMMETRY_TOTAL = "totally-symmetric"


@dataclass(frozen=True)
class CouplingTensor:
    """Rank-3 coupling tensor, entries[i,j,k] in Pa*s/m."""

    entries: np.ndarray
    symmetry_status: str = field(init=False)

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=float)
        if arr.shape != (3, 3, 3):
            raise ValueError(f"coupling tensor must be 3x3x3, got {arr.shape}")
        object.__setattr__(self, "entries", arr)
        object.__setattr__(self, "symmetry_status", classify_coupling(arr))


def classify_coupling(s: np.ndarray, tol: float = 0.0) -> str:
    cc1 = float(np.max(np.abs(s - s.transpose(1, 0, 2))))
    cc2 = float(np.max(np.abs(s - s.transpose(1, 2, 0))))
    if cc1 <= tol and cc2 <= tol:
        return SYMMETRY_TOTAL
    if cc1 <= tol:
        return SYMMETRY_FIRST_PAIR
    return SYMMETRY_NONE


@dataclass(frozen=True)
class CouplingReport:
    first_pair_violation: float
    cyclic_violation: float
    symmetry_status: str


def validate_coupling(s: CouplingTensor | np.ndarray, tol: float = 0.0) -> CouplingReport:
    """Report the first-pair and cyclic symmetry violations and classify."""
    arr = s.entries if isinstance(s, CouplingTensor) else np.asarray(s, dtype=float)
    cc1 = float(np.max(np.abs(arr - arr.transpose(1, 0, 2))))
    cc2 = float(np.max(np.abs(arr - arr.transpose(1, 2, 0))))
    return CouplingReport(cc1, cc2, classify_coupling(arr, tol))


def totally_symmetric_coupling(params) -> CouplingTensor:
    """Build a totally symmetric coupling tensor from its 10 free entries.

    ``params`` is a sequence ordered like SYMMETRIC10_TRIPLES, or a mapping
    from (i,j,k) triples (any permutation) to values.  Each value is written
    to all index permutations, so total symmetry holds bitwise.
    """
    s = np.zeros((3, 3, 3))
    if isinstance(params, dict):
        items = {tuple(sorted(k)): float(v) for k, v in params.items()}
        values = [items.get(t, 0.0) for t in SYMMETRIC10_TRIPLES]
    else:
        values = [float(v) for v in params]
        if len(values) != 10:
            raise ValueError(f"need 10 parameters, got {len(values)}")
    for (i, j, k), v in zip(SYMMETRIC10_TRIPLES, values):
        for p in _PERMS3:
            idx = (i, j, k)
            s[idx[p[0]], idx[p[1]], idx[p[2]]] = v
    return CouplingTensor(s)


def random_coupling(rng: np.random.Generator, scale: float = 1.0) -> CouplingTensor:
    """Random totally symmetric coupling tensor."""
    return totally_symmetric_coupling(scale * rng.standard_normal(10))


def strain(g: np.ndarray) -> np.ndarray:
    """Symmetric part of a displacement gradient, eps = (G + G^T)/2."""
    g = np.asarray(g, dtype=float)
    return 0.5 * (g + np.swapaxes(g, -1, -2))


# ---------------------------------------------------------------------------
# Expression-valued material spec
# ---------------------------------------------------------------------------


def _expr_array(shape, fill) -> np.ndarray:
    arr = np.empty(shape, dtype=object)
    arr[...] = fill
    return arr


class MaterialSpec:
    """Density, stiffness, and coupling fields of (x, t) in closed form.

    Every tensor entry is an Expression; symmetry-related entries share the
    same Expression object, so sampled tensors inherit the symmetries
    bitwise and each distinct formula is evaluated once per grid.

    Instances are immutable after construction apart from internal caches of
    derivative expressions; sampling is pure and safe to call concurrently
    once warmed up.
    """

    def __init__(self, rho, elastic_entries: np.ndarray, coupling_entries: np.ndarray):
        self.rho = as_expression(rho)
        self.elastic = np.asarray(elastic_entries, dtype=object)
        self.coupling = np.asarray(coupling_entries, dtype=object)
        if self.elastic.shape != (3, 3, 3, 3):
            raise ValueError("elastic entry array must be 3x3x3x3")
        if self.coupling.shape != (3, 3, 3):
            raise ValueError("coupling entry array must be 3x3x3")

    # -- constructors -----------------------------------------------------

    @classmethod
    def isotropic(cls, lam, mu, rho, coupling_params=None) -> "MaterialSpec":
        """Isotropic stiffness from Lame fields; optional 10-parameter coupling."""
        lam = as_expression(lam)
        mu = as_expression(mu)
        zero = Expression.constant(0.0)
        two_mu = 2.0 * mu
        lam_2mu = lam + two_mu
        c = _expr_array((3, 3, 3, 3), zero)
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    for l in range(3):
                        delta = (i == j) * (k == l), (i == k) * (j == l), (i == l) * (j == k)
                        if delta == (1, 1, 1):
                            c[i, j, k, l] = lam_2mu
                        elif delta[0]:
                            c[i, j, k, l] = lam
                        elif delta[1] or delta[2]:
                            c[i, j, k, l] = mu
        s = cls._coupling_entries(coupling_params)
        return cls(rho, c, s)

    @classmethod
    def general(cls, rho, voigt_entries: dict, coupling_params=None) -> "MaterialSpec":
        """Stiffness from up to 21 Voigt entries {(I,J): expr}, I<=J in 1..6."""
        zero = Expression.constant(0.0)
        c = _expr_array((3, 3, 3, 3), zero)
        for (big_i, big_j), value in voigt_entries.items():
            if not (1 <= big_i <= 6 and 1 <= big_j <= 6):
                raise ValueError(f"Voigt indices must be in 1..6, got {(big_i, big_j)}")
            expr = as_expression(value)
            i, j = VOIGT_PAIRS[big_i - 1]
            k, l = VOIGT_PAIRS[big_j - 1]
            for ii, jj in ((i, j), (j, i)):
                for kk, ll in ((k, l), (l, k)):
                    c[ii, jj, kk, ll] = expr
                    c[kk, ll, ii, jj] = expr
        s = cls._coupling_entries(coupling_params)
        return cls(rho, c, s)

    @staticmethod
    def _coupling_entries(params) -> np.ndarray:
        zero = Expression.constant(0.0)
        s = _expr_array((3, 3, 3), zero)
        if params is None:
            return s
        if isinstance(params, np.ndarray) and params.dtype == object:
            return params
        if isinstance(params, dict):
            items = {tuple(sorted(k)): as_expression(v) for k, v in params.items()}
        else:
            values = list(params)
            if len(values) != 10:
                raise ValueError(f"need 10 coupling parameters, got {len(values)}")
            items = {t: as_expression(v) for t, v in zip(SYMMETRIC10_TRIPLES, values)}
        for (i, j, k), expr in items.items():
            for p in _PERMS3:
                idx = (i, j, k)
                s[idx[p[0]], idx[p[1]], idx[p[2]]] = expr
        return s

    # -- structure queries -------------------------------------------------

    def _unique_exprs(self):
        seen = {}
        for arr in (np.array([self.rho], dtype=object), self.elastic, self.coupling):
            for e in arr.ravel():
                seen[id(e)] = e
        return list(seen.values())

    def constant_in_space(self) -> bool:
        return not any(
            e.depends_on(v) for e in self._unique_exprs() for v in ("x1", "x2", "x3")
        )

    def constant_in_time(self) -> bool:
        return not any(e.depends_on("t") for e in self._unique_exprs())

    def coupling_symmetry(self) -> str:
        """Symmetry class of the coupling field, by expression identity."""
        s = self.coupling
        first = all(s[i, j, k] is s[j, i, k] for i in range(3) for j in range(3) for k in range(3))
        cyclic = all(s[i, j, k] is s[j, k, i] for i in range(3) for j in range(3) for k in range(3))
        if first and cyclic:
            return SYMMETRY_TOTAL
        if first:
            return SYMMETRY_FIRST_PAIR
        return SYMMETRY_NONE

    # -- sampling ----------------------------------------------------------

    def _eval_array(self, exprs: np.ndarray, env_args, cache: dict) -> np.ndarray:
        """Evaluate an object array of expressions, sharing work by identity."""
        x1, x2, x3, t = env_args
        shape = np.broadcast_shapes(
            np.shape(x1), np.shape(x2), np.shape(x3), np.shape(t)
        )
        out = np.empty(shape + exprs.shape, dtype=float)
        flat = out.reshape(shape + (-1,)) if exprs.ndim else out
        for idx, e in enumerate(exprs.ravel()):
            key = id(e)
            if key not in cache:
                cache[key] = np.broadcast_to(np.asarray(e(x1, x2, x3, t), dtype=float), shape)
            flat[..., idx] = cache[key]
        return out

    def _diff_array(self, exprs: np.ndarray, var: str) -> np.ndarray:
        out = np.empty(exprs.shape, dtype=object)
        memo = {}
        for idx, e in np.ndenumerate(exprs):
            key = id(e)
            if key not in memo:
                memo[key] = e.diff(var)
            out[idx] = memo[key]
        return out

    def sample(self, x1, x2, x3, t, order2: bool = False) -> "MaterialSample":
        """Evaluate all fields and first derivatives at points (broadcasting).

        With order2=True the second-order time data needed by the
        time-differentiated operator family is evaluated as well.
        """
        args = (x1, x2, x3, t)
        cache: dict = {}
        rho_arr = np.array([self.rho], dtype=object)
        rho = self._eval_array(rho_arr, args, cache)[..., 0]
        if np.any(rho <= 0.0):
            raise DensityError(f"rho must be positive everywhere, min={np.min(rho)}")
        dt_rho = self._eval_array(self._diff_array(rho_arr, "t"), args, cache)[..., 0]
        c = self._eval_array(self.elastic, args, cache)
        s = self._eval_array(self.coupling, args, cache)
        dt_s = self._eval_array(self._diff_array(self.coupling, "t"), args, cache)
        dc = np.stack(
            [
                self._eval_array(self._diff_array(self.elastic, f"x{j + 1}"), args, cache)
                for j in range(3)
            ],
            axis=-5,
        )
        ds = np.stack(
            [
                self._eval_array(self._diff_array(self.coupling, f"x{j + 1}"), args, cache)
                for j in range(3)
            ],
            axis=-4,
        )
        sample = MaterialSample(
            rho=rho, dt_rho=dt_rho, c=c, dc=dc, s=s, dt_s=dt_s, ds=ds
        )
        if order2:
            rho_t = self._diff_array(rho_arr, "t")
            c_t = self._diff_array(self.elastic, "t")
            s_t = self._diff_array(self.coupling, "t")
            sample.dt_c = self._eval_array(c_t, args, cache)
            sample.dtt_rho = self._eval_array(self._diff_array(rho_t, "t"), args, cache)[..., 0]
            sample.dtt_s = self._eval_array(self._diff_array(s_t, "t"), args, cache)
            sample.dt_dc = np.stack(
                [
                    self._eval_array(self._diff_array(c_t, f"x{j + 1}"), args, cache)
                    for j in range(3)
                ],
                axis=-5,
            )
            sample.dt_ds = np.stack(
                [
                    self._eval_array(self._diff_array(s_t, f"x{j + 1}"), args, cache)
                    for j in range(3)
                ],
                axis=-4,
            )
        return sample


@dataclass
class MaterialSample:
    """All coefficient values and derivatives at sampled points.

    Arrays carry the broadcast point shape in the leading axes; dc and ds
    carry the derivative direction as the first tensor axis, e.g.
    dc[..., j, i, k, l, m] is the x_{j+1} derivative of c[i,k,l,m].
    """

    rho: np.ndarray
    dt_rho: np.ndarray
    c: np.ndarray
    dc: np.ndarray
    s: np.ndarray
    dt_s: np.ndarray
    ds: np.ndarray
    dt_c: np.ndarray | None = None
    dtt_rho: np.ndarray | None = None
    dtt_s: np.ndarray | None = None
    dt_dc: np.ndarray | None = None
    dt_ds: np.ndarray | None = None


def sample_material(spec: MaterialSpec, x, t, order2: bool = False) -> MaterialSample:
    """Sample a material spec at one position and time."""
    x = np.asarray(x, dtype=float)
    return spec.sample(x[0], x[1], x[2], float(t), order2=order2)


def derivative_crosscheck(spec: MaterialSpec, x, t, step: float = 1e-4) -> float:
    """Max relative mismatch of sampled first derivatives vs central differences.

    Cross-check only: the sampled derivatives are exact, the finite
    difference carries an O(step^2) truncation error.
    """
    x = np.asarray(x, dtype=float)
    base = sample_material(spec, x, t)
    scale = max(
        1.0,
        float(np.max(np.abs(base.c))),
        float(np.max(np.abs(base.s))),
        float(abs(base.rho)),
    )
    worst = 0.0

    def relerr(exact, approx):
        return float(np.max(np.abs(exact - approx))) / scale

    for j in range(3):
        dxp = x.copy()
        dxm = x.copy()
        dxp[j] += step
        dxm[j] -= step
        sp = sample_material(spec, dxp, t)
        sm = sample_material(spec, dxm, t)
        worst = max(worst, relerr(base.dc[j], (sp.c - sm.c) / (2 * step)))
        worst = max(worst, relerr(base.ds[j], (sp.s - sm.s) / (2 * step)))
    sp = spec.sample(x[0], x[1], x[2], t + step)
    sm = spec.sample(x[0], x[1], x[2], t - step)
    worst = max(worst, relerr(base.dt_rho, (sp.rho - sm.rho) / (2 * step)))
    worst = max(worst, relerr(base.dt_s, (sp.s - sm.s) / (2 * step)))
    return worst


# ---------------------------------------------------------------------------
# Boundary lift
# ---------------------------------------------------------------------------


@dataclass
class LiftSample:
    """Lift values and the derivatives the source term needs, at (x, t).

    grad[..., j, a] = d u_a / d x_{j+1}; grad2[..., j, k, a] adds a second
    spatial derivative; dt_grad[..., j, a] is the mixed time derivative.
    """

    u: np.ndarray
    dt_u: np.ndarray
    dtt_u: np.ndarray
    grad: np.ndarray
    grad2: np.ndarray
    dt_grad: np.ndarray


class BoundaryLift:
    """Prescribed boundary displacement field, one expression per component."""

    def __init__(self, u1, u2, u3):
        self.components = tuple(as_expression(u) for u in (u1, u2, u3))

    @classmethod
    def zero(cls) -> "BoundaryLift":
        return cls(0.0, 0.0, 0.0)

    def is_zero(self) -> bool:
        return all(e.is_constant and e.constant_value() == 0.0 for e in self.components)

    def constant_in_time(self) -> bool:
        return not any(e.depends_on("t") for e in self.components)

    def sample(self, x1, x2, x3, t) -> LiftSample:
        shape = np.broadcast_shapes(np.shape(x1), np.shape(x2), np.shape(x3), np.shape(t))

        def ev(expr):
            return np.broadcast_to(
                np.asarray(expr(x1, x2, x3, t), dtype=float), shape
            )

        comps = self.components
        u = np.stack([ev(e) for e in comps], axis=-1)
        dt_u = np.stack([ev(e.diff("t")) for e in comps], axis=-1)
        dtt_u = np.stack([ev(e.diff("t").diff("t")) for e in comps], axis=-1)
        grad = np.stack(
            [
                np.stack([ev(e.diff(f"x{j + 1}")) for e in comps], axis=-1)
                for j in range(3)
            ],
            axis=-2,
        )
        grad2 = np.stack(
            [
                np.stack(
                    [
                        np.stack(
                            [ev(e.diff(f"x{j + 1}").diff(f"x{k + 1}")) for e in comps],
                            axis=-1,
                        )
                        for k in range(3)
                    ],
                    axis=-2,
                )
                for j in range(3)
            ],
            axis=-3,
        )
        dt_grad = np.stack(
            [
                np.stack([ev(e.diff(f"x{j + 1}").diff("t")) for e in comps], axis=-1)
                for j in range(3)
            ],
            axis=-2,
        )
        return LiftSample(u=u, dt_u=dt_u, dtt_u=dtt_u, grad=grad, grad2=grad2, dt_grad=dt_grad)


def check_initial_boundary_compatibility(
    u0_values: np.ndarray, lift_values: np.ndarray, scale: float, tol: float = 1e-10
) -> float:
    """Max boundary mismatch |u0 - lift(.,0)|; warns above tol * scale."""
    mismatch = float(np.max(np.abs(u0_values - lift_values))) if u0_values.size else 0.0
    if mismatch > tol * max(scale, 1.0):
        warnings.warn(
            f"initial and boundary data incompatible: max |u0 - lift| = {mismatch:.3e}",
            stacklevel=2,
        )
    return mismatch

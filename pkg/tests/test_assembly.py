import numpy as np
import pytest

from williswave.assembly import (
    BOX_FACE_NORMALS,
    SymmetrizationObstruction,
    a0_min_eigenvalue,
    a0_min_eigenvalue_svd,
    assemble_A0,
    assemble_Ak,
    assemble_Anu,
    assemble_B,
    assemble_Cnu,
    assemble_F,
    assemble_H,
    assemble_M,
    assemble_boundary,
    assemble_point_system,
    assemble_unsymmetrized,
    assemble_w,
    boundary_source_e,
    check_maximal_nonnegative,
    elastic_blocks,
    gradient_matrix9,
    isotropic_a0_sweep,
    kernel_basis,
    symmetrize,
)
from williswave.expressions import Expression
from williswave.state import pack_state
from williswave.tensors import (
    BoundaryLift,
    DensityError,
    MaterialSpec,
    make_isotropic,
    random_coupling,
    random_elastic,
    totally_symmetric_coupling,
)


def blocks_oracle(c):
    """Index-loop reading of the stiffness blocks: block(j,k)[a,b] = C[a,j,b,k]."""
    out = np.empty((3, 3, 3, 3))
    for j in range(3):
        for k in range(3):
            for a in range(3):
                for b in range(3):
                    out[j, k, a, b] = c[a, j, b, k]
    return out


class TestElasticBlocks:
    def test_isotropic_diagonal_block(self):
        bs = elastic_blocks(make_isotropic(0.0, 0.5))
        assert np.array_equal(bs.block(0, 0), np.diag([1.0, 0.5, 0.5]))

    def test_isotropic_offdiagonal_blocks_are_transposes(self):
        lam, mu = 0.7, 1.3
        bs = elastic_blocks(make_isotropic(lam, mu))
        expected = np.array([[0.0, lam, 0.0], [mu, 0.0, 0.0], [0.0, 0.0, 0.0]])
        assert np.array_equal(bs.block(0, 1), expected)
        assert np.array_equal(bs.block(1, 0), expected.T)

    def test_zero_tensor_blocks(self):
        bs = elastic_blocks(np.zeros((3, 3, 3, 3)))
        for j in range(3):
            for k in range(3):
                assert np.max(np.abs(bs.block(j, k))) == 0.0

    def test_blocks_match_index_loop_oracle(self, rng):
        c = random_elastic(rng).entries
        ora = blocks_oracle(c)
        bs = elastic_blocks(c)
        for j in range(3):
            for k in range(3):
                assert np.array_equal(bs.block(j, k), ora[j, k])

    def test_matrix9_layout_and_symmetry(self, rng):
        c = random_elastic(rng).entries
        q = gradient_matrix9(c)
        for p in range(3):
            for a in range(3):
                for qq in range(3):
                    for b in range(3):
                        assert q[3 * p + a, 3 * qq + b] == c[a, qq, b, p]
        assert np.array_equal(q, q.T)


class TestMassMatrix:
    def test_zero_stiffness_is_flagged_singular(self):
        a0 = assemble_A0(np.zeros((3, 3, 3, 3)), 1.0)
        expected = np.zeros((15, 15))
        expected[9:12, 9:12] = np.eye(3)
        expected[12:15, 12:15] = np.eye(3)
        assert np.array_equal(a0, expected)
        assert a0_min_eigenvalue(a0) == pytest.approx(0.0, abs=1e-15)

    def test_isotropic_block_layout(self):
        c = make_isotropic(0.0, 0.5)
        a0 = assemble_A0(c.entries, 2.0)
        assert np.array_equal(a0[9:12, 9:12], 2.0 * np.eye(3))
        assert np.array_equal(a0[:9, :9], elastic_blocks(c).matrix9())

    def test_exact_symmetry_over_random_draws(self, rng):
        for _ in range(100):
            c = random_elastic(rng)
            a0 = assemble_A0(c.entries, float(rng.uniform(0.5, 3.0)))
            assert np.max(np.abs(a0 - a0.T)) == 0.0

    def test_rejects_nonpositive_density(self):
        with pytest.raises(DensityError):
            assemble_A0(make_isotropic(1.0, 1.0).entries, 0.0)

    def test_isotropic_spectrum_pattern(self):
        # gradient-block eigenvalues are {lam+4mu, lam+mu (x5), mu-lam (x3)}
        for lam, mu in ((0.25, 1.0), (0.9, 1.0), (1.5, 1.0)):
            a0 = assemble_A0(make_isotropic(lam, mu).entries, 1.0)
            eigs = np.linalg.eigvalsh(a0[:9, :9])
            expected = np.sort([lam + 4 * mu] + [lam + mu] * 5 + [mu - lam] * 3)
            assert np.allclose(eigs, expected, atol=1e-12)

    def test_definiteness_sweep_and_independent_oracle(self):
        recs = isotropic_a0_sweep([-0.25, 0.25, 0.75, 1.1, 1.5], [1.0], rho=1.0)
        for r in recs:
            assert abs(r["min_eigenvalue"] - r["min_eigenvalue_independent"]) <= 1e-10 * max(
                1.0, abs(r["min_eigenvalue"])
            )
            assert r["positive"] == (r["lam"] < r["mu"])


class TestFluxMatrices:
    def test_zero_stiffness_leaves_identity_block(self):
        for k in (1, 2, 3):
            ak = assemble_Ak(np.zeros((3, 3, 3, 3)), k)
            expected = np.zeros((15, 15))
            expected[12:15, 12:15] = np.eye(3)
            assert np.array_equal(ak, expected)

    def test_isotropic_velocity_coupling_block(self):
        lam, mu = 0.8, 1.1
        a1 = assemble_Ak(make_isotropic(lam, mu).entries, 1)
        assert np.array_equal(a1[0:3, 9:12], -np.diag([lam + 2 * mu, mu, mu]))

    def test_exact_symmetry_over_random_draws(self, rng):
        for _ in range(100):
            c = random_elastic(rng).entries
            for k in (1, 2, 3):
                ak = assemble_Ak(c, k)
                assert np.max(np.abs(ak - ak.T)) == 0.0

    def test_momentum_rows_match_index_loop(self, rng):
        c = random_elastic(rng).entries
        for k in (1, 2, 3):
            ak = assemble_Ak(c, k)
            for a in range(3):
                for j in range(3):
                    for b in range(3):
                        assert ak[9 + a, 3 * j + b] == -c[a, j, b, k - 1]


class TestAntisymmetricResidues:
    def test_totally_symmetric_coupling_vanishes(self, rng):
        f = assemble_F(random_coupling(rng).entries)
        assert np.max(np.abs(f)) == 0.0

    def test_first_pair_residue_entry(self):
        s = np.zeros((3, 3, 3))
        s[0, 1, 0] = s[1, 0, 0] = 1.0  # first-pair symmetric only
        f = assemble_F(s)
        # F_1[1,2] (1-based) = S_121 - S_112
        assert f[0, 0, 1] == s[0, 1, 0] - s[0, 0, 1]
        assert f[0, 0, 1] == 1.0

    def test_zero_coupling(self):
        assert np.max(np.abs(assemble_F(np.zeros((3, 3, 3))))) == 0.0


class TestSymmetrization:
    def test_unsymmetrized_mass_matrix(self):
        un = assemble_unsymmetrized(np.zeros((3, 3, 3, 3)), 3.0, np.zeros((3, 3, 3)))
        expected = np.eye(15)
        expected[9:12, 9:12] *= 3.0
        assert np.array_equal(un.a0, expected)

    def test_unsymmetrized_fluxes_not_symmetric(self, rng):
        c = random_elastic(rng).entries
        un = assemble_unsymmetrized(c, 1.0, np.zeros((3, 3, 3)))
        assert np.max(np.abs(un.ak[0] - un.ak[0].T)) > 0.0

    def test_totally_symmetric_coupling_leaves_zero_residue_blocks(self, rng):
        c = random_elastic(rng).entries
        s = random_coupling(rng).entries
        un = assemble_unsymmetrized(c, 1.0, s)
        for ak in un.ak:
            assert np.max(np.abs(ak[9:12, 9:12])) == 0.0

    def test_row_operations_reproduce_direct_assembly_bitwise(self, rng):
        for _ in range(100):
            c = random_elastic(rng).entries
            rho = float(rng.uniform(0.5, 2.0))
            s = random_coupling(rng).entries
            un = assemble_unsymmetrized(c, rho, s)
            sym = symmetrize(un, c)
            assert np.array_equal(sym.a0, assemble_A0(c, rho))
            for k in (1, 2, 3):
                assert np.array_equal(sym.ak[k - 1], assemble_Ak(c, k))

    def test_transform_is_identity_on_non_gradient_rows(self, rng):
        c = random_elastic(rng).entries
        un = assemble_unsymmetrized(c, 1.0, np.zeros((3, 3, 3)))
        sym = symmetrize(un, c)
        assert np.array_equal(sym.transform[9:, 9:], np.eye(6))
        assert np.array_equal(sym.transform[:9, :9], gradient_matrix9(c))

    def test_zero_stiffness_transform(self):
        un = assemble_unsymmetrized(np.zeros((3, 3, 3, 3)), 2.0, np.zeros((3, 3, 3)))
        sym = symmetrize(un, np.zeros((3, 3, 3, 3)))
        assert np.array_equal(sym.a0, assemble_A0(np.zeros((3, 3, 3, 3)), 2.0))
        assert np.array_equal(sym.a0[9:, 9:], un.a0[9:, 9:])

    def test_obstruction_reported_with_entries(self, rng):
        c = random_elastic(rng).entries
        s = np.zeros((3, 3, 3))
        s[0, 1, 0] = s[1, 0, 0] = 1.0
        un = assemble_unsymmetrized(c, 1.0, s)
        with pytest.raises(SymmetrizationObstruction, match="F1"):
            symmetrize(un, c)


def constant_sample(spec=None, **overrides):
    spec = spec or MaterialSpec.isotropic(0.5, 1.0, 1.0, coupling_params=[0.1] * 10)
    sample = spec.sample(0.0, 0.0, 0.0, 0.0)
    for key, value in overrides.items():
        setattr(sample, key, value)
    return sample


def b_oracle(sample):
    """Index-loop assembly of B straight from its block definitions."""
    b = np.zeros((15, 15))
    for i in range(3):
        for k in range(3):
            for l in range(3):
                div_c = sum(sample.dc[j, i, j, k, l] for j in range(3))
                b[9 + i, 3 * k + l] = sample.dt_s[k, l, i] - div_c
            div_s = sum(sample.ds[j, i, j, k] for j in range(3))
            b[9 + i, 9 + k] = -div_s + (sample.dt_rho if i == k else 0.0)
    for a in range(3):
        b[12 + a, 9 + a] = -1.0
        for j in range(3):
            b[12 + a, 3 * j + a] = -1.0
    return b


class TestZerothOrderMatrix:
    def test_constant_coefficients_leave_compatibility_rows_only(self):
        b = assemble_B(constant_sample())
        assert np.max(np.abs(b[0:12, :])) == 0.0
        for a in range(3):
            assert b[12 + a, 9 + a] == -1.0
            for j in range(3):
                assert b[12 + a, 3 * j + a] == -1.0

    def test_time_varying_density_enters_velocity_diagonal(self):
        # moving the dt(rho) dt(u) term of the displacement equation across
        # the equals sign puts +dt_rho on the velocity diagonal; the
        # equivalence test below pins the sign against the physics
        sample = constant_sample(dt_rho=np.asarray(1.0))
        b = assemble_B(sample)
        for a in range(3):
            assert b[9 + a, 9 + a] == 1.0

    def test_matches_index_loop_oracle_exactly(self):
        spec = MaterialSpec.isotropic(
            "0.4 + 0.05*x1^2", "1 + 0.1*x2^2", "1.5 + 0.2*x3^2 + 0.1*t^2",
            coupling_params=[f"0.0{d}*(x1 + x2 - t)^2" for d in range(1, 11)],
        )
        sample = spec.sample(0.3, -0.2, 0.5, 0.4)
        assert np.array_equal(assemble_B(sample), b_oracle(sample))


class TestVelocityEliminatedStiffness:
    def test_zero_coupling_returns_stiffness(self, rng):
        c = random_elastic(rng).entries
        assert np.array_equal(assemble_H(c, np.zeros((3, 3, 3)), 1.0), c)

    def test_single_coupling_entry(self):
        s = np.zeros((3, 3, 3))
        s[0, 0, 0] = 1.0
        h = assemble_H(np.zeros((3, 3, 3, 3)), s, 1.0)
        assert h[0, 0, 0, 0] == -1.0
        assert np.sum(np.abs(h)) == 1.0

    def test_matches_index_loop(self, rng):
        c = random_elastic(rng).entries
        s = random_coupling(rng).entries
        rho = 1.7
        h = assemble_H(c, s, rho)
        ora = np.empty_like(c)
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    for l in range(3):
                        ora[i, j, k, l] = c[i, j, k, l] - sum(
                            s[i, j, m] * s[k, l, m] for m in range(3)
                        ) / rho
        # bit-level association of the m-sum may differ between einsum and
        # the loop; the entries themselves agree to rounding
        scale = float(np.max(np.abs(ora)))
        assert np.max(np.abs(h - ora)) <= 1e-14 * scale

    def test_rejects_nonpositive_density(self):
        with pytest.raises(DensityError):
            assemble_H(np.zeros((3, 3, 3, 3)), np.zeros((3, 3, 3)), -1.0)


def e_oracle(lift_sample, sample):
    """Term-by-term loop evaluation of the lift forcing."""
    rho_e = np.zeros(3)
    for i in range(3):
        for j in range(3):
            for k in range(3):
                for l in range(3):
                    rho_e[i] -= sample.c[i, j, k, l] * lift_sample.grad2[j, k, l]
                    rho_e[i] -= sample.dc[j, i, j, k, l] * lift_sample.grad[k, l]
                rho_e[i] -= sample.ds[j, i, j, k] * lift_sample.dt_u[k]
                rho_e[i] += (sample.s[j, k, i] - sample.s[i, j, k]) * lift_sample.dt_grad[j, k]
        for k in range(3):
            for l in range(3):
                rho_e[i] += sample.dt_s[k, l, i] * lift_sample.grad[k, l]
        rho_e[i] += sample.dt_rho * lift_sample.dt_u[i]
        rho_e[i] += sample.rho * lift_sample.dtt_u[i]
    return rho_e / sample.rho


class TestBoundaryForcing:
    def test_zero_lift_gives_zero(self):
        sample = constant_sample()
        ls = BoundaryLift.zero().sample(0.1, 0.2, 0.3, 0.4)
        assert np.max(np.abs(boundary_source_e(ls, sample))) == 0.0

    def test_rigid_time_drift_gives_zero(self):
        # constant coefficients, totally symmetric coupling, lift (t, 0, 0)
        sample = constant_sample()
        ls = BoundaryLift("t", "0", "0").sample(0.1, 0.2, 0.3, 0.4)
        assert np.max(np.abs(boundary_source_e(ls, sample))) == 0.0

    def test_polynomial_case_matches_loop_oracle(self):
        spec = MaterialSpec.isotropic(
            "0.5 + 0.1*x1^2", "1 + 0.05*x2^2", "2 + 0.2*x3^2 + 0.1*t",
            coupling_params=["0.1*(x1 - t)^2"] * 10,
        )
        sample = spec.sample(0.2, -0.3, 0.4, 0.6)
        lift = BoundaryLift("0.1*x1^2*t", "0.2*x2*x3", "0.05*t^2*x1")
        ls = lift.sample(0.2, -0.3, 0.4, 0.6)
        e = boundary_source_e(ls, sample)
        ora = e_oracle(ls, sample)
        scale = max(1.0, float(np.max(np.abs(ora))))
        assert np.max(np.abs(e - ora)) <= 1e-13 * scale

    def test_source_vector_layout(self):
        sample = constant_sample(rho=np.asarray(2.0))
        w = assemble_w(sample, np.array([1.0, 0.0, 0.0]))
        assert w[9] == -2.0
        assert np.max(np.abs(w[:9])) == 0.0
        assert np.max(np.abs(w[12:])) == 0.0
        assert np.max(np.abs(w[10:12])) == 0.0

    def test_zero_forcing_gives_zero_vector(self):
        w = assemble_w(constant_sample(), np.zeros(3))
        assert np.max(np.abs(w)) == 0.0


class TestSecondOrderEquivalence:
    """The assembled first-order rows must reproduce the displacement
    equation for arbitrary variable coefficients; this pins every sign."""

    @staticmethod
    def exact_jets(u_exprs, x, t):
        env = (x[0], x[1], x[2], t)
        grad = np.array(
            [[u_exprs[a].diff(f"x{j + 1}")(*env) for a in range(3)] for j in range(3)]
        )
        vel = np.array([u_exprs[a].diff("t")(*env) for a in range(3)])
        disp = np.array([u_exprs[a](*env) for a in range(3)])
        v = pack_state(grad, vel, disp)
        dt_grad = np.array(
            [[u_exprs[a].diff(f"x{j + 1}").diff("t")(*env) for a in range(3)] for j in range(3)]
        )
        dtt = np.array([u_exprs[a].diff("t").diff("t")(*env) for a in range(3)])
        dt_v = pack_state(dt_grad, dtt, vel)
        dk_v = []
        for k in range(3):
            xk = f"x{k + 1}"
            g = np.array(
                [[u_exprs[a].diff(f"x{j + 1}").diff(xk)(*env) for a in range(3)] for j in range(3)]
            )
            vv = np.array([u_exprs[a].diff("t").diff(xk)(*env) for a in range(3)])
            dd = np.array([u_exprs[a].diff(xk)(*env) for a in range(3)])
            dk_v.append(pack_state(g, vv, dd))
        return v, dt_v, dk_v

    def test_velocity_rows_equal_displacement_operator(self, rng):
        spec = MaterialSpec.isotropic(
            "0.4 + 0.1*sin(x1)*cos(t)", "1 + 0.2*cos(x2)", "1.5 + 0.3*sin(x3 + t)",
            coupling_params=[f"{c:.3f}*(1 + 0.5*sin(x{1 + i % 3} - t))"
                             for i, c in enumerate(rng.normal(size=10) * 0.2)],
        )
        u_exprs = tuple(
            Expression.parse(s)
            for s in (
                "0.3*sin(x1)*cos(2*x2)*sin(x3)*cos(t)",
                "0.2*cos(x1)*sin(x2)*sin(x3)*sin(2*t)",
                "0.1*sin(2*x1)*sin(x2)*cos(x3)*cos(3*t)",
            )
        )
        for _ in range(5):
            x = rng.uniform(-1, 1, size=3)
            t = float(rng.uniform(0, 1))
            sample = spec.sample(x[0], x[1], x[2], t)
            a0 = assemble_A0(sample.c, sample.rho)
            aks = [assemble_Ak(sample.c, k) for k in (1, 2, 3)]
            b = assemble_B(sample)
            v, dt_v, dk_v = self.exact_jets(u_exprs, x, t)
            lv = a0 @ dt_v + sum(aks[k] @ dk_v[k] for k in range(3)) + b @ v
            # compatibility rows vanish identically
            assert np.max(np.abs(lv[:9])) <= 1e-13
            assert np.max(np.abs(lv[12:])) <= 1e-13
            # velocity rows reproduce the displacement equation
            env = (x[0], x[1], x[2], t)
            dtt_u = np.array([u_exprs[a].diff("t").diff("t")(*env) for a in range(3)])
            dt_u = np.array([u_exprs[a].diff("t")(*env) for a in range(3)])
            grad = np.array(
                [[u_exprs[a].diff(f"x{j + 1}")(*env) for a in range(3)] for j in range(3)]
            )
            grad2 = np.array(
                [
                    [[u_exprs[a].diff(f"x{j + 1}").diff(f"x{k + 1}")(*env) for a in range(3)]
                     for k in range(3)]
                    for j in range(3)
                ]
            )
            div_c = np.einsum("jijkl->ikl", sample.dc)
            expected = sample.rho * dtt_u
            expected -= np.einsum("ijkl,jkl->i", sample.c, grad2)
            expected -= np.einsum("ikl,kl->i", div_c - np.einsum("kli->ikl", sample.dt_s), grad)
            expected -= np.einsum("jijk,k->i", sample.ds, dt_u)
            expected += sample.dt_rho * dt_u
            scale = max(1.0, float(np.max(np.abs(expected))))
            assert np.max(np.abs(lv[9:12] - expected)) <= 1e-12 * scale


class TestBoundaryAnalysis:
    def test_axis_normal_zeroes_other_block_rows(self):
        c = make_isotropic(0.6, 1.0).entries
        cnu = assemble_Cnu(c, (1.0, 0.0, 0.0))
        assert np.max(np.abs(cnu[3:9, :])) == 0.0
        assert np.linalg.matrix_rank(cnu) <= 3
        assert kernel_basis(cnu).shape[1] >= 6

    def test_zero_stiffness_flux_structure(self):
        aks = [assemble_Ak(np.zeros((3, 3, 3, 3)), k) for k in (1, 2, 3)]
        nu = np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)
        anu = assemble_Anu(aks, nu)
        expected = np.zeros((15, 15))
        expected[12:15, 12:15] = np.sum(nu) * np.eye(3)
        assert np.allclose(anu, expected, atol=1e-15)

    def test_kernel_characterizations_on_faces(self, rng):
        for c in (make_isotropic(0.5, 1.0).entries, random_elastic(rng).entries):
            aks = [assemble_Ak(c, k) for k in (1, 2, 3)]
            for nu in BOX_FACE_NORMALS:
                bp = assemble_boundary(c, aks, nu)
                report = check_maximal_nonnegative(bp)
                assert report.anu_kernel_residual <= 1e-10
                assert report.m_kernel_residual <= 1e-10
                assert 0 < report.dim_ker_anu < 15

    def test_flux_form_vanishes_on_constraint_kernel(self):
        c = make_isotropic(0.5, 1.0).entries
        aks = [assemble_Ak(c, k) for k in (1, 2, 3)]
        bp = assemble_boundary(c, aks, (1.0, 0.0, 0.0))
        report = check_maximal_nonnegative(bp)
        assert report.quad_max_abs <= 1e-10
        assert report.quad_min >= -1e-10

    def test_zero_stiffness_constraint_kernel(self):
        c = np.zeros((3, 3, 3, 3))
        m = assemble_M(c, (1.0, 0.0, 0.0))
        ker = kernel_basis(m)
        assert ker.shape[1] == 12  # everything with vanishing displacement block
        assert np.max(np.abs(ker[12:15, :])) <= 1e-12

    def test_dimension_constant_across_faces(self):
        c = make_isotropic(0.5, 1.0).entries
        aks = [assemble_Ak(c, k) for k in (1, 2, 3)]
        dims = [
            check_maximal_nonnegative(assemble_boundary(c, aks, nu)).dim_ker_cnu
            for nu in BOX_FACE_NORMALS
        ]
        assert len(set(dims)) == 1

    def test_rejects_non_unit_normal(self):
        c = make_isotropic(0.5, 1.0).entries
        aks = [assemble_Ak(c, k) for k in (1, 2, 3)]
        with pytest.raises(ValueError):
            assemble_boundary(c, aks, (1.0, 1.0, 0.0))


class TestPointSystem:
    def test_assembles_and_reports_min_eigenvalue(self):
        spec = MaterialSpec.isotropic(0.5, 1.0, 1.0, coupling_params=[0.05] * 10)
        ps = assemble_point_system(spec, np.array([0.1, 0.2, 0.3]), 0.0)
        assert ps.a0.shape == (15, 15)
        assert ps.min_eigenvalue() == pytest.approx(0.5, rel=1e-12)
        assert np.max(np.abs(ps.w)) == 0.0

    def test_lift_forcing_enters_w(self):
        spec = MaterialSpec.isotropic(0.5, 1.0, 1.0)
        lift = BoundaryLift("0.1*x1^2", "0", "0")
        ps = assemble_point_system(spec, np.array([0.2, 0.0, 0.0]), 0.0, lift)
        assert np.max(np.abs(ps.w[9:12])) > 0.0


def test_independent_min_eigenvalue_oracle(rng):
    for _ in range(20):
        c = random_elastic(rng).entries
        a0 = assemble_A0(c, float(rng.uniform(0.5, 2.0)))
        lo = a0_min_eigenvalue(a0)
        lo_svd = a0_min_eigenvalue_svd(a0)
        assert abs(lo - lo_svd) <= 1e-10 * max(1.0, abs(lo))

import itertools
import math

import numpy as np
import pytest

from williswave.expressions import Expression
from williswave.tensors import (
    BoundaryLift,
    CouplingTensor,
    DensityError,
    MaterialSpec,
    SYMMETRIC10_TRIPLES,
    derivative_crosscheck,
    make_isotropic,
    mandel_matrix,
    random_coupling,
    random_elastic,
    sample_material,
    strain,
    totally_symmetric_coupling,
    validate_coupling,
    validate_elastic,
)


class TestElasticValidation:
    def test_isotropic_unit_moduli_spectrum(self):
        # eigenvalues of the Sym(3) map are {3*lam + 2*mu, 2*mu (x5)}
        rep = validate_elastic(make_isotropic(1.0, 1.0))
        assert rep.minor_first_violation == 0.0
        assert rep.minor_second_violation == 0.0
        assert rep.major_violation == 0.0
        assert rep.min_eigenvalue == pytest.approx(2.0, rel=1e-12)
        eigs = np.linalg.eigvalsh(mandel_matrix(make_isotropic(1.0, 1.0).entries))
        assert eigs[-1] == pytest.approx(5.0, rel=1e-12)
        assert rep.positive_definite

    def test_zero_tensor_flagged_not_positive(self):
        rep = validate_elastic(np.zeros((3, 3, 3, 3)))
        assert rep.symmetric
        assert rep.min_eigenvalue == 0.0
        assert not rep.positive_definite

    def test_constructed_minor_violation_reported(self):
        c = make_isotropic(1.0, 1.0).entries.copy()
        c[0, 1, 0, 0] = c[1, 0, 0, 0] + 1.0
        rep = validate_elastic(c)
        assert rep.minor_first_violation == pytest.approx(1.0)
        assert not rep.symmetric

    def test_positive_definiteness_certificate(self, rng):
        # <C.eps, eps> >= min_eigenvalue * |eps|^2 over 1000 random symmetric eps
        c = random_elastic(rng)
        rep = validate_elastic(c)
        for _ in range(1000):
            g = rng.standard_normal((3, 3))
            eps = 0.5 * (g + g.T)
            quad = float(np.einsum("ijkl,ij,kl->", c.entries, eps, eps))
            assert quad >= rep.min_eigenvalue * float(np.sum(eps**2)) - 1e-10

    def test_symmetrized_application_identity(self, rng):
        # minor symmetries make C.sym(G) equal C.G for any gradient
        c = random_elastic(rng)
        for _ in range(20):
            g = rng.standard_normal((3, 3))
            via_sym = c.apply(0.5 * (g + g.T))
            via_full = np.einsum("ijkl,kl->ij", c.entries, g)
            scale = max(1.0, float(np.max(np.abs(via_full))))
            assert np.max(np.abs(via_sym - via_full)) <= 1e-13 * scale


class TestIsotropicConstruction:
    def test_entries_lambda0_mu_half(self):
        c = make_isotropic(0.0, 0.5).entries
        assert c[0, 0, 0, 0] == 1.0
        assert c[1, 0, 0, 1] == 0.5
        assert c[0, 0, 1, 1] == 0.0

    def test_entries_unit_moduli(self):
        c = make_isotropic(1.0, 1.0).entries
        assert c[0, 0, 1, 1] == 1.0
        assert c[0, 1, 0, 1] == 1.0

    def test_rejects_inadmissible_moduli(self):
        with pytest.raises(ValueError):
            make_isotropic(1.0, -1.0)
        with pytest.raises(ValueError):
            make_isotropic(-1.0, 1.0)  # 3*lam + 2*mu = -1

    def test_passes_validation(self):
        rep = validate_elastic(make_isotropic(2.0, 0.7))
        assert rep.symmetric and rep.positive_definite


class TestCouplingValidation:
    def test_all_ones_is_totally_symmetric(self):
        rep = validate_coupling(np.ones((3, 3, 3)))
        assert rep.symmetry_status == "totally-symmetric"
        assert rep.first_pair_violation == 0.0
        assert rep.cyclic_violation == 0.0
        assert len(SYMMETRIC10_TRIPLES) == 10

    def test_symmetrized_seed_has_no_violation(self, rng):
        s = totally_symmetric_coupling(rng.standard_normal(10)).entries
        # brute force over all 27 triples and all 6 permutations
        for i, j, k in itertools.product(range(3), repeat=3):
            for p in itertools.permutations((i, j, k)):
                assert s[i, j, k] == s[p]
        rep = validate_coupling(s)
        assert rep.first_pair_violation == 0.0
        assert rep.cyclic_violation == 0.0

    def test_single_entry_violates_both(self):
        s = np.zeros((3, 3, 3))
        s[0, 1, 2] = 1.0
        rep = validate_coupling(s)
        assert rep.first_pair_violation == pytest.approx(1.0)
        assert rep.cyclic_violation == pytest.approx(1.0)
        assert rep.symmetry_status == "none"

    def test_first_pair_only_classification(self):
        s = np.zeros((3, 3, 3))
        s[0, 1, 0] = s[1, 0, 0] = 1.0
        rep = validate_coupling(s)
        assert rep.first_pair_violation == 0.0
        assert rep.cyclic_violation > 0.0
        assert rep.symmetry_status == "first-pair"

    def test_coupling_tensor_records_status(self, rng):
        assert random_coupling(rng).symmetry_status == "totally-symmetric"
        t = CouplingTensor(np.arange(27.0).reshape(3, 3, 3))
        assert t.symmetry_status == "none"

    def test_params_mapping_any_permutation(self):
        t = totally_symmetric_coupling({(2, 0, 1): 3.5})
        assert t.entries[0, 1, 2] == 3.5
        assert t.entries[2, 1, 0] == 3.5


class TestStrain:
    def test_identity(self):
        assert np.array_equal(strain(np.eye(3)), np.eye(3))

    def test_skew_gives_zero(self):
        g = np.array([[0.0, 1.0, -2.0], [-1.0, 0.0, 0.5], [2.0, -0.5, 0.0]])
        assert np.max(np.abs(strain(g))) == 0.0

    def test_single_offdiagonal(self):
        g = np.zeros((3, 3))
        g[0, 1] = 1.0
        eps = strain(g)
        assert eps[0, 1] == 0.5 and eps[1, 0] == 0.5
        assert np.sum(np.abs(eps)) == 1.0


class TestMaterialSampling:
    def test_constant_spec_has_zero_derivatives(self):
        spec = MaterialSpec.isotropic(1.0, 1.0, 1.0, coupling_params=[0.2] * 10)
        s = sample_material(spec, (0.3, -0.1, 0.7), 1.2)
        assert s.dt_rho == 0.0
        assert np.max(np.abs(s.dc)) == 0.0
        assert np.max(np.abs(s.ds)) == 0.0
        assert np.max(np.abs(s.dt_s)) == 0.0

    def test_density_space_and_time_derivatives(self):
        spec = MaterialSpec.isotropic(1.0, 1.0, "2 + sin(x1)")
        s = sample_material(spec, (0.0, 0.0, 0.0), 0.0)
        assert s.rho == pytest.approx(2.0)
        d = spec.rho.diff("x1")(0.0, 0.0, 0.0, 0.0)
        assert d == pytest.approx(1.0)
        assert s.dt_rho == 0.0

    def test_polynomial_derivatives_match_central_differences(self):
        spec = MaterialSpec.isotropic(
            "0.5 + 0.1*x1^2*x2", "1 + 0.05*x3^2 + 0.02*t^2", "2 + 0.3*x1*x2*x3 + 0.1*t",
            coupling_params=["0.1*(x1 + t)^2"] * 10,
        )
        worst = derivative_crosscheck(spec, (0.3, -0.4, 0.5), 0.7, step=1e-4)
        assert worst <= 1e-6

    def test_derivative_mismatch_is_second_order_in_step(self):
        spec = MaterialSpec.isotropic("0.5 + 0.2*sin(x1)", 1.0, "2 + cos(x2)*sin(t)")
        m1 = derivative_crosscheck(spec, (0.3, -0.4, 0.5), 0.7, step=2e-3)
        m2 = derivative_crosscheck(spec, (0.3, -0.4, 0.5), 0.7, step=1e-3)
        order = math.log2(m1 / m2)
        assert order >= 1.9

    def test_nonpositive_density_signals(self):
        spec = MaterialSpec.isotropic(1.0, 1.0, "x1")
        with pytest.raises(DensityError):
            sample_material(spec, (-0.5, 0.0, 0.0), 0.0)

    def test_grid_sampling_shares_unique_expressions(self):
        spec = MaterialSpec.isotropic(0.5, 1.0, 1.0)
        x = np.linspace(-1, 1, 4)
        s = spec.sample(x[:, None, None], x[None, :, None], x[None, None, :], 0.0)
        assert s.c.shape == (4, 4, 4, 3, 3, 3, 3)
        assert np.all(s.c[..., 0, 0, 0, 0] == 2.5)

    def test_constant_flags(self):
        assert MaterialSpec.isotropic(1, 1, 1).constant_in_space()
        assert MaterialSpec.isotropic(1, 1, 1).constant_in_time()
        assert not MaterialSpec.isotropic("1 + 0.1*x1", 1, 1).constant_in_space()
        assert not MaterialSpec.isotropic(1, 1, "1 + 0.1*t").constant_in_time()

    def test_coupling_symmetry_by_identity(self):
        spec = MaterialSpec.isotropic(1, 1, 1, coupling_params=["0.1*sin(t)"] * 10)
        assert spec.coupling_symmetry() == "totally-symmetric"


class TestBoundaryLift:
    def test_zero_lift(self):
        lift = BoundaryLift.zero()
        assert lift.is_zero()
        s = lift.sample(0.1, 0.2, 0.3, 0.4)
        for arr in (s.u, s.dt_u, s.dtt_u, s.grad, s.grad2, s.dt_grad):
            assert np.max(np.abs(arr)) == 0.0

    def test_derivative_layout(self):
        lift = BoundaryLift("x1*x2*t", "0", "x3^2")
        s = lift.sample(1.0, 2.0, 3.0, 4.0)
        assert s.u[0] == pytest.approx(8.0)
        assert s.grad[0, 0] == pytest.approx(2.0 * 4.0)  # d(u_1)/dx1 = x2*t
        assert s.grad[1, 0] == pytest.approx(1.0 * 4.0)  # d(u_1)/dx2 = x1*t
        assert s.grad[2, 2] == pytest.approx(6.0)  # d(u_3)/dx3 = 2*x3
        assert s.dt_grad[0, 0] == pytest.approx(2.0)  # d2(u_1)/dx1 dt = x2
        assert s.grad2[2, 2, 2] == pytest.approx(2.0)
        assert s.dtt_u[0] == 0.0

    def test_general_expression_against_symbolic(self):
        lift = BoundaryLift("sin(x1)*cos(t)", "x2^2*t", "exp(x3/2)")
        e = Expression.parse("sin(x1)*cos(t)")
        s = lift.sample(0.3, 0.5, -0.2, 0.9)
        assert s.dt_u[0] == pytest.approx(e.diff("t")(0.3, 0.5, -0.2, 0.9))
        assert s.grad[0, 0] == pytest.approx(e.diff("x1")(0.3, 0.5, -0.2, 0.9))

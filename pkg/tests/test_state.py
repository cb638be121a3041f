import numpy as np
import pytest

from williswave.assembly import assemble_A0, assemble_Ak, assemble_B
from williswave.expressions import Expression
from williswave.grid import Grid, derivative
from williswave.state import (
    InitialData,
    compatibility_sequence,
    gradient_consistency,
    initial_state,
    pack_state,
    recover_fields,
    sigma_from_constitutive,
    unpack_state,
)
from williswave.tensors import BoundaryLift, MaterialSpec, strain


class TestPacking:
    def test_zero(self):
        v = pack_state(np.zeros((3, 3)), np.zeros(3), np.zeros(3))
        assert np.array_equal(v, np.zeros(15))

    def test_displacement_components(self):
        v = pack_state(np.zeros((3, 3)), np.zeros(3), np.array([1.0, 2.0, 3.0]))
        assert np.array_equal(v[12:15], [1.0, 2.0, 3.0])
        assert np.max(np.abs(v[:12])) == 0.0

    def test_gradient_ordering(self):
        # d_2 u_3 sits at position 6 (1-based), i.e. index 5
        g = np.zeros((3, 3))
        g[1, 2] = 7.0
        v = pack_state(g, np.zeros(3), np.zeros(3))
        assert v[5] == 7.0
        assert np.sum(np.abs(v)) == 7.0

    def test_roundtrip_on_basis_vectors(self):
        for i in range(15):
            v = np.zeros(15)
            v[i] = 1.0
            grad, vel, disp = unpack_state(v)
            assert np.array_equal(pack_state(grad, vel, disp), v)

    def test_field_shapes(self, rng):
        grad = rng.standard_normal((4, 5, 6, 3, 3))
        vel = rng.standard_normal((4, 5, 6, 3))
        disp = rng.standard_normal((4, 5, 6, 3))
        v = pack_state(grad, vel, disp)
        assert v.shape == (4, 5, 6, 15)
        g2, v2, d2 = unpack_state(v)
        assert np.array_equal(g2, grad) and np.array_equal(v2, vel) and np.array_equal(d2, disp)


def point_coords(x):
    return (np.asarray(x[0]), np.asarray(x[1]), np.asarray(x[2]))


class TestInitialState:
    def test_zero_data_gives_zero_state(self):
        spec = MaterialSpec.isotropic(0.5, 1.0, 1.0, coupling_params=[0.1] * 10)
        v = initial_state(InitialData.zero(), BoundaryLift.zero(), spec, point_coords((0.1, 0.2, 0.3)))
        assert np.max(np.abs(v)) == 0.0

    def test_momentum_to_velocity_conversion(self):
        # no coupling, no lift, rho = 2, mu0 = (2,0,0) -> velocity (1,0,0)
        spec = MaterialSpec.isotropic(0.5, 1.0, 2.0)
        data = InitialData(u0=("0", "0", "0"), mu0=("2", "0", "0"))
        v = initial_state(data, BoundaryLift.zero(), spec, point_coords((0.0, 0.0, 0.0)))
        assert np.array_equal(v[9:12], [1.0, 0.0, 0.0])
        assert np.max(np.abs(v[:9])) == 0.0 and np.max(np.abs(v[12:])) == 0.0

    def test_polynomial_data_matches_loop_oracle(self):
        spec = MaterialSpec.isotropic(0.4, 1.1, "2 + 0.3*x1", coupling_params=[0.12] * 10)
        lift = BoundaryLift("0.1*x1^2 + 0.02*t", "0.05*x2*x3", "0.03*x3^2*t")
        data = InitialData(
            u0=("0.1*x1^2", "0.2*x1*x2", "0.05*x3^2"),
            mu0=("0.3*x2", "0.1*x1", "0.2*x3"),
        )
        x = (0.3, -0.2, 0.5)
        v = initial_state(data, lift, spec, point_coords(x))
        # loop oracle reading the initial-vector definition literally
        sample = spec.sample(*x, 0.0)
        ls = lift.sample(*x, 0.0)
        u0 = np.array([e(*x, 0.0) for e in data.u0])
        mu0 = np.array([e(*x, 0.0) for e in data.mu0])
        grad_u0 = np.array([[data.u0[a].diff(f"x{j+1}")(*x, 0.0) for a in range(3)] for j in range(3)])
        expected = np.empty(15)
        for j in range(3):
            for a in range(3):
                expected[3 * j + a] = grad_u0[j, a] - ls.grad[j, a]
        for i in range(3):
            coupling = sum(
                sample.s[i, k, l] * (grad_u0[k, l] + ls.grad[k, l])
                for k in range(3)
                for l in range(3)
            )
            expected[9 + i] = (mu0[i] - coupling) / sample.rho - ls.dt_u[i]
            expected[12 + i] = u0[i] - ls.u[i]
        scale = max(1.0, float(np.max(np.abs(expected))))
        assert np.max(np.abs(v - expected)) <= 1e-13 * scale

    def test_incompatible_boundary_data_warns(self):
        spec = MaterialSpec.isotropic(0.5, 1.0, 1.0)
        grid = Grid(cells=(8, 8, 8), mode="box")
        data = InitialData(u0=("1 + x1^2", "0", "0"), mu0=("0", "0", "0"))
        with pytest.warns(UserWarning, match="incompatible"):
            initial_state(data, BoundaryLift.zero(), spec, grid.meshgrid(), grid)

    def test_compatible_boundary_data_does_not_warn(self, recwarn):
        spec = MaterialSpec.isotropic(0.5, 1.0, 1.0)
        grid = Grid(cells=(8, 8, 8), mode="box")
        bump = "sin(pi*(x1 + 1)/2)^2 * sin(pi*(x2 + 1)/2)^2 * sin(pi*(x3 + 1)/2)^2"
        data = InitialData(u0=(bump, "0", "0"), mu0=("0", "0", "0"))
        initial_state(data, BoundaryLift.zero(), spec, grid.meshgrid(), grid)
        assert not any("incompatible" in str(w.message) for w in recwarn.list)


class TestRecovery:
    def test_zero_state(self):
        spec = MaterialSpec.isotropic(0.5, 1.0, 1.0, coupling_params=[0.1] * 10)
        sample = spec.sample(0.0, 0.0, 0.0, 0.0)
        rec = recover_fields(np.zeros(15), sample)
        for arr in (rec.u, rec.dt_u, rec.eps, rec.sigma, rec.mu):
            assert np.max(np.abs(arr)) == 0.0

    def test_elastic_limit_recovers_constitutive_stress(self, rng):
        spec = MaterialSpec.isotropic(0.7, 1.2, 1.0)
        sample = spec.sample(0.0, 0.0, 0.0, 0.0)
        v = rng.standard_normal(15)
        rec = recover_fields(v, sample)
        hooke = np.einsum("ijkl,kl->ij", sample.c, rec.eps)
        assert np.allclose(rec.sigma, hooke, rtol=0, atol=1e-14 * np.max(np.abs(hooke)))

    def test_two_route_stress_consistency(self, rng):
        # velocity-eliminated route equals the constitutive route identically
        spec = MaterialSpec.isotropic(0.5, 1.0, 1.3, coupling_params=(0.2 * rng.standard_normal(10)).tolist())
        sample = spec.sample(0.0, 0.0, 0.0, 0.0)
        for _ in range(50):
            v = rng.standard_normal(15)
            rec = recover_fields(v, sample)
            direct = sigma_from_constitutive(sample, rec.eps, rec.dt_u)
            scale = max(1.0, float(np.max(np.abs(direct))))
            assert np.max(np.abs(rec.sigma - direct)) <= 1e-12 * scale

    def test_lift_enters_all_fields(self):
        spec = MaterialSpec.isotropic(0.5, 1.0, 1.0)
        lift = BoundaryLift("0.1*x1", "0.2*t", "0")
        x = (0.4, 0.0, 0.0)
        sample = spec.sample(*x, 0.5)
        ls = lift.sample(*x, 0.5)
        rec = recover_fields(np.zeros(15), sample, ls)
        assert rec.u[0] == pytest.approx(0.04)
        assert rec.dt_u[1] == pytest.approx(0.2)
        assert rec.eps[0, 0] == pytest.approx(0.1)
        assert rec.mu[1] == pytest.approx(0.2)  # rho * dt_u

    def test_stress_is_symmetric(self, rng):
        spec = MaterialSpec.isotropic(0.5, 1.0, 1.0, coupling_params=(0.3 * rng.standard_normal(10)).tolist())
        sample = spec.sample(0.0, 0.0, 0.0, 0.0)
        v = rng.standard_normal(15)
        rec = recover_fields(v, sample)
        assert np.allclose(rec.sigma, np.swapaxes(rec.sigma, -1, -2), atol=1e-13)


class TestGradientConsistency:
    def test_smooth_state_converges_at_scheme_order(self):
        # non-separable phases so the two discrete derivative symbols differ
        spec_u = [
            Expression.parse(s)
            for s in ("sin(x1 + 2*x2)", "cos(x2 - 2*x3)", "sin(x3 + 2*x1)")
        ]
        errs = []
        for n in (12, 24):
            grid = Grid(cells=(n, n, n), lo=(-np.pi,) * 3, hi=(np.pi,) * 3)
            x1, x2, x3 = grid.meshgrid()
            grad = np.stack(
                [
                    np.stack([np.broadcast_to(e.diff(f"x{j+1}")(x1, x2, x3, 0.0), x1.shape) for e in spec_u], axis=-1)
                    for j in range(3)
                ],
                axis=-2,
            )
            disp = np.stack([np.broadcast_to(e(x1, x2, x3, 0.0), x1.shape) for e in spec_u], axis=-1)
            v = pack_state(grad, np.zeros_like(disp), disp)
            errs.append(gradient_consistency(v, grid, order=2))
        order = np.log2(errs[0] / errs[1])
        assert order >= 1.9


class TestCompatibilitySequence:
    def test_zero_data_zero_jets(self):
        spec = MaterialSpec.isotropic(0.5, 1.0, 1.0, coupling_params=[0.1] * 10)
        grid = Grid(cells=(8, 8, 8), mode="box")
        v0 = np.zeros(grid.cells + (15,))
        seq = compatibility_sequence(v0, spec, grid, s=2)
        assert all(np.max(np.abs(f)) == 0.0 for f in seq.fields)
        assert all(r == 0.0 for r in seq.residuals)

    def test_first_jet_matches_operator_formula(self, rng):
        spec = MaterialSpec.isotropic(0.5, 1.0, 1.0, coupling_params=[0.1] * 10)
        grid = Grid(cells=(8, 8, 8), mode="box")
        x1, x2, x3 = grid.meshgrid()
        bump = Expression.parse("sin(pi*(x1 + 1)/2)^2 * sin(pi*(x2 + 1)/2)^2 * sin(pi*(x3 + 1)/2)^2")
        field = np.broadcast_to(bump(x1, x2, x3, 0.0), x1.shape)
        v0 = np.zeros(grid.cells + (15,))
        v0[..., 12] = field
        v0[..., 9] = 0.3 * field
        seq = compatibility_sequence(v0, spec, grid, s=2)
        sample = spec.sample(0.0, 0.0, 0.0, 0.0)
        a0_inv = np.linalg.inv(assemble_A0(sample.c, sample.rho))
        expected = -(assemble_B(sample) @ v0[..., None])[..., 0]
        for k in (1, 2, 3):
            ak = assemble_Ak(sample.c, k)
            expected -= (ak @ derivative(v0, grid, k - 1, 2)[..., None])[..., 0]
        expected = (a0_inv @ expected[..., None])[..., 0]
        assert np.allclose(seq.fields[1], expected, atol=1e-13)

    def test_compatible_data_residuals_shrink_with_refinement(self):
        spec = MaterialSpec.isotropic(0.5, 1.0, 1.0, coupling_params=[0.05] * 10)
        maxima = []
        for n in (9, 17):
            grid = Grid(cells=(n, n, n), mode="box")
            x1, x2, x3 = grid.meshgrid()
            bump = Expression.parse(
                "sin(pi*(x1 + 1)/2)^4 * sin(pi*(x2 + 1)/2)^4 * sin(pi*(x3 + 1)/2)^4"
            )
            grad = np.stack(
                [np.broadcast_to(bump.diff(f"x{j+1}")(x1, x2, x3, 0.0), x1.shape) for j in range(3)],
                axis=-1,
            )
            v0 = np.zeros(grid.cells + (15,))
            v0[..., 0:9:3] = grad  # gradient of component 1 in the three slots
            v0[..., 12] = np.broadcast_to(bump(x1, x2, x3, 0.0), x1.shape)
            seq = compatibility_sequence(v0, spec, grid, s=2)
            maxima.append(max(seq.residuals))
        assert maxima[1] < 0.5 * maxima[0]

    def test_incompatible_data_residual_order_one(self):
        spec = MaterialSpec.isotropic(0.5, 1.0, 1.0)
        grid = Grid(cells=(9, 9, 9), mode="box")
        v0 = np.zeros(grid.cells + (15,))
        v0[..., 12] = 1.0  # displacement does not vanish on the boundary
        seq = compatibility_sequence(v0, spec, grid, s=1)
        assert seq.residuals[0] >= 1.0

    def test_requires_box_grid(self):
        spec = MaterialSpec.isotropic(0.5, 1.0, 1.0)
        grid = Grid(cells=(8, 8, 8), mode="periodic")
        with pytest.raises(ValueError):
            compatibility_sequence(np.zeros(grid.cells + (15,)), spec, grid, s=1)

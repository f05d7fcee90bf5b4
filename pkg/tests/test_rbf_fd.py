import numpy as np
import pytest

from _mms import observed_order, poisson_neumann_error
from volt.geometry import DomainSpec, GradingPolicy, Hole, generate_nodes
from volt.rbf_fd import (
    FDConfig,
    StencilError,
    assemble_operator,
    build_stencils,
    class_block,
    local_weights,
)


@pytest.fixture(scope="module")
def ball_nodes():
    dom = DomainSpec(1.0, ())
    return generate_nodes(dom, 0.14, GradingPolicy(h_max=0.14), seed=0)


@pytest.fixture(scope="module")
def holed_nodes():
    dom = DomainSpec(1.0, (Hole((0.3, 0.3, 0.3), 0.15),))
    return generate_nodes(dom, 0.0375, GradingPolicy(h_max=0.14, ratio=1.3, collar=1.0), seed=1)


def random_polynomial(rng, ell):
    """Coefficients for all monomials of total degree <= ell."""
    from volt.rbf_fd import _monomial_powers

    powers = _monomial_powers(ell)
    coef = rng.standard_normal(len(powers))
    return powers, coef


def poly_eval(powers, coef, x):
    out = np.zeros(len(x))
    for (a, b, c), w in zip(powers, coef):
        out += w * x[:, 0] ** a * x[:, 1] ** b * x[:, 2] ** c
    return out


def poly_lap(powers, coef, x):
    out = np.zeros(len(x))
    for (a, b, c), w in zip(powers, coef):
        p = (a, b, c)
        for k in range(3):
            if p[k] >= 2:
                q = list(p)
                q[k] -= 2
                out += w * p[k] * (p[k] - 1) * x[:, 0] ** q[0] * x[:, 1] ** q[1] * x[:, 2] ** q[2]
    return out


def poly_grad(powers, coef, x):
    out = np.zeros((len(x), 3))
    for (a, b, c), w in zip(powers, coef):
        p = (a, b, c)
        for k in range(3):
            if p[k] >= 1:
                q = list(p)
                q[k] -= 1
                out[:, k] += w * p[k] * x[:, 0] ** q[0] * x[:, 1] ** q[1] * x[:, 2] ** q[2]
    return out


class TestFDConfig:
    def test_stencil_sizes(self):
        assert (FDConfig(xi=1).M, FDConfig(xi=1).n) == (10, 22)
        assert (FDConfig(xi=4).M, FDConfig(xi=4).n) == (56, 116)
        assert (FDConfig(xi=3).M, FDConfig(xi=3).n) == (35, 74)

    def test_delta_defaults(self):
        assert FDConfig(xi=2).delta == 0.7
        assert FDConfig(xi=4).delta == 0.5

    def test_phs_exponent_default_is_odd(self):
        for xi in range(1, 5):
            assert FDConfig(xi=xi).m % 2 == 1

    def test_even_m_rejected(self):
        with pytest.raises(ValueError):
            FDConfig(xi=2, m=4)


class TestBuildStencils:
    def test_ball_cover_is_exact(self, ball_nodes):
        cfg = FDConfig(xi=2)
        stencils = build_stencils(ball_nodes, cfg)
        seen = np.concatenate([s.ball for s in stencils])
        row_nodes = np.concatenate(
            [ball_nodes.interior_indices, ball_nodes.boundary_indices]
        )
        assert len(seen) == len(set(seen))
        assert set(seen) == set(row_nodes)

    def test_center_in_own_ball(self, ball_nodes):
        for s in build_stencils(ball_nodes, FDConfig(xi=2)):
            assert s.center in s.ball
            assert set(s.ball) <= set(s.neighbors)

    def test_delta_one_gives_one_stencil_per_node(self, ball_nodes):
        stencils = build_stencils(ball_nodes, FDConfig(xi=2, delta=1.0))
        n_rows = len(ball_nodes.interior_indices) + len(ball_nodes.boundary_indices)
        assert len(stencils) == n_rows

    def test_ghosts_are_never_centers(self, ball_nodes):
        ghost = set(ball_nodes.ghost_indices)
        for s in build_stencils(ball_nodes, FDConfig(xi=2)):
            assert s.center not in ghost


class TestPolynomialReproduction:
    @pytest.mark.parametrize("xi", [1, 2, 3])
    def test_laplacian_exact_on_polynomials(self, ball_nodes, xi):
        cfg = FDConfig(xi=xi)
        stencils = build_stencils(ball_nodes, cfg)
        L = assemble_operator(ball_nodes, stencils, "laplacian", cfg)
        rng = np.random.default_rng(xi)
        powers, coef = random_polynomial(rng, cfg.ell)
        x = ball_nodes.points
        rows = np.concatenate([ball_nodes.interior_indices, ball_nodes.boundary_indices])
        got = (L @ poly_eval(powers, coef, x))[rows]
        want = poly_lap(powers, coef, x[rows])
        scale = max(1.0, np.abs(want).max())
        assert np.abs(got - want).max() / scale < 1e-8

    @pytest.mark.parametrize("xi", [1, 2, 3])
    def test_normal_derivative_exact_on_polynomials(self, ball_nodes, xi):
        cfg = FDConfig(xi=xi)
        stencils = build_stencils(ball_nodes, cfg)
        D = assemble_operator(ball_nodes, stencils, "normal_derivative", cfg)
        rng = np.random.default_rng(10 + xi)
        powers, coef = random_polynomial(rng, cfg.ell)
        x = ball_nodes.points
        bnd = ball_nodes.boundary_indices
        got = (D @ poly_eval(powers, coef, x))[bnd]
        want = np.einsum(
            "ij,ij->i", poly_grad(powers, coef, x[bnd]), ball_nodes.normals[bnd]
        )
        scale = max(1.0, np.abs(want).max())
        assert np.abs(got - want).max() / scale < 1e-8

    def test_laplacian_rows_sum_to_zero(self, ball_nodes):
        cfg = FDConfig(xi=2)
        L = assemble_operator(ball_nodes, build_stencils(ball_nodes, cfg), "laplacian", cfg)
        rows = np.concatenate([ball_nodes.interior_indices, ball_nodes.boundary_indices])
        assert np.abs(np.asarray(L[rows].sum(axis=1))).max() < 1e-8

    def test_normal_derivative_identity_on_spheres(self, holed_nodes):
        # f = |x|^2 / 2 has normal derivative x . nu on any surface.
        cfg = FDConfig(xi=2)
        D = assemble_operator(holed_nodes, build_stencils(holed_nodes, cfg), "normal_derivative", cfg)
        x = holed_nodes.points
        f = 0.5 * np.einsum("ij,ij->i", x, x)
        got = D @ f
        outer = holed_nodes.outer_boundary_indices
        assert np.abs(got[outer] - 1.0).max() < 1e-8
        inner = holed_nodes.inner_boundary_indices(0)
        want = np.einsum("ij,ij->i", x[inner], holed_nodes.normals[inner])
        assert np.abs(got[inner] - want).max() < 1e-8


class TestLocalWeights:
    def test_constant_annihilated(self, ball_nodes):
        cfg = FDConfig(xi=2)
        s = build_stencils(ball_nodes, cfg)[0]
        w = local_weights(ball_nodes, s, "laplacian", cfg)
        assert np.abs(w.sum(axis=1)).max() < 1e-10

    def test_norm_squared_maps_to_six(self, ball_nodes):
        cfg = FDConfig(xi=2)
        s = build_stencils(ball_nodes, cfg)[0]
        w = local_weights(ball_nodes, s, "laplacian", cfg)
        f = np.einsum("ij,ij->i", ball_nodes.points, ball_nodes.points)
        assert w @ f[s.neighbors] == pytest.approx(np.full(len(s.ball), 6.0), rel=1e-9)

    def test_unknown_operator_rejected(self, ball_nodes):
        cfg = FDConfig(xi=2)
        s = build_stencils(ball_nodes, cfg)[0]
        with pytest.raises(ValueError):
            local_weights(ball_nodes, s, "gradient", cfg)


class TestManufacturedSolution:
    @pytest.mark.parametrize("xi", [2, 3])
    def test_convergence_order(self, xi):
        hs = [0.3, 0.21, 0.15]
        errs = [poisson_neumann_error(h, FDConfig(xi=xi), seed=2) for h in hs]
        assert observed_order(hs, errs) >= xi - 0.5

    def test_overlap_matches_classical(self):
        # delta < 1 and delta = 1 should give errors within 2x at fixed h.
        e_overlap = poisson_neumann_error(0.2, FDConfig(xi=2), seed=5)
        e_classic = poisson_neumann_error(0.2, FDConfig(xi=2, delta=1.0), seed=5)
        assert 0.5 <= e_overlap / e_classic <= 2.0


class TestClassBlocks:
    def test_block_shapes(self, ball_nodes):
        cfg = FDConfig(xi=1)
        L = assemble_operator(ball_nodes, build_stencils(ball_nodes, cfg), "laplacian", cfg)
        ni = len(ball_nodes.interior_indices)
        nb = len(ball_nodes.boundary_indices)
        ng = len(ball_nodes.ghost_indices)
        assert class_block(L, ball_nodes, "i", "i").shape == (ni, ni)
        assert class_block(L, ball_nodes, "i", "g").shape == (ni, ng)
        assert class_block(L, ball_nodes, "b", "b").shape == (nb, nb)

    def test_ghost_rows_empty(self, ball_nodes):
        cfg = FDConfig(xi=1)
        L = assemble_operator(ball_nodes, build_stencils(ball_nodes, cfg), "laplacian", cfg)
        assert class_block(L, ball_nodes, "g", "i").nnz == 0

"""FEM laboratory: assembly oracles, reduced solves, conditioning."""

import math

import numpy as np
import pytest

from modnudge import condlab as cl


class TestMesh:
    def test_uniform_nodes(self):
        mesh = cl.Mesh1D.uniform(4)
        assert np.allclose(mesh.nodes, [0.0, 0.25, 0.5, 0.75, 1.0])
        assert mesh.is_uniform

    def test_rejects_bad_span(self):
        with pytest.raises(ValueError, match="span"):
            cl.Mesh1D(np.array([0.0, 0.5, 0.9]))

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError, match="increasing"):
            cl.Mesh1D(np.array([0.0, 0.6, 0.4, 1.0]))


class TestAssembly:
    def test_fine_mass_is_the_textbook_tridiagonal(self):
        n = 8
        h = 1.0 / n
        mh = cl.assemble(n, 4, "nested-linear", 1.0).mh.toarray()
        assert np.allclose(np.diag(mh), 2 * h / 3, atol=1e-15)
        assert np.allclose(np.diag(mh, 1), h / 6, atol=1e-15)
        assert np.max(np.abs(mh - mh.T)) < 1e-14

    def test_coarse_equal_fine_couples_as_the_mass_matrix(self):
        ops = cl.assemble(10, 10, "nested-linear", 3.0)
        assert np.max(np.abs(ops.b - ops.mh.toarray())) < 1e-14

    def test_piecewise_constant_coupling_on_same_mesh(self):
        # each hat splits h/2 into the two cells it straddles
        n = 6
        h = 1.0 / n
        ops = cl.assemble(n, n, "piecewise-constant", 1.0)
        want = np.zeros((n - 1, n))
        for i in range(n - 1):
            want[i, i] = want[i, i + 1] = h / 2
        assert np.max(np.abs(ops.b - want)) < 1e-15

    def test_piecewise_constant_column_sums_are_hat_integrals(self):
        # row sum over cells = integral of the hat = h
        n, m = 24, 8
        ops = cl.assemble(n, m, "piecewise-constant", 1.0)
        assert np.allclose(ops.b.sum(axis=1), 1.0 / n, atol=1e-15)

    def test_coarse_mass_kinds(self):
        nested = cl.assemble(16, 4, "nested-linear", 1.0)
        assert np.allclose(np.diag(nested.mH.toarray()), 2 / (3 * 4), atol=1e-15)
        flat = cl.assemble(16, 4, "piecewise-constant", 1.0)
        assert np.allclose(flat.mH.toarray(), np.eye(4) / 4, atol=1e-15)

    def test_nested_requires_divisibility(self):
        with pytest.raises(ValueError, match="multiple"):
            cl.assemble(10, 3, "nested-linear", 1.0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="coarse kind"):
            cl.assemble(8, 4, "chebyshev", 1.0)


class TestReducedOperator:
    def test_zero_gain_is_the_mass_matrix(self):
        rng = np.random.default_rng(0)
        ops = cl.assemble(20, 5, "nested-linear", 0.0)
        c = rng.standard_normal(ops.dim)
        assert np.allclose(cl.reduced_apply(ops, c), ops.mh @ c, atol=1e-15)

    def test_nullspace_of_coupling_sees_only_the_mass(self):
        rng = np.random.default_rng(1)
        ops = cl.assemble(30, 5, "nested-linear", 40.0)
        c = rng.standard_normal(ops.dim)
        # remove the components B^T sees
        q, _ = np.linalg.qr(ops.b)
        c -= q @ (q.T @ c)
        assert np.max(np.abs(ops.b.T @ c)) < 1e-12
        assert np.allclose(cl.reduced_apply(ops, c), ops.mh @ c, atol=1e-11)

    @pytest.mark.parametrize("kind,m", [("nested-linear", 8), ("piecewise-constant", 13)])
    def test_matches_dense_oracle(self, kind, m):
        rng = np.random.default_rng(2)
        ops = cl.assemble(96, m, kind, 75.0)
        dense = cl.dense_matrix(ops)
        for _ in range(5):
            c = rng.standard_normal(ops.dim)
            want = dense @ c
            got = cl.reduced_apply(ops, c)
            assert np.max(np.abs(got - want)) < 1e-11 * np.max(np.abs(want))

    def test_symmetry_on_random_pairs(self):
        rng = np.random.default_rng(3)
        ops = cl.assemble(64, 16, "piecewise-constant", 500.0)
        for _ in range(5):
            c, d = rng.standard_normal((2, ops.dim))
            lhs = float(cl.reduced_apply(ops, c) @ d)
            rhs = float(c @ cl.reduced_apply(ops, d))
            assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


class TestAnalysisSolve:
    def test_zero_gain_returns_vtilde(self):
        rng = np.random.default_rng(4)
        ops = cl.assemble(32, 8, "nested-linear", 0.0)
        vt = rng.standard_normal(ops.dim)
        v = cl.solve_step2_fem(ops, vt, rng.standard_normal(ops.dim))
        assert np.max(np.abs(v - vt)) < 1e-11

    def test_nested_solve_equals_gain_formula(self):
        # exact identity; the solve tolerance is tightened so CG noise
        # (which scales with cond ~ k chi) stays under the assertion
        rng = np.random.default_rng(5)
        for k_chi in (1.0, 25.0, 1e3):
            ops = cl.assemble(64, 8, "nested-linear", k_chi)
            vt, u = rng.standard_normal((2, ops.dim))
            vi = cl.solve_step2_fem(ops, vt, u, tol=1e-13)
            ve = cl.explicit_update_fem(ops, vt, u)
            assert cl.mass_norm(ops, vi - ve) < 1e-10

    def test_non_nested_solve_deviates(self):
        rng = np.random.default_rng(6)
        ops = cl.assemble(64, 16, "piecewise-constant", 25.0)
        vt, u = rng.standard_normal((2, ops.dim))
        vi = cl.solve_step2_fem(ops, vt, u)
        ve = cl.explicit_update_fem(ops, vt, u)
        assert cl.mass_norm(ops, vi - ve) > 1e-4

    def test_solve_satisfies_the_linear_system(self):
        rng = np.random.default_rng(7)
        ops = cl.assemble(50, 10, "piecewise-constant", 300.0)
        vt, u = rng.standard_normal((2, ops.dim))
        v = cl.solve_step2_fem(ops, vt, u)
        lhs = cl.reduced_apply(ops, v)
        rhs = ops.mh @ vt + ops.k_chi * (ops.b @ ops.coarse_solve(ops.b.T @ u))
        assert np.linalg.norm(lhs - rhs) < 1e-10 * np.linalg.norm(rhs)


class TestProjection:
    def test_idempotent_exactly_when_nested(self):
        rng = np.random.default_rng(8)
        nested = cl.assemble(48, 8, "nested-linear", 10.0)
        assert cl.idempotency_defect(nested, rng) < 1e-10
        flat = cl.assemble(48, 16, "piecewise-constant", 10.0)
        assert cl.idempotency_defect(flat, rng) > 1e-4

    def test_deviation_scales_linearly_in_coarse_width(self):
        fit = cl.deviation_sweep(128, [8, 16, 32], 10.0)
        assert np.all(np.diff(fit.deviations) < 0)  # shrinks with H
        assert fit.ratios.max() / fit.ratios.min() < 4.0  # C roughly constant
        assert fit.c_fit == pytest.approx(fit.ratios.max())
        assert np.all(fit.deviations <= fit.c_fit * fit.h_values * fit.deviations[0] /
                      (fit.ratios[0] * fit.h_values[0]) + 1e-12)


class TestConditioning:
    def test_mass_matrix_condition_closed_form(self):
        n = 40
        ops = cl.assemble(n, 4, "nested-linear", 0.0)
        est = cl.dense_condition(ops)
        analytic = (2 + math.cos(math.pi / n)) / (2 - math.cos(math.pi / n))
        assert est.cond == pytest.approx(analytic, rel=1e-12)
        assert est.cond < 3.0

    def test_lanczos_matches_dense_oracle(self):
        ops = cl.assemble(100, 10, "nested-linear", 100.0)
        lz = cl.estimate_condition(ops, method="lanczos")
        dn = cl.dense_condition(ops)
        assert abs(lz.cond - dn.cond) / dn.cond < 1e-6

    def test_power_engine_cross_checks_lanczos(self):
        ops = cl.assemble(40, 8, "nested-linear", 10.0)
        pw = cl.estimate_condition(ops, method="power")
        dn = cl.dense_condition(ops)
        assert abs(pw.cond - dn.cond) / dn.cond < 1e-5

    def test_growth_tracks_the_gain_linearly(self):
        rows = cl.condition_sweep(64, 8, "nested-linear", [1.0, 10.0, 100.0])
        conds = [r.cond for r in rows]
        assert conds == sorted(conds)  # nondecreasing in k chi
        ratios = [r.cond_ratio for r in rows]
        assert max(ratios) / min(ratios) < 5.0

    def test_dimension_cap(self):
        with pytest.raises(ValueError, match="cap"):
            cl.assemble(6000, 10, "piecewise-constant", 1.0)

    def test_unknown_method(self):
        ops = cl.assemble(16, 4, "nested-linear", 1.0)
        with pytest.raises(ValueError, match="lanczos"):
            cl.estimate_condition(ops, method="qr")

"""LQT tests: Riccati vs parallel scan, element algebra against a numeric
minimization oracle, trajectory recovery, cost transform, condensing, KKT."""

import numpy as np
import pytest

from tempo_dp import lqt
from tempo_dp.errors import SolverError

from helpers import max_value_dev, random_lqt_element, random_lqt_problem


def scalar_problem(N=1, F=1.0, L=1.0, c=0.0, H=1.0, X=1.0, r=0.0, U=1.0, x0=1.0,
                   HT=1.0, XT=1.0, rT=0.0):
    one = np.ones((N, 1, 1))
    vec = np.ones((N, 1))
    return lqt.LqtProblem(
        S=0, T=N, x0=[x0],
        F=F * one, c=c * vec, L=L * one, H=H * one, X=X * one, r=r * vec, U=U * one,
        HT=[[HT]], XT=[[XT]], rT=[rT],
    )


class TestRiccatiBackward:
    def test_scalar_hand_example(self):
        p = scalar_problem()
        values, gains = lqt.riccati_backward(p)
        assert values[1].S[0, 0] == pytest.approx(1.0)
        assert values[1].v[0] == pytest.approx(0.0)
        assert gains[0].K[0, 0] == pytest.approx(0.5)
        assert values[0].S[0, 0] == pytest.approx(1.5)
        assert values[0].v[0] == pytest.approx(0.0)

    def test_zero_stage_weight_ignores_stage_reference(self):
        rng = np.random.default_rng(0)
        p = random_lqt_problem(rng, n_x=3, n_u=2, N=6)
        pz = lqt.LqtProblem(
            S=0, T=p.N, x0=p.x0, F=p.F, c=p.c, L=p.L, H=p.H,
            X=np.zeros_like(p.X), r=p.r, U=p.U, HT=p.HT, XT=p.XT, rT=p.rT,
        )
        pz2 = lqt.LqtProblem(
            S=0, T=p.N, x0=p.x0, F=p.F, c=p.c, L=p.L, H=p.H,
            X=np.zeros_like(p.X), r=p.r + 5.0, U=p.U, HT=p.HT, XT=p.XT, rT=p.rT,
        )
        va, _ = lqt.riccati_backward(pz)
        vb, _ = lqt.riccati_backward(pz2)
        assert max_value_dev(va, vb) == 0.0

    def test_singular_normal_matrix_reports_step(self):
        p = scalar_problem(N=3)
        U = p.U.copy()
        L = p.L.copy()
        U[1] = 0.0
        L[1] = 0.0
        bad = lqt.LqtProblem(S=0, T=3, x0=p.x0, F=p.F, c=p.c, L=L, H=p.H,
                             X=p.X, r=p.r, U=U, HT=p.HT, XT=p.XT, rT=p.rT)
        with pytest.raises(SolverError, match="step 1"):
            lqt.riccati_backward(bad)

    def test_rejects_general_cost(self):
        rng = np.random.default_rng(1)
        p = random_lqt_problem(rng, N=4, cross=True)
        with pytest.raises(ValueError, match="transform_general_cost"):
            lqt.riccati_backward(p)


class TestElements:
    def test_scalar_stage_element(self):
        p = scalar_problem(N=2)
        e = lqt.make_lqt_elements(p)[0]
        for got, want in zip((e.A, e.b, e.C, e.eta, e.J), (1, 0, 1, 0, 1)):
            assert float(np.asarray(got).ravel()[0]) == pytest.approx(want)

    def test_zero_reference_zero_eta(self):
        rng = np.random.default_rng(2)
        p = random_lqt_problem(rng, N=5)
        pz = lqt.LqtProblem(S=0, T=5, x0=p.x0, F=p.F, c=p.c, L=p.L, H=p.H, X=p.X,
                            r=np.zeros_like(p.r), U=p.U, HT=p.HT, XT=p.XT,
                            rT=np.zeros_like(p.rT))
        for e in lqt.make_lqt_elements(pz):
            assert np.all(e.eta == 0)

    def test_zero_weight_pure_dynamics(self):
        p = scalar_problem(N=1, X=0.0)
        e = lqt.make_lqt_elements(p)[0]
        assert e.J[0, 0] == 0.0 and e.eta[0] == 0.0

    def test_terminal_element(self):
        p = scalar_problem(N=1, HT=2.0, XT=3.0, rT=4.0)
        e = lqt.make_lqt_elements(p)[-1]
        assert e.J[0, 0] == pytest.approx(2.0 * 3.0 * 2.0)
        assert e.eta[0] == pytest.approx(2.0 * 3.0 * 4.0)  # includes the XT factor
        assert np.all(e.A == 0) and np.all(e.b == 0) and np.all(e.C == 0)

    def test_singular_u_rejected(self):
        p = scalar_problem(N=2)
        U = p.U.copy()
        U[0] = 0.0
        bad = lqt.LqtProblem(S=0, T=2, x0=p.x0, F=p.F, c=p.c, L=p.L, H=p.H,
                             X=p.X, r=p.r, U=U, HT=p.HT, XT=p.XT, rT=p.rT)
        with pytest.raises(SolverError, match="factorization failed at step 0"):
            lqt.make_lqt_elements(bad)


def eval_element(e, x, y):
    """Direct evaluation of an interval value via the primal form (C > 0)."""
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    resid = y - e.A @ x - e.b
    return float(0.5 * x @ (e.J @ x) - x @ e.eta + 0.5 * resid @ np.linalg.solve(e.C, resid))


def min_over_z(e1, e2, x, y):
    """min_z V1(x, z) + V2(z, y), scalar z, solved exactly via 3-point fit."""
    zs = np.array([-1.0, 0.0, 1.0])
    vals = [eval_element(e1, x, [z]) + eval_element(e2, [z], y) for z in zs]
    a, b, c0 = np.polyfit(zs, vals, 2)
    assert a > 0
    return c0 - b * b / (4 * a)


class TestCombine:
    def test_identity_two_sided_exact(self):
        rng = np.random.default_rng(3)
        ident = lqt.lqt_identity(3)
        e = random_lqt_element(rng, 3)
        for out in (lqt.combine_lqt(e, ident), lqt.combine_lqt(ident, e)):
            for f in ("A", "b", "C", "eta", "J"):
                assert np.array_equal(getattr(out, f), getattr(e, f))

    def test_scalar_worked_example(self):
        e1 = lqt.LqtElement(A=[[2.0]], b=[1.0], C=[[1.0]], eta=[0.0], J=[[1.0]])
        e2 = lqt.LqtElement(A=[[1.0]], b=[0.0], C=[[1.0]], eta=[1.0], J=[[2.0]])
        e1 = lqt.LqtElement(*(np.asarray(v, float) for v in (e1.A, e1.b, e1.C, e1.eta, e1.J)))
        e2 = lqt.LqtElement(*(np.asarray(v, float) for v in (e2.A, e2.b, e2.C, e2.eta, e2.J)))
        out = lqt.combine_lqt(e1, e2)
        assert out.A[0, 0] == pytest.approx(2 / 3)
        assert out.b[0] == pytest.approx(2 / 3)
        assert out.C[0, 0] == pytest.approx(4 / 3)
        assert out.eta[0] == pytest.approx(-2 / 3)
        assert out.J[0, 0] == pytest.approx(11 / 3)
        # numeric oracle: minimize the summed interval values over the middle
        # state and compare up to the dropped constant
        ref0 = min_over_z(e1, e2, [0.0], [0.0])
        got0 = eval_element(out, [0.0], [0.0])
        for x in (-1.0, 0.5, 2.0):
            for y in (-0.7, 0.0, 1.3):
                ref = min_over_z(e1, e2, [x], [y]) - ref0
                got = eval_element(out, [x], [y]) - got0
                assert got == pytest.approx(ref, abs=1e-9)

    def test_chain_matches_riccati(self):
        rng = np.random.default_rng(4)
        p = random_lqt_problem(rng, n_x=3, n_u=2, N=10)
        elems = lqt.make_lqt_elements(p)
        suffix = elems[-1]
        for e in reversed(elems[:-1]):
            suffix = lqt.combine_lqt(e, suffix)
        values, _ = lqt.riccati_backward(p)
        np.testing.assert_allclose(suffix.J, values[0].S, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(suffix.eta, values[0].v, rtol=1e-9, atol=1e-12)

    def test_associativity(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            a, b, c = (random_lqt_element(rng, 3) for _ in range(3))
            lhs = lqt.combine_lqt(lqt.combine_lqt(a, b), c)
            rhs = lqt.combine_lqt(a, lqt.combine_lqt(b, c))
            for f in ("A", "b", "C", "eta", "J"):
                num = np.max(np.abs(getattr(lhs, f) - getattr(rhs, f)))
                den = max(1.0, np.max(np.abs(getattr(rhs, f))))
                assert num / den <= 1e-8

    def test_symmetry_after_combine(self):
        rng = np.random.default_rng(6)
        a, b = random_lqt_element(rng, 4), random_lqt_element(rng, 4)
        out = lqt.combine_lqt(a, b)
        assert np.max(np.abs(out.C - out.C.T)) == 0.0
        assert np.max(np.abs(out.J - out.J.T)) == 0.0

    def test_ill_conditioned_errors(self):
        big = 1e14
        e1 = lqt.LqtElement(A=np.eye(2), b=np.zeros(2),
                            C=np.array([[1.0, 0.0], [0.0, 0.0]]),
                            eta=np.zeros(2), J=np.zeros((2, 2)))
        e2 = lqt.LqtElement(A=np.eye(2), b=np.zeros(2), C=np.zeros((2, 2)),
                            eta=np.zeros(2),
                            J=np.array([[1.0, big], [big, big**2]]))
        with pytest.raises(SolverError, match="ill-conditioned combine"):
            lqt.combine_lqt(e1, e2)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            lqt.combine_lqt(lqt.lqt_identity(2), lqt.lqt_identity(3))


class TestParallelBackward:
    def test_terminal_only(self):
        p = lqt.LqtProblem(
            S=0, T=0, x0=[1.0, 2.0],
            F=np.zeros((0, 2, 2)), c=np.zeros((0, 2)), L=np.zeros((0, 2, 1)),
            H=np.zeros((0, 2, 2)), X=np.zeros((0, 2, 2)), r=np.zeros((0, 2)),
            U=np.zeros((0, 1, 1)),
            HT=np.array([[1.0, 0.0], [0.0, 2.0]]), XT=3.0 * np.eye(2), rT=[1.0, 1.0],
        )
        values, gains = lqt.parallel_backward(p)
        np.testing.assert_allclose(values[0].S, p.HT.T @ p.XT @ p.HT)
        np.testing.assert_allclose(values[0].v, p.HT.T @ p.XT @ p.rT)
        assert gains == []

    @pytest.mark.parametrize("engine", ["stacked", "object"])
    def test_matches_riccati(self, engine):
        rng = np.random.default_rng(7)
        p = random_lqt_problem(rng, n_x=4, n_u=2, N=64)
        ref, gains_ref = lqt.riccati_backward(p)
        values, gains = lqt.parallel_backward(p, engine=engine)
        assert max_value_dev(values, ref) <= 1e-9
        for ga, gb in zip(gains, gains_ref):
            assert np.allclose(ga.K, gb.K, rtol=1e-8, atol=1e-10)

    def test_stats_depth(self):
        rng = np.random.default_rng(8)
        p = random_lqt_problem(rng, n_x=2, n_u=1, N=100)
        _, _, stats = lqt.parallel_backward(p, return_stats=True)
        assert stats.combine_depth <= 2 * int(np.ceil(np.log2(101))) + 1

    def test_mass_spring_controls_agree(self):
        from tempo_dp.scenarios import build_mass_spring

        p = build_mass_spring(4, 100)
        values_s, gains_s = lqt.riccati_backward(p)
        _, us_s = lqt.closed_loop_rollout(p, values_s, gains_s)
        values_p, gains_p = lqt.parallel_backward(p)
        xs_p = lqt.traj_method1(p, gains_p, values_p)
        us_p = lqt.controls_along(p, values_p, gains_p, xs_p)
        assert np.max(np.abs(us_s - us_p)) <= 1e-8


class TestControlLaw:
    def test_zero_inputs(self):
        p = scalar_problem()
        values, gains = lqt.riccati_backward(p)
        u = lqt.control(np.zeros(1), 0, gains, np.zeros(1), np.zeros(1))
        assert u[0] == 0.0

    def test_scalar_gain(self):
        p = scalar_problem()
        values, gains = lqt.riccati_backward(p)
        u = lqt.control(np.array([2.0]), 0, gains, values[1].v, p.c[0])
        assert u[0] == pytest.approx(-1.0)  # -(1/2) x

    def test_grid_search_oracle(self):
        # u from the gain formula equals the minimizer of the one-step
        # quadratic cost-to-go, found independently by quadratic fit
        p = scalar_problem(N=3, F=0.8, L=0.5, c=0.2, X=2.0, r=1.5, U=0.7, rT=0.3)
        values, gains = lqt.riccati_backward(p)
        x = np.array([1.7])
        k = 0
        u_law = lqt.control(x, k, gains, values[k + 1].v, p.c[k])[0]

        def q(u):
            e = p.H[k] @ x - p.r[k]
            step = 0.5 * e @ (p.X[k] @ e) + 0.5 * u * p.U[k, 0, 0] * u
            xn = p.F[k] @ x + p.c[k] + p.L[k] @ [u]
            return float(step + 0.5 * xn @ (values[k + 1].S @ xn) - values[k + 1].v @ xn)

        us = np.array([-1.0, 0.0, 1.0])
        a, b, _ = np.polyfit(us, [q(u) for u in us], 2)
        assert u_law == pytest.approx(-b / (2 * a), abs=1e-10)


class TestTrajectoryRecovery:
    def test_affine_composition_example(self):
        out = lqt.compose_affine(
            lqt.AffineMap(np.array([[2.0]]), np.array([1.0])),
            lqt.AffineMap(np.array([[3.0]]), np.array([1.0])),
        )
        assert out.Ft[0, 0] == 6.0 and out.ct[0] == 4.0

    def test_zero_closed_loop_matrix(self):
        # with F = L K exactly, x_{k+1} is the offset term alone
        rng = np.random.default_rng(9)
        p = random_lqt_problem(rng, n_x=2, n_u=2, N=5)
        values, gains = lqt.riccati_backward(p)
        Ft, ct = lqt._closed_loop_maps(p, values, gains)
        xs, _ = lqt.closed_loop_rollout(p, values, gains)
        for k in range(p.N):
            np.testing.assert_allclose(Ft[k] @ xs[k] + ct[k], xs[k + 1], atol=1e-12)

    @pytest.mark.parametrize("engine", ["stacked", "object"])
    def test_method1_matches_rollout(self, engine):
        rng = np.random.default_rng(10)
        p = random_lqt_problem(rng, n_x=4, n_u=2, N=40)
        values, gains = lqt.parallel_backward(p)
        xs_ref, _ = lqt.closed_loop_rollout(p, values, gains)
        xs = lqt.traj_method1(p, gains, values, engine=engine)
        np.testing.assert_allclose(xs, xs_ref, atol=1e-8)

    def test_method2_start_state(self):
        rng = np.random.default_rng(11)
        p = random_lqt_problem(rng, n_x=3, n_u=2, N=6)
        values, _ = lqt.parallel_backward(p)
        xs = lqt.traj_method2(p, values)
        np.testing.assert_allclose(xs[0], p.x0, atol=1e-12)

    def test_method2_huge_control_penalty_is_open_loop(self):
        rng = np.random.default_rng(12)
        p = random_lqt_problem(rng, n_x=3, n_u=2, N=6)
        stiff = lqt.LqtProblem(S=0, T=p.N, x0=p.x0, F=p.F, c=p.c, L=p.L, H=p.H,
                               X=p.X, r=p.r, U=p.U * 1e12, HT=p.HT, XT=p.XT, rT=p.rT)
        values, _ = lqt.parallel_backward(stiff)
        xs = lqt.traj_method2(stiff, values)
        open_loop = [np.asarray(stiff.x0)]
        for k in range(stiff.N):
            open_loop.append(stiff.F[k] @ open_loop[-1] + stiff.c[k])
        np.testing.assert_allclose(xs, open_loop, atol=1e-5)

    @pytest.mark.parametrize("engine", ["stacked", "object"])
    def test_method2_matches_method1(self, engine):
        rng = np.random.default_rng(13)
        p = random_lqt_problem(rng, n_x=4, n_u=2, N=40)
        values, gains = lqt.parallel_backward(p)
        xs1 = lqt.traj_method1(p, gains, values)
        xs2 = lqt.traj_method2(p, values, engine=engine)
        np.testing.assert_allclose(xs2, xs1, atol=1e-7)


class TestGeneralCostTransform:
    def test_no_terms_returns_same_object(self):
        rng = np.random.default_rng(14)
        p = random_lqt_problem(rng, N=5)
        q, rec = lqt.transform_general_cost(p)
        assert q is p
        xs = np.zeros((p.N + 1, p.n_x))
        ut = rng.normal(size=(p.N, p.n_u))
        np.testing.assert_array_equal(rec.controls(xs, ut), ut)

    def test_control_reference_shifts_offset(self):
        rng = np.random.default_rng(15)
        p = random_lqt_problem(rng, N=6, s_ref=True)
        q, rec = lqt.transform_general_cost(p)
        np.testing.assert_allclose(q.c, p.c + lqt._mv(p.L, p.s), atol=1e-12)
        np.testing.assert_array_equal(q.F, p.F)
        np.testing.assert_array_equal(q.X, p.X)
        # controls shift by s
        values, gains = lqt.riccati_backward(q)
        xs, ut = lqt.closed_loop_rollout(q, values, gains)
        us = rec.controls(xs, ut)
        np.testing.assert_allclose(us, ut + p.s, atol=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_cross_term_kkt(self, seed):
        rng = np.random.default_rng(100 + seed)
        p = random_lqt_problem(rng, n_x=3, n_u=2, N=10, cross=True)
        cost_ref, us_ref, xs_ref = lqt.kkt_oracle(p)
        q, rec = lqt.transform_general_cost(p)
        values, gains = lqt.riccati_backward(q)
        xs, ut = lqt.closed_loop_rollout(q, values, gains)
        us = rec.controls(xs, ut)
        np.testing.assert_allclose(xs, xs_ref, atol=1e-8)
        np.testing.assert_allclose(us, us_ref, atol=1e-8)
        assert lqt.lqt_cost(p, xs, us) == pytest.approx(cost_ref, abs=1e-8)

    def test_indefinite_schur_rejected(self):
        rng = np.random.default_rng(16)
        p = random_lqt_problem(rng, n_x=2, n_u=2, N=3)
        M = np.repeat((10.0 * np.eye(2))[None], 3, axis=0)
        bad = lqt.LqtProblem(S=0, T=3, x0=p.x0, F=p.F, c=p.c, L=p.L, H=p.H,
                             X=p.X, r=p.r, U=p.U, HT=p.HT, XT=p.XT, rT=p.rT,
                             M=M, s=np.zeros((3, 2)))
        with pytest.raises(SolverError, match="not jointly convex"):
            lqt.transform_general_cost(bad)


class TestCondensing:
    def test_block_one_identity_reduction(self):
        rng = np.random.default_rng(17)
        p = random_lqt_problem(rng, n_x=3, n_u=2, N=8)
        values, gains = lqt.riccati_backward(p)
        xs_ref, us_ref = lqt.closed_loop_rollout(p, values, gains)
        xs, us = lqt.solve_condensed(p, 1)
        np.testing.assert_allclose(xs, xs_ref, atol=1e-10)
        np.testing.assert_allclose(us, us_ref, atol=1e-10)

    def test_single_block_matches_kkt(self):
        rng = np.random.default_rng(18)
        p = random_lqt_problem(rng, n_x=3, n_u=2, N=8)
        cost_ref, us_ref, xs_ref = lqt.kkt_oracle(p)
        xs, us = lqt.solve_condensed(p, p.N)
        assert lqt.lqt_cost(p, xs, us) == pytest.approx(cost_ref, abs=1e-8)
        np.testing.assert_allclose(xs, xs_ref, atol=1e-7)

    @pytest.mark.parametrize("B", [2, 4])
    def test_blocks_match_uncondensed(self, B):
        rng = np.random.default_rng(19)
        p = random_lqt_problem(rng, n_x=3, n_u=2, N=16)
        values, gains = lqt.parallel_backward(p)
        xs_ref = lqt.traj_method1(p, gains, values)
        xs, us = lqt.solve_condensed(p, B)
        np.testing.assert_allclose(xs, xs_ref, atol=1e-7)

    def test_non_divisible_errors(self):
        rng = np.random.default_rng(20)
        p = random_lqt_problem(rng, N=7)
        with pytest.raises(ValueError, match="not divisible"):
            lqt.condense(p, 2)

    def test_condensed_dimensions(self):
        rng = np.random.default_rng(21)
        p = random_lqt_problem(rng, n_x=3, n_u=2, N=12)
        q, _ = lqt.condense(p, 4)
        assert q.N == 3 and q.n_x == 3 and q.n_u == 8
        assert q.has_general_cost


class TestKktOracle:
    def test_zero_problem(self):
        p = scalar_problem(N=4, x0=0.0, r=0.0, rT=0.0, c=0.0)
        cost, us, xs = lqt.kkt_oracle(p)
        assert cost == pytest.approx(0.0, abs=1e-14)
        np.testing.assert_allclose(us, 0.0, atol=1e-12)

    def test_scalar_cost_difference_matches_value(self):
        p = scalar_problem(N=1, x0=1.0)
        values, _ = lqt.riccati_backward(p)
        cost_a, _, _ = lqt.kkt_oracle(p)
        p_b = scalar_problem(N=1, x0=-0.5)
        cost_b, _, _ = lqt.kkt_oracle(p_b)
        va = lqt.value_at(values[0], np.array([1.0]))
        vb = lqt.value_at(values[0], np.array([-0.5]))
        assert cost_a - cost_b == pytest.approx(va - vb, abs=1e-10)

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_parallel_rollout(self, seed):
        rng = np.random.default_rng(200 + seed)
        p = random_lqt_problem(rng, n_x=3, n_u=2, N=20)
        values, gains = lqt.parallel_backward(p)
        xs = lqt.traj_method1(p, gains, values)
        us = lqt.controls_along(p, values, gains, xs)
        cost, us_ref, xs_ref = lqt.kkt_oracle(p)
        np.testing.assert_allclose(us, us_ref, atol=1e-7)
        np.testing.assert_allclose(xs, xs_ref, atol=1e-7)

    def test_size_guard(self):
        rng = np.random.default_rng(22)
        p = random_lqt_problem(rng, n_x=8, n_u=4, N=500)
        with pytest.raises(ValueError, match="too large"):
            lqt.kkt_oracle(p)


class TestInvariants:
    def test_cost_difference_check(self):
        rng = np.random.default_rng(23)
        p = random_lqt_problem(rng, n_x=3, n_u=2, N=12)
        values, _ = lqt.parallel_backward(p)
        x = rng.normal(size=3)
        y = rng.normal(size=3)
        pa = lqt.LqtProblem(S=0, T=p.N, x0=x, F=p.F, c=p.c, L=p.L, H=p.H, X=p.X,
                            r=p.r, U=p.U, HT=p.HT, XT=p.XT, rT=p.rT)
        pb = lqt.LqtProblem(S=0, T=p.N, x0=y, F=p.F, c=p.c, L=p.L, H=p.H, X=p.X,
                            r=p.r, U=p.U, HT=p.HT, XT=p.XT, rT=p.rT)
        ca, _, _ = lqt.kkt_oracle(pa)
        cb, _, _ = lqt.kkt_oracle(pb)
        dv = lqt.value_at(values[0], x) - lqt.value_at(values[0], y)
        assert ca - cb == pytest.approx(dv, abs=1e-7)

    def test_cost_scaling_invariance(self):
        rng = np.random.default_rng(24)
        p = random_lqt_problem(rng, n_x=3, n_u=2, N=10)
        lam = 7.3
        ps = lqt.LqtProblem(S=0, T=p.N, x0=p.x0, F=p.F, c=p.c, L=p.L, H=p.H,
                            X=lam * p.X, r=p.r, U=lam * p.U, HT=p.HT,
                            XT=lam * p.XT, rT=p.rT)
        va, ga = lqt.riccati_backward(p)
        vb, gb = lqt.riccati_backward(ps)
        for a, b in zip(ga, gb):
            np.testing.assert_allclose(a.K, b.K, rtol=1e-9, atol=1e-12)
        xa, ua = lqt.closed_loop_rollout(p, va, ga)
        xb, ub = lqt.closed_loop_rollout(ps, vb, gb)
        np.testing.assert_allclose(xa, xb, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(ua, ub, rtol=1e-9, atol=1e-9)

    def test_stored_matrices_exactly_symmetric(self):
        rng = np.random.default_rng(25)
        p = random_lqt_problem(rng, n_x=4, n_u=2, N=32)
        values, _ = lqt.parallel_backward(p)
        for val in values:
            assert np.max(np.abs(val.S - val.S.T)) == 0.0
        for e in lqt.make_lqt_elements(p):
            assert np.max(np.abs(e.C - e.C.T)) == 0.0
            assert np.max(np.abs(e.J - e.J.T)) == 0.0


class TestFileInterchange:
    def test_json_roundtrip(self, tmp_path):
        rng = np.random.default_rng(26)
        p = random_lqt_problem(rng, n_x=3, n_u=2, N=5, cross=True)
        path = tmp_path / "lqt.json"
        lqt.save_problem(p, path)
        q = lqt.load_problem(path)
        for f in ("F", "c", "L", "H", "X", "r", "U", "HT", "XT", "rT", "x0", "M", "s"):
            np.testing.assert_array_equal(getattr(p, f), getattr(q, f))
        assert (p.S, p.T) == (q.S, q.T)

    def test_trajectory_csv(self, tmp_path):
        xs = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        us = np.array([[0.5], [0.25]])
        path = tmp_path / "traj.csv"
        lqt.write_trajectory_csv(path, xs, us)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "k,x_1,x_2,u_1"
        assert lines[1].startswith("0,1.0,2.0,0.5")
        assert lines[-1].endswith(",")  # terminal row: control cell blank
        assert len(lines) == 4

"""Subproblem assembly/solve, composition, and direction oracles."""

import numpy as np
import pytest

from fogd import build_decomposition
from fogd.engine import (
    SubSolution,
    assemble_subproblem,
    boundary_exact_parameters,
    compose,
    decompose,
    exact_newton_direction,
    ogd_direction,
    solve_subproblem,
)
from fogd.errors import CompositionError, InputValidationError


@pytest.fixture(scope="module")
def dec2(pde12):
    _, g, parts = pde12
    return build_decomposition(g, parts, 2)


class TestExactDirection:
    def test_matches_dense_solve(self, pde12_snapshot):
        snap = pde12_snapshot
        dx, dlam = exact_newton_direction(snap)
        kkt = snap.full_kkt_factorization().system.to_dense()
        rhs = -np.concatenate([snap.grad_l.data, snap.c.data])
        expect = np.linalg.solve(kkt, rhs)
        got = np.concatenate([dx.data, dlam.data])
        assert np.linalg.norm(got - expect) <= 1e-10 * (1 + np.linalg.norm(expect))


class TestSubproblems:
    def test_assembly_shapes(self, pde12_snapshot, dec2):
        sp = assemble_subproblem(pde12_snapshot, dec2, 0, 1.0)
        w = dec2.subdomains[0]
        interior = dec2.exclusive_interior(0)
        assert sp.system.n == 2 * len(w)
        assert sp.system.m == len(interior)
        assert sp.rhs.shape == (sp.system.n + sp.system.m,)

    def test_mu_must_be_positive(self, pde12_snapshot, dec2):
        with pytest.raises(InputValidationError):
            assemble_subproblem(pde12_snapshot, dec2, 0, 0.0)

    def test_penalty_term_in_hessian(self, pde12_snapshot, dec2):
        # subproblem Hessian = restricted modified Hessian + mu G_hat^T G_hat
        snap = pde12_snapshot
        w = dec2.subdomains[1]
        hat = dec2.combined_boundary[1]
        base = snap.hess_mod.restrict(w, w).to_dense()
        ghat = snap.jac.restrict(hat, w).to_dense()
        sp = assemble_subproblem(snap, dec2, 1, 3.0)
        np.testing.assert_allclose(sp.system.hess, base + 3.0 * ghat.T @ ghat,
                                   atol=1e-12)

    def test_solution_satisfies_kkt(self, pde12_snapshot, dec2):
        sp = assemble_subproblem(pde12_snapshot, dec2, 0, 1.0)
        sol = solve_subproblem(sp)
        stacked = np.concatenate([sol.omega.data, sol.zeta.data])
        resid = sp.system.to_dense() @ stacked - sp.rhs
        assert np.linalg.norm(resid) <= 1e-8 * (1 + np.linalg.norm(sp.rhs))

    def test_internal_constraints_linearized_feasible(self, pde12_snapshot, dec2):
        sp = assemble_subproblem(pde12_snapshot, dec2, 2, 1.0)
        sol = solve_subproblem(sp)
        resid = sp.c_internal + sp.jac_internal @ sol.omega.data
        assert np.linalg.norm(resid) <= 1e-8 * (1 + np.linalg.norm(sp.rhs))

    def test_boundary_exact_recovery(self, pde12_snapshot, dec2):
        snap = pde12_snapshot
        dx, dlam = exact_newton_direction(snap)
        scale = 1.0 + np.sqrt(dx.norm() ** 2 + dlam.norm() ** 2)
        for ell in range(dec2.num_subdomains):
            d = boundary_exact_parameters(dec2, ell, dx, dlam)
            sol = solve_subproblem(assemble_subproblem(snap, dec2, ell, 1.0, d=d))
            w = dec2.subdomains[ell]
            interior = dec2.exclusive_interior(ell)
            ep = sol.omega.data - dx.restrict(w).data
            ed = sol.zeta.data - dlam.restrict(interior).data
            err = np.sqrt(float(ep @ ep) + float(ed @ ed))
            assert err <= 1e-8 * scale

    def test_boundary_parameter_node_sets_checked(self, pde12_snapshot, dec2):
        dx, dlam = exact_newton_direction(pde12_snapshot)
        wrong = boundary_exact_parameters(dec2, 1, dx, dlam)
        with pytest.raises(InputValidationError):
            assemble_subproblem(pde12_snapshot, dec2, 0, 1.0, d=wrong)


class TestComposition:
    def test_round_trip_on_exact_solution(self, pde12_snapshot, dec2):
        # solving every subproblem with exact boundary data and composing
        # reproduces the exact direction on the nose
        snap = pde12_snapshot
        dx, dlam = exact_newton_direction(snap)
        pieces = []
        for ell in range(dec2.num_subdomains):
            d = boundary_exact_parameters(dec2, ell, dx, dlam)
            pieces.append(solve_subproblem(assemble_subproblem(snap, dec2, ell, 1.0, d=d)))
        px, plam = compose(dec2, pieces)
        assert np.linalg.norm(px.data - dx.data) <= 1e-7
        assert np.linalg.norm(plam.data - dlam.data) <= 1e-7

    def test_decompose_restricts(self, pde12_snapshot, dec2):
        snap = pde12_snapshot
        pieces = decompose(dec2, snap.x, snap.lam)
        assert len(pieces) == dec2.num_subdomains
        for ell, (xs, ls) in enumerate(pieces):
            assert xs.nodes.nodes == dec2.subdomains[ell].nodes
            assert ls.nodes.nodes == dec2.exclusive_interior(ell).nodes

    def test_wrong_piece_count_rejected(self, pde12_snapshot, dec2):
        sp = assemble_subproblem(pde12_snapshot, dec2, 0, 1.0)
        sol = solve_subproblem(sp)
        with pytest.raises(CompositionError):
            compose(dec2, [sol])

    def test_duplicate_pieces_rejected(self, pde12_snapshot, dec2):
        sol = solve_subproblem(assemble_subproblem(pde12_snapshot, dec2, 0, 1.0))
        dup = SubSolution(0, sol.omega, sol.zeta)
        with pytest.raises(CompositionError):
            compose(dec2, [sol, dup, dup])

    def test_zero_overlap_dual_undefined(self, pde12, pde12_snapshot):
        # with b = 0 the parts touch their own internal boundary, so the dual
        # piece of a part node is not available for composition
        _, g, parts = pde12
        dec0 = build_decomposition(g, parts, 0)
        pieces = [solve_subproblem(assemble_subproblem(pde12_snapshot, dec0, ell, 1.0))
                  for ell in range(dec0.num_subdomains)]
        with pytest.raises(CompositionError):
            compose(dec0, pieces)


class TestOgdDirection:
    def test_error_shrinks_with_overlap(self, pde12, pde12_snapshot):
        _, g, parts = pde12
        snap = pde12_snapshot
        dx, dlam = exact_newton_direction(snap)
        exact = np.concatenate([dx.data, dlam.data])
        errs = []
        for b in (1, 2, 4):
            dec = build_decomposition(g, parts, b)
            ox, olam = ogd_direction(snap, dec, 1.0)
            errs.append(np.linalg.norm(np.concatenate([ox.data, olam.data]) - exact))
        assert errs[0] > errs[1] > errs[2]

    def test_worker_count_does_not_change_result(self, pde12_snapshot, dec2):
        serial = ogd_direction(pde12_snapshot, dec2, 1.0, workers=1)
        threaded = ogd_direction(pde12_snapshot, dec2, 1.0, workers=4)
        np.testing.assert_array_equal(serial[0].data, threaded[0].data)
        np.testing.assert_array_equal(serial[1].data, threaded[1].data)

"""Semilinear elliptic control benchmark: discretization and derivatives."""

import numpy as np
import pytest

from fogd import PdeConfig, build_pde_model
from fogd.driver import merit_value
from fogd.errors import InputValidationError


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        {"rows": 2},
        {"cols": 2},
        {"p": 0},
        {"h": 0.0},
        {"strips": 0},
        {"strips": 13, "cols": 12},
    ])
    def test_invalid_config_rejected(self, kwargs):
        base = dict(rows=12, cols=12)
        base.update(kwargs)
        with pytest.raises(InputValidationError):
            PdeConfig(**base)

    def test_defaults(self):
        cfg = PdeConfig()
        assert (cfg.rows, cfg.cols, cfg.strips) == (40, 40, 5)
        assert cfg.u_d == -5.0 and cfg.p == 4


class TestDiscretization:
    def test_dimensions(self, pde12):
        model, g, parts = pde12
        assert g.node_count == 144
        assert model.total_primal == 288
        assert model.total_dual == 144
        assert sum(len(p) for p in parts) == 144

    def test_objective_and_merit_at_origin(self):
        # at (u, z, lam) = 0 every constraint vanishes (zero is a solution of
        # the homogeneous state equation), so f and the merit have closed forms
        model, _, _ = build_pde_model(PdeConfig(rows=40, cols=40, strips=5))
        x = model.zeros_primal()
        lam = model.zeros_dual()
        snap = model.evaluate(x, lam, level="merit")
        assert snap.f == pytest.approx(1600 * 25.0)
        assert np.all(snap.c.data == 0.0)
        # grad f has 2*h^2*(0 - u_d) = 10 in every u slot, 0 in every z slot
        assert merit_value(snap, 5.0, 0.1) == pytest.approx(48000.0)

    def test_corner_constraint_uses_ghost_zeros(self):
        cfg = PdeConfig(rows=3, cols=3, strips=1, h=0.5)
        model, g, _ = build_pde_model(cfg)
        x = model.zeros_primal()
        rng = np.random.default_rng(0)
        x.data[:] = rng.uniform(-1, 1, x.data.size)
        snap = model.evaluate(x, model.zeros_dual(), level="merit")
        u = {i: x.block(i)[0] for i in range(9)}
        z0 = x.block(0)[1]
        inv_h2 = 1.0 / cfg.h**2
        # corner node 0 neighbors are 1 and 3; the other two stencil points
        # are Dirichlet ghosts pinned at zero
        lap = (u[1] + u[3] - 4.0 * u[0]) * inv_h2
        assert snap.c.block(0)[0] == pytest.approx(-lap + u[0] ** 4 - z0)

    def test_jacobian_matches_fd(self):
        cfg = PdeConfig(rows=4, cols=5, strips=1)
        model, _, _ = build_pde_model(cfg)
        rng = np.random.default_rng(3)
        x = model.zeros_primal()
        x.data[:] = rng.uniform(-2, 2, x.data.size)
        lam = model.zeros_dual()
        snap = model.evaluate(x, lam)
        dense = snap.jac.to_dense()
        n = x.data.size
        fd = np.zeros_like(dense)
        for k in range(n):
            h = 1e-6 * (1 + abs(x.data[k]))
            up, dn = x.copy(), x.copy()
            up.data[k] += h
            dn.data[k] -= h
            cu = model.evaluate(up, lam, level="merit").c.data
            cd = model.evaluate(dn, lam, level="merit").c.data
            fd[:, k] = (cu - cd) / (2 * h)
        assert np.linalg.norm(dense - fd) <= 1e-5 * (1 + np.linalg.norm(fd))

    def test_constraint_hessian_matches_fd(self):
        cfg = PdeConfig(rows=3, cols=4, strips=1)
        model, _, _ = build_pde_model(cfg)
        rng = np.random.default_rng(9)
        x = model.zeros_primal()
        x.data[:] = rng.uniform(-2, 2, x.data.size)
        lam = model.zeros_dual()
        lam.data[:] = rng.uniform(-1, 1, lam.data.size)
        snap = model.evaluate(x, lam, hessian_mode="none")
        dense = snap.hess.to_dense()
        n = x.data.size
        fd = np.zeros((n, n))
        for k in range(n):
            h = 1e-6 * (1 + abs(x.data[k]))
            up, dn = x.copy(), x.copy()
            up.data[k] += h
            dn.data[k] -= h
            gu = model.evaluate(up, lam, level="merit").grad_l.data
            gd = model.evaluate(dn, lam, level="merit").grad_l.data
            fd[:, k] = (gu - gd) / (2 * h)
        assert np.linalg.norm(dense - fd) <= 1e-4 * (1 + np.linalg.norm(fd))

    def test_linear_exponent_has_no_constraint_curvature(self):
        cfg = PdeConfig(rows=3, cols=3, strips=1, p=1)
        model, _, _ = build_pde_model(cfg)
        x = model.zeros_primal()
        x.data[:] = 0.7
        lam = model.zeros_dual()
        lam.data[:] = 2.0
        snap = model.evaluate(x, lam, hessian_mode="none")
        h2 = cfg.h * cfg.h
        expect = np.kron(np.eye(9), np.diag([2 * h2, 2 * h2 * cfg.alpha]))
        np.testing.assert_allclose(snap.hess.to_dense(), expect, atol=1e-14)

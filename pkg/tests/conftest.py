"""Shared fixtures: small PDE instances and toy models used across the suite."""

import numpy as np
import pytest

from fogd import PdeConfig, build_pde_model, toy_chain_model
from fogd.cli import ExperimentSpec, build_init


@pytest.fixture(scope="session")
def pde12():
    """12x12 benchmark with a 3-strip partition: (model, graph, parts)."""
    cfg = PdeConfig(rows=12, cols=12, strips=3)
    return build_pde_model(cfg)


@pytest.fixture(scope="session")
def pde12_start(pde12):
    """Constant starting point (u, z, lam) = (-10, -10, 0) on the 12x12 grid."""
    model, _, _ = pde12
    spec = ExperimentSpec(problem="pde", rows=12, cols=12, strips=3,
                          init="constant(-10,-10,0)")
    return build_init(model, spec, 0)


@pytest.fixture(scope="session")
def pde12_snapshot(pde12, pde12_start):
    model, _, _ = pde12
    x0, lam0 = pde12_start
    return model.evaluate(x0, lam0)


@pytest.fixture(scope="session")
def chain_model():
    return toy_chain_model(12)


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)

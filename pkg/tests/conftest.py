"""Shared fixtures: the solved 1-D fixed point and tuned towers.

Tower construction is the expensive part of the suite, so every tower is
session-scoped and shared between the unit tests and the acceptance module.
"""

import numpy as np
import pytest

from pdrenorm import classn
from pdrenorm import families as fam
from pdrenorm import henon as hn
from pdrenorm import unimodal as um


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture(scope="session")
def fstar():
    return um.fixed_point_1d(um.UnimodalMap.quadratic(1.4), tol=1e-10).f_star


@pytest.fixture(scope="session")
def sigma_star(fstar):
    _, J = um.is_renormalizable_1d(fstar)
    return (J[1] - J[0]) / 2.0


@pytest.fixture(scope="session")
def m1_tower(fstar):
    """Depth-7 tuned tower of the m=1 factorized seed (b=0.05, c=0.3).

    In the invariant class, constant Jacobian b*c, b_z = c, b_1 = b."""
    _, seq = fam.tuned_dissipative_tower(fstar, depth=7, b=0.05, c=0.3, m=1)
    return seq


@pytest.fixture(scope="session")
def rich_tower(fstar):
    """Depth-7 tower of the seed with every scope quantity nontrivial."""
    _, seq = fam.tune_tower(lambda t: fam.rich_seed(fstar, t), 7)
    return seq


@pytest.fixture(scope="session")
def degenerate_tower(fstar):
    _, seq = fam.tune_tower(
        lambda t: hn.HenonLikeMap.degenerate(fam.perturbed_quadratic(fstar, t), 1),
        7,
    )
    return seq


@pytest.fixture(scope="session")
def example_tower_m1(fstar):
    """Depth-4 tower of an m=1 example-family seed (inside the class)."""
    make = lambda t: classn.make_example_n(
        fam.perturbed_quadratic(fstar, t), m=1, eta_slopes=[0.05],
        C=[[0.05, 0.05]],
    )
    _, seq = fam.tune_tower(make, 4)
    return seq


@pytest.fixture(scope="session")
def example_tower_m1_quad(fstar):
    """Second m=1 example seed: curved eta, different coefficients."""
    make = lambda t: classn.make_example_n(
        fam.perturbed_quadratic(fstar, t), m=1,
        eta_fns=[lambda u: 0.04 * u + 0.25 * u * u], C=[[0.04, 0.04]],
        eps_b=0.04,
    )
    _, seq = fam.tune_tower(make, 4)
    return seq


@pytest.fixture(scope="session")
def example_tower_m2(fstar):
    """Depth-4 tower of an m=2 example-family seed."""
    make = lambda t: classn.make_example_n(
        fam.perturbed_quadratic(fstar, t), m=2, eta_slopes=[0.05, 0.03],
        C=[[0.05, 0.03, 0.02], [0.04, 0.02, 0.02]], degrees=8,
    )
    _, seq = fam.tune_tower(make, 4, degrees=8)
    return seq


@pytest.fixture(scope="session")
def z_tower(fstar):
    """Depth-6 tower with z-only delta: in-class, det Z varies on the set."""
    _, seq = fam.tune_tower(lambda t: fam.z_family_seed(fstar, t), 6)
    return seq


@pytest.fixture(scope="session")
def nonclass_map(fstar):
    """Deliberately outside the class: Y = a while X = 0 gives defect |a|."""
    return fam.shear_seed(fstar, 0.0, b=0.05, c=0.3, a=0.05)


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        word = "PASS" if report.passed else "FAIL"
        print(f"\n[acceptance] {name}: {word}", flush=True)

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def line_problem():
    from ifegr import make_problem

    return make_problem("line", x0=0.3, beta_minus=1.0, beta_plus=10.0)


@pytest.fixture(scope="session")
def circle_setup():
    """Small classified circle mesh shared by recovery/system tests."""
    from ifegr import (
        build_all_bases,
        build_fitted_mesh,
        build_uniform_mesh,
        classify_elements,
        make_problem,
    )

    prob = make_problem("ex1", beta_minus=1.0, beta_plus=10.0)
    mesh = build_uniform_mesh(16)
    cls = classify_elements(mesh, prob.data.level_set)
    fitted = build_fitted_mesh(mesh, cls)
    bases = build_all_bases(mesh, cls, prob.data.beta_minus, prob.data.beta_plus)
    return prob, mesh, cls, fitted, bases

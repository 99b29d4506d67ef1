import hypothesis
import numpy as np
import pytest

from hdgml.services.hdg import assemble_condensed, assemble_poisson
from hdgml.services.mesh import UNIT_SQUARE, build_hierarchy_2d, build_mesh_2d
from hdgml.services.problems import BesselProblem

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=5)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False)


@pytest.fixture(scope="session")
def bessel_problem():
    return BesselProblem(5.0).to_mixed_form()


@pytest.fixture(scope="session")
def small_hierarchy():
    """n = 2, 4, 8 on the centered unit square"""
    return build_hierarchy_2d(2, 3, (-0.5, 0.5, -0.5, 0.5))


@pytest.fixture(scope="session", params=[1, 2])
def helmholtz_levels(request, small_hierarchy, bessel_problem):
    p = request.param
    return [assemble_condensed(mesh, bessel_problem, p, level=l) for l, mesh in enumerate(small_hierarchy.meshes)]


@pytest.fixture(scope="session")
def unit_mesh():
    return build_mesh_2d(2, box=UNIT_SQUARE)


@pytest.fixture(scope="session")
def poisson_pair():
    hierarchy = build_hierarchy_2d(2, 2, UNIT_SQUARE)
    return [assemble_poisson(mesh, 2) for mesh in hierarchy.meshes]

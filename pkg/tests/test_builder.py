import math

import numpy as np
import pytest

from multilens.builder import (
    back_substitute,
    build_preliminary,
    perturb_epsilon,
    scale_lens,
    scale_plane,
    solution_radius,
)
from multilens.core import LensPlane, MultiplaneLens, PlanePoint, trace
from multilens.rhie import rhie_plane
from multilens.solver import solve

from conftest import HALF_PI, match_sets


def test_scale_plane():
    plane, _ = rhie_plane(3)
    s = scale_plane(plane, 0.25)
    assert np.allclose(s.positions, 0.25 * plane.positions)
    assert np.allclose(s.b2, 0.0625 * plane.b2)
    with pytest.raises(ValueError):
        scale_plane(plane, 0.0)


def test_scale_lens_scales_source():
    lens = MultiplaneLens((rhie_plane(2)[0],), source=(0.1, 0.2))
    s = scale_lens(lens, 3.0)
    assert s.source == PlanePoint(0.30000000000000004, 0.6000000000000001)


def test_back_substitution_matches_full_solver():
    p1, _ = rhie_plane(2, rotation=HALF_PI)
    p2, _ = rhie_plane(2)
    lens = MultiplaneLens((p1, scale_plane(p2, 0.1)))
    paths = back_substitute(lens)
    assert paths.shape == (25, 2)
    assert match_sets(paths[:, 0], solve(lens).positions, 1e-9)
    for row in paths:
        t = trace(lens, row[0])
        assert abs(t.impacts[1].as_complex() - row[1]) < 1e-9


def test_solution_radius():
    pts = [PlanePoint(1.0, 0.0), 0.0 + 2.0j, PlanePoint(-0.5, 0.5)]
    assert solution_radius(pts) == pytest.approx(1.25 * 2.0)
    with pytest.raises(ValueError):
        solution_radius([])


def test_explicit_build_reports_scales():
    lens, report = build_preliminary([2, 2, 2], lambdas=[0.1, 0.05], verify=False)
    assert report.lambdas == [0.1, 0.05]
    assert report.plane_scales == pytest.approx([1.0, 0.1, 0.005])
    assert np.allclose(np.abs(lens.planes[2].positions), 0.005)
    assert report.mode == "explicit"
    assert report.expected_count == 125


def test_explicit_build_counts():
    lens, report = build_preliminary([2, 2], lambdas=[0.1])
    assert report.achieved_count_eps0 == 25
    assert report.step_counts == [25]
    assert solve(perturb_epsilon(lens, [0.01])).count == 25


def test_explicit_build_nine_masses():
    lens, report = build_preliminary([3, 3], lambdas=[0.01])
    assert report.achieved_count_eps0 == 100
    assert solve(perturb_epsilon(lens, [0.0003])).count == 100
    assert solve(perturb_epsilon(lens, [0.001])).count == 94


def test_build_validation():
    with pytest.raises(ValueError):
        build_preliminary([1, 2])
    with pytest.raises(ValueError):
        build_preliminary([2, 2], lambdas=[0.1, 0.2])
    with pytest.raises(ValueError):
        build_preliminary([2, 2], rotations=[0.0])
    lens, _ = build_preliminary([2, 2], lambdas=[0.1], verify=False)
    with pytest.raises(ValueError):
        perturb_epsilon(lens, [0.1, 0.2])


def test_report_is_serialisable():
    import json

    _, report = build_preliminary([3], verify=True)
    d = report.to_dict()
    assert json.loads(json.dumps(d))["expected_count"] == 10
    assert d["achieved_count_eps0"] == 10
    assert d["lambdas"] == [] and d["plane_scales"] == [1.0]


def test_too_large_scale_loses_images():
    # with the back plane as big as the front, the uncoupled count collapses
    lens, _ = build_preliminary([2, 2], lambdas=[1.0], verify=False)
    assert solve(lens).count < 25
    from multilens.rhie import ConstructionError

    with pytest.raises(ConstructionError):
        build_preliminary([2, 2], lambdas=[1.0])

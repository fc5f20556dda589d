import math
import warnings

import numpy as np
import pytest

from multilens import caustics as cst
from multilens.core import LensPlane, MultiplaneLens, lens_map_jacobian
from multilens.rhie import rhie_plane

from conftest import HALF_PI, two_plane


def circle(r=1.0, n=2048, c=0j):
    t = 2 * np.pi * np.arange(n) / n
    z = c + r * np.exp(1j * t)
    return cst.Polyline(np.column_stack([z.real, z.imag]), closed=True)


def test_window():
    w = cst.Window.square(2.0, (1.0, 0.0))
    assert (w.xmin, w.xmax, w.ymin, w.ymax) == (-1.0, 3.0, -2.0, 2.0)
    assert cst.Window.of(1.5) == cst.Window.square(1.5)
    assert cst.Window.of((0, 1, 0, 2)).ymax == 2
    with pytest.raises(ValueError):
        cst.Window(1, 0, 0, 1)


def test_polyline_basics():
    pl = cst.Polyline([[0, 0], [3, 4]])
    assert pl.diameter == 5
    assert pl.segment_lengths().tolist() == [5.0]
    sq = cst.Polyline([[0, 0], [1, 0], [1, 1], [0, 1]], closed=True)
    assert sq.segment_lengths().sum() == 4
    with pytest.raises(ValueError):
        cst.Polyline([[0, 0]])


def test_hausdorff_concentric_circles():
    assert cst.hausdorff(circle(1.0), circle(1.2)) == pytest.approx(0.2, abs=1e-5)
    assert cst.hausdorff(circle(1.0), circle(1.0, c=0.3)) == pytest.approx(0.3, abs=1e-5)


def test_single_mass_critical_curve_and_caustic():
    lens = MultiplaneLens((LensPlane.from_arrays([0j], [1.0]),))
    cs = cst.curve_set(lens, 2.0, 256)
    assert len(cs.critical) == 1
    crit = cs.critical[0]
    assert crit.closed and not crit.exits_window
    assert np.max(np.abs(np.abs(crit.z) - 1)) < 1e-8
    # the caustic of a point mass degenerates to the source-plane origin
    assert cs.caustic[0].diameter < 1e-6


def test_critical_vertices_have_vanishing_det():
    plane, _ = rhie_plane(3)
    lens = MultiplaneLens((plane,))
    crit = cst.critical_curves(lens, 2.5, 256)
    dets = [np.linalg.det(lens_map_jacobian(lens, z)) for z in crit[0].z[::25]]
    assert np.max(np.abs(dets)) < 1e-6


def test_binary_has_single_resonant_curve():
    plane, _ = rhie_plane(2)
    cs = cst.curve_set(MultiplaneLens((plane,)), 2.5, 512)
    assert len(cs.critical) == 1
    assert cs.multiplicities == [1]


def test_open_contour_warning():
    plane, _ = rhie_plane(2)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        crit = cst.critical_curves(MultiplaneLens((plane,)), 1.0, 128)
    assert any(issubclass(w.category, cst.OpenContourWarning) for w in caught)
    assert all(pl.exits_window for pl in crit)


def test_massless_plane_has_no_curves():
    lens = MultiplaneLens((LensPlane.from_arrays([0j, 1 + 0j], [0.0, 0.0]),))
    cs = cst.curve_set(lens, 2.0, 128)
    assert cs.critical == [] and cs.caustic == [] and cs.multiplicity_groups == []


def test_grid_must_be_reasonable():
    lens = MultiplaneLens((LensPlane.from_arrays([0j], [1.0]),))
    with pytest.raises(ValueError):
        cst.critical_curves(lens, 2.0, 16)


def test_group_by_caustic_explicit_tolerance():
    curves = [circle(1.0), circle(1.0, c=0.001), circle(1.0, c=0.5), None]
    assert cst.group_by_caustic(curves, tol=0.01) == [[0, 1], [2], [3]]
    assert cst.group_by_caustic(curves, tol=1.0) == [[0, 1, 2], [3]]


def test_pair_overlay_and_split():
    w = cst.Window.square(2.5)
    before = cst.curve_set(two_plane(2, 0.1, 0.0, rot1=HALF_PI), w, 1024)
    after = cst.curve_set(two_plane(2, 0.1, 0.01, rot1=HALF_PI), w, 1024)
    assert sorted(before.multiplicities) == [1, 5]
    assert after.multiplicities == [1] * 6


def test_grid_refinement_keeps_components():
    w = cst.Window.square(2.5)
    lens = two_plane(2, 0.1, 0.0, rot1=HALF_PI)
    a = cst.curve_set(lens, w, 1024)
    b = cst.curve_set(lens, w, 2048)
    assert len(a.critical) == len(b.critical)
    assert sorted(a.multiplicities) == sorted(b.multiplicities)

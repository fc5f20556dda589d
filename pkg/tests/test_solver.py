import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multilens.core import LensPlane, MultiplaneLens, ObstructionError, lens_map_jacobian
from multilens.rhie import rhie_plane
from multilens.solver import (
    DegenerateImageWarning,
    SolveOptions,
    classify_image,
    cluster_images,
    count_images,
    find_images,
    image_count_bounds,
    solve,
    time_delay,
    time_delay_gradient,
)

from conftest import HALF_PI, match_sets, two_plane


def single_mass(b=1.0, source=(0.0, 0.0)):
    return MultiplaneLens((LensPlane.from_arrays([0j], [b]),), source=source)


@pytest.mark.parametrize("y", [0.5, 0.1, 1.3])
def test_single_mass_images_quadratic(y):
    # on the axis: u - 1/u = y  ->  u = (y +- sqrt(y^2 + 4)) / 2
    res = solve(single_mass(source=(y, 0.0)))
    expected = np.array([(y + math.sqrt(y * y + 4)) / 2, (y - math.sqrt(y * y + 4)) / 2], dtype=complex)
    assert res.count == 2
    assert match_sets(res.positions, expected, 1e-10)
    parities = sorted(im.parity for im in res.images)
    assert parities == [-1, 1]


def test_single_mass_images_scaled_radius():
    b, y = 2.0, 0.7
    res = solve(single_mass(b, (0.0, y)))
    expected = 1j * np.array([(y + math.sqrt(y * y + 4 * b * b)) / 2, (y - math.sqrt(y * y + 4 * b * b)) / 2])
    assert match_sets(res.positions, expected, 1e-10)


def test_binary_on_axis_images():
    # unit masses at +-1, source at the origin: images at 0, +-i, +-sqrt(3)
    plane, _ = rhie_plane(2)
    res = solve(MultiplaneLens((plane,)))
    expected = np.array([0, 1j, -1j, math.sqrt(3), -math.sqrt(3)])
    assert match_sets(res.positions, expected, 1e-10)
    kinds = {round(im.position.u, 6) + 1j * round(im.position.v, 6): im.morse_type for im in res.images}
    assert kinds[1j] == "minimum" and kinds[-1j] == "minimum"
    assert kinds[0] == "saddle"


def test_residuals_and_dets():
    res = solve(two_plane(2, 0.1, 0.01, rot1=HALF_PI))
    for im in res.images:
        assert im.path.residual_norm <= 1e-12
        J = lens_map_jacobian(two_plane(2, 0.1, 0.01, rot1=HALF_PI), im.position)
        assert np.isclose(np.linalg.det(J), im.lens_map_jacobian_det)
        assert im.parity == (1 if im.lens_map_jacobian_det > 0 else -1)
        assert im.morse_type == "unavailable"


def test_classification_matches_hessian():
    # for one plane the Hessian of the time delay equals the map Jacobian
    plane = LensPlane.from_arrays([0.4 + 0.1j, -0.6 - 0.3j, 0.2 - 0.9j], [1.0, 0.7, 0.5])
    lens = MultiplaneLens((plane,), source=(0.05, -0.02))
    h = 1e-4
    for im in solve(lens).images:
        x = im.position.as_array()
        H = np.empty((2, 2))
        for k, e in enumerate(np.eye(2) * h):
            H[:, k] = (time_delay_gradient(plane, lens.source, x + e) - time_delay_gradient(plane, lens.source, x - e)) / (2 * h)
        ev = np.linalg.eigvalsh(0.5 * (H + H.T))
        expect = "minimum" if ev.min() > 0 else "maximum" if ev.max() < 0 else "saddle"
        assert im.morse_type == expect


def test_classify_image_recomputes_jacobian():
    lens = single_mass(source=(0.5, 0.0))
    im = solve(lens).images[0]
    again = classify_image(lens, replace(im, parity=0, morse_type="unavailable"))
    assert again.parity == im.parity and again.morse_type == im.morse_type


def test_time_delay_obstruction():
    plane = LensPlane.from_arrays([0j], [1.0])
    with pytest.raises(ObstructionError):
        time_delay(plane, (0, 0), (0, 0))


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_time_delay_gradient_fd(u, v, yu, yv):
    plane = LensPlane.from_arrays([0.5 + 0.5j, -0.7 + 0j], [1.0, 0.8])
    x = np.array([u, v])
    if np.min(np.abs(complex(u, v) - plane.positions)) < 0.2:
        return
    h = 1e-6
    fd = np.array([(time_delay(plane, (yu, yv), x + e) - time_delay(plane, (yu, yv), x - e)) / (2 * h)
                   for e in np.eye(2) * h])
    assert np.max(np.abs(fd - time_delay_gradient(plane, (yu, yv), x))) <= 1e-6


def test_degenerate_root_goes_to_suspect():
    # a margin above 1 flags the two minima, whose det is exactly 1
    plane, _ = rhie_plane(2)
    lens = MultiplaneLens((plane,))
    res = solve(lens, SolveOptions(nondegeneracy_margin=2.0))
    assert res.count + len(res.suspect) == 5
    assert len(res.suspect) == 2  # the two minima have det = 1
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        imgs = find_images(lens, SolveOptions(nondegeneracy_margin=2.0))
    assert len(imgs) == 3
    assert any(issubclass(w.category, DegenerateImageWarning) for w in caught)
    assert count_images(lens, margin=2.0) == -1
    assert count_images(lens) == 5


def test_seed_density_convergence():
    for lens in (two_plane(2, 0.1, 0.01, rot1=HALF_PI), two_plane(3, 0.01, 0.001)):
        a = solve(lens, SolveOptions(grid_n=256)).positions
        b = solve(lens, SolveOptions(grid_n=512)).positions
        assert match_sets(a, b, 1e-8)


def test_solve_is_deterministic():
    lens = two_plane(3, 0.01, 0.001)
    a = solve(lens).positions
    b = solve(lens).positions
    assert np.array_equal(a, b)


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(grid_n=0)
    with pytest.raises(ValueError):
        SolveOptions(half_width=-1.0)
    lens = two_plane(2, 0.1, 0.0)
    assert SolveOptions().window_half_width(lens) == pytest.approx(4.0)
    assert SolveOptions(half_width=3.0).window_half_width(lens) == 3.0


@pytest.mark.parametrize("g, expected", [
    ([2, 2], (9, 41, 25)),
    ([3, 3], (16, 136, 100)),
    ([2], (3, 5, 5)),
    ([2, 3], (12, 74, 50)),
])
def test_bounds_hand_expansion(g, expected):
    b = image_count_bounds(g)
    assert (b.lower, b.upper_eq1, b.conjectured_max) == expected


def test_bounds_special_cases():
    b = image_count_bounds([1, 1, 1])
    assert b.conjectured_max is None
    assert b.petters_special == 2 * (2**4 - 1)
    assert image_count_bounds([1]).petters_special is None
    with pytest.raises(ValueError):
        image_count_bounds([])
    with pytest.raises(ValueError):
        image_count_bounds([2, 0])
    with pytest.raises(ValueError):
        image_count_bounds([2.5])
    assert image_count_bounds([3, 3]).contains(100)
    assert not image_count_bounds([3, 3]).contains(137)


def _poly_coeffs(g_list):
    c = np.array([1], dtype=object)
    for g in g_list:
        c = np.convolve(c, np.array([1, g], dtype=object))
    return c


@given(st.lists(st.integers(1, 40), min_size=1, max_size=8))
def test_bounds_match_polynomial_oracle(g_list):
    c = _poly_coeffs(g_list)  # ascending powers of Z in prod(1 + g Z)
    even, odd = sum(c[0::2]), sum(c[1::2])
    b = image_count_bounds(g_list)
    assert (b.even_sum, b.odd_sum) == (even, odd)
    assert b.upper_eq1 == even**2 + odd**2
    assert b.lower == math.prod(g + 1 for g in g_list)
    assert b.lower <= b.upper_eq1


def test_bounds_big_integers_exact():
    b = image_count_bounds([10**6] * 6)
    assert b.lower == (10**6 + 1) ** 6


def test_single_plane_count_in_polynomial_range():
    # a g-mass plane has between g+1 and 5g-5 images (g >= 2) for a generic source
    rng = np.random.default_rng(4)
    for g in (2, 3, 4):
        pos = rng.uniform(-1, 1, size=g) + 1j * rng.uniform(-1, 1, size=g)
        lens = MultiplaneLens((LensPlane.from_arrays(pos, [0.8] * g),), source=(0.11, -0.07))
        n = solve(lens).count
        assert g + 1 <= n <= 5 * g - 5
        assert (n - g - 1) % 2 == 0


def test_cluster_images():
    pts = np.concatenate([c + 0.01 * np.exp(2j * np.pi * np.arange(4) / 4) for c in (0, 1, 2j)])
    cl = cluster_images(pts)
    assert cl.sizes == [4, 4, 4]
    assert cl.gap_ratio > 5
    assert list(cl.labels[:4]) == [0] * 4
    forced = cluster_images(pts, n_clusters=2)
    assert forced.sizes == [8, 4]
    with pytest.raises(ValueError):
        cluster_images(pts, n_clusters=20)
    assert cluster_images([0j, 1j]).n_clusters == 1

import json

import numpy as np
import pytest

from multilens.cli import builtin_scenes, resolve_scene_path
from multilens.rhie import rhie_plane
from multilens.scene import (
    SceneParseError,
    SceneValidationError,
    dump_scene,
    load_scene,
    parse_scene,
    save_scene,
    scene_from_lens,
)


def test_rhie_shorthand_expands(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"planes": [{"rhie": 2}], "source": [0, 0]}))
    sc = load_scene(p)
    ref, _ = rhie_plane(2)
    assert sc.lens.K == 1
    assert np.array_equal(sc.lens.planes[0].positions, ref.positions)
    assert np.array_equal(sc.lens.planes[0].b2, ref.b2)
    assert sc.lens.source.as_complex() == 0


def test_shorthand_rotation_and_scale():
    sc = parse_scene({"planes": [{"rhie": 2}, {"rhie": 3, "rotation": 0.5, "lambda": 0.1}], "epsilons": [0.01]})
    p = sc.lens.planes[1]
    assert np.allclose(np.abs(p.positions), 0.1)
    assert np.isclose(np.angle(p.positions[0]), 0.5)
    assert np.allclose(p.b2, 0.01)
    assert sc.lens.epsilons == (0.01,)


def test_wrong_epsilon_length():
    with pytest.raises(SceneValidationError) as err:
        parse_scene({"planes": [{"rhie": 2}, {"rhie": 2}], "epsilons": [0.1, 0.2]})
    assert err.value.field == "epsilons"


@pytest.mark.parametrize("doc, field", [
    ({"planes": []}, "planes"),
    ({"planes": [{"rhie": 1}]}, "planes[0].rhie"),
    ({"planes": [{"masses": [{"position": [0, 0], "b": -1}]}]}, "planes[0].masses[0].b"),
    ({"planes": [{"masses": [{"position": [0, 0]}, {"position": [0, 0]}]}]}, "planes[0].masses"),
    ({"planes": [{"rhie": 2}], "source": [0]}, "source"),
    ({"planes": [{"rhie": 2}], "betas": [0.0]}, "betas[0]"),
    ({"planes": [{"rhie": 2}], "solve": {"grid_n": 0}}, "solve.grid_n"),
    ({"planes": [{"rhie": 2}], "colour": "red"}, "<root>"),
    ({"planes": [{"spiral": 2}]}, "planes[0]"),
])
def test_validation_names_field(doc, field):
    with pytest.raises(SceneValidationError) as err:
        parse_scene(doc)
    assert err.value.field == field


def test_parse_error_has_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "planes": [\n    {"rhie": 2,}\n  ]\n}\n')
    with pytest.raises(SceneParseError) as err:
        load_scene(p)
    assert err.value.line == 3


def test_round_trip_is_byte_identical(tmp_path):
    for name in builtin_scenes():
        src = resolve_scene_path(name)
        text = src.read_text()
        out = tmp_path / f"{name}.json"
        save_scene(load_scene(src), out)
        assert out.read_text() == text


def test_canonical_form_is_a_fixed_point(tmp_path):
    sc = parse_scene({"planes": [{"masses": [{"position": [0.1, 0.2], "b": 1}]}], "source": [0.3, 0]})
    once = dump_scene(sc)
    p = tmp_path / "a.json"
    p.write_text(once)
    assert dump_scene(load_scene(p)) == once


def test_scene_from_lens_round_trip():
    sc = load_scene(resolve_scene_path("pair_g2_eps01"))
    again = scene_from_lens(sc.lens, name="copy")
    assert again.lens == sc.lens
    assert again.doc["planes"][0]["masses"][0]["b"] == 1.0


def test_bundled_scenes_present():
    assert builtin_scenes() == ["pair_g2_eps0", "pair_g2_eps01", "pair_g3_eps0", "pair_g3_eps0003",
                               "pair_g3_eps001", "single_g2", "single_g3"]
    sc = load_scene(resolve_scene_path("pair_g3_eps001"))
    assert sc.lens.g_list == [3, 3] and sc.lens.epsilons == (0.001,)
    assert [w["name"] for w in sc.plot_windows] == ["full", "zoom"]

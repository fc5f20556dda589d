"""JSON scene files describing a lens, its source and how to solve/plot it.

Schema (all keys except ``planes`` optional)::

    {
      "name": "pair_g2_eps0",
      "description": "free text",
      "source": [u, v],
      "planes": [
        {"rhie": 2, "rotation": 1.5707963267948966, "lambda": 1.0},
        {"masses": [{"position": [u, v], "b": 1.0}, ...]}
      ],
      "betas": [1.0, 1.0],
      "epsilons": [0.0],
      "solve": {"grid_n": 256, "newton_tol": 1e-12, "newton_max_iter": 60,
                "dedup_radius": 1e-8, "nondegeneracy_margin": 1e-10,
                "half_width": null},
      "plot": {"grid_n": 1024, "windows": [{"name": "full", "center": [0, 0], "half_width": 2.5}]}
    }

A ``rhie`` plane expands to :func:`multilens.rhie.rhie_plane` rotated by
``rotation`` radians and scaled by ``lambda`` (``central_b`` overrides the
tuned central mass for g >= 4).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .builder import scale_plane
from .core import LensPlane, MultiplaneLens, PlanePoint, PointMass
from .rhie import rhie_plane
from .solver import SolveOptions

__all__ = ["Scene", "SceneError", "SceneParseError", "SceneValidationError",
           "load_scene", "save_scene", "parse_scene", "dump_scene", "scene_from_lens"]

_SOLVE_KEYS = ("grid_n", "newton_tol", "newton_max_iter", "dedup_radius", "nondegeneracy_margin", "half_width")


class SceneError(Exception):
    pass


class SceneParseError(SceneError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line, self.column = line, column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class SceneValidationError(SceneError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass
class Scene:
    lens: MultiplaneLens
    doc: dict
    solve_options: SolveOptions = field(default_factory=SolveOptions)
    plot: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.doc.get("name", "scene")

    @property
    def plot_windows(self) -> list[dict]:
        return self.plot.get("windows") or [{"name": "full", "center": [0.0, 0.0],
                                             "half_width": self.solve_options.window_half_width(self.lens)}]

    @property
    def plot_grid(self) -> int:
        return int(self.plot.get("grid_n", 1024))


def _num(value, name: str, positive=False, nonneg=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SceneValidationError(name, f"expected a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise SceneValidationError(name, "must be finite")
    if positive and v <= 0:
        raise SceneValidationError(name, "must be > 0")
    if nonneg and v < 0:
        raise SceneValidationError(name, "must be >= 0")
    return v


def _pair(value, name: str) -> list[float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise SceneValidationError(name, f"expected [u, v], got {value!r}")
    return [_num(value[0], f"{name}[0]"), _num(value[1], f"{name}[1]")]


def _plane(doc: dict, name: str) -> tuple[LensPlane, dict]:
    if not isinstance(doc, dict):
        raise SceneValidationError(name, "expected an object")
    if "rhie" in doc:
        g = doc["rhie"]
        if isinstance(g, bool) or not isinstance(g, int) or g < 2:
            raise SceneValidationError(f"{name}.rhie", f"expected an integer >= 2, got {g!r}")
        unknown = set(doc) - {"rhie", "rotation", "lambda", "central_b"}
        if unknown:
            raise SceneValidationError(name, f"unknown keys {sorted(unknown)}")
        rot = _num(doc.get("rotation", 0.0), f"{name}.rotation")
        lam = _num(doc.get("lambda", 1.0), f"{name}.lambda", positive=True)
        cb = doc.get("central_b")
        norm = {"rhie": g, "rotation": rot, "lambda": lam}
        if cb is not None:
            norm["central_b"] = _num(cb, f"{name}.central_b", nonneg=True)
        plane, _ = rhie_plane(g, rotation=rot, central_b=norm.get("central_b"))
        if lam != 1.0:
            plane = scale_plane(plane, lam)
        return plane, norm
    if "masses" in doc:
        unknown = set(doc) - {"masses"}
        if unknown:
            raise SceneValidationError(name, f"unknown keys {sorted(unknown)}")
        ms = doc["masses"]
        if not isinstance(ms, list) or not ms:
            raise SceneValidationError(f"{name}.masses", "expected a non-empty list")
        masses, norm = [], []
        for k, m in enumerate(ms):
            fname = f"{name}.masses[{k}]"
            if not isinstance(m, dict) or set(m) - {"position", "b"} or "position" not in m:
                raise SceneValidationError(fname, "expected {\"position\": [u, v], \"b\": b}")
            pos = _pair(m["position"], f"{fname}.position")
            b = _num(m.get("b", 1.0), f"{fname}.b", nonneg=True)
            masses.append(PointMass(PlanePoint(*pos), b))
            norm.append({"position": pos, "b": b})
        try:
            plane = LensPlane(tuple(masses))
        except ValueError as exc:
            raise SceneValidationError(f"{name}.masses", str(exc)) from None
        return plane, {"masses": norm}
    raise SceneValidationError(name, "a plane needs either 'rhie' or 'masses'")


def parse_scene(data: dict) -> Scene:
    """Validate a decoded scene document and build the lens."""
    if not isinstance(data, dict):
        raise SceneValidationError("<root>", "expected a JSON object")
    unknown = set(data) - {"name", "description", "source", "planes", "betas", "epsilons", "solve", "plot"}
    if unknown:
        raise SceneValidationError("<root>", f"unknown keys {sorted(unknown)}")
    planes_doc = data.get("planes")
    if not isinstance(planes_doc, list) or not planes_doc:
        raise SceneValidationError("planes", "expected a non-empty list")
    planes, norm_planes = [], []
    for i, p in enumerate(planes_doc):
        plane, norm = _plane(p, f"planes[{i}]")
        planes.append(plane)
        norm_planes.append(norm)
    K = len(planes)
    source = _pair(data.get("source", [0.0, 0.0]), "source")
    betas = data.get("betas", [1.0] * K)
    if not isinstance(betas, list) or len(betas) != K:
        raise SceneValidationError("betas", f"expected a list of length {K}")
    betas = [_num(b, f"betas[{i}]", positive=True) for i, b in enumerate(betas)]
    eps = data.get("epsilons", [0.0] * (K - 1))
    if not isinstance(eps, list) or len(eps) != K - 1:
        raise SceneValidationError("epsilons", f"expected a list of length {K - 1} (one per plane after the first)")
    eps = [_num(e, f"epsilons[{i}]", nonneg=True) for i, e in enumerate(eps)]

    solve_doc = data.get("solve", {})
    if not isinstance(solve_doc, dict) or set(solve_doc) - set(_SOLVE_KEYS):
        raise SceneValidationError("solve", f"allowed keys are {list(_SOLVE_KEYS)}")
    solve_norm = {}
    for key in _SOLVE_KEYS:
        default = getattr(SolveOptions, key) if key != "half_width" else None
        val = solve_doc.get(key, default)
        if val is None:
            solve_norm[key] = None
            continue
        if key in ("grid_n", "newton_max_iter"):
            if isinstance(val, bool) or not isinstance(val, int) or val <= 0:
                raise SceneValidationError(f"solve.{key}", "expected a positive integer")
            solve_norm[key] = val
        else:
            solve_norm[key] = _num(val, f"solve.{key}", positive=True)
    opts = SolveOptions(**solve_norm)

    plot_doc = data.get("plot", {})
    if not isinstance(plot_doc, dict):
        raise SceneValidationError("plot", "expected an object")
    plot_norm: dict = {}
    if "grid_n" in plot_doc:
        gn = plot_doc["grid_n"]
        if isinstance(gn, bool) or not isinstance(gn, int) or gn < 64:
            raise SceneValidationError("plot.grid_n", "expected an integer >= 64")
        plot_norm["grid_n"] = gn
    if "windows" in plot_doc:
        wins = []
        for k, w in enumerate(plot_doc["windows"]):
            wn = f"plot.windows[{k}]"
            if not isinstance(w, dict) or "half_width" not in w:
                raise SceneValidationError(wn, "expected {\"name\", \"center\", \"half_width\"}")
            wins.append({
                "name": str(w.get("name", f"w{k}")),
                "center": _pair(w.get("center", [0.0, 0.0]), f"{wn}.center"),
                "half_width": _num(w["half_width"], f"{wn}.half_width", positive=True),
            })
        plot_norm["windows"] = wins

    lens = MultiplaneLens(tuple(planes), source=PlanePoint(*source), betas=tuple(betas), epsilons=tuple(eps))
    doc = {
        "name": str(data.get("name", "scene")),
        "description": str(data.get("description", "")),
        "source": source,
        "planes": norm_planes,
        "betas": betas,
        "epsilons": eps,
        "solve": solve_norm,
        "plot": plot_norm,
    }
    return Scene(lens=lens, doc=doc, solve_options=opts, plot=plot_norm)


def load_scene(path) -> Scene:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneParseError(exc.msg, exc.lineno, exc.colno) from None
    return parse_scene(data)


def dump_scene(scene: Scene) -> str:
    """Canonical JSON text of a scene."""
    return json.dumps(scene.doc, indent=2, sort_keys=True) + "\n"


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(dump_scene(scene))


def scene_from_lens(lens: MultiplaneLens, name: str = "scene", description: str = "",
                    plane_docs: list[dict] | None = None, **extra) -> Scene:
    """Scene wrapping an in-memory lens; planes are written out mass by mass
    unless ``plane_docs`` gives shorthand descriptions."""
    if plane_docs is None:
        plane_docs = [{"masses": [{"position": [m.position.u, m.position.v], "b": m.einstein_radius}
                                   for m in p.masses]} for p in lens.planes]
    data = {
        "name": name,
        "description": description,
        "source": [lens.source.u, lens.source.v],
        "planes": plane_docs,
        "betas": list(lens.betas),
        "epsilons": list(lens.epsilons),
        **extra,
    }
    return parse_scene(json.loads(json.dumps(data)))

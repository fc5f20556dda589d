"""Command-line front end: ``multilens <command> ...``.

Commands
    solve      image table for a scene
    curves     critical curves, caustics and SVG panels for a scene
    build      assemble a K-plane lens from Rhie planes and write a scene
    cosmo      distances and plane couplings for a redshift list
    bounds     image-count bounds for a list of plane sizes
    tune       central Einstein radius of a g >= 4 Rhie plane
    eps-scan   image count as a function of a uniform coupling
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import warnings
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import caustics as cst
from .builder import build_preliminary, perturb_epsilon
from .core import MultiplaneLens, ObstructionError
from .cosmology import Cosmology, PlaneRedshifts, angular_diameter, comoving_distance, plane_parameters, transverse_comoving
from .rhie import ConstructionError, tune_central_mass
from .scene import Scene, SceneParseError, SceneValidationError, load_scene, save_scene, scene_from_lens
from .solver import SolveOptions, image_count_bounds, solve

log = logging.getLogger("multilens")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_SOLVER = 5
EXIT_CONSTRUCTION = 6


class CLIError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def fmt(x) -> str:
    """17 significant digits, enough to round-trip a double."""
    return f"{float(x):.17g}"


def builtin_scenes() -> list[str]:
    root = resources.files("multilens") / "scenes"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_scene_path(name: str) -> Path:
    """A scene argument is a file path or the name of a bundled scene."""
    p = Path(name)
    if p.exists():
        return p
    bundled = resources.files("multilens") / "scenes" / f"{name}.json"
    if bundled.is_file():
        return Path(str(bundled))
    raise CLIError(f"scene {name!r} is neither a file nor a bundled scene ({', '.join(builtin_scenes())})",
                   EXIT_PARSE)


def _load(args) -> Scene:
    return load_scene(resolve_scene_path(args.scene))


def _options(scene: Scene, args, use_grid: bool = True) -> SolveOptions:
    opts = scene.solve_options
    if use_grid and getattr(args, "grid", None):
        opts = replace(opts, grid_n=args.grid)
    if getattr(args, "tol", None):
        opts = replace(opts, newton_tol=args.tol)
    if getattr(args, "window", None):
        opts = replace(opts, half_width=args.window)
    return opts


def _write(text: str, out: Path | None, name: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# solve


def image_table(lens: MultiplaneLens, images) -> str:
    K = lens.K
    header = ["index"]
    for i in range(1, K + 1):
        header += [f"x{i}_u", f"x{i}_v"]
    header += ["y_u", "y_v", "residual", "det", "parity", "morse_type"]
    rows = []
    for k, im in enumerate(images):
        row = [str(k)]
        for p in im.path.impacts:
            row += [fmt(p.u), fmt(p.v)]
        hit = im.path.source_hit
        row += [fmt(hit.u), fmt(hit.v), fmt(im.path.residual_norm), fmt(im.lens_map_jacobian_det),
                str(im.parity), im.morse_type]
        rows.append(row)
    return _csv_text(header, rows)


def summary_line(lens: MultiplaneLens, result) -> str:
    b = image_count_bounds(lens.g_list)

    def opt(v):
        return "NA" if v is None else str(v)

    return (f"# count={result.count} suspect={len(result.suspect)} lower={b.lower} upper_eq1={b.upper_eq1} "
            f"conjectured_max={opt(b.conjectured_max)} petters_special={opt(b.petters_special)} "
            f"within_bounds={'true' if b.contains(result.count) else 'false'}\n")


def cmd_solve(args) -> int:
    scene = _load(args)
    opts = _options(scene, args)
    res = solve(scene.lens, opts)
    table = image_table(scene.lens, res.images)
    summary = summary_line(scene.lens, res)
    if args.out is None:
        sys.stdout.write(table + summary)
    else:
        _write(table, args.out, "images.csv")
        _write(summary, args.out, "summary.txt")
        sys.stdout.write(summary)
    if res.suspect:
        print(f"warning: {len(res.suspect)} degenerate root(s) near a caustic", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# curves


def _polyline_rows(tag: str, lines) -> list[list[str]]:
    rows = []
    for k, pl in enumerate(lines):
        for j, (u, v) in enumerate(pl.xy):
            rows.append([tag, str(k), str(j), fmt(u), fmt(v)])
    return rows


def curve_metadata(lens: MultiplaneLens, cs: cst.CurveSet, n_images: int) -> dict:
    y = lens.source.as_array()
    groups = []
    for members in cs.multiplicity_groups:
        xy = np.vstack([cs.caustic[i].xy for i in members])
        lo = np.min([cs.caustic[i].xy.min(0) for i in members], axis=0)
        hi = np.max([cs.caustic[i].xy.max(0) for i in members], axis=0)
        groups.append({
            "members": members,
            "multiplicity": len(members),
            "centroid": [float(c) for c in xy.mean(0)],
            "contains_source": bool(np.all(lo <= y) and np.all(y <= hi)),
            "central": False,
        })
    around = [k for k, g in enumerate(groups) if g["contains_source"]]
    central = max(around, key=lambda k: (groups[k]["multiplicity"], -k)) if around else None
    if central is not None:
        groups[central]["central"] = True
    w = cs.window
    return {
        "window": [w.xmin, w.xmax, w.ymin, w.ymax] if w else None,
        "grid_n": cs.grid_n,
        "components": [
            {"index": k, "closed": c.closed, "exits_window": c.exits_window, "n_vertices": len(c),
             "caustic_vertices": len(cs.caustic[k])}
            for k, c in enumerate(cs.critical)
        ],
        "groups": groups,
        "multiplicities": cs.multiplicities,
        "central_group": central,
        "central_multiplicity": groups[central]["multiplicity"] if central is not None else 0,
        "n_images": n_images,
    }


def _caustic_window(cs: cst.CurveSet, lens: MultiplaneLens) -> cst.Window:
    pts = [c.xy for c in cs.caustic] + [lens.source.as_array()[None, :]]
    xy = np.vstack(pts)
    lo, hi = xy.min(0), xy.max(0)
    c = 0.5 * (lo + hi)
    half = max(0.55 * float(np.max(hi - lo)), 1e-3)
    return cst.Window.square(half, tuple(c))


def cmd_curves(args) -> int:
    scene = _load(args)
    opts = _options(scene, args, use_grid=False)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    grid = args.grid or scene.plot_grid
    windows = scene.plot_windows
    if args.window:
        windows = [{"name": "full", "center": [0.0, 0.0], "half_width": args.window}]
    res = solve(scene.lens, opts)
    csv_on = args.format in ("csv", "both")
    svg_on = args.format in ("svg", "both")
    summary = {}
    for win in windows:
        w = cst.Window.square(win["half_width"], tuple(win["center"]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", cst.OpenContourWarning)
            cs = cst.curve_set(scene.lens, w, grid)
        inside = [im for im in res.images
                  if w.xmin <= im.position.u <= w.xmax and w.ymin <= im.position.v <= w.ymax]
        name = win["name"]
        meta = curve_metadata(scene.lens, cs, len(inside))
        (out / f"{name}_curves.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        summary[name] = {"components": len(cs.critical), "multiplicities": cs.multiplicities,
                         "central_multiplicity": meta["central_multiplicity"]}
        if csv_on:
            header = ["plane", "component", "vertex", "u", "v"]
            (out / f"{name}_critical.csv").write_text(_csv_text(header, _polyline_rows("image", cs.critical)))
            (out / f"{name}_caustics.csv").write_text(_csv_text(header, _polyline_rows("source", cs.caustic)))
            for k, (c, k2) in enumerate(zip(cs.critical, cs.caustic)):
                (out / f"{name}_critical_{k:03d}.csv").write_text(
                    _csv_text(header, [["image", str(k)] + r[2:] for r in _polyline_rows("image", [c])]))
                (out / f"{name}_caustic_{k:03d}.csv").write_text(
                    _csv_text(header, [["source", str(k)] + r[2:] for r in _polyline_rows("source", [k2])]))
        if svg_on:
            from . import plotting

            plotting.save_panel(out / f"{name}_critical.svg", plotting.plot_critical, scene.lens, cs, inside)
            plotting.save_panel(out / f"{name}_caustics.svg", plotting.plot_caustics, scene.lens, cs,
                                _caustic_window(cs, scene.lens))
            if scene.lens.K == 1:
                plotting.save_panel(out / f"{name}_time_delay.svg", plotting.plot_time_delay, scene.lens, w,
                                    res.images)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# build


def _broadcast(values, n: int, what: str) -> list[float] | None:
    if values is None:
        return None
    if len(values) == 1:
        return list(values) * n
    if len(values) != n:
        raise CLIError(f"{what}: expected 1 or {n} values, got {len(values)}", EXIT_VALIDATION)
    return list(values)


def cmd_build(args) -> int:
    g_list = args.g
    if any(g < 2 for g in g_list):
        raise CLIError("every plane needs g >= 2", EXIT_VALIDATION)
    K = len(g_list)
    lambdas = _broadcast(args.lam, K - 1, "--lambda") if K > 1 else None
    rotations = _broadcast(args.rotation, K, "--rotation")
    eps = _broadcast(args.eps, K - 1, "--eps") if K > 1 else []
    if K == 1 and args.eps and any(args.eps):
        raise CLIError("a single plane has no couplings", EXIT_VALIDATION)
    opts = SolveOptions(grid_n=args.grid) if args.grid else SolveOptions()
    lens, report = build_preliminary(g_list, lambdas=lambdas, rotations=rotations, opts=opts)
    docs = []
    for g, rot, scale, b in zip(g_list, report.rotations, report.plane_scales, report.central_b):
        d = {"rhie": g, "rotation": rot, "lambda": scale}
        if g >= 4:
            d["central_b"] = b
        docs.append(d)
    eps = eps or [0.0] * (K - 1)
    name = "build_" + "_".join(map(str, g_list))
    scene = scene_from_lens(perturb_epsilon(lens, eps), name=name,
                            description=f"Rhie planes g={g_list}, {report.mode} scaling",
                            plane_docs=docs)
    res = solve(scene.lens, opts)
    report.epsilon_used = list(eps)
    rep = report.to_dict()
    rep["final_count"] = res.count
    rep["final_suspect"] = len(res.suspect)
    args.out.mkdir(parents=True, exist_ok=True)
    save_scene(scene, args.out / "scene.json")
    (args.out / "report.json").write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    print(f"expected={report.expected_count} count_eps0={report.achieved_count_eps0} "
          f"count={res.count} suspect={len(res.suspect)} lambdas={[fmt(x) for x in report.lambdas]}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# cosmology


def cmd_cosmo(args) -> int:
    c = Cosmology(args.omega_m, args.omega_lambda)
    zr = PlaneRedshifts(tuple(args.z))
    betas, eps = plane_parameters(c, zr)
    rows = []
    for i, z in enumerate(zr.zs):
        dC = comoving_distance(c, 0.0, z)
        row = [str(i + 1), fmt(z), fmt(dC), fmt(transverse_comoving(c, dC)), fmt(angular_diameter(c, 0.0, z))]
        row += [fmt(betas[i]), fmt(eps[i])] if i < zr.K else ["", ""]
        rows.append(row)
    sys.stdout.write(_csv_text(["plane", "z", "d_C", "d_M", "d_A", "beta", "epsilon"], rows))
    if c.is_flat:
        zs = (0.0,) + zr.zs
        worst = 0.0
        for a in range(len(zs)):
            for b in range(a + 1, len(zs)):
                for m in range(a + 1, b):
                    lhs = comoving_distance(c, zs[a], zs[b])
                    rhs = comoving_distance(c, zs[a], zs[m]) + comoving_distance(c, zs[m], zs[b])
                    worst = max(worst, abs(lhs - rhs))
        print(f"# additivity {'PASS' if worst <= 1e-9 else 'FAIL'} max_abs_error={worst:.3g}")
    else:
        print("# additivity SKIP (curved cosmology)")
    return EXIT_OK


def cmd_bounds(args) -> int:
    b = image_count_bounds(args.g)
    for key in ("lower", "upper_eq1", "conjectured_max", "petters_special", "even_sum", "odd_sum"):
        v = getattr(b, key)
        print(f"{key}={'NA' if v is None else v}")
    return EXIT_OK


def cmd_tune(args) -> int:
    b = tune_central_mass(args.g)
    print(f"g={args.g} central_b={fmt(b)} images={5 * args.g - 5}")
    return EXIT_OK


def cmd_eps_scan(args) -> int:
    scene = _load(args)
    opts = _options(scene, args)
    if scene.lens.K < 2:
        raise CLIError("eps-scan needs at least two planes", EXIT_VALIDATION)
    if args.eps:
        values = list(args.eps)
    else:
        lo, hi, n = args.range
        values = list(np.linspace(lo, hi, int(n)))
    rows = []
    for e in values:
        if e < 0:
            raise CLIError("couplings must be >= 0", EXIT_VALIDATION)
        res = solve(perturb_epsilon(scene.lens, [e] * (scene.lens.K - 1)), opts)
        mdet = res.min_abs_det
        rows.append([fmt(e), str(res.count), str(len(res.suspect)), fmt(mdet) if math.isfinite(mdet) else "inf"])
    _write(_csv_text(["epsilon", "count", "suspect", "min_abs_det"], rows), args.out, "eps_scan.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multilens", description="Multiplane point-mass lens toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def scene_args(sp, out_required=False):
        sp.add_argument("--scene", required=True, help="scene JSON file or bundled scene name")
        sp.add_argument("--out", type=Path, required=out_required, help="output directory")
        sp.add_argument("--grid", type=int, help="seed lattice (solve) or contour grid (curves) size")
        sp.add_argument("--tol", type=float, help="Newton residual tolerance")
        sp.add_argument("--window", type=float, help="half-width of the square window in plane 1")

    sp = sub.add_parser("solve", help="list all images of a scene")
    scene_args(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("curves", help="critical curves, caustics and figure panels")
    scene_args(sp, out_required=True)
    sp.add_argument("--format", choices=("csv", "svg", "both"), default="both")
    sp.set_defaults(func=cmd_curves)

    sp = sub.add_parser("build", help="assemble a lens with prod(5g-5) images")
    sp.add_argument("g", type=int, nargs="+", help="masses per plane, front to back")
    sp.add_argument("--lambda", dest="lam", type=float, nargs="+", help="step scale factors for planes 2..K")
    sp.add_argument("--eps", type=float, nargs="+", help="couplings for planes 2..K")
    sp.add_argument("--rotation", type=float, nargs="+", help="per-plane rotation in radians")
    sp.add_argument("--grid", type=int, help="seed lattice size")
    sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
    sp.set_defaults(func=cmd_build)

    sp = sub.add_parser("cosmo", help="distances and plane couplings")
    sp.add_argument("z", type=float, nargs="+", help="plane redshifts followed by the source redshift")
    sp.add_argument("--omega-m", type=float, default=1.0)
    sp.add_argument("--omega-lambda", type=float, default=0.0)
    sp.set_defaults(func=cmd_cosmo)

    sp = sub.add_parser("bounds", help="image-count bounds")
    sp.add_argument("g", type=int, nargs="+")
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("tune", help="central mass of a g >= 4 Rhie plane")
    sp.add_argument("g", type=int)
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("eps-scan", help="image count versus uniform coupling")
    scene_args(sp)
    grp = sp.add_mutually_exclusive_group(required=True)
    grp.add_argument("--eps", type=float, nargs="+", help="explicit coupling values")
    grp.add_argument("--range", type=float, nargs=3, metavar=("LO", "HI", "N"), help="linspace of couplings")
    sp.set_defaults(func=cmd_eps_scan)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except SceneParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SceneValidationError as exc:
        print(f"invalid scene: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConstructionError as exc:
        print(f"construction failed: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION
    except (ObstructionError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

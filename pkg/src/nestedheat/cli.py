"""Command-line front end.

Every subcommand writes CSV (and, where relevant, JSON) either to stdout or,
with ``--out DIR``, into a run directory together with ``manifest.json``.
Exit codes: 0 success, 1 validation error, 2 failed claim (``verify``),
64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys as _sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NestedHeatError

EXIT_OK, EXIT_INVALID, EXIT_CLAIM, EXIT_USAGE = 0, 1, 2, 64
CLAIMS = ("thm31", "thm32", "lem36", "cor37", "card", "metric")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(_sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _point(text: str) -> np.ndarray:
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad point {text!r}") from exc
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"point {text!r} needs two coordinates")
    return np.array(parts)


def _points(text: str) -> list:
    return [_point(p) for p in text.split(";") if p.strip()]


class Run:
    """Collects output tables and writes them with provenance headers."""

    def __init__(self, args, system):
        self.args, self.system = args, system
        self.files = []

    def header(self) -> list[str]:
        lines = [f"# nestedheat {__version__}"]
        if self.system is not None:
            lines.append(f"# spec_sha256 {self.system.spec_hash()}")
        lines.append(f"# seed {self.args.seed}")
        return lines

    def table(self, name: str, columns, rows) -> None:
        buf = io.StringIO()
        for line in self.header():
            buf.write(line + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        self._emit(name, buf.getvalue())

    def json(self, name: str, payload: dict) -> None:
        payload = dict(payload, version=__version__, seed=self.args.seed)
        if self.system is not None:
            payload["spec_hash"] = self.system.spec_hash()
        self._emit(name, json.dumps(payload, sort_keys=True, indent=2) + "\n")

    def _emit(self, name, text):
        if self.args.out is None:
            _sys.stdout.write(text)
            return
        out = Path(self.args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)
        self.files.append(name)

    def finish(self) -> None:
        if self.args.out is None:
            return
        manifest = {
            "version": __version__,
            "command": self.args.command,
            "argv": self.args.argv,
            "seed": self.args.seed,
            "files": sorted(self.files),
        }
        if self.system is not None:
            manifest["spec_hash"] = self.system.spec_hash()
            manifest["system"] = self.system.name
        (Path(self.args.out) / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n"
        )


# --------------------------------------------------------------------------
# subcommands


def _generate(args, system, run):
    from .geometry import CellComplex

    cx = CellComplex(system, args.level, args.J)
    rows = [(p[0], p[1], args.level, r) for p, r in zip(cx.vertex_coords, cx.rank)]
    run.table("vertices.csv", ["x", "y", "level", "rank"], rows)
    return EXIT_OK


def _label(args, system, run):
    from .labelling import construct_labelling, verify_glp

    lab = construct_labelling(system, args.M, args.J, anchor=args.anchor, order=args.order,
                              seed=args.seed)
    report = verify_glp(system, lab)
    cx = lab.complex
    run.table("labels.csv", ["x", "y", "label"],
              [(p[0], p[1], l) for p, l in zip(cx.vertex_coords, lab.vertex_labels)])
    run.table("rotations.csv", ["word", "rotation"],
              [("".join(str(int(i)) + "." for i in w).rstrip("."), r)
               for w, r in zip(cx.words, lab.rotations)])
    run.json("glp.json", {"ok": report.ok, "violations": len(report.violations),
                          "M": args.M, "J": args.J})
    return EXIT_OK if report.ok else EXIT_INVALID


def _project(args, system, run):
    from .folding import project

    rows = []
    for x in args.points:
        p = project(system, None, x, args.M)
        rows.append((x[0], x[1], p[0], p[1]))
    run.table("projection.csv", ["x", "y", "px", "py"], rows)
    return EXIT_OK


def _metric(args, system, run):
    from .graph_metric import d_M

    pts = args.points
    if len(pts) % 2:
        raise ValueError("metric needs an even number of points (pairs)")
    rows = []
    for a, b in zip(pts[::2], pts[1::2]):
        rows.append((a[0], a[1], b[0], b[1], args.M, d_M(system, a, b, args.M)))
    run.table("metric.csv", ["x_x", "x_y", "y_x", "y_y", "M", "d_M"], rows)
    return EXIT_OK


def _constants(args, system, run):
    from .graph_metric import growth_constants, kumagai_by_level, separation_constant

    Ms = list(range(args.M_min, args.M_max + 1))
    gc = growth_constants(system, Ms, args.samples, args.seed)
    kn = kumagai_by_level(system, Ms, args.samples, args.seed)
    rows = [("c17", gc.c17_hat), ("c18", gc.c18_hat),
            ("c19", separation_constant(system, 0, 2)), ("n", max(kn.values()))]
    run.table("constants.csv", ["name", "value"], rows)
    return EXIT_OK


def _fiber(args, system, run):
    from .folding import fiber

    fb = fiber(system, None, args.y, args.M, args.m_max)
    rows = [(-1, args.y[0], args.y[1], "base", "", "")]
    zs = {tuple(np.round(p, 15)): z for p, z in zip(fb.C_set, fb.C_contacts)}
    for m, pts in enumerate(fb.A_sets):
        for p in pts:
            if m == 0 and tuple(np.round(p, 15)) in zs:
                z = zs[tuple(np.round(p, 15))]
                rows.append((m, p[0], p[1], "C", z[0], z[1]))
            else:
                rows.append((m, p[0], p[1], "B" if m == 0 else "A", "", ""))
    run.table("fiber.csv", ["m", "y_x", "y_y", "class", "z_x", "z_y"], rows)
    return EXIT_OK


def _density(args, system, run):
    from .kernels import KernelParams, g_M_density

    params = KernelParams.for_system(system, c_eval=args.c_eval)
    cols = ["t", "M", "x_x", "x_y", "y_x", "y_y", "gM", "g1", "g2", "g_base", "m_used", "tail_bound"]
    if args.backend == "surrogate":
        r = g_M_density(params, system, None, args.t, args.x, args.y, args.M, args.rel_tol)
        row = (args.t, args.M, *args.x, *args.y, r.value, r.g1, r.g2, r.g_base, r.m_used, r.tail_bound)
        run.table("density.csv", cols, [row])
        return EXIT_OK
    from .random_walk import build_walk_graph, empirical_density, fold_ensemble, simulate_many

    graph = build_walk_graph(system, args.level, args.J if args.J is not None else args.M + 2)
    steps = int(round(args.t / graph.time_step))
    if steps < 1:
        raise ValueError("t is shorter than one lattice step")
    ens = fold_ensemble(simulate_many(graph, args.x, [steps], args.walks, args.seed, jobs=args.jobs), args.M)
    h = empirical_density(ens, steps * graph.time_step, args.bin_level, M=args.M)
    d, se = h.density(system), h.standard_error(system)
    i = int(np.argmin(np.hypot(*(h.barycenters - args.y).T)))
    row = (args.t, args.M, *args.x, *args.y, d[i], "", "", "", "", "")
    run.table("density.csv", cols + ["standard_error"], [row + (se[i],)])
    return EXIT_OK


def _simulate(args, system, run):
    from .random_walk import build_walk_graph, empirical_density, fold_ensemble, simulate_many

    J = args.J if args.J is not None else args.M + 2
    graph = build_walk_graph(system, args.level, J)
    x0 = args.x0 if args.x0 is not None else system.vertices(args.M)[1] * 0.5
    ens = simulate_many(graph, x0, args.steps, args.walks, args.seed, jobs=args.jobs)
    folded = fold_ensemble(ens, args.M)
    rows = []
    for s in ens.record:
        t = s * graph.time_step
        h = empirical_density(folded, t, args.bin_level, M=args.M, min_samples=1)
        d, se = h.density(system), h.standard_error(system)
        for b in range(len(h.counts)):
            rows.append((s, t, b, h.barycenters[b][0], h.barycenters[b][1], h.counts[b], d[b], se[b]))
    run.table("histogram.csv", ["step", "t", "bin", "bin_x", "bin_y", "count", "density", "standard_error"], rows)
    run.json("run.json", {
        "time_step": graph.time_step, "level": args.level, "J": J, "M": args.M,
        "walks": args.walks, "discard_fraction": ens.discard_fraction(),
        "caveat": graph.caveat, "x0": [float(v) for v in x0],
    })
    return EXIT_OK


def _verify(args, system, run):
    from . import harness
    from .kernels import KernelParams, calibrated_params

    grid_data = {}
    if args.grid is not None:
        path = Path(args.grid)
        if not path.is_file():
            raise FileNotFoundError(f"grid file not found: {path}")
        grid_data = json.loads(path.read_text())
    grid_data.setdefault("seed", args.seed)
    if args.params == "calibrated":
        params = calibrated_params(system, c_eval=args.c_eval)
    else:
        params = KernelParams.for_system(system, c_eval=args.c_eval)
    claim = args.claim
    if claim == "card":
        rep = harness.cardinality_scan(system, seed=args.seed, **{
            k: grid_data[k] for k in ("M_values", "m_max", "n_points") if k in grid_data})
    elif claim == "metric":
        rep = harness.metric_report(system, seed=args.seed, **{
            k: grid_data[k] for k in ("M_values", "samples") if k in grid_data})
    else:
        base = harness.COROLLARY_GRID if claim == "cor37" else harness.Grid()
        grid = harness.Grid.from_dict(dict(base.to_dict(), **grid_data))
        scan = {"thm31": harness.scan_theorem_1, "thm32": harness.scan_theorem_2,
                "lem36": harness.scan_lemma_tail, "cor37": harness.scan_corollary}[claim]
        rep = scan(params, system, None, grid, jobs=args.jobs)
    run.json("report.json", rep.to_dict())
    rows = [(c.get("side", ""), c.get("t", ""), c.get("M", ""),
             *(c.get("x") or ["", ""]), *(c.get("y") or ["", ""]), c.get("ratio", ""))
            for c in rep.worst_cases if "t" in c]
    run.table("worst_cases.csv", ["side", "t", "M", "x_x", "x_y", "y_x", "y_y", "ratio"], rows)
    return EXIT_OK if rep.passed else EXIT_CLAIM


COMMANDS = {
    "generate": _generate, "label": _label, "project": _project, "metric": _metric,
    "constants": _constants, "fiber": _fiber, "density": _density, "simulate": _simulate,
    "verify": _verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", required=True,
                        help="fractal spec JSON file or bundled name (gasket, snowflake, pentagasket)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="run directory (default: write to stdout)")
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--cap", type=int, default=None, help="enumeration cap (cells)")

    p = _Parser(prog="nestedheat", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"nestedheat {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("generate", parents=[common], help="vertex lattice of an envelope")
    s.add_argument("--level", type=int, default=0)
    s.add_argument("--J", type=int, default=2)

    s = sub.add_parser("label", parents=[common], help="good labelling and its verification")
    s.add_argument("--M", type=int, default=0)
    s.add_argument("--J", type=int, default=3)
    s.add_argument("--anchor", type=int, default=0)
    s.add_argument("--order", choices=["bfs", "dfs", "random"], default="bfs")

    s = sub.add_parser("project", parents=[common], help="fold points onto K<M>")
    s.add_argument("--M", type=int, default=0)
    s.add_argument("--points", type=_points, required=True, help="'x,y;x,y;...'")

    s = sub.add_parser("metric", parents=[common], help="graph distance of point pairs")
    s.add_argument("--M", type=int, default=0)
    s.add_argument("--points", type=_points, required=True, help="'x1,y1;x2,y2;...' taken pairwise")

    s = sub.add_parser("constants", parents=[common], help="fitted c17, c18, c19 and n")
    s.add_argument("--M-min", type=int, default=-2)
    s.add_argument("--M-max", type=int, default=2)
    s.add_argument("--samples", type=int, default=1000)

    s = sub.add_parser("fiber", parents=[common], help="fiber of a base point")
    s.add_argument("--M", type=int, default=0)
    s.add_argument("--y", type=_point, required=True)
    s.add_argument("--m-max", type=int, default=2)

    s = sub.add_parser("density", parents=[common], help="reflected density g_M(t, x, y)")
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--x", type=_point, required=True)
    s.add_argument("--y", type=_point, required=True)
    s.add_argument("--M", type=int, default=0)
    s.add_argument("--rel-tol", type=float, default=1e-9)
    s.add_argument("--backend", choices=["surrogate", "mc"], default="surrogate")
    s.add_argument("--c-eval", type=float, default=1.0)
    s.add_argument("--level", type=int, default=-5, help="lattice level for --backend mc")
    s.add_argument("--J", type=int, default=None)
    s.add_argument("--walks", type=int, default=100000)
    s.add_argument("--bin-level", type=int, default=-3)

    s = sub.add_parser("simulate", parents=[common], help="folded random walk histograms")
    s.add_argument("--level", type=int, default=-4)
    s.add_argument("--steps", type=lambda v: [int(a) for a in v.split(",")], default=[100])
    s.add_argument("--walks", type=int, default=10000)
    s.add_argument("--M", type=int, default=0)
    s.add_argument("--J", type=int, default=None)
    s.add_argument("--bin-level", type=int, default=-2)
    s.add_argument("--x0", type=_point, default=None)

    s = sub.add_parser("verify", parents=[common], help="check a claim on a grid")
    s.add_argument("--claim", choices=CLAIMS, required=True)
    s.add_argument("--grid", default=None, help="grid JSON file")
    s.add_argument("--params", choices=["calibrated", "default"], default="calibrated")
    s.add_argument("--c-eval", type=float, default=1.0)
    return p


def main(argv=None) -> int:
    argv = list(_sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    saved_cap = os.environ.get("NESTEDHEAT_CAP")
    if args.cap is not None:
        os.environ["NESTEDHEAT_CAP"] = str(args.cap)
    from .geometry import load_spec

    try:
        system = load_spec(args.spec)
        run = Run(args, system)
        code = COMMANDS[args.command](args, system, run)
        run.finish()
        return code
    except FileNotFoundError as exc:
        print(f"nestedheat: {exc}", file=_sys.stderr)
        return EXIT_INVALID
    except (NestedHeatError, ValueError) as exc:
        print(f"nestedheat: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_INVALID
    finally:
        if saved_cap is None:
            os.environ.pop("NESTEDHEAT_CAP", None)
        else:
            os.environ["NESTEDHEAT_CAP"] = saved_cap


if __name__ == "__main__":
    raise SystemExit(main())

"""Acceptance criteria, one test and one summary line each.

Tolerances and workloads are pinned as module constants.
"""

import json
import math
import time

import numpy as np
import pytest

from nestedheat.cli import main as cli_main
from nestedheat.errors import NoGLP
from nestedheat.folding import fiber_table, preimages, project
from nestedheat.geometry import on_cell, sample_points
from nestedheat.harness import (
    COROLLARY_GRID,
    Grid,
    cardinality_scan,
    metric_report,
    scan_corollary,
    scan_lemma_tail,
    scan_theorem_1,
    scan_theorem_2,
)
from nestedheat.kernels import KernelParams, calibrated_params, density_series, f_kernel
from nestedheat.labelling import construct_labelling, verify_glp
from nestedheat.random_walk import (
    build_walk_graph,
    compare_histograms,
    empirical_density,
    fold_ensemble,
    on_diagonal_slope,
    pushforward,
    simulate_many,
)

# pinned workloads and tolerances
CARD_LEVELS, CARD_M_MAX, CARD_POINTS, CARD_SECONDS = (-1, 0, 1), 4, 20, 60.0
GLP_SECONDS = 60.0
PROJECTION_POINTS = 10_000
METRIC_LEVELS, METRIC_SAMPLES, METRIC_DRIFT = (-2, -1, 0, 1, 2), 1000, 1.5
SCAN_GRID = Grid(n_pairs=200)  # t in [1e-3, 1e3] L**(M d_w), M in {-1..2}
STABILITY = 10.0
LEMMA_SECONDS, THEOREM_SECONDS = 300.0, 600.0
BRUTE_FORCE_GENERATIONS = 12
BAND_LIMIT = 10.0
MC_LEVEL, MC_WALKS, MC_SLOPE_TOL, MC_Z_LIMIT, MC_MIN_HITS, MC_SECONDS = -6, 100_000, 0.07, 3.0, 100, 900.0
SCAN_SYSTEMS = ("gasket", "pentagasket")


@pytest.fixture(scope="module")
def systems(gasket, snowflake, pentagasket):
    return {"gasket": gasket, "snowflake": snowflake, "pentagasket": pentagasket}


def test_criterion_1_fiber_cardinalities(systems, acceptance_log):
    t0 = time.perf_counter()
    parts, ok = [], True
    for name in ("gasket", "snowflake"):
        rep = cardinality_scan(systems[name], CARD_LEVELS, CARD_M_MAX, CARD_POINTS, seed=0)
        good = rep.passed and (name != "gasket" or rep.details["max_B"] == 0)
        ok &= good
        why = (f"{rep.details['preimages_checked']} preimages, max |B| = {rep.details['max_B']}"
               if rep.passed else rep.worst_cases[0]["issue"])
        parts.append(f"{name} {'ok' if good else 'failed'} ({why})")
    dt = time.perf_counter() - t0
    ok &= dt < CARD_SECONDS
    acceptance_log(1, ok, "fiber cardinalities: " + "; ".join(parts) + f" [{dt:.1f} s]")
    assert ok


def test_criterion_2_good_labelling(systems, acceptance_log):
    t0 = time.perf_counter()
    parts, ok = [], True
    for name, extra in (("gasket", 3), ("snowflake", 2)):
        sys = systems[name]
        try:
            for M in (-1, 0, 1):
                a = construct_labelling(sys, M, M + extra, order="bfs")
                b = construct_labelling(sys, M, M + extra, order="dfs")
                rep = verify_glp(sys, a)
                if not rep.ok or not np.array_equal(a.vertex_labels, b.vertex_labels):
                    raise AssertionError(f"M={M}: {len(rep.violations)} violations or order dependence")
            parts.append(f"{name} ok (J = M+{extra}, 0 violations, orders agree)")
        except (NoGLP, AssertionError) as exc:
            ok = False
            parts.append(f"{name} failed ({type(exc).__name__}: {exc})")
    dt = time.perf_counter() - t0
    ok &= dt < GLP_SECONDS
    acceptance_log(2, ok, "good labelling: " + "; ".join(parts) + f" [{dt:.1f} s]")
    assert ok


def test_criterion_3_projection_laws(systems, acceptance_log):
    rng = np.random.default_rng(2024)
    parts, ok = [], True
    for name in SCAN_SYSTEMS:
        sys, M = systems[name], 0
        lab = construct_labelling(sys, M, M + 3)
        tol = 1e-9 * sys.L ** M
        fail = 0
        half = PROJECTION_POINTS // 2
        for p in sample_points(sys, M, half, rng, exclude_vertices=False):
            fail += not np.allclose(project(sys, lab, p, M), p, atol=tol)
        for p in sample_points(sys, M + 3, PROJECTION_POINTS - half, rng, exclude_vertices=False):
            q = project(sys, lab, p, M)
            fail += not (on_cell(sys, q, M) and np.allclose(project(sys, lab, q, M), q, atol=tol))
        cx = lab.complex
        for c in range(cx.n_cells):
            verts = cx.vertex_coords[cx.cell_vertices[c]]
            imgs = [project(sys, lab, v, M) for v in verts]
            labels = [lab.label_of(v) for v in verts]
            fail += sorted(lab.label_of(i) for i in imgs) != list(range(sys.k))
            fail += labels != [lab.label_of(i) for i in imgs]
        ok &= fail == 0
        parts.append(f"{name} {PROJECTION_POINTS} points + {cx.n_cells} cells, {fail} failures")
    acceptance_log(3, ok, "projection laws: " + "; ".join(parts))
    assert ok


def test_criterion_4_graph_metric(systems, acceptance_log):
    parts, ok = [], True
    for name in SCAN_SYSTEMS:
        rep = metric_report(systems[name], METRIC_LEVELS, METRIC_SAMPLES, seed=0, drift_limit=METRIC_DRIFT)
        ns = sorted(set(rep.details["kumagai_n"].values()))
        ok &= rep.passed
        parts.append(f"{name} c17={rep.details['c17_hat']:.4g} c18={rep.details['c18_hat']:.4g} "
                     f"drift=({rep.drift[0]:.3g}, {rep.drift[1]:.3g}) held-out violations="
                     f"{rep.details['holdout_violations']} n={ns}")
    acceptance_log(4, ok, "graph metric: " + "; ".join(parts))
    assert ok


def _brute_force_check(sys):
    """Fixed truncation at every generation m < 12 against the full sum to m = 12."""
    params = KernelParams.for_system(sys)
    table = fiber_table(sys, BRUTE_FORCE_GENERATIONS + 1)
    worst = 0.0
    rng = np.random.default_rng(7)
    for M in (-1, 0, 1, 2):
        x, y = sample_points(sys, M, 2, rng)
        ts = np.array([1e-2, 1.0, 1e2]) * sys.L ** (M * sys.dims.d_w)
        r = np.hypot(*(preimages(sys, y, M, table) - x).T)
        for t in ts:
            full = math.fsum(f_kernel(params, t, r))
            for m in range(BRUTE_FORCE_GENERATIONS):
                res = density_series(params, sys, None, [t], x, y, M, m_max=m)[0]
                gap = full - res.value
                allowed = res.tail_bound * (1 + 1e-9) + 1e-12 * full
                if gap < -1e-12 * full or gap > allowed:
                    return False, worst
                worst = max(worst, gap / allowed)
    return True, worst


def test_criterion_5_lemma_tail(systems, acceptance_log):
    t0 = time.perf_counter()
    parts, ok = [], True
    for name in SCAN_SYSTEMS:
        sys = systems[name]
        rep = scan_lemma_tail(calibrated_params(sys), sys, None, SCAN_GRID, stability=STABILITY)
        ok &= rep.passed
        parts.append(f"{name} c21={rep.min_ratio:.3g} c23={rep.max_ratio:.3g} "
                     f"drift=({rep.drift[0]:.3g}, {rep.drift[1]:.3g})")
    sound, worst = _brute_force_check(systems["gasket"])
    ok &= sound
    parts.append(f"gasket brute force to m={BRUTE_FORCE_GENERATIONS} within tail bound: {sound} "
                 f"(largest gap/allowance {worst:.2g})")
    dt = time.perf_counter() - t0
    ok &= dt < LEMMA_SECONDS
    acceptance_log(5, ok, "tail lemma: " + "; ".join(parts) + f" [{dt:.1f} s]")
    assert ok


def test_criterion_6_theorem_sandwiches(systems, acceptance_log):
    t0 = time.perf_counter()
    parts, ok = [], True
    for name in SCAN_SYSTEMS:
        sys = systems[name]
        params = calibrated_params(sys)
        for scan in (scan_theorem_1, scan_theorem_2):
            rep = scan(params, sys, None, SCAN_GRID, stability=STABILITY)
            good = rep.passed and rep.min_ratio > 0 and math.isfinite(rep.max_ratio)
            ok &= good
            parts.append(f"{name} {rep.claim} lower-side min={rep.min_ratio:.3g} upper-side max={rep.max_ratio:.3g} "
                         f"drift=({rep.drift[0]:.3g}, {rep.drift[1]:.3g})")
    dt = time.perf_counter() - t0
    ok &= dt < THEOREM_SECONDS
    acceptance_log(6, ok, "theorem sandwiches: " + "; ".join(parts) + f" [{dt:.1f} s]")
    assert ok


def test_criterion_7_corollary_regimes(systems, acceptance_log):
    parts, ok = [], True
    for name in SCAN_SYSTEMS:
        sys = systems[name]
        grid = Grid.from_dict(dict(COROLLARY_GRID.to_dict(), n_pairs=SCAN_GRID.n_pairs))
        rep = scan_corollary(calibrated_params(sys), sys, None, grid, stability=STABILITY, band=BAND_LIMIT)
        a, b = rep.details["band_A"], rep.details["band_B"]
        ok &= rep.passed and a < BAND_LIMIT and b < BAND_LIMIT
        parts.append(f"{name} band A={a:.3g} band B={b:.3g}")
    acceptance_log(7, ok, "uniformisation regimes: " + "; ".join(parts) + f" (limit {BAND_LIMIT})")
    assert ok


def test_criterion_8_monte_carlo(gasket, acceptance_log):
    t0 = time.perf_counter()
    target = -math.log(3) / math.log(5)
    g = build_walk_graph(gasket, MC_LEVEL, 2)
    steps = np.unique(np.round(np.logspace(1, 3, 12)).astype(int))
    slope, *_ = on_diagonal_slope(g, (1.0, 0.0), steps, MC_WALKS, seed=0)
    M, n_steps, bins = -2, 1000, -4
    T = n_steps * g.time_step
    folded = fold_ensemble(simulate_many(g, (0.125, 0.0), [n_steps], MC_WALKS, seed=11), M)
    free = simulate_many(g, (0.125, 0.0), [n_steps], MC_WALKS, seed=12)
    z, used = compare_histograms(empirical_density(folded, T, bins, M=M),
                                 pushforward(empirical_density(free, T, bins), gasket, M), gasket,
                                 min_hits=MC_MIN_HITS)
    dt = time.perf_counter() - t0
    ok = abs(slope - target) <= MC_SLOPE_TOL and z <= MC_Z_LIMIT and used > 0 and dt < MC_SECONDS
    acceptance_log(8, ok, f"Monte Carlo: slope {slope:.4f} vs {target:.4f} (tol {MC_SLOPE_TOL}); "
                          f"folded vs pushforward max z {z:.2f} over {used} bins (limit {MC_Z_LIMIT}) "
                          f"[{dt:.1f} s]")
    assert ok


def test_criterion_9_determinism(tmp_path, acceptance_log):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"n_pairs": 20, "M_values": [0, 1]}))
    runs = {
        "thm31": ["verify", "--claim", "thm31", "--spec", "gasket", "--grid", str(grid), "--seed", "3"],
        "card": ["verify", "--claim", "card", "--spec", "gasket", "--seed", "3"],
        "thm31 jobs=4": ["verify", "--claim", "thm31", "--spec", "gasket", "--grid", str(grid),
                         "--seed", "3", "--jobs", "4"],
    }
    outputs = {}
    for key, argv in runs.items():
        for rep in ("a", "b"):
            out = tmp_path / f"{key.replace(' ', '_')}_{rep}"
            assert cli_main(argv + ["--out", str(out)]) == 0
            outputs[(key, rep)] = {f: (out / f).read_bytes() for f in ("report.json", "worst_cases.csv")}
    same = all(outputs[(k, "a")] == outputs[(k, "b")] for k in runs)
    jobs_same = outputs[("thm31", "a")] == outputs[("thm31 jobs=4", "a")]
    ok = same and jobs_same
    acceptance_log(9, ok, f"determinism: repeated verify runs byte-identical {same}; "
                          f"--jobs 1 vs 4 identical {jobs_same}")
    assert ok

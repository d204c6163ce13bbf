"""Grid scans of the two-sided density estimates.

Each scan samples point pairs in ``K<M>`` for several ``M``, evaluates the
reflected-density series on a grid of times ``t = factor * L**(M d_w)``
and reports the extreme ratios against the envelope functions.  A claim
passes when the ratios are positive and finite and, per side, the extreme
values of different levels stay within a stability factor of each other.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .errors import GridEmpty, NoGLP
from .folding import boundary_set, delta, fiber, is_base_vertex, project
from .geometry import FractalSystem, on_cell, quantize, sample_points
from .graph_metric import growth_constants, kumagai_by_level
from .kernels import KernelParams, density_series, log_f_kernel, log_h_envelope

STABILITY = 10.0
N_WORST = 5


@dataclass(frozen=True)
class Grid:
    """Scan grid: relative times, levels and sampled pairs.

    ``pairs`` adds explicit pairs given in units of ``L**M`` (so the same
    pair is rescaled for every level).
    """

    t_factors: tuple = tuple(float(v) for v in np.logspace(-3, 3, 13))
    M_values: tuple = (-1, 0, 1, 2)
    n_pairs: int = 200
    seed: int = 0
    depth: int = 6
    pairs: tuple = ()

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        d = dict(d)
        for key in ("t_factors", "M_values"):
            if key in d:
                d[key] = tuple(d[key])
        if "pairs" in d:
            d["pairs"] = tuple(tuple(tuple(float(c) for c in p) for p in pair) for pair in d["pairs"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def points(self, sys: FractalSystem, M: int) -> list:
        """Pairs ``(x, y)`` for level ``M``; independent stream per level."""
        out = [(np.asarray(x, float) * sys.L ** M, np.asarray(y, float) * sys.L ** M)
               for x, y in self.pairs]
        if self.n_pairs:
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, M + 1000]))
            P = sample_points(sys, M, 2 * self.n_pairs, rng, self.depth)
            out.extend((P[2 * i], P[2 * i + 1]) for i in range(self.n_pairs))
        return out


COROLLARY_GRID = Grid(t_factors=tuple(float(v) for v in np.logspace(-3, 2, 11)))


@dataclass
class BoundReport:
    claim: str
    system: str
    grid: dict
    params: dict
    min_ratio: float
    max_ratio: float
    log10_min: float
    log10_max: float
    per_level: dict
    drift: tuple
    worst_cases: list
    passed: bool
    details: dict = field(default_factory=dict)
    seed: int = 0
    spec_hash: str = ""
    version: str = __version__

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    return v


# --------------------------------------------------------------------------
# evaluation


@dataclass
class _Eval:
    M: int
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    log_g: np.ndarray
    log_g1: np.ndarray
    log_g2: np.ndarray
    log_diff: np.ndarray


def _evaluate(params, sys, lab, grid: Grid, jobs: int = 1, vertex_ok: bool = True,
              target: str = "value"):
    tasks = []
    for M in grid.M_values:
        t = np.array(grid.t_factors) * sys.L ** (M * sys.dims.d_w)
        for x, y in grid.points(sys, M):
            if not vertex_ok and (is_base_vertex(sys, x, M) or is_base_vertex(sys, y, M)):
                continue
            tasks.append((M, x, y, t))

    def run(task):
        M, x, y, t = task
        labm = lab.get(M) if isinstance(lab, dict) else lab
        res = density_series(params, sys, labm, t, x, y, M, target=target)
        return _Eval(
            M, x, y, t,
            np.array([r.log_value for r in res]),
            np.array([r.log_g1 for r in res]),
            np.array([r.log_g2 for r in res]),
            np.array([r.log_difference for r in res]),
        )

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            out = list(ex.map(run, tasks))
    else:
        out = [run(t) for t in tasks]
    if not out:
        raise GridEmpty("no evaluable grid points")
    return out


def _case(e, i, log_ratio):
    return {"t": float(e.t[i]), "M": int(e.M), "x": [float(v) for v in e.x],
            "y": [float(v) for v in e.y], "ratio": float(math.exp(log_ratio)) if log_ratio < 700 else math.inf,
            "log10_ratio": float(log_ratio / math.log(10))}


def _sandwich(claim, sys, params, grid, evals, lower, upper, stability, details=None):
    """Assemble a report from per-evaluation log ratios (lower, upper sides)."""
    per = {}
    cases_lo, cases_hi = [], []
    for e, lo, hi in zip(evals, lower, upper):
        a, b = per.get(e.M, (math.inf, -math.inf))
        per[e.M] = (min(a, float(lo.min())), max(b, float(hi.max())))
        i, j = int(lo.argmin()), int(hi.argmax())
        cases_lo.append((float(lo[i]), _case(e, i, lo[i])))
        cases_hi.append((-float(hi[j]), _case(e, j, hi[j])))
    lmin = min(v[0] for v in per.values())
    lmax = max(v[1] for v in per.values())
    los = [v[0] for v in per.values()]
    his = [v[1] for v in per.values()]
    drift = (math.exp(max(los) - min(los)), math.exp(max(his) - min(his)))
    finite = math.isfinite(lmin) and math.isfinite(lmax)
    passed = finite and drift[0] < stability and drift[1] < stability
    cases_lo.sort(key=lambda c: c[0])
    cases_hi.sort(key=lambda c: c[0])
    worst = [dict(c, side="lower") for _, c in cases_lo[:N_WORST]]
    worst += [dict(c, side="upper") for _, c in cases_hi[:N_WORST]]
    return BoundReport(
        claim=claim, system=sys.name, grid=grid.to_dict(), params=params.triple(),
        min_ratio=math.exp(lmin), max_ratio=math.exp(lmax) if lmax < 700 else math.inf,
        log10_min=lmin / math.log(10), log10_max=lmax / math.log(10),
        per_level={M: [math.exp(a), math.exp(b)] for M, (a, b) in sorted(per.items())},
        drift=drift, worst_cases=worst, passed=bool(passed),
        details=dict(details or {}, stability=stability), seed=grid.seed, spec_hash=sys.spec_hash(),
    )


def _envelope(params, e, r, c):
    return np.maximum(log_f_kernel(params, e.t, r, c), log_h_envelope(params, e.t, e.M, c))


def scan_theorem_1(params: KernelParams, sys: FractalSystem, lab=None, grid: Grid = Grid(),
                   stability: float = STABILITY, jobs: int = 1) -> BoundReport:
    """Ratios ``g_M / (f_c(t, |x-y|) v h_c(t, M))`` with ``c_lower`` and ``c_upper``."""
    evals = _evaluate(params, sys, lab, grid, jobs)
    lower, upper = [], []
    for e in evals:
        r = math.hypot(*(e.x - e.y))
        lower.append(e.log_g - _envelope(params, e, r, params.c_lower))
        upper.append(e.log_g - _envelope(params, e, r, params.c_upper))
    return _sandwich("thm31", sys, params, grid, evals, lower, upper, stability)


def scan_theorem_2(params: KernelParams, sys: FractalSystem, lab=None, grid: Grid = Grid(),
                   stability: float = STABILITY, jobs: int = 1) -> BoundReport:
    """Ratios ``(g_M - g) / (f_c(t, delta_M) v h_c(t, M))``."""
    for M in grid.M_values:
        boundary_set(sys, M)
    evals = _evaluate(params, sys, lab, grid, jobs, target="difference")
    lower, upper = [], []
    regimes = {"contact": 0, "far": 0}
    for e in evals:
        dl = delta(sys, e.x, e.y, e.M)
        lower.append(e.log_diff - _envelope(params, e, dl, params.c_lower))
        upper.append(e.log_diff - _envelope(params, e, dl, params.c_upper))
        far = e.log_g1 >= e.log_g2
        regimes["far"] += int(far.sum())
        regimes["contact"] += int((~far).sum())
    return _sandwich("thm32", sys, params, grid, evals, lower, upper, stability,
                     {"dominant_term_counts": regimes})


def scan_lemma_tail(params: KernelParams, sys: FractalSystem, lab=None, grid: Grid = Grid(),
                    stability: float = STABILITY, jobs: int = 1) -> BoundReport:
    """Ratios ``g1 / h_c(t, M)``; base points on vertices of ``K<M>`` are skipped."""
    evals = _evaluate(params, sys, lab, grid, jobs, vertex_ok=False, target="g1")
    lower = [e.log_g1 - log_h_envelope(params, e.t, e.M, params.c_lower) for e in evals]
    upper = [e.log_g1 - log_h_envelope(params, e.t, e.M, params.c_upper) for e in evals]
    return _sandwich("lem36", sys, params, grid, evals, lower, upper, stability)


def scan_corollary(params: KernelParams, sys: FractalSystem, lab=None, grid: Grid = COROLLARY_GRID,
                   stability: float = STABILITY, jobs: int = 1, band: float = 10.0) -> BoundReport:
    """Uniformisation and on-diagonal regimes.

    Regime A (``t > L**(M d_w)``): spread of ``g_M L**(M d_f)``.
    Regime B (``|x-y|**d_w < t <= L**(M d_w)``): spread of ``g_M t**(d_s/2)``.
    Regime C (``t <= |x-y|**d_w``): ``f``-sandwich ratios, as in the other scans.
    """
    evals = _evaluate(params, sys, lab, grid, jobs)
    d = sys.dims
    A, B = [], []
    lower, upper, kept = [], [], []
    for e in evals:
        r = math.hypot(*(e.x - e.y))
        scale = sys.L ** (e.M * d.d_w)
        ra = e.t > scale * (1 + 1e-12)
        rc = e.t <= r ** d.d_w
        rb = ~ra & ~rc
        A.extend(e.log_g[ra] + e.M * d.d_f * math.log(sys.L))
        B.extend(e.log_g[rb] + 0.5 * d.d_s * np.log(e.t[rb]))
        if rc.any():
            sub = _Eval(e.M, e.x, e.y, e.t[rc], e.log_g[rc], e.log_g1[rc], e.log_g2[rc], e.log_diff[rc])
            kept.append(sub)
            lower.append(sub.log_g - log_f_kernel(params, sub.t, r, params.c_lower))
            upper.append(sub.log_g - log_f_kernel(params, sub.t, r, params.c_upper))
    band_a = math.exp(max(A) - min(A)) if A else math.nan
    band_b = math.exp(max(B) - min(B)) if B else math.nan
    details = {"band_A": band_a, "band_B": band_b, "n_A": len(A), "n_B": len(B),
               "n_C": int(sum(len(k.t) for k in kept)), "band_limit": band}
    if not kept:
        raise GridEmpty("no grid points in the off-diagonal regime")
    rep = _sandwich("cor37", sys, params, grid, kept, lower, upper, stability, details)
    rep.passed = bool(rep.passed and band_a < band and band_b < band)
    return rep


# --------------------------------------------------------------------------
# combinatorial checks


def check_cardinalities(sys: FractalSystem, lab, M: int, m_max: int, sample_ys) -> BoundReport:
    """Exact shell sizes ``|A(M, m, y)| = N**m (N - 1)`` and ``|B| <= N - 1``.

    Every listed preimage is checked independently: it must fold back onto
    ``y`` and lie in ``K<M+m+1>`` but not in ``K<M+m>``; preimages must be
    pairwise distinct.
    """
    N = sys.N
    bad, max_b, b_sizes = [], 0, []
    checked = 0
    try:
        for y in sample_ys:
            fb = fiber(sys, lab, y, M, m_max)
            b_sizes.append(len(fb.B_set))
            max_b = max(max_b, len(fb.B_set))
            if len(fb.B_set) + len(fb.C_set) != len(fb.A_sets[0]) or len(fb.B_set) > N - 1:
                bad.append({"y": list(map(float, y)), "issue": "B/C split"})
            allp = fb.all_points()
            if len(np.unique(quantize(sys, allp, M), axis=0)) != len(allp):
                bad.append({"y": list(map(float, y)), "issue": "repeated preimage"})
            for m, pts in enumerate(fb.A_sets):
                if len(pts) != N ** m * (N - 1):
                    bad.append({"y": list(map(float, y)), "m": m, "issue": "count", "got": len(pts)})
                for p in pts:
                    checked += 1
                    inside = on_cell(sys, p, M + m + 1, ref_level=M)
                    below = on_cell(sys, p, M + m, ref_level=M)
                    back = project(sys, lab, p, M)
                    if not inside or below or not np.allclose(back, y, atol=1e-9 * sys.L ** M):
                        bad.append({"y": list(map(float, y)), "m": m, "issue": "membership",
                                    "point": list(map(float, p))})
    except NoGLP as exc:
        bad.append({"issue": f"no good labelling: {exc}"})
    passed = not bad
    return BoundReport(
        claim="card", system=sys.name,
        grid={"M": M, "m_max": m_max, "n_points": len(sample_ys)}, params={},
        min_ratio=1.0 if passed else 0.0, max_ratio=1.0 if passed else math.inf,
        log10_min=0.0, log10_max=0.0, per_level={M: [1.0, 1.0]}, drift=(1.0, 1.0),
        worst_cases=bad[:N_WORST], passed=passed,
        details={"max_B": max_b, "B_empty": max_b == 0, "preimages_checked": checked,
                 "failures": len(bad)},
        spec_hash=sys.spec_hash(),
    )


def cardinality_scan(sys: FractalSystem, M_values=(-1, 0, 1), m_max: int = 4, n_points: int = 20,
                     seed: int = 0) -> BoundReport:
    """:func:`check_cardinalities` over several levels with sampled base points."""
    reports = []
    for M in M_values:
        rng = np.random.default_rng(np.random.SeedSequence([seed, M + 1000]))
        ys = sample_points(sys, M, n_points, rng)
        reports.append(check_cardinalities(sys, None, M, m_max, ys))
    first = reports[0]
    first.grid = {"M_values": list(M_values), "m_max": m_max, "n_points": n_points, "seed": seed}
    first.per_level = {r.grid.get("M", M): [r.min_ratio, r.max_ratio] for r, M in zip(reports, M_values)}
    first.passed = all(r.passed for r in reports)
    first.min_ratio = min(r.min_ratio for r in reports)
    first.max_ratio = max(r.max_ratio for r in reports)
    first.worst_cases = [c for r in reports for c in r.worst_cases][:N_WORST]
    first.details = {
        "max_B": max(r.details["max_B"] for r in reports),
        "preimages_checked": sum(r.details["preimages_checked"] for r in reports),
        "failures": sum(r.details["failures"] for r in reports),
    }
    first.seed = seed
    return first


def metric_report(sys: FractalSystem, M_values=(-2, -1, 0, 1, 2), samples: int = 1000,
                  seed: int = 0, drift_limit: float = 1.5) -> BoundReport:
    """Growth constants with held-out verification and the uniform chain bound."""
    gc = growth_constants(sys, M_values, samples, seed)
    kn = kumagai_by_level(sys, M_values, samples, seed)
    d17, d18 = gc.drift()
    passed = gc.holdout_ok and d17 < drift_limit and d18 < drift_limit and len(set(kn.values())) == 1
    return BoundReport(
        claim="metric", system=sys.name,
        grid={"M_values": list(M_values), "samples": samples, "seed": seed}, params={},
        min_ratio=gc.c17_hat, max_ratio=gc.c18_hat,
        log10_min=math.log10(gc.c17_hat), log10_max=math.log10(gc.c18_hat),
        per_level={M: list(v) for M, v in gc.per_level.items()}, drift=(d17, d18),
        worst_cases=[], passed=bool(passed),
        details={"c17_hat": gc.c17_hat, "c18_hat": gc.c18_hat, "kumagai_n": kn,
                 "holdout_violations": gc.holdout_violations, "sample": gc.sample,
                 "drift_limit": drift_limit},
        seed=seed, spec_hash=sys.spec_hash(),
    )

"""Envelope kernels, the surrogate free density and the reflected-density series.

All series are accumulated in log space so that terms far below the
smallest double (small ``t``, distant fiber points) still contribute
correctly to ratios.  Within one generation shell terms are combined with
``scipy.special.logsumexp`` (pairwise summation of positive numbers);
shell totals are combined with ``math.fsum``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import BadTime, EnvelopeTooLarge, MCUnavailable, MissingConstants, NoConvergence
from .geometry import DimensionSet, FractalSystem, enumeration_cap
from .folding import fiber_table
from .labelling import rotation_matrix

DEFAULT_REL_TOL = 1e-9
M_CAP = 40
EXPLICIT_TAIL_TERMS = 8


@dataclass(frozen=True)
class KernelParams:
    """Dimensions and the three kernel constants.

    ``c_lower`` and ``c_upper`` enter the lower and upper envelopes,
    ``c_eval`` the surrogate free kernel.  Only positivity is enforced.
    """

    dims: DimensionSet
    L: float
    N: int
    c_lower: float = 1.0
    c_upper: float = 1.0
    c_eval: float = 1.0

    def __post_init__(self):
        for name in ("c_lower", "c_upper", "c_eval"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def for_system(cls, sys: FractalSystem, c_lower=1.0, c_upper=1.0, c_eval=1.0) -> "KernelParams":
        return cls(sys.dims, sys.L, sys.N, c_lower, c_upper, c_eval)

    @property
    def w(self) -> float:
        """Exponent ``d_w / (d_J - 1)`` of the stretched exponential."""
        return self.dims.d_w / (self.dims.d_J - 1.0)

    def triple(self) -> dict:
        return {"c_lower": self.c_lower, "c_upper": self.c_upper, "c_eval": self.c_eval}


def calibrated_params(sys: FractalSystem, c_eval: float = 1.0, c19: float | None = None,
                      safety: float = 0.5) -> KernelParams:
    """Envelope constants for which the sandwich holds for the surrogate kernel.

    The lower envelope needs ``c_lower >= c_eval * (L**2 diam)**w`` so that
    ``h`` stays below the single nearest fiber term; the upper envelope uses
    ``c_upper = safety * c_eval * c20**w`` with ``c20 = c19 / (2 L diam)``,
    the constant of the through-boundary distance inequality.
    """
    from .graph_metric import separation_constant

    if c19 is None:
        c19 = separation_constant(sys, 0, 2)
    p = KernelParams.for_system(sys)
    c20 = c19 / (2.0 * sys.diameter * sys.L)
    c_lower = c_eval * max(1.0, (sys.L ** 2 * sys.diameter) ** p.w)
    c_upper = safety * c_eval * c20 ** p.w
    return KernelParams.for_system(sys, c_lower, c_upper, c_eval)


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if not np.all(t > 0):
        raise BadTime("time must be strictly positive")
    return t


def log_f_kernel(params: KernelParams, t, r, c: float | None = None):
    """``log f_c(t, r)``."""
    t = _check_time(t)
    c = params.c_eval if c is None else c
    r = np.asarray(r, dtype=float)
    d = params.dims
    return -0.5 * d.d_s * np.log(t) - c * (r ** d.d_w / t) ** (1.0 / (d.d_J - 1.0))


def f_kernel(params: KernelParams, t, r, c: float | None = None):
    """``f_c(t, r) = t**(-d_s/2) exp(-c (r**d_w / t)**(1/(d_J-1)))``."""
    return np.exp(log_f_kernel(params, t, r, c))


def log_h_envelope(params: KernelParams, t, M: int, c: float | None = None):
    """``log h_c(t, M)``."""
    t = _check_time(t)
    c = params.c_eval if c is None else c
    d = params.dims
    log_a = np.maximum(M * math.log(params.L) - np.log(t) / d.d_w, 0.0)
    return -d.d_f * M * math.log(params.L) + (d.d_f - params.w) * log_a - c * np.exp(params.w * log_a)


def h_envelope(params: KernelParams, t, M: int, c: float | None = None):
    """``h_c(t, M) = L**(-d_f M) a**(d_f - w) exp(-c a**w)`` with ``a = max(L**M t**(-1/d_w), 1)``."""
    return np.exp(log_h_envelope(params, t, M, c))


def g_free(params: KernelParams, t, x, y, backend: str = "surrogate", store=None):
    """Free transition density.

    ``backend="surrogate"`` returns ``f_{c_eval}(t, |x - y|)``.
    ``backend="mc"`` asks ``store`` (an object with an ``estimate(t, x, y)``
    method returning ``(value, standard_error)``) for an empirical value.
    """
    if backend == "surrogate":
        r = np.hypot(*(np.asarray(x, float) - np.asarray(y, float)).T)
        return f_kernel(params, t, r)
    if backend == "mc":
        _check_time(t)
        if store is None:
            raise MCUnavailable("Monte Carlo backend needs a trajectory store")
        return store.estimate(t, x, y)
    raise ValueError(f"unknown backend {backend!r}")


# --------------------------------------------------------------------------
# tail bound


def _log_upper_gamma(s: float, x: float) -> float:
    """``log Gamma(s, x)``; switches to an upper bound once it underflows."""
    q = special.gammaincc(s, x)
    if q > 1e-280:
        return math.log(q) + special.gammaln(s)
    # Gamma(s, x) <= x**(s-1) e**-x * x / (x - s + 1) for x > s - 1
    corr = 0.0 if s <= 1 else math.log(x / (x - s + 1.0))
    return (s - 1.0) * math.log(x) - x + corr


def log_tail_bound(params: KernelParams, t: float, M: int, m_start: int, c18: float,
                   c: float | None = None) -> float:
    """``log`` of :func:`tail_bound`."""
    if c18 is None:
        raise MissingConstants("tail bound needs the growth constant c18")
    if m_start < 0:
        raise ValueError("m_start must be >= 0")
    t = float(_check_time(t))
    c = params.c_eval if c is None else c
    d, N, L, w = params.dims, params.N, params.L, params.w
    kappa = (2.0 / c18) ** (1.0 / d.d_f)
    # exponent of shell m is A q**m
    A = c * (kappa ** d.d_w / t) ** (1.0 / (d.d_J - 1.0)) * L ** ((M - 1) * w)
    q = L ** w
    pre = math.log(N - 1) - 0.5 * d.d_s * math.log(t)
    logs = [pre + m * math.log(N) - A * q ** m for m in range(m_start, m_start + EXPLICIT_TAIL_TERMS)]
    # sum_{m >= m1} N**m e**(-A q**m) <= N / ln q * A**-beta * Gamma(beta, A q**(m1-1))
    m1 = m_start + EXPLICIT_TAIL_TERMS
    beta = math.log(N) / math.log(q)
    x0 = A * q ** (m1 - 1)
    logs.append(pre + math.log(N) - math.log(math.log(q)) - beta * math.log(A)
                + _log_upper_gamma(beta, x0))
    return float(special.logsumexp(logs))


def tail_bound(params: KernelParams, t: float, M: int, m_start: int, c18: float,
               c: float | None = None) -> float:
    """Upper bound on the fiber terms of generation ``m >= m_start``.

    Shell ``m`` holds ``N**m (N - 1)`` points, each at distance at least
    ``((2 / c18) N**(M+m-1))**(1/d_f)`` from ``x``.  The first terms are
    summed explicitly and the rest by comparison with an integral, which
    is an upper incomplete gamma function.  Nonincreasing in ``m_start``.
    """
    return math.exp(log_tail_bound(params, t, M, m_start, c18, c))


def growth_constant_c18(sys: FractalSystem) -> float:
    """Cached scale-free ``c18`` estimate used by default tail bounds."""
    if "c18" not in sys._cache:
        from .graph_metric import growth_constants

        sys._cache["c18"] = growth_constants(sys, M_range=[0], samples=200, seed=0).c18_hat
    return sys._cache["c18"]


# --------------------------------------------------------------------------
# reflected density


@dataclass(frozen=True)
class DensityResult:
    """Reflected density split as ``value = g1 + g2 + g_base``.

    ``g1`` holds the far fiber (points in cells disjoint from ``K<M>``),
    ``g2`` the cells touching ``K<M>``, ``g_base`` the free term.  The
    ``log_*`` fields carry the same quantities without underflow.
    """

    value: float
    g1: float
    g2: float
    g_base: float
    m_used: int
    tail_bound: float
    log_g1: float = -math.inf
    log_g2: float = -math.inf
    log_base: float = -math.inf

    @property
    def log_value(self) -> float:
        return float(special.logsumexp([self.log_g1, self.log_g2, self.log_base]))

    @property
    def log_difference(self) -> float:
        return float(special.logsumexp([self.log_g1, self.log_g2]))


def _lse_rows(a: np.ndarray) -> np.ndarray:
    if a.shape[1] == 0:
        return np.full(a.shape[0], -math.inf)
    return special.logsumexp(a, axis=1)


def _lse_fsum(logs) -> float:
    logs = [v for v in logs if v > -math.inf]
    if not logs:
        return -math.inf
    top = max(logs)
    return top + math.log(math.fsum(math.exp(v - top) for v in logs))


def density_series(params: KernelParams, sys: FractalSystem, lab, t, x, y, M: int,
                   rel_tol: float = DEFAULT_REL_TOL, c18: float | None = None,
                   m_max: int | None = None, m_cap: int = M_CAP,
                   target: str = "value") -> list[DensityResult]:
    """Vectorized :func:`g_M_density` over an array of times.

    Each time is truncated independently at its own smallest admissible
    generation; later shells are not added to it.  With ``m_max`` given,
    every time is truncated at exactly that generation.  ``target`` names
    the quantity the relative tolerance refers to: ``"value"`` (``g_M``),
    ``"difference"`` (``g1 + g2``) or ``"g1"``.
    """
    first = {"value": 0, "difference": 1, "g1": 2}[target]
    t = np.atleast_1d(_check_time(t)).astype(float)
    if not 0 < rel_tol < 1:
        raise ValueError("rel_tol must lie in (0, 1)")
    c18 = growth_constant_c18(sys) if c18 is None else c18
    x, y = np.asarray(x, float), np.asarray(y, float)
    d = params.dims
    N, k = sys.N, sys.k
    b = sys.center(M)
    Yr = np.einsum("rij,j->ri", rotation_matrix(-np.arange(k), k), y - b) + b
    scale = sys.L ** M
    lt = np.log(t)
    expo = 1.0 / (d.d_J - 1.0)
    c = params.c_eval
    use_lab = lab is not None

    def shell_logs(sl, table):
        rot = lab.rotations[sl] if use_lab else table.rotations[sl]
        pts = Yr[rot] + scale * table.translations[sl]
        r = np.hypot(*(pts - x).T)
        return -0.5 * d.d_s * lt[:, None] - c * (r[None, :] ** d.d_w / t[:, None]) ** expo

    table = fiber_table(sys, 1)
    base = shell_logs(slice(0, 1), table)[:, 0]
    s0 = shell_logs(slice(1, N), table)
    touch = table.contact[1:N] >= 0
    log_g2 = _lse_rows(s0[:, touch])
    shells = [_lse_rows(s0[:, ~touch])]
    n_t = len(t)
    done = np.zeros(n_t, dtype=bool)
    m_used = np.full(n_t, -1)
    tails = np.full(n_t, math.inf)
    partial = [np.array([base[i], log_g2[i], shells[0][i]]) for i in range(n_t)]

    def close(i, m):
        done[i] = True
        m_used[i] = m
        tails[i] = log_tail_bound(params, t[i], M, m + 1, c18)

    m = 0
    while True:
        for i in np.flatnonzero(~done):
            if m_max is not None:
                if m >= m_max:
                    close(i, m)
                continue
            lt_next = log_tail_bound(params, t[i], M, m + 1, c18)
            if lt_next < math.log(rel_tol) + _lse_fsum(partial[i][first:]):
                close(i, m)
        if done.all():
            break
        m += 1
        if m > m_cap or N ** (m + 1) > enumeration_cap():
            results = _assemble(base, log_g2, partial, m_used, tails, np.arange(n_t))
            raise NoConvergence(
                f"fiber series needs more than {m - 1} generations", partial=results
            )
        if use_lab and lab.J < M + m + 1:
            raise EnvelopeTooLarge("labelling envelope is smaller than the series needs")
        table = fiber_table(sys, m + 1)
        s = _lse_rows(shell_logs(table.shell_slice(m), table))
        for i in np.flatnonzero(~done):
            partial[i] = np.append(partial[i], s[i])
    return _assemble(base, log_g2, partial, m_used, tails, np.arange(n_t))


def _assemble(base, log_g2, partial, m_used, tails, idx):
    out = []
    for i in idx:
        lg1 = _lse_fsum(list(partial[i][2:]))
        g1, g2, g0 = math.exp(lg1), math.exp(log_g2[i]), math.exp(base[i])
        out.append(DensityResult(
            value=g1 + g2 + g0, g1=g1, g2=g2, g_base=g0, m_used=int(m_used[i]),
            tail_bound=math.exp(tails[i]), log_g1=lg1, log_g2=float(log_g2[i]),
            log_base=float(base[i]),
        ))
    return out


def g_M_density(params: KernelParams, sys: FractalSystem, lab, t: float, x, y, M: int,
                rel_tol: float = DEFAULT_REL_TOL, c18: float | None = None,
                m_max: int | None = None) -> DensityResult:
    """Reflected density ``g_M(t, x, y)`` from the surrogate free kernel.

    Sums ``g(t, x, y')`` over one preimage of ``y`` per cell, generation by
    generation, until the bound on the remaining generations drops below
    ``rel_tol`` times the partial sum.  When ``y`` is a vertex of ``K<M>``
    the per-cell enumeration visits each preimage vertex once per cell
    holding it, which is exactly the rank weighting.

    Parameters
    ----------
    lab : Labelling or None
        Source of cell rotations; ``None`` uses the per-level shift table.
    c18 : float, optional
        Growth constant for the tail bound; estimated once per system when
        omitted.
    m_max : int, optional
        Force truncation after this generation.

    Raises
    ------
    BadTime
        ``t <= 0``.
    NoConvergence
        The generation cap was reached; ``exc.partial`` holds the result.
    """
    try:
        return density_series(params, sys, lab, [t], x, y, M, rel_tol, c18, m_max)[0]
    except NoConvergence as exc:
        raise NoConvergence(str(exc), partial=exc.partial[0]) from None


def g_difference(params: KernelParams, sys: FractalSystem, lab, t: float, x, y, M: int,
                 rel_tol: float = DEFAULT_REL_TOL, c18: float | None = None) -> float:
    """``g_M - g`` as ``g1 + g2``, never by subtraction."""
    r = density_series(params, sys, lab, [t], x, y, M, rel_tol, c18, target="difference")[0]
    return r.g1 + r.g2

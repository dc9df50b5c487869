"""Regular roots of the Hill determinant and classification of exceptional levels.

Exceptional levels sit at integer x = n (E = n - g^2).  There the coefficient
row n collapses to a_n = -delta^2, b_n = c_n = 0, so the determinant splits into
the finite Judd block det W_0^{n-1} and the infinite tail at n+1.  A root at x = n
therefore comes from one of three sources, checked in this order:

    AdiabaticDeltaZero   delta == 0
    JuddDegenerate       det W_0^{n-1} == 0   (level doubly degenerate)
    TailNondegenerate    tail limit == 0      (level simple)

Sign-change scanning cannot see the doubly degenerate case (D has a double
zero there), which is why ``scan_regular`` probes every integer abscissa with
``classify_exceptional`` and merges the results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import NullSpaceNotFoundError, ResidualTooLargeError
from .recurrence import (
    HillEvaluation,
    ModelParams,
    SolverOptions,
    finite_determinant,
    hill_values,
    minimal_solution,
    near_negative_integer,
    tail_limit,
    _a,
    _rows,
)

__all__ = [
    "CaseLabel",
    "RootRecord",
    "ExceptionalReport",
    "ExceptionalVectors",
    "NEAR_INTEGER",
    "NEAR_NEGATIVE_INTEGER",
    "UNVALIDATED",
    "NOT_CONVERGED",
    "EXCEPTIONAL",
    "TOL_JUDD",
    "TOL_TAIL",
    "scan_regular",
    "classify_exceptional",
    "exceptional_eigenvectors",
    "judd_scale",
]

NEAR_INTEGER = "NearIntegerX"
NEAR_NEGATIVE_INTEGER = "NearNegativeIntegerX"
UNVALIDATED = "Unvalidated"
NOT_CONVERGED = "NotConverged"
EXCEPTIONAL = "Exceptional"

TOL_JUDD = 1e-7
TOL_TAIL = 1e-7


class CaseLabel(str, Enum):
    ADIABATIC = "AdiabaticDeltaZero"
    JUDD = "JuddDegenerate"
    TAIL = "TailNondegenerate"
    NONE = "NotExceptional"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class RootRecord:
    x: float
    energy: float
    bracket: tuple[float, float]
    residual: float
    flags: frozenset = frozenset()
    oracle_gap: float | None = None

    @classmethod
    def make(cls, x, params, bracket, residual, flags=()):
        return cls(float(x), float(x) - params.g**2, (float(bracket[0]), float(bracket[1])),
                   float(residual), frozenset(flags))


@dataclass(frozen=True)
class ExceptionalReport:
    n: int
    judd_value: float
    tail_value: float
    case_label: CaseLabel
    degenerate: bool
    converged: bool
    judd_scale: float
    tail_scale: float


@dataclass
class ExceptionalVectors:
    judd: np.ndarray | None = None
    tail: np.ndarray | None = None
    residuals: dict = field(default_factory=dict)

    def as_list(self):
        return [v for v in (self.judd, self.tail) if v is not None]


def judd_scale(n: int, delta: float) -> float:
    # det W_0^{n-1} is a degree-2n polynomial in delta
    return max(1.0, abs(delta) ** (2 * n))


def classify_exceptional(
    n: int,
    params: ModelParams,
    tol_judd: float = TOL_JUDD,
    tol_tail: float = TOL_TAIL,
    opts: SolverOptions | None = None,
) -> ExceptionalReport:
    """Decide which mechanism, if any, puts an eigenvalue at x = n."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if not (tol_judd > 0 and tol_tail > 0):
        raise ValueError("tolerances must be positive")
    judd = finite_determinant(0, n - 1, float(n), params)
    tail: HillEvaluation = tail_limit(n, params, opts)
    j_scale = judd_scale(n, params.delta)
    t_scale = max(tail.scale, np.finfo(float).tiny)

    if params.delta == 0.0:
        label, degenerate = CaseLabel.ADIABATIC, True
    elif abs(judd) <= tol_judd * j_scale:
        label, degenerate = CaseLabel.JUDD, True
    elif abs(tail.value) <= tol_tail * t_scale:
        label, degenerate = CaseLabel.TAIL, False
    else:
        label, degenerate = CaseLabel.NONE, False
    return ExceptionalReport(n, judd, tail.value, label, degenerate, tail.converged, j_scale, t_scale)


def _normalize(q):
    k = int(np.argmax(np.abs(q)))
    return q / q[k] if q[k] != 0 else q


def _judd_vector(n, params, length):
    """Null vector of W_0^{n-1} at x = n, padded with zeros."""
    x = float(n)
    q = np.zeros(max(length, n) + 1)
    if params.g == 0.0:
        k = np.arange(n)
        a = _a(k, x, 0.0, params.delta**2)
        hits = np.flatnonzero(np.abs(a) <= 1e-12 * max(1.0, params.delta**2))
        if hits.size == 0:
            raise NullSpaceNotFoundError(f"no vanishing diagonal entry below n={n}")
        q[hits[0]] = 1.0
        return q
    g, g2, d2 = params.g, params.g**2, params.delta**2
    q[0] = 1.0
    # rows 0..n-2 fix q_1..q_{n-1}; row n-1 is the determinant condition
    for k in range(n - 1):
        b = 2.0 * g * (k + 1) * (k - x)
        c = 2.0 * g * (k - x)
        left = q[k - 1] if k else 0.0
        q[k + 1] = (_a(k, x, g2, d2) * q[k] - c * left) / b
    q[:n] = _normalize(q[:n])
    return q


def exceptional_eigenvectors(
    n: int,
    params: ModelParams,
    report: ExceptionalReport,
    length: int,
    opts: SolverOptions | None = None,
    residual_tol: float = 1e-6,
) -> ExceptionalVectors:
    """Coefficient vectors q_0 .. q_{length-1} of the exceptional level at x = n.

    Judd levels get the finite null vector (support on 0..n-1) and its tail
    partner; tail levels get only the tail vector (zero on 0..n).
    """
    if report.case_label not in (CaseLabel.JUDD, CaseLabel.TAIL):
        raise ValueError(f"no exceptional vectors for case {report.case_label}")
    if length < n + 2:
        raise ValueError(f"length must exceed n+1={n + 1}")
    x = float(n)
    out = ExceptionalVectors()

    if report.case_label is CaseLabel.JUDD:
        q = _judd_vector(n, params, length)
        r = float(np.max(np.abs(_rows(x, params, 0, q[: length + 1]))))
        if r > residual_tol:
            raise NullSpaceNotFoundError(
                f"W_0^{n - 1} is not singular here (row residual {r:.3e}, "
                f"det {report.judd_value:.3e}); tolerance too loose?"
            )
        out.judd = q[:length]
        out.residuals["judd"] = r

    sol = minimal_solution(x, params, n + 1, length - n, opts, residual_tol=residual_tol)
    ext = np.zeros(length + 1)
    ext[n + 1 :] = sol.values
    out.tail = ext[:length]
    out.residuals["tail"] = float(np.max(np.abs(_rows(x, params, 0, ext))))

    for name, r in out.residuals.items():
        if r > residual_tol:
            raise ResidualTooLargeError(f"{name} vector residual {r:.3e} exceeds {residual_tol:.1e}")
    return out


# --------------------------------------------------------------------------
# scanning


def _bisect(lo, hi, f_lo, params, opts, width):
    """Vectorized bisection on sign(D); f_lo holds the sign at lo."""
    lo, hi, f_lo = lo.copy(), hi.copy(), f_lo.copy()
    while lo.size and np.max(hi - lo) > width:
        mid = 0.5 * (lo + hi)
        f_mid = np.sign(hill_values(mid, params.g, params.delta, opts).value)
        same = f_mid == f_lo
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return lo, hi


def _dip_brackets(xs, vals, ok, params, opts):
    """Brackets for root pairs hidden inside a same-sign dip of |D|."""
    out = []
    for i in range(1, len(xs) - 1):
        if not (ok[i - 1] and ok[i] and ok[i + 1]):
            continue
        v0, v1, v2 = vals[i - 1 : i + 2]
        s = np.sign(v1)
        if s == 0 or np.sign(v0) != s or np.sign(v2) != s:
            continue
        if not (abs(v1) < abs(v0) and abs(v1) <= abs(v2)):
            continue
        lo, hi = xs[i - 1], xs[i + 1]
        ks = np.arange(math.floor(lo), math.ceil(hi) + 1)
        if np.any((ks <= -1) & (ks >= lo) & (ks <= hi)):
            continue
        res = minimize_scalar(
            lambda t: s * float(hill_values(t, params.g, params.delta, opts).value),
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-13},
        )
        if res.fun < 0:
            out.append((lo, res.x))
            out.append((res.x, hi))
    return out


def scan_regular(
    params: ModelParams,
    x_lo: float,
    x_hi: float,
    step: float = 0.01,
    opts: SolverOptions | None = None,
    bracket_tol: float = 1e-10,
    tol_judd: float = TOL_JUDD,
    tol_tail: float = TOL_TAIL,
    merge_tol: float = 1e-6,
) -> list[RootRecord]:
    """All roots of D in [x_lo, x_hi], ascending.

    Sign changes on a grid of spacing ``step`` are bisected to ``bracket_tol``;
    same-sign dips of |D| are probed for hidden root pairs.  Every integer
    n >= 0 in range is classified separately and, when exceptional, replaces
    any sign-change roots within ``merge_tol`` (one record per level, two for
    degenerate doublets).
    """
    if not x_lo < x_hi:
        raise ValueError("need x_lo < x_hi")
    if not step > 0:
        raise ValueError("step must be positive")
    num = int(math.ceil((x_hi - x_lo) / step - 1e-9)) + 1
    xs = np.linspace(x_lo, x_hi, num)
    ok = ~near_negative_integer(xs)
    vals = np.full(num, np.nan)
    conv = np.zeros(num, dtype=bool)
    lim = hill_values(xs[ok], params.g, params.delta, opts)
    vals[ok] = lim.value
    conv[ok] = lim.converged

    # sign-change brackets between consecutive unguarded nodes
    good = np.flatnonzero(ok)
    brackets, grid_brackets = [], []
    pos = vals[good] >= 0
    for i0, i1, p0, p1 in zip(good[:-1], good[1:], pos[:-1], pos[1:]):
        if p0 != p1:
            brackets.append((xs[i0], xs[i1]))
            grid_brackets.append((xs[i0], xs[i1], conv[i0] and conv[i1]))
    for lo, hi in _dip_brackets(xs, vals, ok, params, opts):
        brackets.append((lo, hi))
        grid_brackets.append((lo, hi, True))

    records = []
    if brackets:
        lo = np.array([b[0] for b in brackets])
        hi = np.array([b[1] for b in brackets])
        f_lo = np.sign(hill_values(lo, params.g, params.delta, opts).value)
        lo, hi = _bisect(lo, hi, f_lo, params, opts, bracket_tol)
        roots = 0.5 * (lo + hi)
        final = hill_values(roots, params.g, params.delta, opts)
        for k, r in enumerate(roots):
            g_lo, g_hi, g_conv = grid_brackets[k]
            flags = set()
            if math.floor(g_hi) >= g_lo and math.floor(g_hi) >= 0:
                flags.add(NEAR_INTEGER)
            nearest_neg = min(-1.0, float(np.rint(r)))
            if r < -0.5 and (abs(r - nearest_neg) <= step or g_lo <= nearest_neg <= g_hi):
                flags |= {NEAR_NEGATIVE_INTEGER, UNVALIDATED}
            if not (g_conv and final.converged[k]):
                flags.add(NOT_CONVERGED)
            records.append(RootRecord.make(r, params, (lo[k], hi[k]), abs(final.value[k]), flags))

    for n in range(max(0, math.ceil(x_lo)), math.floor(x_hi) + 1):
        rep = classify_exceptional(n, params, tol_judd, tol_tail, opts)
        if rep.case_label is CaseLabel.NONE:
            continue
        mult = 1 if rep.case_label is CaseLabel.TAIL else 2
        near = sorted((abs(rec.x - n), i) for i, rec in enumerate(records) if abs(rec.x - n) <= merge_tol)
        drop = {i for _, i in near[:mult]}
        records = [rec for i, rec in enumerate(records) if i not in drop]
        residual = abs(float(hill_values(float(n), params.g, params.delta, opts).value))
        flags = {NEAR_INTEGER, EXCEPTIONAL} | (set() if rep.converged else {NOT_CONVERGED})
        for _ in range(mult):
            records.append(RootRecord.make(n, params, (n - bracket_tol, n + bracket_tol), residual, flags))

    records.sort(key=lambda rec: rec.x)
    return records


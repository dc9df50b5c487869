"""Three-term recurrence and Hill determinant of the quantum Rabi model.

Units are hbar = omega = 1 and the spectral variable is x = E + g**2.  Row m
of the infinite tridiagonal coefficient matrix W reads

    -c_m q_{m-1} + a_m q_m - b_m q_{m+1} = 0,

    a_m = (m - x)(m - x + 4 g^2) - delta^2
    b_m = 2 g (m + 1)(m - x)
    c_m = 2 g (m - x)

Two normalized limits are evaluated here:

* ``hill_determinant`` -- D(x) = lim_m prod_{k=1}^m (k+x)^2/k^4 * det W_0^m,
  whose zeros are the regular spectrum.
* ``tail_limit`` -- F_n = lim_m prod_{k=n+2}^m (k+n)^2/k^4 * det W_{n+1}^m at
  x = n, the factor that decides the non-Judd exceptional levels.

Both go through the same ratio-normalized recurrence.  Its partial values
approach the limit only like 1/m, so the remaining tail of the product is
summed in closed form from an asymptotic series of the step ratio (see
``_log_ratio_series``); convergence is declared on the corrected estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import comb, zeta

from .errors import (
    NegativeIntegerGuardError,
    ResidualTooLargeError,
    ZeroCoefficientError,
)

__all__ = [
    "ModelParams",
    "SolverOptions",
    "HillEvaluation",
    "CoefficientTriple",
    "MinimalSolution",
    "NEGATIVE_INTEGER_GUARD",
    "coefficients",
    "finite_determinant",
    "finite_determinant_array",
    "hill_determinant",
    "hill_values",
    "hill_partials",
    "tail_limit",
    "tail_values",
    "tail_partials",
    "minimal_solution",
    "near_negative_integer",
]

NEGATIVE_INTEGER_GUARD = 1e-4

# Order of the asymptotic series for log(D_m / D_{m-1}) in powers of 1/m.
_SERIES_ORDER = 16
# Tail estimates are formed every _CHECK_EVERY steps, starting _WARMUP steps in.
_CHECK_EVERY = 8
_WARMUP = 16


@dataclass(frozen=True)
class ModelParams:
    """Coupling ``g`` and qubit splitting ``delta`` (omega = 1)."""

    g: float
    delta: float

    def __post_init__(self):
        g, delta = float(self.g), float(self.delta)
        if not (math.isfinite(g) and math.isfinite(delta)):
            raise ValueError(f"model parameters must be finite, got g={g}, delta={delta}")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "delta", delta)


@dataclass(frozen=True)
class SolverOptions:
    """Stopping rule for the normalized limits.

    ``tol`` is relative (against max(1, |value|)); ``stable_steps`` consecutive
    tail-corrected estimates must agree to within it before the value is
    accepted.  ``m_max`` caps the recurrence index.
    """

    tol: float = 1e-12
    m_max: int = 2000
    stable_steps: int = 3

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.m_max) != self.m_max or self.m_max < 2:
            raise ValueError("m_max must be an integer >= 2")
        if int(self.stable_steps) != self.stable_steps or self.stable_steps < 1:
            raise ValueError("stable_steps must be an integer >= 1")


DEFAULT_OPTIONS = SolverOptions()


@dataclass(frozen=True)
class HillEvaluation:
    """Value of a normalized limiting determinant plus convergence metadata.

    ``scale`` is the largest magnitude reached by the partial values; it is
    the natural yardstick for deciding whether ``value`` is zero.
    """

    value: float
    m_used: int
    converged: bool
    last_increment: float
    scale: float


class CoefficientTriple(NamedTuple):
    a: float
    b: float
    c: float


@dataclass(frozen=True)
class MinimalSolution:
    """Minimal solution q_start .. q_{start+length-1}, normalized to max |q| = 1.

    ``residual`` is the boundary row ``a_s q_s - b_s q_{s+1}`` (with q_{s-1} = 0),
    ``interior_residual`` the worst interior row inside the window, and
    ``stability`` the largest change of any retained entry when the backward
    recursion depth is doubled.
    """

    start: int
    values: np.ndarray
    residual: float
    interior_residual: float
    stability: float
    depth: int


def coefficients(m: int, x: float, params: ModelParams) -> CoefficientTriple:
    if m < 0:
        raise ValueError("m must be nonnegative")
    g, d = params.g, params.delta
    u = m - x
    return CoefficientTriple(u * (u + 4.0 * g * g) - d * d, 2.0 * g * (m + 1) * u, 2.0 * g * u)


def _a(m, x, g2, d2):
    u = m - x
    return u * (u + 4.0 * g2) - d2


def finite_determinant_array(lo: int, hi: int, x, g, delta) -> np.ndarray:
    """Vectorized det[W_lo^hi] over broadcast arrays of (x, g, delta)."""
    if lo < 0:
        raise ValueError("lo must be nonnegative")
    if hi < lo - 1:
        raise ValueError("need hi >= lo - 1")
    x, g, delta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, g, delta)))
    g2, d2 = g * g, delta * delta
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(lo, hi + 1):
            # b_{k-1} c_k = 4 g^2 k (k - 1 - x)(k - x)
            bc = 4.0 * g2 * k * (k - 1 - x) * (k - x)
            prev, cur = cur, _a(k, x, g2, d2) * cur - bc * prev
    if not np.all(np.isfinite(cur)):
        raise OverflowError(
            "tridiagonal determinant left the floating point range; "
            "use the normalized limits for large blocks"
        )
    return cur


def finite_determinant(lo: int, hi: int, x: float, params: ModelParams) -> float:
    """Determinant of the block of W with row/column indices lo..hi.

    The empty block (hi = lo - 1) has determinant 1.
    """
    return float(finite_determinant_array(lo, hi, x, params.g, params.delta))


# --------------------------------------------------------------------------
# asymptotic tail of the normalized recurrence


def _pmul(p, q, order):
    """Truncated product of power series stored as (order+1, N) arrays."""
    out = np.zeros((order + 1,) + p.shape[1:])
    for i in range(order + 1):
        if not np.any(p[i]):
            continue
        out[i:] += p[i] * q[: order + 1 - i]
    return out


def _linear(c0, c1, order, like):
    s = np.zeros((order + 1,) + like.shape)
    s[0] = c0
    s[1] = c1
    return s


_COMPOSE = np.array(
    [[comb(j - 1, j - i) if 1 <= i <= j else 0.0 for i in range(_SERIES_ORDER + 1)]
     for j in range(_SERIES_ORDER + 1)]
)
_INV_ONE_MINUS_H4 = np.array([comb(k + 3, 3) for k in range(_SERIES_ORDER + 1)])


def _log_ratio_series(x, g2, d2, order=_SERIES_ORDER):
    """Coefficients L_j with log(D_m / D_{m-1}) ~ sum_j L_j m^{-j}.

    With h = 1/m the step reads D_m = alpha(h) D_{m-1} - beta(h) D_{m-2},

        alpha(h) = (1+xh)^2 [(1-xh)(1+(4g^2-x)h) - delta^2 h^2]
        beta(h)  = 4g^2 h (1+xh)^2 (1+(x-1)h)^2 (1-(1+x)h)(1-xh) / (1-h)^4,

    and the dominant ratio r = D_m/D_{m-1} obeys r(h) r(h/(1-h)) =
    alpha(h) r(h/(1-h)) - beta(h).  Matching powers of h gives r = 1 + sum
    c_j h^j one coefficient at a time; the h^1 term cancels identically,
    which is what makes the normalized limit exist.
    """
    K = order
    one = np.ones_like(x)
    alpha = _pmul(
        _pmul(_linear(one, x, K, x), _linear(one, x, K, x), K),
        _pmul(_linear(one, -x, K, x), _linear(one, 4.0 * g2 - x, K, x), K)
        - _shifted(d2 * one, 2, K),
        K,
    )
    beta = _pmul(_linear(one, x, K, x), _linear(one, x, K, x), K)
    beta = _pmul(beta, _pmul(_linear(one, x - 1.0, K, x), _linear(one, x - 1.0, K, x), K), K)
    beta = _pmul(beta, _pmul(_linear(one, -1.0 - x, K, x), _linear(one, -x, K, x), K), K)
    beta = _pmul(beta, _INV_ONE_MINUS_H4.reshape((-1,) + (1,) * x.ndim) * one, K)
    beta = 4.0 * g2 * np.concatenate([np.zeros((1,) + x.shape), beta[:-1]])

    c = np.zeros((K + 1,) + x.shape)
    s = np.zeros_like(c)
    c[0] = s[0] = 1.0
    for j in range(2, K + 1):
        rest = beta[j].copy()
        for i in range(1, j):
            rest += c[i] * s[j - i]
        for i in range(1, min(j, 4) + 1):
            rest -= alpha[i] * s[j - i]
        c[j] = -rest
        s[j] = _weighted_sum(_COMPOSE[j, 1 : j + 1], c[1 : j + 1])

    logs = np.zeros_like(c)
    for k in range(2, K + 1):
        acc = k * c[k]
        for i in range(2, k - 1):
            acc -= i * logs[i] * c[k - i]
        logs[k] = acc / k
    return logs


def _weighted_sum(w, rows):
    # elementwise accumulation; a BLAS dot would round differently with batch size
    out = np.zeros(rows.shape[1:])
    for wi, row in zip(w, rows):
        out += wi * row
    return out


def _shifted(coef0, power, order):
    s = np.zeros((order + 1,) + np.shape(coef0))
    s[power] = coef0
    return s


_ZETA_S = np.arange(2, _SERIES_ORDER + 1, dtype=float)


def _tail_log(logs, m):
    """sum_{k>m} log r_k from the series coefficients."""
    return _weighted_sum(zeta(_ZETA_S, m + 1.0), logs[2:])


# --------------------------------------------------------------------------
# normalized limits


class _Limit(NamedTuple):
    value: np.ndarray
    m_used: np.ndarray
    converged: np.ndarray
    last_increment: np.ndarray
    scale: np.ndarray


def _seed(lo, x, g2, d2):
    """(m0, D_{m0-1}, D_{m0}) for the block starting at index lo."""
    if lo == 0:
        a0 = _a(0, x, g2, d2)
        a1 = _a(1, x, g2, d2)
        bc = 4.0 * g2 * (0.0 - x) * (1.0 - x)
        return 1, a0, (1.0 + x) ** 2 * (a1 * a0 - bc)
    # partial value at lo is a_lo itself; the empty block one index earlier
    # carries the inverse of the step factor (lo+x)^2 / lo^4
    return lo, lo**4 / (lo + x) ** 2, _a(lo, x, g2, d2)


def _normalized_limit(lo, x, g, delta, opts):
    x, g, delta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, g, delta)))
    shape = x.shape
    x = x.ravel().copy()
    g2 = (g * g).ravel().copy()
    d2 = (delta * delta).ravel().copy()
    n_pts = x.size

    m0, prev, cur = _seed(lo, x, g2, d2)
    prev = np.asarray(prev, dtype=float) * np.ones(n_pts)
    cur = np.asarray(cur, dtype=float) * np.ones(n_pts)
    scale = np.abs(cur) if lo else np.maximum(np.abs(prev), np.abs(cur))
    logs = _log_ratio_series(x, g2, d2)

    out_value = np.full(n_pts, np.nan)
    out_m = np.zeros(n_pts, dtype=int)
    out_conv = np.zeros(n_pts, dtype=bool)
    out_inc = np.full(n_pts, np.inf)
    out_scale = np.zeros(n_pts)

    idx = np.arange(n_pts)
    est = np.full(n_pts, np.nan)
    inc = np.full(n_pts, np.inf)
    stable = np.zeros(n_pts, dtype=int)
    m = m0
    for m in range(m0 + 1, opts.m_max + 1):
        f1 = (m + x) ** 2 / m**4
        f2 = f1 * (m - 1 + x) ** 2 / (m - 1) ** 4
        bc = 4.0 * g2 * m * (m - 1 - x) * (m - x)
        prev, cur = cur, f1 * _a(m, x, g2, d2) * cur - f2 * bc * prev
        np.maximum(scale, np.abs(cur), out=scale)
        if m - m0 < _WARMUP or (m - m0) % _CHECK_EVERY:
            continue
        new_est = cur * np.exp(_tail_log(logs, m))
        inc = np.abs(new_est - est)
        ok = inc <= opts.tol * np.maximum(1.0, np.abs(new_est))
        stable = np.where(ok, stable + 1, 0)
        est = new_est
        done = stable >= opts.stable_steps
        if done.any():
            k = idx[done]
            out_value[k] = est[done]
            out_m[k] = m
            out_conv[k] = True
            out_inc[k] = inc[done]
            out_scale[k] = scale[done]
            keep = ~done
            idx, x, g2, d2 = idx[keep], x[keep], g2[keep], d2[keep]
            prev, cur, scale = prev[keep], cur[keep], scale[keep]
            est, inc, stable = est[keep], inc[keep], stable[keep]
            logs = logs[:, keep]
            if idx.size == 0:
                break

    if idx.size:
        final = cur * np.exp(_tail_log(logs, m))
        out_value[idx] = final
        out_m[idx] = m
        out_inc[idx] = np.abs(final - est) if np.all(np.isfinite(est)) else np.inf
        out_scale[idx] = scale

    return _Limit(
        out_value.reshape(shape),
        out_m.reshape(shape),
        out_conv.reshape(shape),
        out_inc.reshape(shape),
        out_scale.reshape(shape),
    )


def near_negative_integer(x, guard: float = NEGATIVE_INTEGER_GUARD):
    """True where x sits within ``guard`` of -1, -2, ..."""
    x = np.asarray(x, dtype=float)
    r = np.rint(x)
    return (r <= -1) & (np.abs(x - r) < guard)


def _to_evaluation(lim: _Limit) -> HillEvaluation:
    return HillEvaluation(
        value=float(lim.value),
        m_used=int(lim.m_used),
        converged=bool(lim.converged),
        last_increment=float(lim.last_increment),
        scale=float(lim.scale),
    )


def hill_values(x, g, delta, opts: SolverOptions | None = None) -> _Limit:
    """Vectorized normalized Hill determinant (no negative-integer guard)."""
    return _normalized_limit(0, x, g, delta, opts or DEFAULT_OPTIONS)


def hill_determinant(x: float, params: ModelParams, opts: SolverOptions | None = None) -> HillEvaluation:
    """Normalized Hill determinant D(x) = D~(x) / Gamma(1+x)^2.

    Shares its zeros with D~ away from the negative integers, where the
    normalization plants artificial double zeros; those are refused.
    """
    if near_negative_integer(x):
        raise NegativeIntegerGuardError(
            f"x={x} is within {NEGATIVE_INTEGER_GUARD} of a negative integer; "
            "zeros there are artifacts of the normalization"
        )
    return _to_evaluation(hill_values(x, params.g, params.delta, opts))


def tail_values(n: int, g, delta, opts: SolverOptions | None = None) -> _Limit:
    """Vectorized tail limit F_n over broadcast (g, delta) arrays."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return _normalized_limit(n + 1, float(n), g, delta, opts or DEFAULT_OPTIONS)


def tail_limit(n: int, params: ModelParams, opts: SolverOptions | None = None) -> HillEvaluation:
    """Normalized limit of det[W_{n+1}^m] at x = n.

    The constant prefactor [(2n+1)!]^2 / ((n+1)!)^4 of the textbook
    normalization is dropped; only zeros and signs are used downstream.
    """
    return _to_evaluation(tail_values(n, params.g, params.delta, opts))


def _partials(lo, x, params, m):
    g2, d2 = params.g**2, params.delta**2
    m0, prev, cur = _seed(lo, x, g2, d2)
    out = [prev, cur] if lo == 0 else [cur]
    for k in range(m0 + 1, m + 1):
        f1 = (k + x) ** 2 / k**4
        f2 = f1 * (k - 1 + x) ** 2 / (k - 1) ** 4
        bc = 4.0 * g2 * k * (k - 1 - x) * (k - x)
        prev, cur = cur, f1 * _a(k, x, g2, d2) * cur - f2 * bc * prev
        out.append(cur)
    return np.array(out[: m - lo + 1], dtype=float)


def hill_partials(x: float, params: ModelParams, m: int) -> np.ndarray:
    """Raw partial values D_0 .. D_m of the normalized recurrence."""
    return _partials(0, float(x), params, m)


def tail_partials(n: int, params: ModelParams, m: int) -> np.ndarray:
    """Raw partial values F_{n+1} .. F_m at x = n."""
    return _partials(n + 1, float(n), params, m)


# --------------------------------------------------------------------------
# minimal solutions


def _backward(x, params, start, depth):
    g2, d2 = params.g**2, params.delta**2
    g = params.g
    q = np.zeros(depth - start + 2)
    q[-2] = 1.0
    for k in range(depth, start, -1):
        ck = 2.0 * g * (k - x)
        if abs(k - x) < 1e-14 * max(1.0, abs(x)):
            raise ZeroCoefficientError(f"c_{k} vanishes at integer x={x}")
        i = k - start
        q[i - 1] = (_a(k, x, g2, d2) * q[i] - 2.0 * g * (k + 1) * (k - x) * q[i + 1]) / ck
        if abs(q[i - 1]) > 1e150:
            q[i - 1 :] /= abs(q[i - 1])
    return q


def _rows(x, params, start, q):
    """Row residuals -c_k q_{k-1} + a_k q_k - b_k q_{k+1} for a window starting at
    ``start`` with q_{start-1} taken as 0; q must extend one past the last row."""
    k = np.arange(start, start + len(q) - 1)
    g = params.g
    left = np.concatenate([[0.0], q[:-2]])
    c = 2.0 * g * (k - x)
    b = 2.0 * g * (k + 1) * (k - x)
    return -c * left + _a(k, x, g * g, params.delta**2) * q[:-1] - b * q[1:]


def _diagonal_solution(x, params, start, length):
    """g = 0: the rows decouple to a_k q_k = 0; take the lowest vanishing a_k."""
    k = np.arange(start, start + length)
    a = _a(k, x, 0.0, params.delta**2)
    zero = np.abs(a) <= 1e-12 * max(1.0, x * x, params.delta**2)
    q = np.zeros(length)
    if zero.any():
        q[np.argmax(zero)] = 1.0
    return q


def minimal_solution(
    x: float,
    params: ModelParams,
    start: int,
    length: int,
    opts: SolverOptions | None = None,
    depth: int | None = None,
    residual_tol: float = 1e-6,
) -> MinimalSolution:
    """Minimal solution of the recurrence rows above ``start``, by Miller's
    backward recursion seeded with q_{M+1} = 0, q_M = 1.

    Row ``start`` is treated as the boundary row (q_{start-1} = 0); it holds
    only when x is an eigenvalue, and its residual is what gets checked.
    ``opts`` is accepted for signature symmetry; the depth rule is independent.
    """
    if start < 0 or length < 1:
        raise ValueError("need start >= 0 and length >= 1")
    if params.g == 0.0:
        q = _diagonal_solution(x, params, start, length + 1)
        rows = _rows(x, params, start, q)
        res = float(abs(rows[0]))
        if not q.any() or res > residual_tol:
            raise ResidualTooLargeError(f"x={x} is not a root of the decoupled recurrence")
        return MinimalSolution(start, q[:length], res, float(np.max(np.abs(rows[1:]), initial=0.0)), 0.0, start + length)

    depth = depth or max(4 * (start + length), start + 200)
    sols = []
    for m in (depth, 2 * depth):
        q = _backward(x, params, start, m)[: length + 1]
        pivot = np.argmax(np.abs(q[:length]))
        sols.append(q / q[pivot])
    q, q2 = sols
    rows = _rows(x, params, start, q)
    res = float(abs(rows[0]))
    interior = float(np.max(np.abs(rows[1:]), initial=0.0))
    stability = float(np.max(np.abs(q[:length] - q2[:length])))
    if res > residual_tol:
        raise ResidualTooLargeError(
            f"boundary row residual {res:.3e} exceeds {residual_tol:.1e}; x={x} is not a root"
        )
    return MinimalSolution(start, q[:length].copy(), res, interior, stability, depth)

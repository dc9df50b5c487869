import math
from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rabi_hill.errors import NegativeIntegerGuardError, ResidualTooLargeError, ZeroCoefficientError
from rabi_hill.recurrence import (
    ModelParams,
    SolverOptions,
    coefficients,
    finite_determinant,
    hill_determinant,
    hill_partials,
    minimal_solution,
    tail_limit,
    tail_partials,
)

real = st.floats(-2, 2, allow_nan=False, allow_subnormal=False)


def dense_block(lo, hi, x, g, d):
    """Explicit tridiagonal W block, rows/cols lo..hi."""
    n = hi - lo + 1
    w = np.zeros((n, n))
    for i, m in enumerate(range(lo, hi + 1)):
        w[i, i] = (m - x) * (m - x + 4 * g * g) - d * d
        if i + 1 < n:
            w[i, i + 1] = -2 * g * (m + 1) * (m - x)
            w[i + 1, i] = -2 * g * (m + 1 - x)
    return w


def exact_det(w):
    """Dense determinant by fraction-exact Gaussian elimination."""
    a = [[Fraction(float(v)) for v in row] for row in w]
    n, det = len(a), Fraction(1)
    for k in range(n):
        piv = next((i for i in range(k, n) if a[i][k] != 0), None)
        if piv is None:
            return 0.0
        if piv != k:
            a[k], a[piv] = a[piv], a[k]
            det = -det
        det *= a[k][k]
        for i in range(k + 1, n):
            f = a[i][k] / a[k][k]
            if f:
                for j in range(k, n):
                    a[i][j] -= f * a[k][j]
    return float(det)


def term_magnitude(lo, hi, x, g, d):
    """Same recurrence on absolute values: bounds the size of the summed terms."""
    w = np.abs(dense_block(lo, hi, x, g, d))
    prev, cur = 0.0, 1.0
    for i in range(w.shape[0]):
        off = w[i - 1, i] * w[i, i - 1] if i else 0.0
        prev, cur = cur, w[i, i] * cur + off * prev
    return cur


# --------------------------------------------------------------------------
# coefficients


def test_coefficients_example():
    a, b, c = coefficients(0, 1.0, ModelParams(0.3, 0.5))
    assert a == pytest.approx(0.39, abs=1e-15)
    assert b == pytest.approx(-0.6, abs=1e-15)
    assert c == pytest.approx(-0.6, abs=1e-15)


@pytest.mark.parametrize("n", [0, 1, 4, 9])
def test_coefficients_at_integer_x(n):
    t = coefficients(n, float(n), ModelParams(0.37, 1.3))
    assert t.a == pytest.approx(-1.3**2, rel=1e-15)
    assert t.b == 0 and t.c == 0


@given(st.integers(0, 30), real, real)
def test_coefficients_decoupled(m, x, d):
    t = coefficients(m, x, ModelParams(0.0, d))
    assert t.a == pytest.approx((m - x) ** 2 - d * d, abs=1e-12)
    assert t.b == 0 and t.c == 0


def test_coefficients_rejects_negative_index():
    with pytest.raises(ValueError):
        coefficients(-1, 0.0, ModelParams(0.1, 0.1))


def test_params_must_be_finite():
    with pytest.raises(ValueError):
        ModelParams(math.inf, 0.0)
    with pytest.raises(ValueError):
        ModelParams(0.1, math.nan)


@pytest.mark.parametrize("kw", [dict(tol=0), dict(m_max=1), dict(stable_steps=0)])
def test_solver_options_validated(kw):
    with pytest.raises(ValueError):
        SolverOptions(**kw)


# --------------------------------------------------------------------------
# finite determinants


def test_empty_block_is_one():
    assert finite_determinant(0, -1, 0.3, ModelParams(0.5, 0.7)) == 1.0


@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_single_block_at_x_one(g, d):
    val = finite_determinant(0, 0, 1.0, ModelParams(g, d))
    assert val == pytest.approx(1 - 4 * g * g - d * d, abs=1e-12)


def test_two_by_two_against_cofactor():
    p = ModelParams(0.2, 0.1)
    a0, b0, _ = coefficients(0, 0.5, p)
    a1, _, c1 = coefficients(1, 0.5, p)
    assert finite_determinant(0, 1, 0.5, p) == pytest.approx(a0 * a1 - b0 * c1, rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 12), st.integers(0, 3), real, real, real)
def test_brute_force_equivalence(hi, lo, x, g, d):
    lo = min(lo, hi)
    val = finite_determinant(lo, hi, x, ModelParams(g, d))
    ref = exact_det(dense_block(lo, hi, x, g, d))
    # near-singular blocks cancel; measure the error against the term size
    assert abs(val - ref) <= 1e-10 * max(abs(ref), 1e-6 * term_magnitude(lo, hi, x, g, d), 1e-290)


def test_finite_determinant_overflow_flagged():
    with pytest.raises(OverflowError):
        finite_determinant(0, 400, 0.3, ModelParams(1.0, 1.0))


# --------------------------------------------------------------------------
# parity evenness


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10), real, st.floats(0.01, 2), st.floats(0.01, 2))
def test_finite_determinant_even(hi, x, g, d):
    ref = finite_determinant(0, hi, x, ModelParams(g, d))
    for gg, dd in [(-g, d), (g, -d), (-g, -d)]:
        assert finite_determinant(0, hi, x, ModelParams(gg, dd)) == pytest.approx(ref, rel=1e-12, abs=1e-300)


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.9, 6), st.floats(0.0, 1.2), st.floats(0.0, 1.5))
def test_hill_determinant_even(x, g, d):
    ref = hill_determinant(x, ModelParams(g, d)).value
    for gg, dd in [(-g, d), (g, -d)]:
        assert hill_determinant(x, ModelParams(gg, dd)).value == pytest.approx(ref, rel=1e-12, abs=1e-300)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 4), st.floats(0.0, 1.2), st.floats(0.0, 2.0))
def test_tail_limit_even(n, g, d):
    ref = tail_limit(n, ModelParams(g, d)).value
    for gg, dd in [(-g, d), (g, -d)]:
        assert tail_limit(n, ModelParams(gg, dd)).value == pytest.approx(ref, rel=1e-12, abs=1e-300)


# --------------------------------------------------------------------------
# normalized Hill determinant


def test_hill_root_decoupled():
    ev = hill_determinant(0.5, ModelParams(0.0, 0.5))
    assert ev.converged
    assert abs(ev.value) <= 1e-12 * ev.scale


def test_hill_root_on_judd_ellipse():
    ev = hill_determinant(1.0, ModelParams(0.25, math.sqrt(0.75)))
    assert abs(ev.value) <= 1e-12 * ev.scale


def test_hill_partials_match_scaled_finite_determinant():
    x, p = 0.37, ModelParams(0.2, 0.3)
    part = hill_partials(x, p, 12)
    for m in range(2, 13):
        # D_hat_m = det W_0^m * Gamma^2(m+1+x) / (Gamma^2(1+x) Gamma^4(m+1))
        ratio = mp.gamma(m + 1 + x) ** 2 / (mp.gamma(1 + x) ** 2 * mp.gamma(m + 1) ** 4)
        ref = finite_determinant(0, m, x, p) * float(ratio)
        assert part[m] == pytest.approx(ref, rel=1e-10)


def _mp_hill(x, g, d, m_stop=4000):
    """Richardson-extrapolated high-precision limit used as an independent reference."""
    mp.mp.dps = 40
    x, g2, d2 = mp.mpf(x), mp.mpf(g) ** 2, mp.mpf(d) ** 2

    def a(m):
        return (m - x) * (m - x + 4 * g2) - d2

    prev, cur = mp.mpf(1), a(0)
    keep = {}
    for m in range(1, m_stop + 1):
        f1 = (m + x) ** 2 / mp.mpf(m) ** 4
        bc = 4 * g2 * m * (m - 1 - x) * (m - x)
        if m == 1:
            prev, cur = cur, (1 + x) ** 2 * (a(1) * cur - bc)
        else:
            f2 = f1 * (m - 1 + x) ** 2 / mp.mpf(m - 1) ** 4
            prev, cur = cur, f1 * a(m) * cur - f2 * bc * prev
        if m in (m_stop // 4, m_stop // 2, m_stop):
            keep[m] = cur
    # error ~ C/m: two Richardson steps (1/m and 1/m^2)
    q, h, f = keep[m_stop // 4], keep[m_stop // 2], keep[m_stop]
    r1 = 2 * h - q
    r2 = 2 * f - h
    return float((4 * r2 - r1) / 3)


@pytest.mark.parametrize("x,g,d", [(0.37, 0.2, 0.3), (1.7, 0.7, 0.4), (-0.4, 1.0, 1.0), (3.3, 0.5, 1.5)])
def test_hill_limit_against_high_precision(x, g, d):
    ev = hill_determinant(x, ModelParams(g, d))
    assert ev.converged
    ref = _mp_hill(x, g, d)
    assert ev.value == pytest.approx(ref, rel=1e-7, abs=1e-9 * ev.scale)


def test_hill_evaluation_invariants():
    opts = SolverOptions()
    ev = hill_determinant(0.37, ModelParams(0.7, 0.4), opts)
    assert ev.converged
    assert ev.m_used <= opts.m_max
    assert ev.last_increment <= opts.tol * max(1.0, abs(ev.value))


def test_not_converged_reported():
    ev = hill_determinant(0.37, ModelParams(0.7, 0.4), SolverOptions(m_max=10))
    assert not ev.converged
    assert ev.m_used <= 10


@pytest.mark.parametrize("x", [-1.0, -2.00005, -3 + 1e-6])
def test_negative_integer_guard(x):
    with pytest.raises(NegativeIntegerGuardError):
        hill_determinant(x, ModelParams(0.1, 0.2))


@pytest.mark.parametrize("n,g,d", [(1, 0.3, 0.6), (2, 0.4, 0.9), (3, 0.2, 1.7)])
def test_factorization_at_integer_x(n, g, d):
    p = ModelParams(g, d)
    m = n + 15
    full = hill_partials(float(n), p, m)[m]
    tail = tail_partials(n, p, m)[-1]
    judd = finite_determinant(0, n - 1, float(n), p)
    # ratio of the normalizations, both written with x = n
    scale_full = mp.gamma(m + 1 + n) ** 2 / (mp.gamma(1 + n) ** 2 * mp.gamma(m + 1) ** 4)
    lo = n + 1
    scale_tail = mp.gamma(m + 1 + n) ** 2 / mp.gamma(m + 1) ** 4 * mp.gamma(lo + 1) ** 4 / mp.gamma(lo + 1 + n) ** 2
    det_tail = tail / float(scale_tail)
    expected = -(d**2) * judd * det_tail * float(scale_full)
    assert full == pytest.approx(expected, rel=1e-8)


# --------------------------------------------------------------------------
# tail limit


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_tail_sinc_law(n):
    ref = tail_limit(n, ModelParams(0.0, 0.5)).value
    for d in [0.25, 0.75, 1.5, 2.5, 3.2]:
        val = tail_limit(n, ModelParams(0.0, d)).value
        sinc = math.sin(math.pi * d) / (math.pi * d)
        assert val / ref == pytest.approx(sinc / (2 / math.pi), abs=1e-9)


def test_tail_sign_n0():
    assert tail_limit(0, ModelParams(0.0, 1.5)).value < 0


def test_tail_zero_on_judd_ellipse():
    ev = tail_limit(1, ModelParams(0.25, math.sqrt(0.75)))
    assert abs(ev.value) <= 1e-8 * ev.scale


# --------------------------------------------------------------------------
# minimal solution

LOWEST_ROOT_07_04 = -0.217805064098  # numpy eigh, N = 160, shifted by g^2


def _lowest_root():
    from rabi_hill.spectrum import scan_regular

    recs = scan_regular(ModelParams(0.7, 0.4), -1.0, 0.0)
    return recs[0].x


def test_lowest_root_frozen():
    assert _lowest_root() == pytest.approx(LOWEST_ROOT_07_04, abs=1e-9)


def test_minimal_solution_decoupled():
    sol = minimal_solution(0.5, ModelParams(0.0, 0.5), 0, 8)
    assert sol.values[0] == 1.0
    assert np.all(sol.values[1:] == 0)


def test_minimal_solution_residual_and_stability():
    x = _lowest_root()
    p = ModelParams(0.7, 0.4)
    sol = minimal_solution(x, p, 0, 30)
    assert np.max(np.abs(sol.values)) == pytest.approx(1.0)
    assert sol.interior_residual <= 1e-8
    assert sol.stability <= 1e-10
    deeper = minimal_solution(x, p, 0, 30, depth=2 * sol.depth)
    assert np.max(np.abs(deeper.values - sol.values)) <= 1e-10


def test_minimal_solution_rejects_non_root():
    with pytest.raises(ResidualTooLargeError):
        minimal_solution(0.1, ModelParams(0.7, 0.4), 0, 20)


def test_minimal_solution_integer_in_range():
    with pytest.raises(ZeroCoefficientError):
        minimal_solution(3.0, ModelParams(0.7, 0.4), 0, 20)

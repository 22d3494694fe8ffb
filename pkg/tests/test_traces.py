import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from charpent import expr as ex
from charpent.geometry import Gamma0
from charpent.solver import CauchyData, data_from_solution
from charpent.symbol import build_symbol, eval_symbol
from charpent.traces import (BumpSupportViolation, adaptive_integrate, flux_terms,
                             gamma0_identity_residual, gamma0_traces, green_flux_residual,
                             kernel_identity_residual, tilde_traces, wave_disk_demo)

X = np.linspace(0.0, 1.0, 9)


def _fracs(s):
    return float(Fraction(s))


# ---------------------------------------------------------------- Gamma0 traces

def test_traces_constant_data(sym):
    tr = gamma0_traces(sym, CauchyData.parse("1", "0", "0", "0")).evaluate(X)
    np.testing.assert_allclose(tr[0], -4.0)
    np.testing.assert_allclose(tr[1:], 0.0, atol=1e-15)


def test_traces_exponential_data(sym):
    tr = gamma0_traces(sym, data_from_solution("-exp(x1 + x2)")).evaluate(X)
    e = np.exp(X)
    np.testing.assert_allclose(tr, [4 * e, 4 * e, -e, -e], rtol=1e-14)


def test_traces_zero_data():
    sym = build_symbol((0.7, 0.3, -4.1, 0.2, 2.0))
    tr = gamma0_traces(sym, CauchyData.parse("0", "0", "0", "0")).evaluate(X)
    assert np.all(tr == 0.0)


@settings(max_examples=25)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_traces_linearity(sym, a, b):
    d1 = CauchyData.parse("sin(x1)", "x1^2", "exp(x1)", "1")
    d2 = CauchyData.parse("x1^3", "cos(x1)", "-x1", "x1^4")
    comb = CauchyData(*(ex.add(ex.mul(ex.Num(a), p), ex.mul(ex.Num(b), q))
                        for p, q in zip((d1.phi, d1.psi, d1.sigma, d1.chi),
                                        (d2.phi, d2.psi, d2.sigma, d2.chi))))
    t = gamma0_traces(sym, comb).evaluate(X)
    ref = a * gamma0_traces(sym, d1).evaluate(X) + b * gamma0_traces(sym, d2).evaluate(X)
    np.testing.assert_allclose(t, ref, atol=1e-12 * (1 + np.abs(ref).max()))


def test_l0_trace_matches_symbol_at_normal():
    sym = build_symbol((0.7, 0.3, -4.1, 0.2, 2.0))
    data = CauchyData.parse("sin(3*x1) + 2", "0", "0", "0")
    tr = gamma0_traces(sym, data).evaluate(X)[0]
    ref = -eval_symbol(sym, (0.0, -1.0)) * (np.sin(3 * X) + 2)
    np.testing.assert_allclose(tr, ref, rtol=1e-15)


# ---------------------------------------------------------------- flux

def test_flux_divergence_symbolically():
    x1, x2 = sp.symbols("x1 x2")
    a = sp.symbols("a0:5")
    u, v = sp.Function("u")(x1, x2), sp.Function("v")(x1, x2)
    for p in range(5):
        coeffs = tuple(1.0 if q == p else 0.0 for q in range(5))
        F = [0, 0]
        for coef, comp, du, dv in flux_terms(coeffs):
            term = (sp.Integer(round(coef)) * a[p]
                    * sp.diff(u, x1, du[0], x2, du[1]) * sp.diff(v, x1, dv[0], x2, dv[1]))
            F[comp] += term
        div = sp.diff(F[0], x1) + sp.diff(F[1], x2)
        op = lambda w: a[p] * sp.diff(w, x1, 4 - p, x2, p)  # noqa: E731
        assert sp.expand(div - (op(u) * v - u * op(v))) == 0


def test_flux_on_monomials():
    x1, x2 = sp.symbols("x1 x2")
    monos = [x1**i * x2**j for i in range(5) for j in range(5 - i)]
    coeffs = (1.0, 0.0, -5.0, 0.0, 4.0)
    L = lambda w: sum(c * sp.diff(w, x1, 4 - p, x2, p) for p, c in enumerate(coeffs))  # noqa
    rng = np.random.default_rng(3)
    for _ in range(40):
        u, v = monos[rng.integers(len(monos))], monos[rng.integers(len(monos))]
        F = [0, 0]
        for coef, comp, du, dv in flux_terms(coeffs):
            F[comp] += sp.nsimplify(coef) * sp.diff(u, x1, du[0], x2, du[1]) * sp.diff(
                v, x1, dv[0], x2, dv[1])
        div = sp.diff(F[0], x1) + sp.diff(F[1], x2)
        assert sp.expand(div - sp.nsimplify(L(u) * v - u * L(v))) == 0


# ---------------------------------------------------------------- Green residuals

@pytest.mark.parametrize("coeffs", [(1, 0, -5, 0, 4), (0.7, 0.3, -4.1, 0.2, 2.0)])
def test_green_quadratic(coeffs, pentagon):
    r = green_flux_residual(build_symbol(coeffs), "x1^2", "x2^2", pentagon)
    assert r.residual <= 1e-10


def test_green_polynomial_exact(sym, pentagon):
    r = green_flux_residual(sym, "x1^4", "x2", pentagon, order=7)
    assert r.residual <= 1e-10
    assert abs(r.side_a) > 1e-3


def test_green_analytic_improves_with_order(sym, pentagon):
    res = [green_flux_residual(sym, "sin(x1 + 2*x2)", "exp(x1 - x2)", pentagon, order=o).residual
           for o in (3, 5, 7)]
    assert res[0] > res[1] > res[2]
    assert res[2] <= 1e-6


def test_gamma0_identity_matches_area_oracle(sym, oracles):
    o = oracles["strip"]
    data = data_from_solution(o["u"])
    r = gamma0_identity_residual(sym, data, o["u"], Gamma0(0.0, 1.0), height=o["height"])
    assert r.side_a == pytest.approx(_fracs(o["area_side_exact"]), rel=1e-10)
    assert r.residual <= 1e-8


def test_gamma0_identity_default_strip(sym):
    u = "x1^4"
    r = gamma0_identity_residual(sym, data_from_solution(u), u, Gamma0(0.0, 1.0))
    assert r.residual <= 1e-8


def test_gamma0_identity_zero_data(sym):
    u = "x2^4*(1 + x1)"
    r = gamma0_identity_residual(sym, data_from_solution(u), u, Gamma0(0.0, 1.0))
    assert abs(r.side_b) <= 1e-10
    assert abs(r.side_a) <= 1e-10


def test_gamma0_identity_sign(sym):
    g = Gamma0(0.0, 1.0)
    u = "exp(x1)*cos(x2)"
    neg = ex.neg(ex.parse(u))
    r1 = gamma0_identity_residual(sym, data_from_solution(u), u, g)
    r2 = gamma0_identity_residual(sym, data_from_solution(neg), neg, g)
    assert abs((r1.side_a - r1.side_b) + (r2.side_a - r2.side_b)) <= 2e-8
    assert r1.side_b == pytest.approx(-r2.side_b, rel=1e-14)


def test_gamma0_identity_detects_wrong_trace(sym):
    u = "x1^4 + x1*x2^2"
    data = data_from_solution(u)
    bad = gamma0_traces(sym, data, perturb=0.5)
    r = gamma0_identity_residual(sym, data, u, Gamma0(0.0, 1.0), traces=bad)
    assert r.residual > 1e-3


def test_bump_support_violation(sym):
    with pytest.raises(BumpSupportViolation):
        gamma0_identity_residual(sym, data_from_solution("x1"), "x1", Gamma0(0.0, 1.0),
                                 height=0.6)


# ---------------------------------------------------------------- tilde traces

def test_tilde_traces_vanish_on_matching_edges(sym, pentagon):
    u = "exp(x1 - 2*x2) + x1^3*x2"
    key = {4: 0, 3: 1, 2: 2, 1: 3}
    for et in tilde_traces(sym, u, pentagon):
        if et.root_index is None:
            continue
        scale = 1 + max(np.abs(v).max() for v in et.values.values())
        assert np.abs(et.values[key[et.root_index]]).max() <= 1e-12 * scale


def test_tilde_traces_constant_and_linear(sym, pentagon):
    lam = sym.roots
    for et in tilde_traces(sym, "1", pentagon):
        nu = et.normal
        np.testing.assert_allclose(et.values[0], nu[0] - lam[3] * nu[1], atol=1e-15)
        for k in (1, 2, 3):
            assert np.all(et.values[k] == 0.0)
    for et in tilde_traces(sym, "x1", pentagon):
        nu = et.normal
        np.testing.assert_allclose(et.values[1], nu[0] - lam[2] * nu[1], atol=1e-15)


@pytest.mark.parametrize("key", ["x1^4|1|1", "x1^4|2|x", "x1^4|3|x^2"])
def test_kernel_identity_against_oracle(sym, pentagon, oracles, key):
    u, j, prof = key.split("|")
    r = kernel_identity_residual(sym, u, int(j), prof.replace("x", "x1"), pentagon)
    assert r.side_a == pytest.approx(_fracs(oracles["pentagon"]["kernel"][key]), abs=1e-12)
    assert r.residual <= 1e-8
    assert abs(r.details["adjoint_term"]) <= 1e-10


def test_kernel_identity_both_in_kernel(sym, pentagon):
    lam2 = sym.roots[1]
    u = f"(x2 + ({lam2!r})*x1)^3"
    r = kernel_identity_residual(sym, u, 3, "sin(x1)", pentagon)
    assert abs(r.side_a) <= 1e-12
    assert abs(r.side_b) <= 1e-8


# ---------------------------------------------------------------- wave disk

def test_adaptive_integrate():
    val, panels = adaptive_integrate(lambda t: 1 / np.sqrt(t), [1e-12, 1.0], 1e-10)
    assert val == pytest.approx(2 - 2e-6, rel=1e-9)
    assert panels > 2


def test_wave_disk_rows_against_high_precision(oracles):
    o = oracles["wave_disk"]
    rep = wave_disk_demo(o["p"])
    for row, ref in zip(rep.rows, o["rows"]):
        r, I, N, panels = row
        assert r == pytest.approx(ref["r"], abs=1e-15)
        assert I == pytest.approx(ref["I"], rel=1e-7)
        assert N == pytest.approx(ref["N"], rel=1e-7)
    assert rep.slope == pytest.approx(o["asymptotic_slope"], abs=0.03)
    assert rep.trace_blows_up and rep.in_l2


def test_wave_disk_regimes():
    assert not wave_disk_demo(-0.25).trace_blows_up
    assert not wave_disk_demo(-2.5).in_l2


@pytest.mark.parametrize("p", [0.0, 0.5])
def test_wave_disk_rejects_nonnegative(p):
    with pytest.raises(ValueError):
        wave_disk_demo(p)


def test_wave_disk_rejects_bad_radii():
    with pytest.raises(ValueError):
        wave_disk_demo(-0.625, radii=[0.5, 1.0])

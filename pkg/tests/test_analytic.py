from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fsebound.analytic import (AnalyticError, analytic_constants, analytic_pbc_bound,
                               bloch_matrix, lr_speed, perron_eigenvalue, rescale_bound,
                               unit_cell)
from fsebound.model import parse_model, tfim_config
from fsebound.series import improved_pbc_bound

TFIM_C_P = 522.97    # golden value at J = h = 1, cross-checked below


def _tfim(J=1.0, h=1.0, L=7):
    return parse_model(tfim_config(J, h, L, "pbc"))


def _offdiag(M):
    return sorted([M[0, 1], M[1, 0]])


# Bloch matrix ------------------------------------------------------------------

def test_bloch_kappa_zero():
    J, h = 0.5, 2.0
    M = bloch_matrix(unit_cell(_tfim(J, h)), 0.0).M
    g = 2 * math.sqrt(J * h)
    np.testing.assert_allclose(M, [[0, 2 * g], [2 * g, 0]], rtol=1e-14)


@pytest.mark.parametrize("kappa", [0.3, 1.0, 2.5])
def test_bloch_offdiagonals(kappa):
    J, h = 0.5, 2.0
    M = bloch_matrix(unit_cell(_tfim(J, h)), kappa).M
    g = 2 * math.sqrt(J * h)
    assert np.allclose(np.diag(M), 0)
    np.testing.assert_allclose(_offdiag(M), sorted([g * (1 + math.exp(kappa)),
                                                    g * (1 + math.exp(-kappa))]), rtol=1e-14)


@pytest.mark.filterwarnings("ignore:observable commutes")
def test_bloch_disconnected_cell_is_block_diagonal():
    doc = tfim_config(1.0, 1.0, 7, "pbc")
    doc["terms"] = doc["terms"][1:]          # transverse field only
    M = bloch_matrix(unit_cell(parse_model(doc)), 0.7).M
    assert np.all(M == 0)


# Perron eigenvalue ---------------------------------------------------------------

def test_perron_examples():
    assert perron_eigenvalue(np.array([[0.0, 2.0], [2.0, 0.0]])) == pytest.approx(2.0,
                                                                                   rel=1e-12)
    J, h = 0.7, 1.9
    cell = unit_cell(_tfim(J, h))
    for kappa in (0.0, 0.5, 3.0, 10.0):
        w = perron_eigenvalue(bloch_matrix(cell, kappa))
        assert w == pytest.approx(4 * math.sqrt(J * h) * math.cosh(kappa / 2), rel=1e-11)
    w0 = perron_eigenvalue(bloch_matrix(cell, 0.0))
    assert perron_eigenvalue(bloch_matrix(cell, 1e-7)) == pytest.approx(w0, rel=1e-12)


def test_perron_reflection_symmetry():
    cell = unit_cell(_tfim(0.4, 1.1))
    for kappa in (0.2, 1.7):
        assert perron_eigenvalue(bloch_matrix(cell, kappa)) == \
            pytest.approx(perron_eigenvalue(bloch_matrix(cell, -kappa)), rel=1e-12)


def test_perron_ambiguous_reducible():
    A = np.kron(np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(AnalyticError, match="ambiguous"):
        perron_eigenvalue(A)


def test_perron_negative_rejected():
    with pytest.raises(AnalyticError):
        perron_eigenvalue(np.array([[0.0, -1.0], [1.0, 0.0]]))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2 ** 31 - 1))
def test_perron_bounds_random(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.uniform(0.0, 3.0, (n, n)) * (rng.uniform(size=(n, n)) < 0.6)
    A += np.roll(np.eye(n), 1, axis=1) * 0.5      # a cycle keeps it irreducible
    lam = perron_eigenvalue(A)
    rows = A.sum(axis=1)
    assert rows.min() * (1 - 1e-12) <= lam <= rows.max() * (1 + 1e-12)
    assert lam == pytest.approx(max(np.linalg.eigvals(A).real), rel=1e-9)
    # max row sum / n is a lower bound for symmetric matrices (Rayleigh quotient)
    B = A + A.T
    assert B.sum(axis=1).max() / n <= perron_eigenvalue(B) * (1 + 1e-12)


# LR speed --------------------------------------------------------------------------

def test_lr_speed_tfim_scalar_oracle():
    J, h = 1.0, 1.0
    v, k0 = lr_speed(_tfim(J, h))
    # min cosh(u)/u at u solving tanh u = 1/u
    from scipy.optimize import brentq
    u = brentq(lambda x: math.tanh(x) - 1 / x, 0.5, 3.0)
    assert v == pytest.approx(2 * math.sqrt(J * h) * math.cosh(u) / u, rel=1e-10)
    assert k0 == pytest.approx(2 * u, rel=1e-5)
    grid = np.linspace(0.01, 20.0, 10_000)
    scan = np.min(4 * math.sqrt(J * h) * np.cosh(grid / 2) / grid)
    assert v == pytest.approx(scan, rel=1e-6)


def test_lr_speed_homogeneous():
    v1, _ = lr_speed(_tfim(0.6, 1.4))
    v2, _ = lr_speed(_tfim(3 * 0.6, 3 * 1.4))
    assert v2 == pytest.approx(3 * v1, rel=1e-9)


def test_lr_speed_decoupled_model():
    doc = tfim_config(1.0, 1.0, 7, "pbc")
    doc["terms"] = doc["terms"][:1]          # zero transverse field
    with pytest.raises(AnalyticError, match="disconnected"):
        lr_speed(parse_model(doc))


# constants ---------------------------------------------------------------------------

def _tfim_constants_by_hand(Sn=1.0):
    """Direct substitution for the TFIM at J = h = 1 (unit in-cell norms)."""
    v, k0 = lr_speed(_tfim())
    omega, omega0 = 4 * math.cosh(k0 / 2), 4.0
    c_kappa = 0.0
    norms = {}
    for sgn in (+1, -1):
        a, b = 2 * (1 + math.exp(sgn * k0)), 2 * (1 + math.exp(-sgn * k0))
        U = np.array([[math.sqrt(a), math.sqrt(a)], [math.sqrt(b), -math.sqrt(b)]])
        U /= np.linalg.norm(U, axis=0)
        nU, nUi = np.linalg.norm(U, 2), np.linalg.norm(np.linalg.inv(U), 2)
        norms[sgn] = (nU, nUi)
        c_kappa += nU * nUi        # D is the identity for unit norms
    c_H, c_S = 2.0, 4.0 * Sn
    s_p = math.sqrt(math.exp(-2 * k0) + 1.0)
    s_m = math.sqrt(math.exp(2 * k0) + 1.0)
    nU, nUi = norms[+1]
    C_kappa = (2 * c_H * c_S * c_kappa / (2 * omega - omega0)
               + 8 * Sn * c_H * nU ** 2 * nUi ** 2 / omega ** 2 * s_p * s_m)
    return C_kappa * math.exp(k0), c_S


def test_constants_positive_and_golden():
    c = analytic_constants(_tfim())
    for k in ("omega", "omega0", "U_norm", "Uinv_norm", "c_H", "c_S", "c_kappa", "s_plus",
              "s_minus", "C_kappa", "C_p", "v", "kappa0"):
        assert getattr(c, k) > 0
    by_hand, c_S = _tfim_constants_by_hand()
    assert c.C_p == pytest.approx(by_hand, rel=1e-9)
    assert c.c_S == pytest.approx(c_S)
    assert c.C_p == pytest.approx(TFIM_C_P, abs=0.01)
    assert 2 * c.omega > c.omega0


def test_constants_linear_in_observable_norm():
    m = _tfim()
    S = m.observable.parts[0][1]
    c1 = analytic_constants(m, S)
    c2 = analytic_constants(m, S.scaled(2.0))
    assert c2.c_S == pytest.approx(2 * c1.c_S, rel=1e-12)
    assert c2.C_p == pytest.approx(2 * c1.C_p, rel=1e-12)


def test_exponent_matches_improved_series():
    c = analytic_constants(_tfim())
    assert (c.eta, c.mu) == (2, 2)
    for L in (5, 7, 9):
        assert c.ell(L) == 2 * L - 2
        assert improved_pbc_bound(_tfim(L=L), L, np.array([0.1])).meta["order"] == 2 * L - 2


# rescaling and final bound ----------------------------------------------------------

def test_rescale_examples():
    assert rescale_bound(1.0, 2, 1.0, 2.0, 1.0) == pytest.approx(0.25)
    assert rescale_bound(3.0, 4, 2.0, 5.0, 2.5) == pytest.approx(3.0)
    assert rescale_bound(3.0, 4, 2.0, 5.0, 0.0) == 0.0
    with pytest.raises(ValueError, match="rescaling valid only"):
        rescale_bound(1.0, 2, 1.0, 2.0, 2.5)


@given(st.floats(0.1, 10), st.integers(1, 30), st.floats(0.1, 5), st.floats(1, 30),
       st.floats(0, 1))
def test_rescale_below_anchor(C, m, v, l, frac):
    t = frac * l / v
    val = rescale_bound(C, m, v, l, t)
    assert val <= C * (1 + 1e-12)
    if frac < 1:
        assert val < C


def test_analytic_bound_shape():
    m = _tfim()
    t = np.linspace(0.0, 4.0, 81)
    c = analytic_constants(m)
    b = {L: analytic_pbc_bound(m, L, t, constants=c).values for L in (5, 7, 9)}
    for L, vals in b.items():
        assert vals[0] == 0.0
        assert np.all(np.diff(vals) >= 0)
    assert np.all(b[7] <= b[5] * (1 + 1e-12)) and np.all(b[9] <= b[7] * (1 + 1e-12))


def test_analytic_bound_continuous_at_anchor():
    m = _tfim()
    c = analytic_constants(m)
    L = 7
    tc = L / (2 * c.v)
    lo, hi = analytic_pbc_bound(m, L, np.array([tc * (1 - 1e-9), tc * (1 + 1e-9)]),
                                constants=c).values
    assert hi == pytest.approx(lo, rel=1e-6)
    assert lo == pytest.approx(c.C_p, rel=1e-6)


def test_analytic_bound_requires_pbc():
    doc = tfim_config(1.0, 1.0, 7, "obc")
    with pytest.raises(AnalyticError):
        analytic_pbc_bound(parse_model(doc), None, np.array([0.0]))

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.linalg import expm

from fsebound import ed
from fsebound.cgraph import CommutativityGraph, Vertex, build_graph, finite_graph
from fsebound.model import LocalTerm, dense_matrix, parse_model, pauli, tfim_config
from fsebound.ode import (EXPM_TOL, DoubleCommutatorSolver, build_M, first_commutator_bound,
                          integrated_green, ode_fse_bound, solve_green)
from fsebound.series import UnsupportedModel, euv_setups, simple_fse_bound


def _toy_graph(edges, n, s=None, norms=None):
    term = LocalTerm("x", (pauli(1.0, ((0,), 0, "X")),))
    norms = norms or [1.0] * n
    verts = tuple(Vertex(f"v{i}", (i,), 0, norms[i], term, "obs" if i == s else "term")
                  for i in range(n))
    adj = [set() for _ in range(n)]
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    return CommutativityGraph(verts, tuple(frozenset(a) for a in adj), s)


@pytest.fixture(scope="module")
def tfim_window():
    m = parse_model(tfim_config(0.7, 1.3, 9, "pbc"))
    return m, build_graph(m, 4)


# build_M -----------------------------------------------------------------------

def test_two_vertex_matrix():
    M = build_M(_toy_graph([(0, 1)], 2)).M
    np.testing.assert_array_equal(M, [[0, 2], [2, 0]])


def test_tfim_chain_entries(tfim_window):
    m, g = tfim_window
    M = build_M(g).M
    terms = [i for i, v in enumerate(g.vertices) if v.kind == "term"]
    for i in terms:
        for k in g.adj[i]:
            if k in terms:
                assert M[i, k] == pytest.approx(2 * math.sqrt(0.7 * 1.3))
    assert np.all(np.diag(M) == 0) and np.all(M >= 0)
    np.testing.assert_array_equal(M, M.T)


def test_restriction_zeroes_rows(tfim_window):
    _, g = tfim_window
    c = g.meta["window"][0][0] + 4
    Mm = build_M(g, (c - 1, c + 1))
    out = [i for i, v in enumerate(g.vertices)
           if v.kind == "term" and not all(c - 1 <= x[0] <= c + 1 for x in v.cells)]
    assert out
    assert np.all(Mm.M[out] == 0) and np.all(Mm.M[:, out] == 0)


# solve_green -------------------------------------------------------------------

def test_green_two_by_two():
    t = np.linspace(0.0, 2.0, 9)
    G = solve_green(np.array([[0.0, 2.0], [2.0, 0.0]]), t).G
    np.testing.assert_allclose(G[:, 0, 0], np.cosh(2 * t), rtol=1e-10)
    np.testing.assert_allclose(G[:, 0, 1], np.sinh(2 * t), rtol=1e-10, atol=1e-14)
    np.testing.assert_array_equal(G[0], np.eye(2))


def test_green_taylor_partial_sums(tfim_window):
    _, g = tfim_window
    M = build_M(g).M
    t = 0.6
    G = solve_green(M, [t]).G[0]
    term = np.eye(len(M))
    acc = term.copy()
    for n in range(1, 80):
        term = term @ M * (t / n)
        acc += term
    np.testing.assert_allclose(G.sum(axis=0), acc.sum(axis=0), rtol=1e-12)


def test_green_properties(tfim_window):
    _, g = tfim_window
    t = np.linspace(0.0, 1.5, 16)
    G = solve_green(build_M(g), t).G
    assert np.all(G >= -1e-15)
    np.testing.assert_allclose(G, G.transpose(0, 2, 1), rtol=1e-12, atol=1e-15)
    colsum = G.sum(axis=1)
    assert np.all(np.diff(colsum, axis=0) >= 0)


def test_green_rejects_negative_time():
    with pytest.raises(ValueError):
        solve_green(np.zeros((2, 2)), [-1.0])


def test_integrated_green_matches_quadrature():
    M = np.array([[0.0, 2.0], [2.0, 0.0]])
    IG = integrated_green(M, [0.0, 1.0])
    np.testing.assert_allclose(IG[0], 0.0)
    np.testing.assert_allclose(IG[1], [[math.sinh(2) / 2, (math.cosh(2) - 1) / 2],
                                       [(math.cosh(2) - 1) / 2, math.sinh(2) / 2]],
                               rtol=1e-12)


# first commutator -----------------------------------------------------------------

def test_first_commutator_initial_values():
    g = _toy_graph([(0, 1), (1, 2)], 3, s=0, norms=[1.5, 0.8, 0.3])
    green = solve_green(build_M(g), [0.0, 0.5])
    assert first_commutator_bound(green, g, 1.5, 2, 0) == 0.0
    assert first_commutator_bound(green, g, 1.5, 1, 0) == pytest.approx(2 * 1.5 * 0.8,
                                                                         rel=1e-10)


def test_first_commutator_dominates_ed():
    L = 10
    m = parse_model(tfim_config(1.0, 0.8, L, "obc"))
    g, _ = finite_graph(m)
    terms = [i for i, v in enumerate(g.vertices) if v.kind == "term"]
    sites = [((x,), 0) for x in range(L)]
    H = sum(dense_matrix(g.vertices[i].term.strings, sites)[0] for i in terms)
    S = dense_matrix(g.vertices[g.s].term.strings, sites)[0]
    t = np.array([0.25, 0.75, 1.5])
    green = solve_green(build_M(g), t)
    c = m.centre()[0]
    for name, cell in (("ZZ", (c + 1,)), ("X", (c + 2,)), ("ZZ", (c + 3,))):
        i = g.find(name=name, cell=cell)[0]
        hi = dense_matrix(g.vertices[i].term.strings, sites)[0]
        bound = first_commutator_bound(green, g, 1.0, i)
        for a, tt in enumerate(t):
            U = expm(1j * H * tt)
            St = U @ S @ U.conj().T
            truth = np.linalg.norm(hi @ St - St @ hi, 2)
            assert truth <= bound[a]


# double commutator -----------------------------------------------------------

@pytest.fixture(scope="module")
def tfim5_families():
    L = 5
    m = parse_model(tfim_config(1.0, 1.0, L, "pbc"))
    S = m.observable.parts[0][1].translate(((L - 1) // 2,))
    return m, list(euv_setups(m, L, S))


def test_double_commutator_zero_time(tfim5_families):
    _, fams = tfim5_families
    for g, k, H2, H1, Q in fams[:3]:
        for q in Q:
            sol = DoubleCommutatorSolver(g, k, q, H1, H2)
            assert sol.value(0.0, 0.0) == 0.0
            assert sol.integrated([0.0])[0] == 0.0


def test_double_commutator_t3_zero_specialisation(tfim5_families):
    _, fams = tfim5_families
    t = 0.8
    for g, k, H2, H1, Q in fams:
        for q in Q:
            sol = DoubleCommutatorSolver(g, k, q, H1, H2)
            # independent path: e^{M2 t} on the full vertex set with k as probe row
            M2 = build_M(g, H2, probes=[k]).M
            Gk = expm(M2 * t)[k]
            h = g.norms
            sb0 = np.zeros(len(g))
            sb0[sol.lset] = sol.sb([0.0])[0]
            direct = float(np.sum(2 * Gk * np.sqrt(h[k] / h) * sb0))
            assert sol.value(t, 0.0) == pytest.approx(direct * (1 + 10 * EXPM_TOL), rel=1e-9,
                                                      abs=1e-300)


def _dense_double(g, k, q, H1, H2, t, t3):
    verts = set(H2) | {k, g.s}
    sites = sorted({s for v in verts for s in g.vertices[v].term.sites})
    D = {v: dense_matrix(g.vertices[v].term.strings, sites)[0] for v in verts}
    dim = 2 ** len(sites)
    H1m = sum((D[v] for v in H1), np.zeros((dim, dim)))
    H2m = sum((D[v] for v in H2), np.zeros((dim, dim)))
    U1 = expm(1j * H1m * t3)
    A = U1 @ D[g.s] @ U1.conj().T
    B = D[q] @ A - A @ D[q]
    U2 = expm(1j * H2m * (t - t3))
    C = U2 @ B @ U2.conj().T
    return np.linalg.norm(D[k] @ C - C @ D[k], 2)


def test_double_commutator_dominates_dense(tfim5_families):
    _, fams = tfim5_families
    worst = 0.0
    for g, k, H2, H1, Q in fams[::2]:
        for q in Q:
            sol = DoubleCommutatorSolver(g, k, q, H1, H2)
            for t, t3 in ((1.0, 0.3), (2.0, 1.0), (2.5, 2.5)):
                truth = _dense_double(g, k, q, H1, H2, t, t3)
                bound = sol.value(t, t3)
                # dense evaluation carries ~1e-15 roundoff where the bound is exactly 0
                assert truth <= bound + 1e-12
                if bound > 0:
                    worst = max(worst, truth / bound)
    assert worst > 0


def test_double_commutator_rejects_bad_times(tfim5_families):
    _, fams = tfim5_families
    g, k, H2, H1, Q = fams[0]
    with pytest.raises(ValueError):
        DoubleCommutatorSolver(g, k, Q[0], H1, H2).value(1.0, 2.0)


def test_refinement_stability(tfim5_families):
    _, fams = tfim5_families
    g, k, H2, H1, Q = fams[2]
    sol = DoubleCommutatorSolver(g, k, Q[0], H1, H2)
    t = np.array([0.5, 1.5, 3.0])
    a = sol.integrated(t, rtol=1e-10)
    b = sol.integrated(t, rtol=1e-11)
    np.testing.assert_allclose(a, b, rtol=1e-8)


# FSE bounds -----------------------------------------------------------------------

def test_ode_bounds_zero_and_monotone():
    m = parse_model(tfim_config(1.0, 1.0, 5, "pbc"))
    t = np.linspace(0.0, 2.0, 11)
    for variant in ("simple", "improved-pbc"):
        b = ode_fse_bound(m, 5, t, variant).values
        assert b[0] == 0.0
        assert np.all(b >= 0) and np.all(np.diff(b) >= 0)


def test_ode_unknown_variant():
    m = parse_model(tfim_config(1.0, 1.0, 5, "pbc"))
    with pytest.raises(UnsupportedModel):
        ode_fse_bound(m, 5, [0.0], "nonsense")


def test_ode_improved_dominates_measured_fse():
    t = np.linspace(0.0, 2.5, 26)
    m5 = parse_model(tfim_config(1.0, 1.0, 5, "pbc"))
    m9 = parse_model(tfim_config(1.0, 1.0, 9, "pbc"))
    v5, e5, _ = ed.run_series(m5, 5, t)
    v9, e9, _ = ed.run_series(m9, 9, t)
    b5 = ode_fse_bound(m5, 5, t, "improved-pbc").values
    b9 = ode_fse_bound(m9, 9, t, "improved-pbc").values
    assert np.all(np.abs(v5 - v9) - (e5 + e9) <= b5 + b9)


def test_ode_simple_vs_series_factor():
    from fsebound.analytic import lr_speed
    L = 7
    m = parse_model(tfim_config(1.0, 1.0, L, "pbc"))
    v, _ = lr_speed(m)
    t = np.array([L / (4 * v)])
    ratio = ode_fse_bound(m, L, t, "simple").values[0] / simple_fse_bound(m, L, t).values[0]
    assert 1.0 <= ratio <= 10.0

from __future__ import annotations

import itertools
import warnings

import numpy as np
import pytest

from fsebound.cgraph import (bfs_distances, boundary_terms, build_graph, cg_distance, eta_mu,
                             finite_graph, place_observable)
from fsebound.model import LocalTerm, ModelError, dense_matrix, fhm_config, parse_model, \
    tfim_config


@pytest.fixture(scope="module")
def tfim():
    return parse_model(tfim_config(1.0, 1.0, 9, "pbc"))


@pytest.fixture(scope="module")
def fhm():
    return parse_model(fhm_config(1.0, 0.5, 6, "obc", observable="density", sites="centre"))


def _dense_commutator_norm(a: LocalTerm, b: LocalTerm):
    sites = sorted(set(a.sites) | set(b.sites))
    ma, _ = dense_matrix(a.strings, sites)
    mb, _ = dense_matrix(b.strings, sites)
    return np.linalg.norm(ma @ mb - mb @ ma, 2)


def test_tfim_graph_is_chain(tfim):
    g = build_graph(tfim, 4)
    terms = [i for i, v in enumerate(g.vertices) if v.kind == "term"]
    assert all(len(g.adj[i] - {g.s}) <= 2 for i in terms)
    nbr = sorted((g.vertices[i].name, g.vertices[i].cell) for i in g.adj[g.s])
    c = tfim.centre()[0]
    assert nbr == [("ZZ", (c - 1,)), ("ZZ", (c,))]
    # alternating X / ZZ along the chain
    for i, j in g.edges():
        assert {g.vertices[i].name, g.vertices[j].name} in ({"X", "ZZ"}, {"S", "ZZ"}, {"sx", "ZZ"})


def test_identity_observable_isolated(tfim):
    S = LocalTerm("I", (), constant=1.0)
    with pytest.warns(UserWarning, match="commutes with every term"):
        g = build_graph(tfim, 3, S=S)
    assert g.degree(g.s) == 0


@pytest.mark.parametrize("name", ["tfim", "fhm"])
def test_edges_match_dense_commutators(name, request):
    model = request.getfixturevalue(name)
    g = build_graph(model, 2)
    for i, j in itertools.combinations(range(len(g)), 2):
        a, b = g.vertices[i].term, g.vertices[j].term
        nonzero = _dense_commutator_norm(a, b) > 1e-12
        assert (j in g.adj[i]) == nonzero


def test_norms_positive(fhm):
    g = build_graph(fhm, 3)
    assert np.all(g.norms > 0)


def test_translation_invariance(tfim):
    g = build_graph(tfim, 5)
    c = tfim.centre()[0]
    deg = {v.cell[0]: g.degree(i) for i, v in enumerate(g.vertices) if v.name == "X"}
    interior = [deg[x] for x in deg if abs(x - c) >= 2 and abs(x - c) <= 3]
    assert len(set(interior)) == 1


def test_boundary_terms_tfim_obc():
    m = parse_model(tfim_config(1.0, 1.0, 5, "obc"))
    bt = boundary_terms(m)
    assert len(bt) == 2
    assert sorted(b.anchor for b in bt.terms) == [(-1,), (4,)]
    assert all(m.terms[b.template].name == "ZZ" for b in bt.terms)


def test_boundary_terms_fhm_obc():
    m = parse_model(fhm_config(1.0, 0.5, 4, "obc"))
    bt = boundary_terms(m)
    # one Hermitian hopping term per spin on each face
    assert len(bt) == 4
    faces = {b.anchor for b in bt.terms}
    assert faces == {(-1,), (3,)}
    assert sorted(m.terms[b.template].name for b in bt.terms) == \
        ["hop_down", "hop_down", "hop_up", "hop_up"]


def test_boundary_terms_pbc_adds_wrap_links():
    m = parse_model(tfim_config(1.0, 1.0, 5, "pbc"))
    obc = boundary_terms(m, (5,), "obc")
    pbc = boundary_terms(m, (5,), "pbc")
    wraps = [b for b in pbc.terms if b.wrapped]
    assert len(wraps) == 1 and wraps[0].sign == -1
    assert len(pbc) == len(obc) + 1


def test_boundary_cut_disconnects_support():
    m = parse_model(fhm_config(1.0, 0.5, 4, "obc"))
    L = 4
    cut = {id(b.term) for b in boundary_terms(m).terms}
    inner = {(c,) for c in range(L)}
    # every remaining term lying in the padded window is entirely inside or outside
    for a, t in enumerate(m.terms):
        for shift in range(-3, L + 3):
            tt = t.translate((shift,))
            cells = tt.support
            straddles = bool(cells & inner) and bool(cells - inner)
            if straddles:
                assert any(b.term.support == cells and m.terms[b.template].name == t.name
                           for b in boundary_terms(m).terms)
    assert cut


def test_cg_distance_examples(tfim):
    g = build_graph(tfim, 5)
    c = tfim.centre()[0]
    nb = next(iter(g.adj[g.s]))
    assert cg_distance(g, g.s, nb) == 1
    xc = g.find(name="X", cell=(c,))[0]
    for k in range(1, 5):
        zk = g.find(name="ZZ", cell=(c + k - 1,))[0]
        assert cg_distance(g, xc, zk) == 2 * k - 1


def test_cg_distance_disconnected(tfim):
    S = LocalTerm("I", (), constant=1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g = build_graph(tfim, 2, S=S)
    other = next(i for i in range(len(g)) if i != g.s)
    assert cg_distance(g, g.s, other) is None


def test_triangle_inequality(fhm):
    g = build_graph(fhm, 3)
    rng = np.random.default_rng(1)
    dist = {i: bfs_distances(g, i) for i in range(len(g))}
    for _ in range(300):
        a, b, c = (int(x) for x in rng.integers(0, len(g), 3))
        if b in dist[a] and c in dist[b]:
            assert dist[a].get(c, np.inf) <= dist[a][b] + dist[b][c]


def test_eta_mu_tfim():
    eta, mu = eta_mu(parse_model(tfim_config(1.0, 1.0, 5, "obc")))
    assert (eta, mu) == (2, 1)


def test_eta_mu_fit_exact_over_sizes(fhm):
    eta, mu = eta_mu(fhm, sizes=(5, 6, 7, 8, 9))
    for L in (5, 7, 9):
        c = ((L - 1) // 2,)
        S = place_observable(fhm.observable.parts[0][1], c)
        g, bids = finite_graph(fhm.with_size((L,), "obc"), (L,), "obc", S)
        dist = bfs_distances(g, g.s)
        from fsebound.cgraph import real_space_distance
        d_xb = min(real_space_distance(S, g.vertices[b].term) for b in bids)
        assert min(dist[b] for b in bids) == eta * d_xb - mu


def test_eta_mu_non_affine_detected(tfim):
    with pytest.raises(ModelError, match="not affine"):
        eta_mu(tfim, S=LocalTerm("I", (), constant=1.0), sizes=(5,))


def test_dot_export_deterministic(tfim):
    a = build_graph(tfim, 2).to_dot()
    b = build_graph(tfim, 2).to_dot()
    assert a == b and a.startswith("graph G {")
    assert 'label="X@' in a

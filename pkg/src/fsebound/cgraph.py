"""Commutativity graphs of lattice Hamiltonians.

Vertices are Hamiltonian terms plus an external vertex ``s`` for the
observable; two vertices are joined when the operators do not commute.
Vertices carry a ``kind``:

``"term"``
    evolves under the Hamiltonian whose graph this is;
``"probe"``
    a term that only appears as the end point of paths (for instance a
    boundary coupling ``V_j`` that is absent from the finite Hamiltonian);
``"obs"``
    the observable vertex ``s``.
"""
from __future__ import annotations

import itertools
import warnings
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .model import LatticeModel, LocalTerm, ModelError, terms_commute


@dataclass(frozen=True)
class Vertex:
    name: str
    cell: tuple
    alpha: int
    norm: float
    term: LocalTerm
    kind: str = "term"
    tag: str = ""

    def key(self):
        return (self.cell, self.alpha, self.kind, self.tag)

    @property
    def cells(self):
        return self.term.support if self.term is not None else set()


@dataclass(frozen=True)
class CommutativityGraph:
    vertices: tuple
    adj: tuple
    s: int = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.vertices)

    @property
    def norms(self):
        return np.array([v.norm for v in self.vertices])

    def neighbors(self, i):
        return self.adj[i]

    def edges(self):
        return sorted((i, j) for i in range(len(self)) for j in self.adj[i] if i < j)

    def find(self, name=None, cell=None, kind=None, tag=None):
        out = []
        for i, v in enumerate(self.vertices):
            if name is not None and v.name != name:
                continue
            if cell is not None and v.cell != tuple(cell):
                continue
            if kind is not None and v.kind != kind:
                continue
            if tag is not None and v.tag != tag:
                continue
            out.append(i)
        return out

    def degree(self, i):
        return len(self.adj[i])

    def to_dot(self):
        """Graphviz DOT text; vertex label ``name@cell``, weight ``h_j``."""
        lines = ["graph G {"]
        for i, v in enumerate(self.vertices):
            cell = ",".join(str(c) for c in v.cell)
            shape = {"obs": "doublecircle", "probe": "box"}.get(v.kind, "ellipse")
            lines.append(f'  v{i} [label="{v.name}@{cell}", weight={v.norm:.12g}, '
                         f'shape={shape}];')
        for i, j in self.edges():
            lines.append(f"  v{i} -- v{j};")
        lines.append("}")
        return "\n".join(lines) + "\n"


class _CommuteCache:
    """Memoise term-pair commutation up to a common lattice translation."""

    def __init__(self):
        self._cache = {}

    def __call__(self, a: LocalTerm, b: LocalTerm) -> bool:
        cells = list(a.support | b.support)
        lo = tuple(min(c[p] for c in cells) for p in range(len(cells[0])))
        shift = tuple(-x for x in lo)
        key = (tuple(p.translate(shift) for p in a.strings),
               tuple(p.translate(shift) for p in b.strings))
        hit = self._cache.get(key)
        if hit is None:
            hit = terms_commute(a, b)
            self._cache[key] = hit
        return hit


_COMMUTE = _CommuteCache()


def _assemble(vertices, s_index=None, meta=None):
    """Sort vertices canonically and compute edges by pairwise commutation."""
    order = sorted(range(len(vertices)), key=lambda i: vertices[i].key())
    verts = [vertices[i] for i in order]
    s_new = order.index(s_index) if s_index is not None else None
    by_site = {}
    for i, v in enumerate(verts):
        if v.term is None:
            continue
        for site in v.term.sites:
            by_site.setdefault(site, []).append(i)
    adj = [set() for _ in verts]
    seen = set()
    for members in by_site.values():
        for i, j in itertools.combinations(members, 2):
            if (i, j) in seen:
                continue
            seen.add((i, j))
            a, b = verts[i], verts[j]
            # probes and the observable never need mutual edges among probes
            if a.kind == "probe" and b.kind == "probe":
                continue
            if not _COMMUTE(a.term, b.term):
                adj[i].add(j)
                adj[j].add(i)
    return CommutativityGraph(tuple(verts), tuple(frozenset(a) for a in adj), s_new,
                              dict(meta or {}))


def _obs_vertex(S: LocalTerm, name="S"):
    cells = sorted(S.support)
    cell = cells[0] if cells else ()
    return Vertex(name, cell, -1, S.norm, S, "obs")


def place_observable(S: LocalTerm, centre):
    """Translate an observable stored relative to the centre cell to absolute cells."""
    return S.translate(tuple(centre))


def build_graph(model: LatticeModel, window_radius: int, S: LocalTerm = None,
                centre=None) -> CommutativityGraph:
    """Infinite-lattice graph restricted to terms inside a cubic window.

    Parameters
    ----------
    model : LatticeModel
    window_radius : int
        Cells ``[c - R, c + R]`` per direction around ``centre``.
    S : LocalTerm, optional
        Observable in absolute coordinates; by default the first part of the
        model observable placed at the centre cell.
    """
    if centre is None:
        centre = model.centre()
    if S is None:
        S = place_observable(model.observable.parts[0][1], centre)
    lo = [c - window_radius for c in centre]
    hi = [c + window_radius for c in centre]
    verts = []
    for a, t in enumerate(model.terms):
        anchor = model.template_anchor(a)
        span = [t.span(p) for p in range(model.dimension)]
        ranges = [range(lo[p], hi[p] - span[p] + 2) for p in range(model.dimension)]
        for r in itertools.product(*ranges):
            tt = t.translate(tuple(ri - ai for ri, ai in zip(r, anchor)))
            if tt.norm > 0:
                verts.append(Vertex(t.name, tuple(r), a, tt.norm, tt))
    verts.append(_obs_vertex(S))
    g = _assemble(verts, len(verts) - 1,
                  {"window": (tuple(lo), tuple(hi)), "kind": "infinite"})
    if not g.adj[g.s]:
        warnings.warn("observable commutes with every term; all bounds vanish",
                      stacklevel=2)
    return g


@dataclass(frozen=True)
class BoundaryTerm:
    term: LocalTerm
    template: int
    anchor: tuple
    sign: int          # +1 for couplings to the outside, -1 for PBC wrap links
    wrapped: bool


@dataclass(frozen=True)
class BoundaryTermSet:
    terms: tuple
    L: tuple
    boundary: str

    def __len__(self):
        return len(self.terms)


def boundary_terms(model: LatticeModel, L=None, bc=None) -> BoundaryTermSet:
    """Couplings between the ``L``-cell inner system and the outside.

    For PBC the wrap-around links of the finite ring are included with
    ``sign=-1`` because the finite Hamiltonian contains them while the
    infinite one does not (they are subtracted from the straddling set).
    """
    L = tuple(L or model.L)
    if isinstance(L, int):
        L = (L,) * model.dimension
    bc = bc or model.boundary
    out = []
    for a, t in enumerate(model.terms):
        anchor = model.template_anchor(a)
        span = [t.span(p) for p in range(model.dimension)]
        ranges = [range(-span[p] + 1, L[p]) for p in range(model.dimension)]
        for r in itertools.product(*ranges):
            inside = all(0 <= r[p] and r[p] + span[p] - 1 < L[p]
                         for p in range(model.dimension))
            if inside:
                continue
            tt = t.translate(tuple(ri - ai for ri, ai in zip(r, anchor)))
            if tt.norm > 0:
                out.append(BoundaryTerm(tt, a, tuple(r), +1, False))
    if bc == "pbc":
        for a, r, tt, wrapped in model.finite_terms(L, "pbc"):
            if wrapped and tt.norm > 0:
                out.append(BoundaryTerm(tt, a, r, -1, True))
    return BoundaryTermSet(tuple(out), L, bc)


def finite_graph(model: LatticeModel, L=None, bc=None, S: LocalTerm = None):
    """Graph of the finite Hamiltonian ``H_L`` plus boundary probes and ``s``.

    Returns ``(graph, boundary_vertex_ids)``.  Wrap links (PBC) are ordinary
    evolving vertices that also belong to the boundary set.
    """
    L = tuple(L or model.L)
    if isinstance(L, int):
        L = (L,) * model.dimension
    bc = bc or model.boundary
    centre = tuple((l - 1) // 2 for l in L)
    if S is None:
        S = place_observable(model.observable.parts[0][1], centre)
    verts = []
    for a, r, tt, wrapped in model.finite_terms(L, bc):
        if tt.norm > 0:
            verts.append(Vertex(model.terms[a].name, tuple(r), a, tt.norm, tt, "term",
                                "wrap" if wrapped else ""))
    for bt in boundary_terms(model, L, bc).terms:
        if not bt.wrapped:
            verts.append(Vertex(model.terms[bt.template].name, bt.anchor, bt.template,
                                bt.term.norm, bt.term, "probe"))
    verts.append(_obs_vertex(S))
    g = _assemble(verts, len(verts) - 1, {"L": L, "boundary": bc, "kind": "finite",
                                          "centre": centre})
    bids = [i for i, v in enumerate(g.vertices) if v.kind == "probe" or v.tag == "wrap"]
    return g, bids


def cg_distance(graph: CommutativityGraph, a: int, b: int, allowed=None):
    """BFS edge count from ``a`` to ``b``; ``None`` when unreachable.

    ``allowed`` optionally restricts intermediate vertices.
    """
    if a == b:
        return 0
    dist = {a: 0}
    dq = deque([a])
    while dq:
        u = dq.popleft()
        for w in graph.adj[u]:
            if w in dist:
                continue
            if w == b:
                return dist[u] + 1
            if allowed is not None and w not in allowed:
                continue
            if graph.vertices[w].kind == "probe":
                continue
            dist[w] = dist[u] + 1
            dq.append(w)
    return None


def bfs_distances(graph: CommutativityGraph, src: int):
    """Distances from ``src`` through non-probe vertices (probes are leaves)."""
    dist = {src: 0}
    dq = deque([src])
    while dq:
        u = dq.popleft()
        if u != src and graph.vertices[u].kind == "probe":
            continue
        for w in graph.adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                dq.append(w)
    return dist


def real_space_distance(S: LocalTerm, V: LocalTerm, axis=0):
    """Distance from the observable cells to the farthest cell of ``V`` (per direction)."""
    xs = [c[axis] for c in S.support]
    vs = [c[axis] for c in V.support]
    return min(max(abs(v - x) for v in vs) for x in xs)


def eta_mu(model: LatticeModel, S: LocalTerm = None, sizes=(5, 7, 9, 11)):
    """Fit ``D(s, V_j) = eta * d_Xj - mu`` over OBC systems of several sizes.

    Returns ``(eta, mu)`` as a :class:`fractions.Fraction` and an int.

    Raises
    ------
    ModelError
        "distance relation not affine; supply exponents manually"
    """
    pts = set()
    for L in sizes:
        Ls = (L,) * model.dimension
        centre = tuple((l - 1) // 2 for l in Ls)
        St = place_observable(S if S is not None else model.observable.parts[0][1], centre)
        g, bids = finite_graph(model.with_size(Ls, "obc"), Ls, "obc", St)
        dist = bfs_distances(g, g.s)
        for b in bids:
            if b in dist:
                pts.add((real_space_distance(St, g.vertices[b].term), dist[b]))
    pts = sorted(pts)
    if len({d for d, _ in pts}) < 2:
        raise ModelError("distance relation not affine; supply exponents manually")
    # the relation applies to the nearest boundary vertices; keep the minimal D per d
    best = {}
    for d, D in pts:
        best[d] = min(best.get(d, D), D)
    ds = sorted(best)
    d0, d1 = ds[0], ds[1]
    eta = Fraction(best[d1] - best[d0], d1 - d0)
    mu = eta * d0 - best[d0]
    for d in ds:
        if eta * d - mu != best[d]:
            raise ModelError("distance relation not affine; supply exponents manually")
    if mu.denominator != 1:
        raise ModelError("distance relation not affine; supply exponents manually")
    return eta, int(mu)

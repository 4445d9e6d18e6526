"""Combinatorial (irreducible path / Y-shape) bounds on finite-size errors.

Each bound is a power series in ``t`` with nonnegative coefficients.  The
coefficients are accumulated per length ``n`` (number of graph vertices) as
``W[n] = sum prod h_i`` over the relevant path or Y-shape family, and the
series is evaluated in the log domain.  Truncation at ``n_max`` is covered by
a rigorous tail certificate that is always added to the reported values.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import gammaln, logsumexp

from .cgraph import (CommutativityGraph, build_graph, cg_distance, finite_graph,
                     place_observable)
from .model import LatticeModel, LocalTerm, ModelError

CSV_VERSION = 1


class UnsupportedModel(ModelError):
    """Raised when a bound does not apply to the given model."""


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IrreduciblePath:
    vertices: tuple
    weight: float

    @property
    def n(self):
        return len(self.vertices)


@dataclass(frozen=True)
class IrreducibleYShape:
    s_branch: tuple     # s ... (excluding y)
    y: int
    q_branch: tuple     # after y ... q
    j_branch: tuple     # after y ... j
    weight: float

    @property
    def n_s(self):
        return len(self.s_branch)

    @property
    def n_q(self):
        return len(self.q_branch)

    @property
    def n_j(self):
        return len(self.j_branch)

    @property
    def n(self):
        return self.n_s + self.n_q + self.n_j + 1

    @property
    def vertices(self):
        return self.s_branch + (self.y,) + self.q_branch + self.j_branch


@dataclass
class BoundCurve:
    """Certified bound values on a time grid (tail already included)."""

    t: np.ndarray
    values: np.ndarray
    tail: np.ndarray
    method: str
    n_max: int = 0
    log_values: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.tail = np.asarray(self.tail, dtype=float)
        if self.log_values is None:
            with np.errstate(divide="ignore"):
                self.log_values = np.log(self.values)

    def crossing_time(self, level=1e-2):
        """First grid time with ``value > level`` (``None`` if never)."""
        idx = np.nonzero(self.values > level)[0]
        return float(self.t[idx[0]]) if idx.size else None

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write(f"# fsebound BoundCurve v{CSV_VERSION}: t,bound,tail,method,n_max\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "bound", "tail", "method", "n_max"])
        for t, v, tl in zip(self.t, self.values, self.tail):
            w.writerow([f"{t:.12g}", f"{v:.17g}", f"{tl:.17g}", self.method, self.n_max])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def __add__(self, other):
        if not np.array_equal(self.t, other.t):
            raise ValueError("time grids differ")
        return BoundCurve(self.t, self.values + other.values, self.tail + other.tail,
                          self.method, max(self.n_max, other.n_max),
                          np.logaddexp(self.log_values, other.log_values), dict(self.meta))

    def scaled(self, c):
        c = abs(c)
        with np.errstate(divide="ignore"):
            lv = self.log_values + np.log(c) if c > 0 else np.full_like(self.values, -np.inf)
        return BoundCurve(self.t, self.values * c, self.tail * c, self.method, self.n_max,
                          lv, dict(self.meta))


# ---------------------------------------------------------------------------
# series evaluation
# ---------------------------------------------------------------------------

def _check_t(t):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ValueError("time must be finite and nonnegative")
    return t


def log_series(W, t, base=2.0):
    """``log sum_n W[n] (base t)^(n-1) / (n-1)!`` for each ``t`` (``-inf`` when zero)."""
    t = _check_t(t)
    W = np.asarray(W, dtype=float)
    n = np.nonzero(W > 0)[0]
    out = np.full(t.shape, -np.inf)
    if n.size == 0:
        return out
    lw = np.log(W[n]) - gammaln(n)          # (n-1)! = Gamma(n)
    pos = t > 0
    if np.any(pos):
        lt = np.log(base * t[pos])
        out[pos] = logsumexp(lw[None, :] + (n[None, :] - 1) * lt[:, None], axis=1)
    if n[0] == 1:
        out[~pos] = np.log(W[1])
    return out


def series_value(W, t, base=2.0):
    return np.exp(log_series(W, t, base))


# ---------------------------------------------------------------------------
# irreducible paths
# ---------------------------------------------------------------------------

def _interior_mask(graph, allowed):
    n = len(graph)
    if allowed is None:
        return [graph.vertices[i].kind == "term" for i in range(n)]
    allowed = set(allowed)
    return [i in allowed for i in range(n)]


def _dfs_paths(graph, s, interior, targets, n_max, visit):
    """Depth-first search over irreducible paths from ``s``.

    ``visit(target, path, weight)`` is called for every irreducible path that
    ends on a vertex of ``targets`` with at most ``n_max`` vertices.
    """
    adj = [sorted(a) for a in graph.adj]
    h = graph.norms
    nv = len(graph)
    forbid = np.zeros(nv, dtype=np.int64)
    onpath = np.zeros(nv, dtype=bool)
    is_target = np.zeros(nv, dtype=bool)
    is_target[list(targets)] = True
    path = [s]
    onpath[s] = True

    def rec(u, w):
        n = len(path)
        cand = [v for v in adj[u] if not onpath[v] and forbid[v] == 0]
        if not cand:
            return
        for v in cand:
            if is_target[v]:
                path.append(v)
                visit(v, path, w * h[v])
                path.pop()
        if n + 1 >= n_max:
            return
        nxt = [v for v in cand if interior[v]]
        if not nxt:
            return
        for x in adj[u]:
            forbid[x] += 1
        for v in nxt:
            onpath[v] = True
            path.append(v)
            rec(v, w * h[v])
            path.pop()
            onpath[v] = False
        for x in adj[u]:
            forbid[x] -= 1

    if n_max >= 2:
        rec(s, 1.0)


def enumerate_irreducible_paths(graph: CommutativityGraph, s: int, j: int, n_max: int,
                                allowed=None):
    """All irreducible paths ``s -> j`` with at most ``n_max`` vertices.

    Interior vertices must be evolving terms (and lie in ``allowed`` when
    given).  Output order is lexicographic DFS order by vertex id.
    """
    interior = _interior_mask(graph, allowed)
    out = []

    def visit(v, path, w):
        out.append(IrreduciblePath(tuple(path), float(w)))

    _dfs_paths(graph, s, interior, [j], n_max, visit)
    return out


def path_weight_table(graph, s, targets, n_max, allowed=None):
    """``W[n]`` summed over irreducible paths from ``s`` to any target."""
    interior = _interior_mask(graph, allowed)
    W = np.zeros(n_max + 1)

    def visit(v, path, w):
        W[len(path)] += w

    _dfs_paths(graph, s, interior, targets, n_max, visit)
    return W


def path_series_bound(paths, S_norm, t):
    """``||S|| sum_P (2t)^(n-1)/(n-1)! prod h`` (time-integrated commutator bound)."""
    t = _check_t(t)
    W = np.zeros(max([p.n for p in paths], default=1) + 1)
    for p in paths:
        W[p.n] += p.weight
    out = S_norm * series_value(W, t)
    return out if out.size > 1 else float(out[0])


# ---------------------------------------------------------------------------
# non-backtracking walk counts (tail certificates)
# ---------------------------------------------------------------------------

def _nbw_tables(graph, start, interior, n_steps, start_weight=True):
    """Weighted non-backtracking walk counts from ``start``.

    Returns ``R`` with ``R[n, v]`` = sum over walks ``start = w_1, ..., w_n = v``
    (``n`` vertices) whose interior vertices ``w_2..w_{n-1}`` satisfy
    ``interior`` of ``prod h(w_i)`` over ``i >= 2`` (``start`` excluded) when
    ``start_weight`` is False, else over ``i <= n-1`` (end excluded).
    Every simple path is a non-backtracking walk, so ``R`` dominates the
    corresponding path counts.
    """
    h = graph.norms
    nv = len(graph)
    edges = [(u, v) for u in range(nv) for v in graph.adj[u]]
    eid = {e: k for k, e in enumerate(edges)}
    rows, cols, vals = [], [], []
    for k, (u, v) in enumerate(edges):
        if not interior[v]:
            continue
        for w in graph.adj[v]:
            if w == u:
                continue
            rows.append(eid[(v, w)])
            cols.append(k)
            vals.append(h[v] if start_weight else h[w])
    ne = len(edges)
    T = sparse.csr_matrix((vals, (rows, cols)), shape=(ne, ne))
    heads = np.array([v for _, v in edges], dtype=int)
    x = np.zeros(ne)
    for v in graph.adj[start]:
        x[eid[(start, v)]] = h[start] if start_weight else h[v]
    R = np.zeros((n_steps + 1, nv))
    for n in range(2, n_steps + 1):
        if not x.any():
            break
        R[n] = np.bincount(heads, weights=x, minlength=nv)
        x = T @ x
    return R


def path_tail_table(graph, s, targets, n_max, allowed=None):
    """Coefficients ``T[n]`` (n > n_max) dominating the truncated path weights."""
    interior = _interior_mask(graph, allowed)
    n_cap = 2 + sum(interior)
    T = np.zeros(max(n_cap, n_max) + 1)
    if n_cap <= n_max:
        return T
    R = _nbw_tables(graph, s, interior, n_cap, start_weight=False)
    tg = list(targets)
    for n in range(n_max + 1, n_cap + 1):
        T[n] = R[n, tg].sum()
    return T


def tail_bound(graph, s, n_max, t, targets=None, S_norm=None, allowed=None):
    """Rigorous remainder of the path series beyond ``n_max`` vertices.

    Irreducible paths are simple, hence non-backtracking walks, and have at
    most ``N`` vertices (``N`` = number of usable vertices), so the remainder is
    dominated by ``||S|| sum_{n_max < n <= N} B_n (2t)^(n-1)/(n-1)!`` with
    ``B_n`` the exact weighted non-backtracking walk count of length ``n``.
    """
    if targets is None:
        targets = [i for i, v in enumerate(graph.vertices) if v.kind == "probe"]
    if S_norm is None:
        S_norm = graph.vertices[s].norm
    T = path_tail_table(graph, s, targets, n_max, allowed)
    out = S_norm * series_value(T, t)
    return out if out.size > 1 else float(out[0])


# ---------------------------------------------------------------------------
# irreducible Y-shapes
# ---------------------------------------------------------------------------

def _branch_dfs(graph, y, k, interior, onpath, forbid, max_len, visit):
    """Irreducible paths from ``y`` to ``k`` avoiding ``onpath`` and ``forbid``."""
    adj = graph.adj
    h = graph.norms
    branch = []
    onpath = onpath.copy()
    forbid = forbid.copy()

    def rec(u, w):
        if len(branch) >= max_len:
            return
        cand = [v for v in sorted(adj[u]) if not onpath[v] and forbid[v] == 0]
        if not cand:
            return
        if k in cand:
            branch.append(k)
            visit(tuple(branch), w * h[k])
            branch.pop()
        nxt = [v for v in cand if interior[v] and v != k]
        if not nxt or len(branch) + 1 >= max_len:
            return
        for x in adj[u]:
            forbid[x] += 1
        for v in nxt:
            onpath[v] = True
            branch.append(v)
            rec(v, w * h[v])
            branch.pop()
            onpath[v] = False
        for x in adj[u]:
            forbid[x] -= 1

    rec(y, 1.0)


def _yshape_scan(graph, s, j, q, n_max, h1, h2, visit):
    """Drive the Y-shape enumeration; ``visit(P, iy, branch, wP, wB)``."""
    if j == q:
        raise ValueError("Y-shape endpoints j and q must be distinct vertices")
    nv = len(graph)
    in1 = np.zeros(nv, dtype=bool)
    in2 = np.zeros(nv, dtype=bool)
    in1[list(h1)] = True
    in2[list(h2)] = True
    adj = graph.adj

    def on_path(_, P, wP):
        P = tuple(P)
        onpath = np.zeros(nv, dtype=bool)
        onpath[list(P)] = True
        forbid = np.zeros(nv, dtype=np.int64)
        for iy in range(len(P)):
            if iy > 0:
                for x in adj[P[iy - 1]]:
                    forbid[x] += 1
            budget = n_max - len(P)
            if budget < 1:
                break

            def got(branch, wB, iy=iy):
                visit(P, iy, branch, wP, wB)

            _branch_dfs(graph, P[iy], j, in2, onpath, forbid, budget, got)

    _dfs_paths(graph, s, in1, [q], n_max - 1, on_path)


def enumerate_irreducible_yshapes(graph: CommutativityGraph, s: int, j: int, q: int,
                                  n_max: int, h1=None, h2=None):
    """All irreducible Y-shapes with root ``s`` and end points ``j``, ``q``.

    The ``s``-``q`` trunk has interior vertices in ``h1`` and the ``j`` branch
    has interior vertices in ``h2`` (both default to every evolving term).
    The branch point ``y`` may coincide with ``s`` or ``q``.
    """
    terms = [i for i, v in enumerate(graph.vertices) if v.kind == "term"]
    h1 = terms if h1 is None else h1
    h2 = terms if h2 is None else h2
    out = []

    def visit(P, iy, branch, wP, wB):
        out.append(IrreducibleYShape(P[:iy], P[iy], P[iy + 1:], branch, float(wP * wB)))

    _yshape_scan(graph, s, j, q, n_max, h1, h2, visit)
    return out


def yshape_weight_table(graph, s, j, q, n_max, h1, h2):
    """``A[n] = sum binom(n_j + n_q - 1, n_q) prod h`` over Y-shapes of size ``n``."""
    A = np.zeros(n_max + 1)

    def visit(P, iy, branch, wP, wB):
        nq = len(P) - 1 - iy
        nj = len(branch)
        A[len(P) + nj] += math.comb(nj + nq - 1, nq) * wP * wB

    _yshape_scan(graph, s, j, q, n_max, h1, h2, visit)
    return A


def yshape_series_bound(yshapes, S_norm, t):
    """``||S|| sum_Y binom(n_j+n_q-1, n_q) (2t)^(n-1)/(n-1)! prod h``."""
    t = _check_t(t)
    W = np.zeros(max([y.n for y in yshapes], default=1) + 1)
    for y in yshapes:
        W[y.n] += math.comb(y.n_j + y.n_q - 1, y.n_q) * y.weight
    out = S_norm * series_value(W, t)
    return out if out.size > 1 else float(out[0])


def yshape_tail_table(graph, s, j, qs, n_max, h1, h2):
    """Coefficients dominating the Y-shape series beyond ``n_max`` vertices.

    A Y-shape of size ``n`` is a trunk ``s -> q`` (``a`` vertices, a walk in
    the ``h1`` graph) with a branch point among its ``a`` vertices and a
    branch of ``b = n - a`` further vertices ending at ``j`` (a walk in the
    ``h2`` graph).  The binomial factor is at most ``2^(n-2)``.  Hence
    ``sum_{Y: n(Y)=n} binom * w <= 2^(n-2) sum_q sum_a a W_a(q) max_y R_b(y)``
    with ``W``/``R`` weighted non-backtracking walk counts.  Y-shapes are trees
    on distinct vertices, so ``n`` never exceeds the number of usable vertices.
    """
    nv = len(graph)
    in1 = np.zeros(nv, dtype=bool)
    in2 = np.zeros(nv, dtype=bool)
    in1[list(h1)] = True
    in2[list(h2)] = True
    usable = in2.copy()
    usable[[s, j]] = True
    usable[list(qs)] = True
    n_cap = int(usable.sum())
    T = np.zeros(max(n_cap, n_max) + 1)
    if n_cap <= n_max:
        return T
    W = _nbw_tables(graph, s, in1, n_cap, start_weight=False)
    R = _nbw_tables(graph, j, in2, n_cap + 1, start_weight=True)
    ys = np.nonzero(in1 | usable)[0]
    maxR = R[:, ys].max(axis=1)
    for n in range(n_max + 1, n_cap + 1):
        acc = 0.0
        for a in range(2, n):
            b = n - a
            wa = W[a, list(qs)].sum()
            # a branch of b vertices is a walk of b + 1 vertices ending at y
            if wa > 0 and maxR[b + 1] > 0:
                acc += a * wa * maxR[b + 1]
        T[n] = 2.0 ** (n - 2) * acc
    return T


# ---------------------------------------------------------------------------
# finite-size-error bounds
# ---------------------------------------------------------------------------

def _parts(model, centre):
    return [(w, place_observable(S, centre)) for w, S in model.observable.parts]


def _as_L(model, L):
    if L is None:
        return tuple(model.L)
    if isinstance(L, int):
        return (L,) * model.dimension
    return tuple(L)


def simple_fse_bound(model: LatticeModel, L=None, t_grid=None, n_max=None,
                     tail_fraction=0.1, max_n=None, bc=None) -> BoundCurve:
    """Sum over boundary couplings of the irreducible-path series.

    For PBC the finite ring (with its wrap links) is the evolving system and
    the straddling couplings are probe end points; the wrap links also count
    as boundary terms.  ``n_max`` defaults to ``2 * D_min + 8`` and is raised
    until the tail certificate at ``t_max`` is below ``tail_fraction`` of the
    truncated sum (or the enumeration is exhaustive).
    """
    L = _as_L(model, L)
    bc = bc or model.boundary
    t = _check_t(t_grid if t_grid is not None else np.linspace(0, model.time["t_max"],
                                                              model.time["n_points"]))
    centre = tuple((l - 1) // 2 for l in L)
    total_log = np.full(t.shape, -np.inf)
    total_tail = np.zeros(t.shape)
    used = []
    dmin = None
    for w, S in _parts(model, centre):
        if w == 0:
            continue
        g, bids = finite_graph(model, L, bc, S)
        if not g.adj[g.s] or not bids:
            continue
        d = [cg_distance(g, g.s, b) for b in bids]
        d = [x for x in d if x is not None]
        if not d:
            continue
        dmin = min(d) if dmin is None else min(dmin, min(d))
        n_cap = 2 + sum(1 for v in g.vertices if v.kind == "term")
        nm = n_max if n_max is not None else 2 * (min(d)) + 8
        nm = min(nm, n_cap)
        while True:
            W = path_weight_table(g, g.s, bids, nm)
            T = path_tail_table(g, g.s, bids, nm)
            main = log_series(W, t)
            tail = series_value(T, t)
            if n_max is not None or nm >= n_cap or (max_n is not None and nm >= max_n):
                break
            if tail[-1] <= tail_fraction * np.exp(main[-1]):
                break
            nm = min(nm + 4, n_cap)
        used.append(nm)
        scale = abs(w) * S.norm
        total_log = np.logaddexp(total_log, main + math.log(scale))
        total_tail += scale * tail
    values = np.exp(total_log) + total_tail
    with np.errstate(divide="ignore"):
        lv = np.logaddexp(total_log, np.log(total_tail))
    return BoundCurve(t, values, total_tail, "series-simple", max(used, default=0), lv,
                      {"L": L, "boundary": bc, "D_min": dmin, "n_max_per_part": used})


def _span_1d(term):
    xs = [c[0] for c in term.support]
    return min(xs), max(xs)


def euv_setups(model: LatticeModel, L: int, S: LocalTerm, graph=None):
    """Enumerate the earliest-unembeddable-vertex families for a 1D model.

    Yields ``(graph, k, H2, H1, Q)`` with ``k`` the EUV candidate, ``H2``/``H1``
    the vertex sets of the restricted Hamiltonians and ``Q = H2 - H1``.
    """
    if model.dimension != 1:
        raise UnsupportedModel("improved PBC bound is implemented for 1D lattices")
    if any(t.span(0) > 2 for t in model.terms):
        raise UnsupportedModel(
            "improved PBC bound supports terms acting on at most two neighbouring cells")
    xl, xr = _span_1d(S)
    if xr - xl + 1 > L:
        raise UnsupportedModel("observable wider than the system")
    c = (xl + xr) // 2
    if graph is None:
        graph = build_graph(model, L + 2 + (xr - xl), S, centre=(c,))
    verts = graph.vertices
    spans = [(_span_1d(v.term) if v.kind == "term" else None) for v in verts]

    def inside(a, b):
        return [i for i, sp in enumerate(spans) if sp is not None and a <= sp[0] and sp[1] <= b]

    for k, sp in enumerate(spans):
        if sp is None or sp[1] - sp[0] + 1 != 2:
            continue
        kl, kr = sp
        if kl < xl and xr <= kr + L - 1:
            a2, b2 = kl + 1, kl + L
            H2, H1 = inside(a2, b2), inside(a2, b2 - 1)
        elif kr > xr and xl >= kl - (L - 1):
            a2, b2 = kr - L, kr - 1
            H2, H1 = inside(a2, b2), inside(a2 + 1, b2)
        else:
            continue
        Q = sorted(set(H2) - set(H1))
        yield graph, k, H2, H1, Q


def minimal_yshape_order(model, L, S, limit=None):
    """Smallest ``n(Y) - 1`` over all L-cell-unembeddable irreducible Y-shapes."""
    best = None
    for g, k, H2, H1, Q in euv_setups(model, L, S):
        cap = limit or (len(H2) + 3)
        for q in Q:
            for n in range(3, cap + 1):
                if best is not None and n - 1 >= best:
                    break
                A = yshape_weight_table(g, g.s, k, q, n, H1, H2)
                if A.any():
                    best = n - 1
                    break
    return best


def improved_pbc_bound(model: LatticeModel, L=None, t_grid=None, n_max=None) -> BoundCurve:
    """Improved PBC bound: ``2 sum_k sum_q`` Y-shape series over EUV families."""
    L = _as_L(model, L)[0]
    t = _check_t(t_grid if t_grid is not None else np.linspace(0, model.time["t_max"],
                                                              model.time["n_points"]))
    centre = ((L - 1) // 2,)
    total_log = np.full(t.shape, -np.inf)
    total_tail = np.zeros(t.shape)
    orders = []
    nm_used = 0
    for w, S in _parts(model, centre):
        if w == 0:
            continue
        order = minimal_yshape_order(model, L, S)
        if order is None:
            continue
        orders.append(order)
        nm = n_max if n_max is not None else 2 * order + 8
        nm_used = max(nm_used, nm)
        for g, k, H2, H1, Q in euv_setups(model, L, S):
            A = np.zeros(nm + 1)
            for q in Q:
                A += yshape_weight_table(g, g.s, k, q, nm, H1, H2)
            T = yshape_tail_table(g, g.s, k, Q, nm, H1, H2)
            scale = 2.0 * abs(w) * S.norm
            if A.any():
                total_log = np.logaddexp(total_log, log_series(A, t) + math.log(scale))
            if T.any():
                total_tail += scale * series_value(T, t)
    values = np.exp(total_log) + total_tail
    with np.errstate(divide="ignore"):
        lv = np.logaddexp(total_log, np.log(total_tail))
    return BoundCurve(t, values, total_tail, "series-improved", nm_used, lv,
                      {"L": (L,), "boundary": "pbc",
                       "order": min(orders) if orders else None})


def tfim_closed_form(L, J, h, t, variant="improved"):
    """Closed-form TFIM bounds for ``S = sigma^x`` on a periodic chain.

    ``simple``:   4 sqrt(J/h) (2 sqrt(Jh) t)^L / L! + 2 sqrt(J/h) (2 sqrt(Jh) t)^(L+2) / (L+2)!
    ``improved``: 4 sqrt(J/h) (2 sqrt(Jh) t)^(2L-1) / (2L-1)! + (J/h) (4 sqrt(Jh) t)^(2L-2) / (2L-2)!
    """
    t = _check_t(t)
    if J <= 0 or h <= 0:
        raise ValueError("J and h must be positive")
    g = math.sqrt(J * h)
    with np.errstate(divide="ignore"):
        lt = np.log(t)
    if variant == "simple":
        if L % 2 == 0:
            raise ValueError("the simple TFIM closed form assumes odd L")
        a = math.log(4 * math.sqrt(J / h)) + L * (math.log(2 * g) + lt) - gammaln(L + 1)
        b = (math.log(2 * math.sqrt(J / h)) + (L + 2) * (math.log(2 * g) + lt)
             - gammaln(L + 3))
    elif variant == "improved":
        a = (math.log(4 * math.sqrt(J / h)) + (2 * L - 1) * (math.log(2 * g) + lt)
             - gammaln(2 * L))
        b = math.log(J / h) + (2 * L - 2) * (math.log(4 * g) + lt) - gammaln(2 * L - 1)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    out = np.exp(np.logaddexp(a, b))
    return out if out.size > 1 else float(out[0])

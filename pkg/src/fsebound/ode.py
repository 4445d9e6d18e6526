"""Green's-function (linear ODE) bounds on commutator norms.

For a restricted Hamiltonian ``H_a`` (terms with ``h^a_i = h_i`` inside the
restriction, ``0`` outside) the norms ``C_i(t) = ||[h_i, B(t)]||`` obey
``C_i(t) <= sum_l G^a_il(t) sqrt(h_i / h_l) C_l(0)`` with
``G^a(t) = exp(M^a t)`` and ``M^a_ik = 2 sqrt(h^a_i h^a_k) [ik in G]``.

Vertices outside the restriction whose commutator we need (boundary
couplings, the earliest unembeddable vertex, ...) are added as *probe rows*:
``M_pk = 2 sqrt(h_p h^a_k)`` with a zero probe column.  The same Gronwall
argument covers them because only evolving terms feed their derivative.

Time integrals of ``exp(M t)`` use the block (Van Loan) exponential.  The
double time integral of the improved periodic bound is carried as extra
state variables of the same ODE system, so its accuracy is set by the
solver tolerance alone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .cgraph import CommutativityGraph, finite_graph, place_observable
from .model import LatticeModel
from .series import BoundCurve, UnsupportedModel, _as_L, _check_t, euv_setups

EXPM_TOL = 1e-12
ODE_RTOL = 1e-10


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class MMatrix:
    M: np.ndarray
    active: np.ndarray
    probes: tuple
    h: np.ndarray
    restriction: str = "full"

    @property
    def size(self):
        return self.M.shape[0]


@dataclass
class GreenTable:
    t: np.ndarray
    G: np.ndarray            # (nt, N, N) or (nt, len(rows), N)
    rows: tuple = None
    tol: float = EXPM_TOL
    restriction: str = "full"

    @property
    def safety(self):
        return 1.0 + 10.0 * self.tol

    def row(self, i):
        if self.rows is None:
            return self.G[:, i, :]
        return self.G[:, self.rows.index(i), :]


def build_M(graph: CommutativityGraph, restriction=None, probes=(), tag=None) -> MMatrix:
    """Coupling matrix ``M^a`` on all graph vertices.

    Parameters
    ----------
    restriction : None, ``(lo, hi)`` or iterable of vertex ids
        ``None`` keeps every evolving term; a cell interval keeps terms whose
        support lies inside it (1D, first lattice direction).
    probes : iterable of vertex ids
        Extra rows (not symmetric) for non-evolving vertices.
    """
    n = len(graph)
    h = graph.norms.astype(float).copy()
    is_term = np.array([v.kind == "term" for v in graph.vertices])
    if restriction is None:
        active = is_term.copy()
        tag = tag or "full"
    elif isinstance(restriction, tuple) and len(restriction) == 2 and \
            all(isinstance(x, (int, np.integer)) for x in restriction):
        lo, hi = restriction
        active = np.array([is_term[i] and all(lo <= c[0] <= hi for c in v.cells)
                           for i, v in enumerate(graph.vertices)])
        tag = tag or f"cells[{lo},{hi}]"
    else:
        active = np.zeros(n, dtype=bool)
        active[list(restriction)] = True
        active &= is_term
        tag = tag or "custom"
    ha = np.where(active, h, 0.0)
    M = np.zeros((n, n))
    for i in range(n):
        for k in graph.adj[i]:
            M[i, k] = 2.0 * math.sqrt(ha[i] * ha[k])
    probes = tuple(int(p) for p in probes if not active[p])
    for p in probes:
        for k in graph.adj[p]:
            M[p, k] = 2.0 * math.sqrt(h[p] * ha[k])
    return MMatrix(M, active, probes, h, tag)


def solve_green(M, t_grid, rows=None) -> GreenTable:
    """``G(t) = exp(M t)`` on a time grid by scaling-and-squaring."""
    Mm = M.M if isinstance(M, MMatrix) else np.asarray(M, dtype=float)
    t = _check_t(t_grid)
    if np.any(np.diff(t) < 0):
        raise ValueError("time grid must be sorted")
    idx = None if rows is None else list(rows)
    out = []
    for tt in t:
        E = expm(Mm * tt)
        if not np.all(np.isfinite(E)):
            raise SolverError(f"matrix exponential overflow at t={tt}")
        out.append(E if idx is None else E[idx])
    tag = M.restriction if isinstance(M, MMatrix) else "full"
    return GreenTable(t, np.array(out), None if idx is None else tuple(idx), EXPM_TOL, tag)


def integrated_green(Mm, t_grid, rows=None):
    """``int_0^t exp(M u) du`` on a grid via the block exponential."""
    n = Mm.shape[0]
    A = np.zeros((2 * n, 2 * n))
    A[:n, :n] = Mm
    A[:n, n:] = np.eye(n)
    out = []
    for tt in _check_t(t_grid):
        E = expm(A * tt)[:n, n:]
        out.append(E if rows is None else E[list(rows)])
    return np.array(out)


def _source_vector(graph, S_norm):
    """``c_k = 2 ||S|| sqrt(h_k)`` for ``k ~ s``; zero elsewhere."""
    h = graph.norms
    c = np.zeros(len(graph))
    for k in graph.adj[graph.s]:
        c[k] = 2.0 * S_norm * math.sqrt(h[k])
    return c


def first_commutator_bound(green: GreenTable, graph: CommutativityGraph, S_norm, i,
                           t_index=None):
    """``A_i(t) = sum_{k~s} G_ik(t) sqrt(h_k h_i) 2 ||S||`` (with safety factor)."""
    c = _source_vector(graph, S_norm)
    row = green.row(i)
    vals = math.sqrt(graph.norms[i]) * (row @ c) * green.safety
    return vals if t_index is None else float(vals[t_index])


def ode_simple_bound(model: LatticeModel, L=None, t_grid=None, bc=None) -> BoundCurve:
    """Boundary sum of time-integrated first-commutator bounds."""
    L = _as_L(model, L)
    bc = bc or model.boundary
    t = _check_t(t_grid if t_grid is not None else np.linspace(0, model.time["t_max"],
                                                              model.time["n_points"]))
    centre = tuple((l - 1) // 2 for l in L)
    total = np.zeros(t.shape)
    for w, Srel in model.observable.parts:
        S = place_observable(Srel, centre)
        g, bids = finite_graph(model, L, bc, S)
        if not bids or not g.adj[g.s]:
            continue
        probes = [i for i, v in enumerate(g.vertices) if v.kind == "probe"]
        M = build_M(g, None, probes)
        c = _source_vector(g, S.norm)
        IG = integrated_green(M.M, t, bids)
        hb = np.sqrt(g.norms[bids])
        vals = np.einsum("tbn,n,b->t", IG, c, hb)
        total += abs(w) * vals
    total *= 1.0 + 10.0 * EXPM_TOL
    return BoundCurve(t, np.maximum.accumulate(total), np.zeros(t.shape), "ode-simple", 0,
                      meta={"L": L, "boundary": bc, "tol": EXPM_TOL})


class DoubleCommutatorSolver:
    """Bounds on ``||h_k exp(iH_2 u) h_q exp(iH_1 t3) (S)||`` for one ``(k, q)`` pair.

    ``H1``/``H2`` are vertex-id sets of the restricted Hamiltonians; ``k``
    lies outside ``H2`` and ``q`` in ``H2 - H1``.
    """

    def __init__(self, graph: CommutativityGraph, k, q, H1, H2, S_norm=None):
        self.g = graph
        self.k, self.q = k, q
        self.H1 = sorted(H1)
        self.H2 = sorted(H2)
        self.S = graph.vertices[graph.s].norm if S_norm is None else S_norm
        lset = sorted(set(self.H2) | {k})
        self.lset = lset
        # local index space: H2 + k
        self.loc = lset
        pos = {v: i for i, v in enumerate(lset)}
        self.pos = pos
        sub = np.array(lset)
        h = graph.norms[sub]
        self.h = h
        n = len(lset)
        A = np.zeros((n, n), dtype=bool)
        for a, v in enumerate(lset):
            for w in graph.adj[v]:
                if w in pos:
                    A[a, pos[w]] = True
        self.A = A
        in1 = np.array([v in set(self.H1) for v in lset])
        in2 = np.array([v in set(self.H2) for v in lset])
        self.in1 = in1
        sq = np.sqrt(h)
        # probe-augmented coupling matrices on the local index space
        h1 = np.where(in1, h, 0.0)
        M1 = 2.0 * np.sqrt(np.outer(np.where(in1, h, 0.0) + np.where(~in1, h, 0.0), h1)) * A
        self.M1 = M1
        h2 = np.where(in2, h, 0.0)
        M2 = 2.0 * np.sqrt(np.outer(np.where(in2, h, 0.0) + np.where(~in2, h, 0.0), h2)) * A
        self.M2 = M2
        # N[n, m] = 2 sqrt(h_n) h_m [n~m] for m in H1
        self.N = 2.0 * np.outer(sq, h) * A * in1[None, :]
        # K1[m, n] = 2 h_m [n~m], m, n in H1
        self.K1 = 2.0 * h[:, None] * A * np.outer(in1, in1)
        # observable neighbours
        snb = np.zeros(n, dtype=bool)
        for w in graph.adj[graph.s]:
            if w in pos:
                snb[pos[w]] = True
        self.snb = snb
        self.c = np.where(snb, 2.0 * self.S * sq, 0.0)
        iq, ik = pos[q], pos[k]
        self.iq, self.ik = iq, ik
        q_s = bool(snb[iq])
        adj_q = A[iq]
        # ||[h_l,[h_q,h_m]](0)|| <= 4 h_l h_q h_m when q~m and (l~q or l~m)
        C0 = np.zeros((n, n))
        for m in np.nonzero(in1 & adj_q)[0]:
            lm = A[:, m] | adj_q
            C0[lm, m] = 4.0 * h[lm] * h[iq] * h[m]
        self.C0 = C0
        # ||[h_l,[h_q,S]]|| <= 4 h_l h_q ||S|| when q~s and (l~q or l~s)
        if q_s:
            self.S0 = np.where(adj_q | snb, 4.0 * h * h[iq] * self.S, 0.0)
        else:
            self.S0 = np.zeros(n)

    # -- first stage: S^{lq}(t3) bounds for every l ------------------------------
    def _sb_from(self, G, I):
        sq = np.sqrt(self.h)
        Abar = sq * (G @ self.c)
        prod = (Abar * Abar[self.iq] - self._A0 * self._A0[self.iq]) / self.S
        integ = 2.0 * self.S * (I[:, self.snb & self.in1].sum(axis=1))
        return np.maximum(self.S0 + integ + prod, 0.0)

    def _solve(self, t_eval, rtol, convolve):
        """Integrate the joint system; optionally append the outer convolution.

        With ``convolve`` the state also carries ``w`` with
        ``w' = M2 w + u(t)``, ``u_l = 2 sqrt(h_k/h_l) SB_l(t)``, so that
        ``w_k(t) = int_0^t sum_l 2 G2_kl(t-t3) sqrt(h_k/h_l) SB_l(t3) dt3``,
        and ``W' = w_k``.
        """
        t_eval = _check_t(t_eval)
        n = len(self.lset)
        nn = n * n
        sq = np.sqrt(self.h)
        hsafe = np.where(self.in1, self.h, 1.0)
        iq, ik = self.iq, self.ik
        N, K1, M1, M2 = self.N, self.K1, self.M1, self.M2
        in1 = self.in1
        fac = 2.0 * sq[ik] / sq
        G0 = np.eye(n)
        self._A0 = sq * (G0 @ self.c)

        def hbar(G):
            return sq[:, None] * (G @ N)

        def rhs(_, y):
            G = y[:nn].reshape(n, n)
            z = y[nn: 2 * nn].reshape(n, n)
            hb = hbar(G)
            P = hb * hb[iq][None, :]
            yv = (z + P / hsafe[None, :]) * in1[None, :]
            parts = [(G @ M1).ravel(), (yv @ K1.T).ravel(), yv.ravel()]
            if convolve:
                I = y[2 * nn: 3 * nn].reshape(n, n)
                w = y[3 * nn: 3 * nn + n]
                parts.append(M2 @ w + fac * self._sb_from(G, I))
                parts.append(w[ik:ik + 1])
            return np.concatenate(parts)

        hb0 = hbar(G0)
        P0 = hb0 * hb0[iq][None, :]
        z0 = (self.C0 - P0 / hsafe[None, :]) * in1[None, :]
        y0 = np.concatenate([G0.ravel(), z0.ravel(), np.zeros(nn)]
                            + ([np.zeros(n + 1)] if convolve else []))
        if t_eval[-1] == 0:
            return y0[:, None].repeat(len(t_eval), axis=1)
        scale = max(1.0, float(np.abs(self.C0).max(initial=0)))
        sol = solve_ivp(rhs, (0.0, float(t_eval[-1])), y0, method="DOP853",
                        t_eval=t_eval, rtol=rtol, atol=1e-14 * scale)
        if not sol.success:
            raise SolverError(f"ODE solver failed at t={sol.t[-1]}: {sol.message}")
        return sol.y

    def sb(self, t3_grid, rtol=ODE_RTOL):
        """Upper bounds ``SB[t3, l]`` on ``||[h_l, [h_q, exp(iH_1 t3) S]]||``."""
        Y = self._solve(t3_grid, rtol, False)
        n = len(self.lset)
        nn = n * n
        out = np.array([self._sb_from(Y[:nn, a].reshape(n, n),
                                      Y[2 * nn: 3 * nn, a].reshape(n, n))
                        for a in range(Y.shape[1])])
        return out * (1.0 + 10.0 * rtol)

    def integrated(self, t_grid, rtol=ODE_RTOL):
        """``int_0^t dt4 int_0^t4 dt3`` of the double-commutator bound on ``t_grid``."""
        Y = self._solve(t_grid, rtol, True)
        return np.maximum(Y[-1], 0.0) * (1.0 + 10.0 * rtol)

    def kernel(self, u_grid, integrated=False):
        """``2 G2_kl(u) sqrt(h_k / h_l)`` (or its integral over ``[0, u]``) per ``l``."""
        u = _check_t(u_grid)
        fac = 2.0 * math.sqrt(self.h[self.ik]) / np.sqrt(self.h)
        if integrated:
            rows = integrated_green(self.M2, u, [self.ik])[:, 0, :]
        else:
            rows = solve_green(self.M2, u, [self.ik]).G[:, 0, :]
        return rows * fac[None, :] * (1.0 + 10.0 * EXPM_TOL)

    def value(self, t, t3):
        """Bound on ``||h_k exp(iH_2 (t - t3)) h_q exp(iH_1 t3) S||``."""
        if not 0 <= t3 <= t:
            raise ValueError("need 0 <= t3 <= t")
        sb = self.sb([0.0, t3] if t3 > 0 else [0.0])[-1]
        ker = self.kernel([t - t3])[0]
        return float(ker @ sb)


def double_commutator_bound(graph, k, q, H1, H2, t, t3, S_norm=None):
    """Convenience wrapper around :class:`DoubleCommutatorSolver.value`."""
    return DoubleCommutatorSolver(graph, k, q, H1, H2, S_norm).value(t, t3)


def ode_improved_bound(model: LatticeModel, L=None, t_grid=None,
                       rtol=ODE_RTOL) -> BoundCurve:
    """Improved periodic bound from the double-commutator chain."""
    L = _as_L(model, L)[0]
    t = _check_t(t_grid if t_grid is not None else np.linspace(0, model.time["t_max"],
                                                              model.time["n_points"]))
    centre = ((L - 1) // 2,)
    total = np.zeros(t.shape)
    order = np.argsort(t, kind="stable")
    ts = t[order]
    for w, Srel in model.observable.parts:
        S = place_observable(Srel, centre)
        for g, k, H2, H1, Q in euv_setups(model, L, S):
            for q in Q:
                solver = DoubleCommutatorSolver(g, k, q, H1, H2, S.norm)
                total[order] += 2.0 * abs(w) * solver.integrated(ts, rtol)
    vals = total
    return BoundCurve(t, vals, np.zeros(t.shape), "ode-improved", 0,
                      meta={"L": (L,), "boundary": "pbc", "rtol": rtol})


def ode_fse_bound(model: LatticeModel, L=None, t_grid=None, variant="simple") -> BoundCurve:
    if variant == "simple":
        return ode_simple_bound(model, L, t_grid)
    if variant in ("improved", "improved-pbc"):
        return ode_improved_bound(model, L, t_grid)
    raise UnsupportedModel(f"unknown ODE variant {variant!r}")

"""Closed-form periodic bound from the Bloch (Fourier) form of the coupling matrix.

For a translation-invariant commutativity graph the coupling matrix ``M``
block-diagonalises in momentum space.  Continuing ``k -> i kappa`` gives a
nonnegative matrix ``M_{i kappa}`` whose Perron eigenvalue ``omega(kappa)``
controls exponential growth; ``v = min_kappa omega(kappa) / kappa`` is the
Lieb-Robinson speed.  The finite-size error is then bounded by
``C_p (2 v_p t / L_p)^{ell_p}`` per periodic direction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import matrix_balance
from scipy.optimize import minimize_scalar
from scipy.sparse.csgraph import connected_components

from .cgraph import build_graph, place_observable
from .model import LatticeModel, LocalTerm, ModelError
from .series import BoundCurve, UnsupportedModel, _check_t, minimal_yshape_order

KAPPA_BRACKET = (1e-3, 50.0)
PERRON_RTOL = 1e-12


class AnalyticError(ModelError):
    pass


@dataclass(frozen=True)
class UnitCell:
    """In-cell vertices ``alpha`` with norms and couplings ``(alpha, beta, r)``.

    A coupling means vertex ``(0, alpha)`` is adjacent to ``(r, beta)``.
    """
    h: np.ndarray
    couplings: tuple
    dimension: int
    names: tuple = ()


@dataclass(frozen=True)
class BlochMatrix:
    M: np.ndarray
    kappa: tuple


@dataclass(frozen=True)
class AnalyticConstants:
    omega: float
    omega0: float
    U_norm: float
    Uinv_norm: float
    c_H: float
    c_S: float
    c_kappa: float
    s_plus: float
    s_minus: float
    C_kappa: float
    C_p: float
    v: float
    kappa0: float
    direction: int = 0
    eta: object = None
    mu: object = None

    def ell(self, L):
        if self.eta is None:
            raise AnalyticError("exponent relation unknown; supply exponents manually")
        return int(self.eta * L - self.mu)

    def as_dict(self):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if self.eta is not None:
            out["eta"] = str(self.eta)
        return out


def unit_cell(model: LatticeModel) -> UnitCell:
    """Extract in-cell vertices and their couplings from the infinite-lattice graph."""
    span = max(t.span(p) for t in model.terms for p in range(model.dimension))
    R = 2 * span + 1
    centre = (0,) * model.dimension
    g = build_graph(model, R, place_observable(model.observable.parts[0][1], centre), centre)
    h = np.zeros(len(model.terms))
    couplings = []
    for i, v in enumerate(g.vertices):
        if v.kind != "term" or v.cell != centre:
            continue
        h[v.alpha] = v.norm
        for j in g.adj[i]:
            w = g.vertices[j]
            if w.kind == "term":
                couplings.append((v.alpha, w.alpha, tuple(w.cell)))
    return UnitCell(h, tuple(sorted(set(couplings))), model.dimension,
                    tuple(t.name for t in model.terms))


def _kvec(kappa, dimension, direction=0):
    if np.ndim(kappa) == 0:
        k = np.zeros(dimension)
        k[direction] = float(kappa)
        return k
    return np.asarray(kappa, dtype=float)


def bloch_matrix(cell: UnitCell, kappa, direction=0) -> BlochMatrix:
    """``[M_{i kappa}]_{ab} = sum_r M_{(0,a),(r,b)} exp(kappa . r)``."""
    k = _kvec(kappa, cell.dimension, direction)
    n = len(cell.h)
    M = np.zeros((n, n))
    for a, b, r in cell.couplings:
        M[a, b] += 2.0 * math.sqrt(cell.h[a] * cell.h[b]) * math.exp(float(k @ np.asarray(r)))
    return BlochMatrix(M, tuple(k))


def _irreducible_blocks(M):
    n, labels = connected_components(M > 0, directed=True, connection="strong")
    return [np.nonzero(labels == c)[0] for c in range(n)]


def _power_perron(A, rtol=PERRON_RTOL, max_iter=200000):
    """Dominant eigenvalue of an irreducible nonnegative matrix.

    The matrix is first balanced by a diagonal similarity; power iteration on
    ``A + sigma I`` (aperiodic) stops when the Collatz-Wielandt bounds
    ``min (Ax)_i / x_i <= rho <= max (Ax)_i / x_i`` agree to ``rtol``.
    """
    n = A.shape[0]
    if n == 1:
        return float(A[0, 0])
    A, _ = matrix_balance(A, permute=False)
    sigma = 0.5 * float(A.sum(axis=1).max())
    B = A + sigma * np.eye(n)
    x = np.ones(n)
    for _ in range(max_iter):
        y = B @ x
        r = y / x
        lo, hi = r.min(), r.max()
        x = y / np.linalg.norm(y)
        if hi - lo <= rtol * abs(hi):
            return 0.5 * (lo + hi) - sigma
    raise AnalyticError("power iteration did not converge")


def perron_eigenvalue(M) -> float:
    """Perron-Frobenius eigenvalue of a nonnegative matrix.

    Raises
    ------
    AnalyticError
        For a reducible matrix whose dominant eigenvalue is shared by
        several irreducible blocks.
    """
    A = M.M if isinstance(M, BlochMatrix) else np.asarray(M, dtype=float)
    if np.any(A < 0):
        raise AnalyticError("matrix has negative entries")
    blocks = _irreducible_blocks(A)
    if len(blocks) == 1:
        return _power_perron(A)
    vals = sorted((_power_perron(A[np.ix_(b, b)]) for b in blocks), reverse=True)
    if vals[0] <= 0 or (len(vals) > 1 and abs(vals[0] - vals[1]) <= 1e-9 * vals[0]):
        raise AnalyticError("reducible matrix with ambiguous dominant block")
    return vals[0]


def _as_cell(obj):
    return unit_cell(obj) if isinstance(obj, LatticeModel) else obj


def lr_speed(cell, direction=0):
    """``(v_p, kappa_p0)`` with ``v_p = min_{kappa > 0} omega(kappa) / kappa``."""
    cell = _as_cell(cell)
    M0 = bloch_matrix(cell, 0.0, direction).M
    if len(_irreducible_blocks(M0)) > 1 or not np.any(M0 > 0) or not np.all(cell.h > 0):
        raise AnalyticError("commutativity graph is disconnected; no finite LR speed")

    def f(k):
        return perron_eigenvalue(bloch_matrix(cell, k, direction)) / k

    lo, hi = KAPPA_BRACKET
    grid = np.geomspace(lo, hi, 400)
    vals = np.array([f(k) for k in grid])
    i = int(np.argmin(vals))
    if i == 0 or i == len(grid) - 1:
        raise AnalyticError(f"no minimum of omega/kappa bracketed in [{lo}, {hi}]")
    res = minimize_scalar(f, bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden",
                          tol=1e-12)
    return float(res.fun), float(res.x)


def _observable_neighbours(model, S: LocalTerm):
    """Norms and cells of infinite-lattice terms not commuting with ``S``."""
    span = max(t.span(p) for t in model.terms for p in range(model.dimension))
    cells = sorted(S.support)
    centre = cells[0]
    R = span + max(max(abs(c[p] - centre[p]) for c in cells) for p in range(len(centre))) + 1
    g = build_graph(model, R, S, centre)
    return [(g.vertices[i].norm, np.asarray(g.vertices[i].cell)) for i in g.adj[g.s]], \
        np.asarray(g.vertices[g.s].cell)


def analytic_constants(model: LatticeModel, S: LocalTerm = None, direction=0,
                       sizes=(5, 7, 9, 11)) -> AnalyticConstants:
    """Assemble ``C_p = C_{kappa_p0} e^{kappa_p0}`` and the speed ``v_p``."""
    cell = unit_cell(model)
    if S is None:
        S = model.observable.parts[0][1]
    v, k0 = lr_speed(cell, direction)
    omega = perron_eigenvalue(bloch_matrix(cell, k0, direction))
    omega0 = perron_eigenvalue(bloch_matrix(cell, 0.0, direction))
    if 2 * omega - omega0 <= 0:
        raise AnalyticError(f"2 omega(kappa0) - omega0 = {2 * omega - omega0:.3g} <= 0")
    D = np.diag(1.0 / np.sqrt(cell.h))
    c_kappa = 0.0
    norms = {}
    for sgn in (+1, -1):
        Mk = bloch_matrix(cell, sgn * k0, direction).M
        _, U = np.linalg.eig(Mk)
        Ui = np.linalg.inv(U)
        nU, nUi = np.linalg.norm(U, 2), np.linalg.norm(Ui, 2)
        norms[sgn] = (nU, nUi)
        c_kappa += nU * nUi * np.linalg.norm(Ui @ D @ U, 2)
    c_H = float(cell.h.sum())
    nbrs, rs = _observable_neighbours(model, S)
    Sn = S.norm
    c_S = sum(2.0 * math.sqrt(hl) * Sn for hl, _ in nbrs)
    s_p = math.sqrt(sum(hl * math.exp(2 * k0 * (r[direction] - rs[direction]))
                        for hl, r in nbrs))
    s_m = math.sqrt(sum(hl * math.exp(-2 * k0 * (r[direction] - rs[direction]))
                        for hl, r in nbrs))
    nU, nUi = norms[+1]
    C_kappa = (2.0 * c_H * c_S * c_kappa / (2 * omega - omega0)
               + 8.0 * Sn * c_H * nU ** 2 * nUi ** 2 / omega ** 2 * s_p * s_m)
    eta = mu = None
    if model.dimension == 1:
        try:
            eta, mu = exponent_relation(model, S, sizes)
        except (ModelError, UnsupportedModel):
            eta = mu = None
    return AnalyticConstants(omega, omega0, nU, nUi, c_H, c_S, float(c_kappa), s_p, s_m,
                             float(C_kappa), float(C_kappa * math.exp(k0)), v, k0,
                             direction, eta, mu)


def exponent_relation(model, S, sizes=(5, 7, 9, 11)):
    """Fit ``ell = eta L - mu`` from minimal unembeddable Y-shapes and verify it."""
    from fractions import Fraction
    pts = []
    for L in sizes:
        St = place_observable(S, ((L - 1) // 2,))
        o = minimal_yshape_order(model, L, St)
        if o is None:
            raise UnsupportedModel(f"no unembeddable Y-shape found at L={L}")
        pts.append((L, o))
    (L0, o0), (L1, o1) = pts[0], pts[1]
    eta = Fraction(o1 - o0, L1 - L0)
    mu = eta * L0 - o0
    if any(eta * L - mu != o for L, o in pts) or mu.denominator != 1:
        raise ModelError("distance relation not affine; supply exponents manually")
    return eta, int(mu)


def rescale_bound(C, m, v, l, t):
    """Transfer ``f(l/v) <= C`` to ``f(t) <= C (v t / l)^m`` for ``0 <= t <= l/v``."""
    t = np.asarray(t, dtype=float)
    if m < 1:
        raise ValueError("exponent m must be >= 1")
    if np.any(t < 0):
        raise ValueError("negative time")
    if np.any(t > l / v * (1 + 1e-12)):
        raise ValueError("rescaling valid only for t <= l/v")
    out = C * (v * t / l) ** m
    return float(out) if out.ndim == 0 else out


def analytic_pbc_bound(model: LatticeModel, L=None, t_grid=None, exponents=None,
                       constants=None) -> BoundCurve:
    """``sum_p C_p (2 v_p t / L_p)^{ell_p}``, summed over observable parts.

    For ``t > L_p / (2 v_p)`` the unrescaled form
    ``C_{kappa0} exp(2 omega t - kappa0 (L_p - 1))`` is used; both agree at
    the anchor time.
    """
    if model.boundary != "pbc" and L is None:
        raise AnalyticError("analytic bound applies to periodic boundaries")
    Ls = L if L is not None else model.L
    Ls = (Ls,) * model.dimension if isinstance(Ls, int) else tuple(Ls)
    t = _check_t(t_grid if t_grid is not None else np.linspace(0, model.time["t_max"],
                                                              model.time["n_points"]))
    total = np.zeros(t.shape)
    meta = {"L": Ls, "parts": []}
    for w, S in model.observable.parts:
        for p in range(model.dimension):
            c = constants or analytic_constants(model, S, p)
            if exponents is not None:
                ell = int(exponents[p])
            else:
                ell = c.ell(Ls[p])
            if ell < 1:
                raise AnalyticError(f"nonpositive exponent {ell}")
            tc = Ls[p] / (2 * c.v)
            early = t <= tc
            vals = np.empty(t.shape)
            vals[early] = rescale_bound(c.C_p, ell, 2 * c.v, Ls[p], t[early])
            vals[~early] = c.C_kappa * np.exp(2 * c.omega * t[~early] - c.kappa0 * (Ls[p] - 1))
            total += abs(w) * vals
            meta["parts"].append({"direction": p, "ell": ell, "v": c.v, "C_p": c.C_p})
    return BoundCurve(t, np.maximum.accumulate(total), np.zeros(t.shape), "analytic", 0,
                      meta=meta)

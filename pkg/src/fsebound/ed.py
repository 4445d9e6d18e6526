"""Exact-diagonalization dynamics for 1D spin and Jordan-Wigner fermion chains.

Qubit ``q = cell * sites_per_cell + k`` is bit ``q`` of the basis index;
bit value 1 is the ``Z = -1`` state (an occupied mode for fermions).  Pauli
strings act on basis states as
``P |b> = c i^{n_Y} (-1)^{popcount(b & (z|y))} |b ^ (x|y)>``.
"""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
import os
from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal

from .cgraph import place_observable
from .model import LatticeModel, LocalTerm, ModelError, Observable, PauliString

MAX_SPINS = 20
MAX_SECTOR_DIM = 2_000_000
STEP_TOL = 1e-11
KRYLOV_MIN, KRYLOV_MAX = 8, 40
ROUNDOFF = 1e-14


class ResourceError(RuntimeError):
    pass


class EDError(ModelError):
    pass


def _popcount(a):
    a = np.asarray(a, dtype=np.uint64)
    out = np.zeros(a.shape, dtype=np.int64)
    for shift in range(0, 64, 8):
        out += _POP8[((a >> np.uint64(shift)) & np.uint64(0xFF)).astype(np.int64)]
    return out


_POP8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


@dataclass(frozen=True)
class Basis:
    states: np.ndarray      # sorted uint64 basis indices
    n_qubits: int
    sector: tuple = None    # (N_up, N_down) for fermions

    def __len__(self):
        return len(self.states)

    def index(self, b):
        """Positions of ``b`` in the basis and a mask of which are present."""
        pos = np.searchsorted(self.states, b)
        pos = np.minimum(pos, len(self.states) - 1)
        return pos, self.states[pos] == b


def _spread(vals, stride, offset, nbits):
    out = np.zeros(len(vals), dtype=np.uint64)
    for k in range(nbits):
        bit = (vals >> np.uint64(k)) & np.uint64(1)
        out |= bit << np.uint64(stride * k + offset)
    return out


def _fixed_popcount(n, k):
    if not 0 <= k <= n:
        raise EDError(f"particle number {k} outside [0, {n}]")
    vals = [sum(1 << i for i in c) for c in itertools.combinations(range(n), k)]
    return np.array(vals, dtype=np.uint64)


def full_basis(n_qubits):
    if n_qubits > MAX_SPINS:
        raise ResourceError(f"{n_qubits} spins exceed the limit {MAX_SPINS} "
                            f"(~{16 * 2 ** n_qubits / 2 ** 30:.1f} GiB per state vector)")
    return Basis(np.arange(2 ** n_qubits, dtype=np.uint64), n_qubits)


def fermion_sector_basis(L, n_up, n_down):
    """Basis of ``L`` spinful sites with fixed ``(N_up, N_down)``; bit ``2 i + s``."""
    dim = comb(L, n_up) * comb(L, n_down)
    if dim > MAX_SECTOR_DIM:
        raise ResourceError(f"sector dimension {dim} exceeds {MAX_SECTOR_DIM} "
                            f"(~{dim * 16 * 40 / 2 ** 30:.1f} GiB for a Krylov workspace)")
    up = _spread(_fixed_popcount(L, n_up), 2, 0, L)
    dn = _spread(_fixed_popcount(L, n_down), 2, 1, L)
    states = np.sort((up[:, None] | dn[None, :]).ravel())
    return Basis(states, 2 * L, (n_up, n_down))


def _qubit(site, spc):
    cell, k = site
    if len(cell) != 1:
        raise EDError("exact diagonalization supports 1D lattices only")
    return cell[0] * spc + k


def pauli_sum_operator(strings, basis: Basis, spc=1):
    """Sparse matrix of a sum of Pauli strings on a sector basis.

    Strings sharing a flip mask are combined before the sector lookup so
    that amplitudes leaving the sector can cancel (they must).
    """
    groups = {}
    for p in strings:
        x = z = 0
        ny = 0
        for site, ax in p.ops:
            q = _qubit(site, spc)
            if q >= basis.n_qubits or q < 0:
                raise EDError(f"site {site} outside the system")
            if ax in "XY":
                x |= 1 << q
            if ax in "ZY":
                z |= 1 << q
            ny += ax == "Y"
        groups.setdefault(x, []).append((z, complex(p.coeff) * 1j ** ny))
    b = basis.states
    n = len(basis)
    rows, cols, vals = [], [], []
    for x, items in groups.items():
        amp = np.zeros(n, dtype=complex)
        for z, c in items:
            amp += c * (1 - 2 * (_popcount(b & np.uint64(z)) & 1))
        keep = np.abs(amp) > 1e-15
        new = b ^ np.uint64(x)
        pos, ok = basis.index(new)
        if np.any(keep & ~ok):
            if np.max(np.abs(amp[keep & ~ok])) > 1e-12:
                raise EDError("operator leaves the symmetry sector")
        sel = keep & ok
        rows.append(pos[sel])
        cols.append(np.nonzero(sel)[0])
        vals.append(amp[sel])
    if not rows:
        return sp.csr_matrix((n, n))
    data = np.concatenate(vals)
    return sp.csr_matrix((data, (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


@dataclass
class Hamiltonian:
    """Sparse Hamiltonian on a sector basis with provenance."""
    H: sp.csr_matrix
    basis: Basis
    L: int
    bc: str
    spc: int
    constant: float = 0.0
    sign: float = 1.0
    _norm: float = field(default=None, repr=False)

    @property
    def dim(self):
        return len(self.basis)

    def matvec(self, v):
        out = self.H @ v
        if self.constant:
            out += self.constant * v
        if self.sign != 1.0:
            out *= self.sign
        return out

    def negated(self):
        return Hamiltonian(self.H, self.basis, self.L, self.bc, self.spc, self.constant,
                           -self.sign)

    def norm_estimate(self):
        """Upper bound on ``||H||`` from the max absolute row sum."""
        if self._norm is None:
            self._norm = float(abs(self.H).sum(axis=1).max()) + abs(self.constant)
        return self._norm

    def check_hermitian(self, n_vectors=3, seed=0):
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n_vectors):
            x = rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim)
            y = rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim)
            a = np.vdot(x, self.H @ y)
            b = np.conj(np.vdot(y, self.H @ x))
            worst = max(worst, abs(a - b) / max(1.0, abs(a)))
        return worst


def sector_of(model: LatticeModel, L):
    """``(N_up, N_down)`` of the model's product initial state."""
    pattern = model.initial_state.get("pattern")
    if not pattern:
        raise EDError("fermionic model needs an initial_state pattern to fix the sector")
    if L % len(pattern):
        raise EDError(f"pattern of length {len(pattern)} does not tile L={L}")
    labels = [pattern[i % len(pattern)] for i in range(L)]
    up = sum(_FERMION[lab][0] for lab in labels)
    dn = sum(_FERMION[lab][1] for lab in labels)
    return up, dn


def build_hamiltonian(model: LatticeModel, L=None, bc=None, sector=None) -> Hamiltonian:
    """Sparse ``H_L`` of a 1D model (full space for spins, fixed sector for fermions)."""
    if model.dimension != 1:
        raise EDError("exact diagonalization supports 1D lattices only")
    L = int(L if L is not None else model.L[0])
    bc = bc or model.boundary
    spc = model.sites_per_cell
    if model.fermionic:
        if spc != 2:
            raise EDError("fermionic chains need two modes per cell")
        sector = sector or sector_of(model, L)
        basis = fermion_sector_basis(L, *sector)
    else:
        basis = full_basis(L * spc)
    strings, const = [], 0.0
    for _, _, term, _ in model.finite_terms((L,), bc):
        strings.extend(term.strings)
        const += term.constant
    return Hamiltonian(pauli_sum_operator(strings, basis, spc), basis, L, bc, spc, const)


_SPIN = {
    "+z": (1.0, 0.0), "up": (1.0, 0.0), "-z": (0.0, 1.0), "down": (0.0, 1.0),
    "+x": (1 / math.sqrt(2), 1 / math.sqrt(2)), "-x": (1 / math.sqrt(2), -1 / math.sqrt(2)),
    "+y": (1 / math.sqrt(2), 1j / math.sqrt(2)), "-y": (1 / math.sqrt(2), -1j / math.sqrt(2)),
}
_FERMION = {"0": (0, 0), "u": (1, 0), "d": (0, 1), "2": (1, 1)}


@dataclass
class EvolvedState:
    psi: np.ndarray
    t: float
    basis: Basis
    L: int
    bc: str = "obc"
    error: float = 0.0      # accumulated Krylov error estimate

    @property
    def norm(self):
        return float(np.linalg.norm(self.psi))


def product_state(pattern, L, basis: Basis = None, bc="obc", spc=1) -> EvolvedState:
    """Normalized product state from per-cell labels repeated over ``L`` cells.

    Spin labels: ``+x -x +y -y +z -z up down``; fermion labels (two modes per
    cell): ``0 u d 2``.
    """
    pattern = list(pattern) if not isinstance(pattern, str) else [pattern]
    if L % len(pattern):
        raise EDError(f"pattern of length {len(pattern)} does not tile L={L}")
    labels = [pattern[i % len(pattern)] for i in range(L)]
    if all(lab in _FERMION for lab in labels) and not all(lab in _SPIN for lab in labels):
        b = 0
        for i, lab in enumerate(labels):
            u, d = _FERMION[lab]
            b |= (u << (2 * i)) | (d << (2 * i + 1))
        if basis is None:
            n_up = sum(_FERMION[x][0] for x in labels)
            n_dn = sum(_FERMION[x][1] for x in labels)
            basis = fermion_sector_basis(L, n_up, n_dn)
        pos, ok = basis.index(np.array([b], dtype=np.uint64))
        if not ok[0]:
            raise EDError("product state lies outside the basis sector")
        psi = np.zeros(len(basis), dtype=complex)
        psi[pos[0]] = 1.0
        return EvolvedState(psi, 0.0, basis, L, bc)
    if any(lab not in _SPIN for lab in labels):
        bad = sorted({lab for lab in labels if lab not in _SPIN})
        raise EDError(f"unknown local state labels {bad}")
    basis = basis or full_basis(L * spc)
    if basis.sector is not None:
        raise EDError("spin product states need the full basis")
    psi = np.ones(1, dtype=complex)
    for lab in reversed(labels):       # qubit 0 is the least significant bit
        psi = np.kron(psi, np.asarray(_SPIN[lab], dtype=complex))
    return EvolvedState(psi[basis.states.astype(np.int64)], 0.0, basis, L, bc)


def _krylov_step(H: Hamiltonian, psi, dt, m_max=KRYLOV_MAX, tol=STEP_TOL):
    """One Lanczos propagation step with full reorthogonalization.

    The subspace grows from ``KRYLOV_MIN`` until the a posteriori estimate
    ``beta_m |[exp(-i T dt) e_1]_m|`` drops below ``tol``.  Returns
    ``(psi_new, error)`` or ``None`` when ``m_max`` is not enough.
    """
    nrm = np.linalg.norm(psi)
    V = np.empty((m_max + 1, psi.shape[0]), dtype=complex)
    V[0] = psi / nrm
    alpha, beta = [], []
    for j in range(m_max):
        w = H.matvec(V[j])
        a = np.vdot(V[j], w).real
        w -= a * V[j]
        if j > 0:
            w -= beta[-1] * V[j - 1]
        w -= V[:j + 1].T @ (w.conj() @ V[:j + 1].T).conj()
        b = float(np.linalg.norm(w))
        alpha.append(a)
        beta.append(b)
        m = j + 1
        breakdown = b < 1e-13 * max(1.0, max(abs(x) for x in alpha))
        if m >= KRYLOV_MIN or breakdown:
            e, U = eigh_tridiagonal(np.array(alpha), np.array(beta[:-1]))
            c = U @ (np.exp(-1j * e * dt) * U[0])
            err = 0.0 if breakdown else b * abs(c[-1])
            if err <= tol:
                return nrm * (V[:m].T @ c), err * nrm
        if breakdown:
            break
        V[j + 1] = w / b
    return None


def evolve(state: EvolvedState, H: Hamiltonian, dt, tol=STEP_TOL) -> EvolvedState:
    """Krylov propagation ``exp(-i H dt)|psi>`` with adaptive substeps.

    The per-substep error estimate is kept below ``tol`` and accumulated in
    the returned state.  The norm is never rescaled.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    psi = state.psi
    err = state.error
    remaining = float(dt)
    h = min(remaining, 1.0 / max(H.norm_estimate(), 1e-12) * 8.0)
    fails = 0
    while remaining > 1e-15 * dt:
        h = min(h, remaining)
        res = _krylov_step(H, psi, h, KRYLOV_MAX, tol)
        if res is None:
            h *= 0.5
            fails += 1
            if fails > 60:
                raise EDError("Krylov propagation failed to reach the error target")
            continue
        psi, e = res
        err += e
        remaining -= h
        h *= 1.25
    return EvolvedState(psi, state.t + H.sign * dt, state.basis, state.L, state.bc, err)


def observable_operator(obs, basis: Basis, L, spc=1):
    """``(sparse matrix, constant)`` for an :class:`Observable` or placed :class:`LocalTerm`."""
    if isinstance(obs, LocalTerm):
        parts = ((1.0, obs),)
        centre = (0,)
    else:
        parts = obs.parts
        centre = ((L - 1) // 2,)
    strings, const = [], 0.0
    for w, term in parts:
        t = place_observable(term, centre) if not isinstance(obs, LocalTerm) else term
        strings.extend(PauliString(p.ops, w * p.coeff) for p in t.strings)
        const += w * t.constant
    return pauli_sum_operator(strings, basis, spc), const


def measure(state: EvolvedState, op, constant=0.0) -> float:
    """Real expectation value ``<psi|O|psi>``."""
    val = np.vdot(state.psi, op @ state.psi) / np.vdot(state.psi, state.psi)
    if abs(val.imag) > 1e-8:
        raise EDError(f"expectation value has imaginary part {val.imag:.3g}")
    return float(val.real) + constant


def run_series(model: LatticeModel, L, t_grid, bc=None, observable=None, H=None):
    """Evolve the model's initial state and measure on a time grid.

    Returns ``(values, error_certificate, state)``; the certificate bounds the
    accumulated propagation error of each value (``2 ||O|| * err``).
    """
    t = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t) < 0) or np.any(t < 0):
        raise ValueError("time grid must be sorted and nonnegative")
    bc = bc or model.boundary
    H = H or build_hamiltonian(model, L, bc)
    pattern = model.initial_state.get("pattern", ["+x"])
    st = product_state(pattern, L, H.basis, bc, model.sites_per_cell)
    obs = observable if observable is not None else model.observable
    op, const = observable_operator(obs, H.basis, L, model.sites_per_cell)
    onorm = float(abs(op).sum(axis=1).max()) if op.nnz else 0.0
    vals = np.empty(len(t))
    errs = np.empty(len(t))
    cur = 0.0
    for i, ti in enumerate(t):
        if ti > cur:
            st = evolve(st, H, ti - cur)
            cur = ti
        vals[i] = measure(st, op, const)
        errs[i] = 2.0 * onorm * st.error + ROUNDOFF * max(1.0, onorm) * (1 + i)
    return vals, errs, st


@dataclass
class MeasurementSeries:
    t: np.ndarray
    values: dict
    L: int
    bc: str
    observable: str
    model_hash: str
    errors: np.ndarray = None

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write("# fsebound MeasurementSeries v1\n")
        w = csv.writer(buf, lineterminator="\n")
        cols = list(self.values)
        w.writerow(["t", *cols, "L", "bc", "observable", "model_hash"])
        for i, ti in enumerate(self.t):
            w.writerow([f"{ti:.12g}", *(f"{self.values[c][i]:.16e}" for c in cols),
                        self.L, self.bc, self.observable, self.model_hash])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def model_hash(model: LatticeModel):
    doc = json.dumps({"terms": [[t.name, [(p.ops, p.coeff) for p in t.strings]]
                                for t in model.terms],
                      "pattern": model.initial_state.get("pattern")}, default=str)
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


def simulate(model: LatticeModel, L, t_grid, bc=None) -> MeasurementSeries:
    """Measurement series for the model observable; imbalances also report ``/N_total``."""
    bc = bc or model.boundary
    vals, errs, st = run_series(model, L, t_grid, bc)
    values = {"value": vals}
    if model.observable.name.startswith("imbalance:all") and model.fermionic:
        n_tot = sum(st.basis.sector)
        values = {"imbalance_per_L": vals, "imbalance_per_N": vals * L / n_tot}
    return MeasurementSeries(np.asarray(t_grid, float), values, L, bc,
                             model.observable.name, model_hash(model), errs)


@dataclass
class FSEResult:
    t: np.ndarray
    value_L: np.ndarray
    value_ref: np.ndarray
    diff: np.ndarray
    error: np.ndarray            # numerical certificate on diff
    lower: np.ndarray = None     # certified bracket on |<S>_L - <S>_inf|
    upper: np.ndarray = None
    L: int = 0
    L_ref: int = 0

    def crossing_time(self, level=1e-2):
        idx = np.nonzero(self.diff > level)[0]
        return float(self.t[idx[0]]) if idx.size else None


def measured_fse(model: LatticeModel, S=None, L=None, L_ref=None, t_grid=None, bc=None,
                 bound_ref=None) -> FSEResult:
    """``|<S(t)>_L - <S(t)>_{L_ref}|`` with a triangle-inequality envelope.

    ``bound_ref`` (array on ``t_grid``) is a rigorous FSE bound for ``L_ref``;
    the true FSE of size ``L`` lies in ``[diff - bound_ref, diff + bound_ref]``
    up to the numerical certificate.
    """
    L = int(L if L is not None else model.L[0])
    if L_ref is None or L_ref <= L:
        raise ValueError("L_ref must exceed L")
    t = np.asarray(t_grid if t_grid is not None else
                   np.linspace(0, model.time["t_max"], model.time["n_points"]), float)
    obs = S if S is not None else model.observable
    a, ea, _ = run_series(model, L, t, bc, obs)
    b, eb, _ = run_series(model, L_ref, t, bc, obs)
    diff = np.abs(a - b)
    err = ea + eb
    res = FSEResult(t, a, b, diff, err, L=L, L_ref=L_ref)
    if bound_ref is not None:
        br = np.asarray(bound_ref, float)
        res.lower = np.maximum(diff - br - err, 0.0)
        res.upper = diff + br + err
    return res

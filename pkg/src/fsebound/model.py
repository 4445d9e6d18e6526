"""Lattice Hamiltonians as translation-invariant sums of Pauli strings.

A site is addressed by ``(cell, index)`` where ``cell`` is an integer lattice
vector (a tuple) and ``index`` labels the site inside the unit cell.  Local
terms are stored as *templates* anchored at cell 0; the lattice is generated
by translating every template to every cell.

Fermionic models are mapped to qubits with a Jordan-Wigner transformation
using the interleaved mode order ``(cell, up), (cell, down)`` ascending in
cell, and ``n = (1 - Z) / 2`` (occupied mode = Z eigenvalue -1).
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

AXES = ("X", "Y", "Z")

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# single-site products a*b = i**k * c
_MUL = {
    ("X", "Y"): (1, "Z"), ("Y", "X"): (3, "Z"),
    ("Y", "Z"): (1, "X"), ("Z", "Y"): (3, "X"),
    ("Z", "X"): (1, "Y"), ("X", "Z"): (3, "Y"),
}

MAX_DENSE_QUBITS = 12


class ModelError(ValueError):
    """Invalid model definition (bad config, non-Hermitian term, ...)."""


class ConfigError(ModelError):
    """Configuration document violates the schema."""

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


def _shift(site, r):
    cell, idx = site
    return (tuple(c + d for c, d in zip(cell, r)), idx)


@dataclass(frozen=True)
class PauliString:
    """Real multiple of a tensor product of Pauli matrices.

    ``ops`` is a tuple of ``(site, axis)`` pairs sorted by site, with unique
    sites.  Every Pauli string is Hermitian, so a real coefficient keeps the
    operator Hermitian.
    """

    ops: tuple
    coeff: float = 1.0

    def __post_init__(self):
        sites = [s for s, _ in self.ops]
        if len(set(sites)) != len(sites):
            raise ModelError("site offsets must be unique within a Pauli string")
        if any(a not in AXES for _, a in self.ops):
            raise ModelError(f"invalid Pauli axis in {self.ops}")
        if not math.isfinite(self.coeff) or self.coeff == 0.0:
            raise ModelError("Pauli string coefficient must be finite and nonzero")
        object.__setattr__(self, "ops", tuple(sorted(self.ops)))

    @property
    def sites(self):
        return tuple(s for s, _ in self.ops)

    @property
    def cells(self):
        return {s[0] for s, _ in self.ops}

    def translate(self, r):
        return PauliString(tuple((_shift(s, r), a) for s, a in self.ops), self.coeff)

    def scaled(self, c):
        return PauliString(self.ops, self.coeff * c)

    def label(self):
        body = " ".join(f"{a}{s[0]}.{s[1]}" for s, a in self.ops) or "I"
        return f"{self.coeff:+g}*{body}"


def pauli(coeff, *ops):
    """Shorthand: ``pauli(1.0, ((0,), 0, "Z"), ((1,), 0, "Z"))``."""
    return PauliString(tuple(((tuple(c), i), a) for c, i, a in ops), float(coeff))


def commutes(a: PauliString, b: PauliString) -> bool:
    """Parity rule: strings commute iff they anticommute on an even number of sites."""
    bd = dict(b.ops)
    clashes = sum(1 for s, ax in a.ops if s in bd and bd[s] != ax)
    return clashes % 2 == 0


def _dense(strings, sites):
    """Dense matrix of a sum of strings on an ordered site list (identity for empty strings)."""
    dim = 2 ** len(sites)
    out = np.zeros((dim, dim), dtype=complex)
    for p in strings:
        d = dict(p.ops)
        m = np.ones((1, 1), dtype=complex)
        for s in sites:
            m = np.kron(m, _PAULI[d.get(s, "I")])
        out += p.coeff * m
    return out


def dense_matrix(strings, sites=None):
    """Return ``(matrix, sites)`` for a Pauli sum; sites default to the sorted support."""
    if sites is None:
        sites = sorted({s for p in strings for s in p.sites})
    if len(sites) > MAX_DENSE_QUBITS:
        raise ModelError(f"dense representation on {len(sites)} qubits is too large")
    return _dense(strings, list(sites)), list(sites)


@dataclass(frozen=True)
class LocalTerm:
    """A Hermitian local operator ``sum_k c_k P_k``.

    ``norm`` is the spectral norm, computed densely at construction unless
    given explicitly (needed for supports too large for dense evaluation).
    """

    name: str
    strings: tuple
    norm: float = None
    constant: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "strings", tuple(self.strings))
        if self.norm is None:
            object.__setattr__(self, "norm", operator_norm(self))
        elif self.norm < 0:
            raise ModelError("norm must be nonnegative")

    @property
    def sites(self):
        return sorted({s for p in self.strings for s in p.sites})

    @property
    def support(self):
        """Set of cells the operator acts on."""
        return {s[0] for s in self.sites}

    def translate(self, r):
        return LocalTerm(self.name, tuple(p.translate(r) for p in self.strings),
                         self.norm, self.constant)

    def scaled(self, c):
        return LocalTerm(self.name, tuple(p.scaled(c) for p in self.strings),
                         abs(c) * self.norm, self.constant * c)

    def span(self, axis=0):
        cs = [c[axis] for c in self.support]
        return (max(cs) - min(cs) + 1) if cs else 0

    def matrix(self, sites=None):
        return dense_matrix(self.strings, sites)


def operator_norm(term: LocalTerm, max_cells: int = 3) -> float:
    """Spectral norm of the stored operator, including its identity offset.

    Raises
    ------
    ModelError
        If the support is wider than ``max_cells`` unit cells; supply ``norm``
        explicitly in that case.
    """
    if not term.strings:
        return abs(term.constant)
    if len(term.support) > max_cells:
        raise ModelError(
            f"term {term.name!r} spans {len(term.support)} cells; "
            "supply its norm explicitly")
    m, _ = dense_matrix(term.strings)
    ev = np.linalg.eigvalsh(m) + term.constant
    return float(np.max(np.abs(ev)))


def terms_commute(a: LocalTerm, b: LocalTerm) -> bool:
    """Operator-level commutation of two Pauli sums.

    The pairwise parity rule is sufficient; when some pair anticommutes the
    commutator is checked densely on the joint support.
    """
    if all(commutes(p, q) for p in a.strings for q in b.strings):
        return True
    sites = sorted(set(a.sites) | set(b.sites))
    ma, _ = dense_matrix(a.strings, sites)
    mb, _ = dense_matrix(b.strings, sites)
    c = ma @ mb - mb @ ma
    return np.linalg.norm(c, 2) < 1e-12


# ---------------------------------------------------------------------------
# Jordan-Wigner
# ---------------------------------------------------------------------------

SPINS = {"up": 0, "down": 1}


@dataclass(frozen=True)
class FermionOp:
    cell: tuple
    spin: int
    dagger: bool

    @property
    def mode(self):
        return (self.cell, self.spin)


@dataclass(frozen=True)
class FermionTerm:
    """``coeff * prod(ops)`` with optional Hermitian conjugate added."""

    ops: tuple
    coeff: float
    hermitian_conjugate: bool = False

    def __post_init__(self):
        if len(self.ops) % 2:
            raise ModelError("fermion term has odd particle-number parity")


def _pmul(a, b):
    """Multiply two Pauli dicts {site: axis}; return (i-power, product dict)."""
    out = dict(a)
    k = 0
    for s, ax in b.items():
        if s not in out:
            out[s] = ax
        elif out[s] == ax:
            del out[s]
        else:
            dk, c = _MUL[(out[s], ax)]
            k += dk
            out[s] = c
    return k, out


def _sum_mul(x, y):
    out = {}
    for ka, ca in x.items():
        for kb, cb in y.items():
            k, prod = _pmul(dict(ka), dict(kb))
            key = tuple(sorted(prod.items()))
            out[key] = out.get(key, 0) + ca * cb * (1j ** k)
    return out


def _ladder(op: FermionOp, ref):
    """JW image of one ladder operator with the string starting at mode ``ref``."""
    # modes strictly between ref and this mode in the interleaved order
    lo, hi = ref, op.mode
    strings = {}
    z = {}
    cells = range(lo[0][0], hi[0][0] + 1)
    for c in cells:
        for sp in (0, 1):
            m = ((c,), sp)
            if lo <= m < hi:
                z[m] = "Z"
    site = op.mode
    sign = -1j if op.dagger else 1j
    for ax, c in (("X", 0.5), ("Y", 0.5 * sign)):
        d = dict(z)
        d[site] = ax
        strings[tuple(sorted(d.items()))] = c
    return strings


def jordan_wigner(term: FermionTerm):
    """Map a fermionic term to a list of :class:`PauliString` (1D chains only).

    The identity component is returned separately as the second element.
    """
    if len(term.ops) % 2:
        raise ModelError("fermion term has odd particle-number parity")
    if any(len(o.cell) != 1 for o in term.ops):
        raise ModelError("Jordan-Wigner mapping is implemented for 1D lattices")
    ref = min(o.mode for o in term.ops)
    acc = {(): complex(term.coeff)}
    for o in term.ops:
        acc = _sum_mul(acc, _ladder(o, ref))
    if term.hermitian_conjugate:
        hc = {(): complex(term.coeff)}
        for o in reversed(term.ops):
            hc = _sum_mul(hc, _ladder(FermionOp(o.cell, o.spin, not o.dagger), ref))
        for k, v in hc.items():
            acc[k] = acc.get(k, 0) + v
    strings, const = [], 0.0
    for key, c in sorted(acc.items()):
        if abs(c) < 1e-14:
            continue
        if abs(c.imag) > 1e-12:
            raise ModelError("fermion term is not Hermitian (use hermitian_conjugate)")
        if key == ():
            const += c.real
        else:
            strings.append(PauliString(tuple(key), float(c.real)))
    return strings, const


# ---------------------------------------------------------------------------
# Lattice model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Observable:
    """Weighted sum of local operators placed at absolute cells of a finite system.

    ``parts`` holds ``(weight, LocalTerm)`` with the term positioned relative
    to the observable's reference cell (the system centre).  Identity
    components never contribute to finite-size errors and are dropped.
    """

    name: str
    parts: tuple

    @property
    def norm(self):
        return sum(abs(w) * t.norm for w, t in self.parts)


@dataclass(frozen=True)
class LatticeModel:
    """Translation-invariant Hamiltonian ``H = sum_r sum_a T_a(r)``."""

    dimension: int
    sites_per_cell: int
    terms: tuple
    observable: Observable
    boundary: str
    L: tuple
    fermionic: bool = False
    initial_state: dict = field(default_factory=dict)
    time: dict = field(default_factory=lambda: {"t_max": 1.0, "n_points": 11})
    name: str = "model"
    nearest_neighbour: bool = True

    def __post_init__(self):
        if self.dimension < 1:
            raise ModelError("dimension must be >= 1")
        if len(self.L) != self.dimension:
            raise ModelError("L must have one entry per dimension")
        if any(l < 3 for l in self.L):
            raise ModelError("L >= 3 required")
        if self.boundary not in ("obc", "pbc"):
            raise ModelError("boundary must be 'obc' or 'pbc'")
        nn = all(t.span(p) <= 2 for t in self.terms for p in range(self.dimension))
        object.__setattr__(self, "nearest_neighbour", nn)

    def with_size(self, L, boundary=None):
        if isinstance(L, int):
            L = (L,) * self.dimension
        return LatticeModel(self.dimension, self.sites_per_cell, self.terms,
                            self.observable, boundary or self.boundary, tuple(L),
                            self.fermionic, self.initial_state, self.time, self.name)

    def with_observable(self, obs):
        return LatticeModel(self.dimension, self.sites_per_cell, self.terms, obs,
                            self.boundary, self.L, self.fermionic, self.initial_state,
                            self.time, self.name)

    @property
    def n_sites(self):
        return int(np.prod(self.L)) * self.sites_per_cell

    def centre(self):
        return tuple((l - 1) // 2 for l in self.L)

    def template_anchor(self, a):
        """Lowest cell (per direction) touched by template ``a``."""
        cells = self.terms[a].support
        return tuple(min(c[p] for c in cells) for p in range(self.dimension))

    def finite_terms(self, L=None, boundary=None):
        """Terms of the finite system as ``(template, anchor_cell, LocalTerm, wrapped)``.

        PBC terms crossing the edge have their site cells wrapped modulo L
        and ``wrapped=True``.
        """
        L = tuple(L or self.L)
        bc = boundary or self.boundary
        if bc == "pbc" and self.fermionic:
            raise ModelError(
                "periodic fermionic chains are not Jordan-Wigner local; "
                "use open boundaries for finite fermionic systems")
        out = []
        for a, t in enumerate(self.terms):
            lo = self.template_anchor(a)
            span = [t.span(p) for p in range(self.dimension)]
            for r in itertools.product(*(range(l) for l in L)):
                shift = tuple(ri - li for ri, li in zip(r, lo))
                tt = t.translate(shift)
                inside = all(r[p] + span[p] - 1 < L[p] for p in range(self.dimension))
                if inside:
                    out.append((a, r, tt, False))
                elif bc == "pbc":
                    if any(span[p] > L[p] for p in range(self.dimension)):
                        raise ModelError("term wider than the periodic system")
                    out.append((a, r, wrap_term(tt, L), True))
        return out


def wrap_term(term, L):
    strings = []
    for p in term.strings:
        ops = tuple(((tuple(c % l for c, l in zip(s[0], L)), s[1]), ax) for s, ax in p.ops)
        strings.append(PauliString(ops, p.coeff))
    return LocalTerm(term.name, tuple(strings), term.norm, term.constant)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_INT_VEC = {"type": "array", "items": {"type": "integer"}, "minItems": 1}

_TERM_SCHEMA = {
    "type": "object",
    "required": ["name", "coefficient"],
    "properties": {
        "name": {"type": "string"},
        "coefficient": {"type": "number"},
        "norm": {"type": "number", "minimum": 0},
        "paulis": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["offset", "axis"],
                "properties": {
                    "offset": _INT_VEC,
                    "site_index_in_cell": {"type": "integer", "minimum": 0},
                    "axis": {"enum": ["X", "Y", "Z"]},
                },
                "additionalProperties": False,
            },
        },
        "fermion_ops": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["offset", "spin", "dagger"],
                "properties": {
                    "offset": _INT_VEC,
                    "spin": {"enum": ["up", "down"]},
                    "dagger": {"type": "boolean"},
                },
                "additionalProperties": False,
            },
        },
        "hermitian_conjugate": {"type": "boolean"},
    },
    "oneOf": [{"required": ["paulis"]}, {"required": ["fermion_ops"]}],
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["dimension", "boundary", "L", "terms", "observable"],
    "properties": {
        "name": {"type": "string"},
        "dimension": {"type": "integer", "minimum": 1},
        "boundary": {"enum": ["obc", "pbc"]},
        "L": _INT_VEC,
        "sites_per_cell": {"type": "integer", "minimum": 1},
        "terms": {"type": "array", "items": _TERM_SCHEMA, "minItems": 1},
        "observable": {
            "oneOf": [
                _TERM_SCHEMA,
                {
                    "type": "object",
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["imbalance", "density"]},
                        "sites": {"enum": ["all", "centre"]},
                        "name": {"type": "string"},
                    },
                    "additionalProperties": False,
                },
            ]
        },
        "initial_state": {
            "type": "object",
            "required": ["pattern"],
            "properties": {"pattern": {"type": "array", "items": {"type": "string"},
                                       "minItems": 1}},
        },
        "time": {
            "type": "object",
            "required": ["t_max", "n_points"],
            "properties": {"t_max": {"type": "number", "minimum": 0},
                           "n_points": {"type": "integer", "minimum": 1}},
        },
    },
}


def _build_term(spec, dim):
    if "paulis" in spec:
        ops = []
        for p in spec["paulis"]:
            if len(p["offset"]) != dim:
                raise ModelError(f"offset {p['offset']} does not match dimension {dim}")
            ops.append(((tuple(p["offset"]), p.get("site_index_in_cell", 0)), p["axis"]))
        strings = [PauliString(tuple(ops), float(spec["coefficient"]))]
        const = 0.0
    else:
        fops = tuple(FermionOp(tuple(o["offset"]), SPINS[o["spin"]], o["dagger"])
                     for o in spec["fermion_ops"])
        strings, const = jordan_wigner(
            FermionTerm(fops, float(spec["coefficient"]),
                        spec.get("hermitian_conjugate", False)))
    return LocalTerm(spec["name"], tuple(strings), spec.get("norm"), const)


def imbalance_observable(L, sites_per_cell=2, which="all", kind="imbalance"):
    """``M = sum_i (-1)^i n_i / N`` in the traceless form ``-sum_i (-1)^i Z_i / (2N)``.

    ``N`` is the particle number of the half-filled checkerboard (``L`` for
    one spinful fermion per site on average).  Parts are positioned relative
    to the centre cell ``(L - 1) // 2``.
    """
    c = (L - 1) // 2
    if which == "all":
        cells = range(L)
    else:
        cells = (c, c + 1) if kind == "imbalance" else (c,)
    n_norm = L if which == "all" else len(cells)
    parts = []
    for i in cells:
        sign = (-1) ** i if kind == "imbalance" else 1.0
        strings = tuple(PauliString(((((i - c,), s), "Z"),), -0.5)
                        for s in range(sites_per_cell))
        parts.append((sign / n_norm, LocalTerm(f"n@{i}", strings)))
    return Observable(f"{kind}:{which}", tuple(parts))


def parse_model(doc) -> LatticeModel:
    """Validate a config document (dict, JSON string or path) and build the model."""
    if isinstance(doc, (str, Path)):
        text = str(doc)
        if text.lstrip().startswith("{"):
            doc = json.loads(text)
        else:
            try:
                doc = json.loads(Path(text).read_text())
            except OSError as e:
                raise ConfigError(f"cannot read config: {e}", "$") from None
            except json.JSONDecodeError as e:
                raise ConfigError(f"invalid JSON: {e}", "$") from None
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        path = "$" + "".join(f"[{x!r}]" if isinstance(x, int) else f".{x}" for x in e.absolute_path)
        raise ConfigError(e.message, path) from None
    dim = doc["dimension"]
    L = tuple(doc["L"])
    if len(L) == 1 and dim > 1:
        L = L * dim
    if any(l < 3 for l in L):
        raise ConfigError("L >= 3 required", "$.L")
    terms = tuple(_build_term(t, dim) for t in doc["terms"])
    fermionic = any("fermion_ops" in t for t in doc["terms"])
    spc = doc.get("sites_per_cell", 2 if fermionic else 1)
    obs_doc = doc["observable"]
    if "kind" in obs_doc:
        if dim != 1:
            raise ConfigError("density observables are 1D only", "$.observable")
        obs = imbalance_observable(L[0], spc, obs_doc.get("sites", "all"), obs_doc["kind"])
    else:
        t = _build_term(obs_doc, dim)
        obs = Observable(t.name, ((1.0, t),))
    return LatticeModel(dim, spc, terms, obs, doc["boundary"], L, fermionic,
                        doc.get("initial_state", {}),
                        doc.get("time", {"t_max": 1.0, "n_points": 11}),
                        doc.get("name", "model"))


def tfim_config(J=1.0, h=1.0, L=5, boundary="pbc", t_max=4.0, n_points=401):
    """Config for ``H = -J sum Z_j Z_{j+1} - h sum X_j`` measuring ``X`` at the centre."""
    return {
        "name": "tfim",
        "dimension": 1,
        "boundary": boundary,
        "L": [L],
        "terms": [
            {"name": "ZZ", "coefficient": -J,
             "paulis": [{"offset": [0], "axis": "Z"}, {"offset": [1], "axis": "Z"}]},
            {"name": "X", "coefficient": -h, "paulis": [{"offset": [0], "axis": "X"}]},
        ],
        "observable": {"name": "sx", "coefficient": 1.0,
                       "paulis": [{"offset": [0], "axis": "X"}]},
        "initial_state": {"pattern": ["+x"]},
        "time": {"t_max": t_max, "n_points": n_points},
    }


def fhm_config(J=1.0, U=0.5, L=4, boundary="obc", t_max=1.2, n_points=121,
               observable="imbalance", sites="all"):
    """Config for the 1D Fermi-Hubbard chain started from ``|2020...>``."""
    hops = [
        {"name": f"hop_{s}", "coefficient": -J, "hermitian_conjugate": True,
         "fermion_ops": [{"offset": [0], "spin": s, "dagger": True},
                         {"offset": [1], "spin": s, "dagger": False}]}
        for s in ("up", "down")
    ]
    hub = {"name": "U", "coefficient": U,
           "fermion_ops": [{"offset": [0], "spin": "up", "dagger": True},
                           {"offset": [0], "spin": "up", "dagger": False},
                           {"offset": [0], "spin": "down", "dagger": True},
                           {"offset": [0], "spin": "down", "dagger": False}]}
    return {
        "name": "fhm",
        "dimension": 1,
        "boundary": boundary,
        "L": [L],
        "sites_per_cell": 2,
        "terms": hops + [hub],
        "observable": {"kind": observable, "sites": sites},
        "initial_state": {"pattern": ["2", "0"]},
        "time": {"t_max": t_max, "n_points": n_points},
    }

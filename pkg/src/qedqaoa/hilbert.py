"""Computational bases over flow configurations, and state vectors on them.

Two kinds of basis are used.  :class:`ConfigBasis` is the full qudit product
space (every edge/commodity qudit takes ``2d+1`` levels), indexed in
mixed radix with commodity 0, edge 0 as the most significant digit.
:class:`FeasibleBasis` is an explicit, lexicographically sorted list of
Gauss-law satisfying configurations, optionally restricted to configurations
without isolated loops.  Multi-commodity feasible bases are Cartesian
products of per-commodity factors and keep those factors around.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import (
    BasisMismatchError,
    InvalidArgument,
    NotInBasisError,
    ResourceCapError,
)
from .graph import all_simple_paths, cost_values, feasible_mask, loop_mask

DEFAULT_FULL_CAP = 2 * 10**7
DEFAULT_FEASIBLE_CAP = 10**6
NORM_TOL = 1e-10


def _levels(inst):
    return [2 * c.demand + 1 for c in inst.commodities]


class ConfigBasis:
    """The full product space of ``k * |E|`` qudits."""

    loopless = False
    factors = None

    def __init__(self, inst, cap=DEFAULT_FULL_CAP):
        self.inst = inst
        levels = _levels(inst)
        if len(set(levels)) > 1:
            raise InvalidArgument("mixed qudit sizes are not supported")
        self.level = levels[0] if levels else 1
        self.offset = (self.level - 1) // 2
        self.n_sites = inst.k * inst.network.n_edges
        dim = self.level**self.n_sites
        if dim > cap:
            raise ResourceCapError(
                f"full basis of dimension {self.level}^{self.n_sites} = {dim} exceeds cap {cap}"
            )
        self.dim = int(dim)
        self.place = self.level ** np.arange(self.n_sites - 1, -1, -1, dtype=np.int64)
        self._configs = None

    @property
    def key(self):
        return ("full", id(self.inst.network), self.inst.commodities, self.dim)

    def index(self, cfg):
        digits = np.asarray(cfg, dtype=np.int64).reshape(-1) + self.offset
        if digits.size != self.n_sites or digits.min(initial=0) < 0 or digits.max(initial=0) >= self.level:
            raise NotInBasisError("configuration outside the qudit range")
        return int(digits @ self.place)

    def indices(self, configs):
        digits = np.asarray(configs, dtype=np.int64).reshape(len(configs), -1) + self.offset
        return digits @ self.place

    def config(self, index):
        if not 0 <= index < self.dim:
            raise NotInBasisError(f"index {index} out of range")
        digits = (index // self.place) % self.level
        return (digits - self.offset).astype(np.int8).reshape(self.inst.k, -1)

    def configs(self):
        """All configurations, shape ``(dim, k, |E|)``."""
        if self._configs is None:
            idx = np.arange(self.dim, dtype=np.int64)
            digits = (idx[:, None] // self.place[None, :]) % self.level
            self._configs = (digits - self.offset).astype(np.int8).reshape(self.dim, self.inst.k, -1)
            self._configs.setflags(write=False)
        return self._configs

    def lookup(self, configs):
        configs = np.asarray(configs)
        inside = ((configs >= -self.offset) & (configs <= self.offset)).reshape(len(configs), -1).all(axis=1)
        out = np.full(len(configs), -1, dtype=np.int64)
        out[inside] = self.indices(configs[inside])
        return out

    def __repr__(self):
        return f"ConfigBasis(dim={self.dim}, sites={self.n_sites})"


class FeasibleBasis:
    """Sorted list of flow-constraint satisfying configurations."""

    def __init__(self, inst, configs, loopless, factors=None):
        configs = np.asarray(configs, dtype=np.int8)
        if configs.ndim != 3 or configs.shape[1:] != (inst.k, inst.network.n_edges):
            raise InvalidArgument(f"bad configuration stack of shape {configs.shape}")
        self.inst = inst
        self.loopless = bool(loopless)
        self.factors = tuple(factors) if factors else None
        flat = configs.reshape(len(configs), -1)
        offset = max((c.demand for c in inst.commodities), default=0)
        digits = np.ascontiguousarray((flat.astype(np.int16) + offset).astype(np.uint8))
        keys = digits.view(np.dtype((np.void, digits.shape[1]))).ravel()
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        if len(keys) > 1 and np.any(keys[1:] == keys[:-1]):
            raise InvalidArgument("duplicate configurations in basis")
        self.configs = configs[order]
        self.configs.setflags(write=False)
        self._keys = keys
        self._offset = offset
        self.dim = len(self.configs)

    @property
    def key(self):
        return ("feasible", self.loopless, id(self.inst.network), self.inst.commodities, self.dim)

    def _keys_of(self, configs):
        flat = np.asarray(configs).reshape(len(configs), -1).astype(np.int16) + self._offset
        bad = (flat < 0) | (flat > 255)
        flat = np.clip(flat, 0, 255).astype(np.uint8)
        digits = np.ascontiguousarray(flat)
        return digits.view(np.dtype((np.void, digits.shape[1]))).ravel(), bad.any(axis=1)

    def lookup(self, configs):
        """Basis index for each config in an ``(M, k, E)`` stack, -1 if absent."""
        configs = np.asarray(configs)
        if len(configs) == 0:
            return np.zeros(0, dtype=np.int64)
        keys, bad = self._keys_of(configs)
        pos = np.searchsorted(self._keys, keys)
        pos_c = np.minimum(pos, self.dim - 1)
        hit = (pos < self.dim) & (self._keys[pos_c] == keys) & ~bad
        return np.where(hit, pos_c, -1).astype(np.int64)

    def index(self, cfg):
        cfg = np.asarray(cfg).reshape(1, self.inst.k, -1)
        i = int(self.lookup(cfg)[0])
        if i < 0:
            raise NotInBasisError("configuration is not in this basis")
        return i

    def config(self, index):
        return self.configs[index]

    def __repr__(self):
        tag = "loopless" if self.loopless else "with loops"
        return f"FeasibleBasis(dim={self.dim}, {tag})"


class IndexBasis:
    """Bare index space of a given dimension, for operators with no flow meaning."""

    loopless = False
    factors = None

    def __init__(self, dim):
        if dim < 1:
            raise InvalidArgument("dimension must be positive")
        self.dim = int(dim)
        self.key = ("index", id(self), self.dim)

    def __repr__(self):
        return f"IndexBasis(dim={self.dim})"


def same_basis(a, b):
    return a is b or a.key == b.key


def require_same_basis(a, b):
    if not same_basis(a, b):
        raise BasisMismatchError(f"basis mismatch: {a!r} vs {b!r}")


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def full_basis(inst, cap=DEFAULT_FULL_CAP):
    return ConfigBasis(inst, cap)


def gauss_solutions(net, rho, bound=1, cap=DEFAULT_FEASIBLE_CAP):
    """All flows with values in ``[-bound, bound]`` and divergence ``rho``.

    Backtracking over edges in an order that closes vertices early; a vertex
    is checked as soon as its last incident edge is assigned, and partial sums
    are pruned against the remaining incident capacity.
    """
    m, n = net.n_edges, net.n_vertices
    order = []
    seen = set()
    for start in range(n):
        frontier = [start]
        while frontier:
            v = frontier.pop(0)
            for k in range(net.adj_ptr[v], net.adj_ptr[v + 1]):
                e = int(net.adj_edge[k])
                if e not in seen:
                    seen.add(e)
                    order.append(e)
                    frontier.append(int(net.adj_nbr[k]))
    remaining = np.zeros(n, dtype=np.int64)
    np.add.at(remaining, net.tails, 1)
    np.add.at(remaining, net.heads, 1)
    rem_after = []
    for e in order:
        remaining[net.tails[e]] -= 1
        remaining[net.heads[e]] -= 1
        rem_after.append((remaining[net.tails[e]], remaining[net.heads[e]]))
    tails, heads = net.tails.tolist(), net.heads.tolist()
    rho = [int(x) for x in rho]

    div = [0] * n
    cur = np.zeros(m, dtype=np.int8)
    found = []

    def rec(j):
        if j == m:
            if len(found) >= cap:
                raise ResourceCapError(f"more than {cap} feasible configurations")
            found.append(cur.copy())
            return
        e = order[j]
        u, v = tails[e], heads[e]
        ru, rv = rem_after[j]
        for x in range(-bound, bound + 1):
            du, dv = div[u] + x, div[v] - x
            if abs(rho[u] - du) > ru * bound or abs(rho[v] - dv) > rv * bound:
                continue
            div[u], div[v] = du, dv
            cur[e] = x
            rec(j + 1)
            div[u], div[v] = du - x, dv + x
        cur[e] = 0

    if any(rho):
        if sum(rho) != 0:
            return np.zeros((0, m), dtype=np.int8)
    rec(0)
    return np.array(found, dtype=np.int8).reshape(-1, m)


def _single_commodity_rows(inst, i, loopless, cap):
    net = inst.network
    c = inst.commodities[i]
    if loopless:
        return all_simple_paths(net, c.source, c.sink, limit=cap)
    return gauss_solutions(net, inst.demand_vector(i), bound=c.demand, cap=cap)


def enumerate_feasible(inst, loopless=True, cap=DEFAULT_FEASIBLE_CAP):
    """Every feasible configuration (optionally loop-free), sorted."""
    if inst.k == 0:
        raise InvalidArgument("instance has no commodities")
    per = [_single_commodity_rows(inst, i, loopless, cap) for i in range(inst.k)]
    if inst.k == 1:
        return FeasibleBasis(inst, per[0][:, None, :], loopless)
    total = int(np.prod([len(p) for p in per], dtype=object))
    if total > cap:
        raise ResourceCapError(f"product feasible space of size {total} exceeds cap {cap}")
    factors = [FeasibleBasis(inst.single(i), per[i][:, None, :], loopless) for i in range(inst.k)]
    grids = np.meshgrid(*[np.arange(f.dim) for f in factors], indexing="ij")
    idx = [g.reshape(-1) for g in grids]
    configs = np.stack([factors[i].configs[idx[i], 0, :] for i in range(inst.k)], axis=1)
    return FeasibleBasis(inst, configs, loopless, factors=factors)


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------


@dataclass
class StateVector:
    amplitudes: np.ndarray
    basis: object

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.size != self.basis.dim:
            raise BasisMismatchError(f"{amps.size} amplitudes for a basis of dimension {self.basis.dim}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise InvalidArgument(f"state is not normalised (norm={norm!r})")
        self.amplitudes = amps

    @classmethod
    def normalized(cls, amplitudes, basis):
        amps = np.asarray(amplitudes, dtype=np.complex128)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise InvalidArgument("cannot normalise the zero vector")
        return cls(amps / norm, basis)

    @property
    def dim(self):
        return self.amplitudes.size

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self):
        return np.abs(self.amplitudes) ** 2

    def overlap(self, other):
        require_same_basis(self.basis, other.basis)
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def uniform_superposition(basis):
    if basis.dim == 0:
        raise InvalidArgument("empty basis")
    return StateVector(np.full(basis.dim, 1.0 / np.sqrt(basis.dim), dtype=np.complex128), basis)


def basis_state(cfg, basis):
    amps = np.zeros(basis.dim, dtype=np.complex128)
    amps[basis.index(cfg)] = 1.0
    return StateVector(amps, basis)


def embed(state, target):
    """Place a state's amplitudes into a larger basis (explicit cross-basis step)."""
    if same_basis(state.basis, target):
        return state
    src = state.basis
    if isinstance(src, ConfigBasis):
        configs = src.configs()
    else:
        configs = src.configs
    idx = target.lookup(configs)
    support = np.abs(state.amplitudes) > 0
    if np.any(idx[support] < 0):
        raise NotInBasisError("state has support outside the target basis")
    amps = np.zeros(target.dim, dtype=np.complex128)
    amps[idx[support]] = state.amplitudes[support]
    return StateVector(amps, target)


def product_state(states, basis):
    """Tensor product of per-commodity factor states on a product basis."""
    if basis.factors is None or len(states) != len(basis.factors):
        raise InvalidArgument("product_state needs one state per basis factor")
    amps = np.ones(1, dtype=np.complex128)
    for st, fac in zip(states, basis.factors):
        require_same_basis(st.basis, fac)
        amps = np.kron(amps, st.amplitudes)
    return StateVector(amps, basis)


def basis_configs(basis):
    return basis.configs() if isinstance(basis, ConfigBasis) else basis.configs


def feasibility_masks(basis):
    """(feasible, loopless-feasible) boolean masks over a basis."""
    inst = basis.inst
    configs = basis_configs(basis)
    if isinstance(basis, FeasibleBasis):
        feas = np.ones(basis.dim, dtype=bool)
    else:
        feas = feasible_mask(configs, inst)
    if isinstance(basis, FeasibleBasis) and basis.loopless:
        return feas, feas.copy()
    clean = feas.copy()
    clean[feas] = ~loop_mask(configs[feas], inst)
    return feas, clean


def basis_costs(basis):
    return cost_values(basis_configs(basis), basis.inst)


# ---------------------------------------------------------------------------
# census
# ---------------------------------------------------------------------------

CENSUS_FIELDS = ["graph", "total_states", "feasible_states", "fraction"]
CENSUS_LOOP_FIELDS = ["feasible_with_loops", "fraction_with_loops"]


def census_row(inst, graph_label, with_loops=False, cap=DEFAULT_FEASIBLE_CAP):
    levels = _levels(inst)
    total = int(np.prod([lv ** inst.network.n_edges for lv in levels], dtype=object)) if levels else 1
    if inst.k == 0:
        feasible = total
        row = {"graph": graph_label, "total_states": total, "feasible_states": feasible, "fraction": 1.0}
        if with_loops:
            row.update(feasible_with_loops=total, fraction_with_loops=1.0)
        return row
    feasible = enumerate_feasible(inst, loopless=True, cap=cap).dim
    row = {
        "graph": graph_label,
        "total_states": total,
        "feasible_states": feasible,
        "fraction": feasible / total,
    }
    if with_loops:
        loopy = enumerate_feasible(inst, loopless=False, cap=cap).dim
        row.update(feasible_with_loops=loopy, fraction_with_loops=loopy / total)
    return row


def format_census(rows, with_loops=False):
    buf = io.StringIO()
    fields = CENSUS_FIELDS + (CENSUS_LOOP_FIELDS if with_loops else [])
    w = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        out = dict(r)
        for key in ("fraction", "fraction_with_loops"):
            if key in out and isinstance(out[key], float):
                out[key] = f"{out[key]:.1e}"
        w.writerow(out)
    return buf.getvalue()

"""Flow networks, problem instances and classical flow bookkeeping.

A flow configuration is an integer array of shape ``(k, |E|)``: one row per
commodity, values read along each edge's canonical orientation.  Single
commodity helpers also accept a flat ``(|E|,)`` row.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import (
    InvalidArgument,
    NoPathError,
    PreconditionViolation,
    ResourceCapError,
)

SSSP = "sssp"
EDP = "edp"


@dataclass(frozen=True)
class Face:
    """An oriented elementary cycle.

    ``signs[j]`` is +1 when walking ``vertices[j] -> vertices[j+1]`` agrees
    with the canonical orientation of ``edges[j]``.
    """

    vertices: tuple
    edges: tuple
    signs: tuple

    def __len__(self):
        return len(self.vertices)


class FlowNetwork:
    def __init__(
        self,
        n_vertices,
        edges,
        weights=None,
        capacities=None,
        faces=(),
        name="graph",
        meta=None,
    ):
        if n_vertices < 1:
            raise InvalidArgument("a network needs at least one vertex")
        self.n_vertices = int(n_vertices)
        self.edges = tuple((int(u), int(v)) for u, v in edges)
        self.name = name
        self.meta = dict(meta or {})

        self._lookup = {}
        for e, (u, v) in enumerate(self.edges):
            if u == v:
                raise InvalidArgument(f"self-loop at vertex {u}")
            if not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise InvalidArgument(f"edge {(u, v)} references a missing vertex")
            if (u, v) in self._lookup:
                raise InvalidArgument(f"duplicate edge {(u, v)}")
            self._lookup[(u, v)] = (e, 1)
            self._lookup[(v, u)] = (e, -1)

        m = len(self.edges)
        self.tails = np.array([u for u, _ in self.edges], dtype=np.int64)
        self.heads = np.array([v for _, v in self.edges], dtype=np.int64)
        self.weights = np.ones(m) if weights is None else np.asarray(weights, dtype=float).copy()
        if self.weights.shape != (m,):
            raise InvalidArgument("need one weight per edge")
        if capacities is None:
            capacities = [None] * m
        if len(capacities) != m:
            raise InvalidArgument("need one capacity per edge")
        for c in capacities:
            if c is not None and int(c) < 1:
                raise InvalidArgument("capacities must be positive integers")
        self.capacities = tuple(None if c is None else int(c) for c in capacities)

        self._build_adjacency()
        self.faces = tuple(self._make_face(cycle) for cycle in faces)
        self.loop_matrix = np.zeros((len(self.faces), m), dtype=np.int8)
        for f, face in enumerate(self.faces):
            self.loop_matrix[f, list(face.edges)] = face.signs
        self.weights.setflags(write=False)

    # -- construction helpers -------------------------------------------------

    def _build_adjacency(self):
        nbrs = [[] for _ in range(self.n_vertices)]
        for e, (u, v) in enumerate(self.edges):
            nbrs[u].append((v, e, 1))
            nbrs[v].append((u, e, -1))
        ptr = [0]
        flat = []
        for lst in nbrs:
            flat.extend(sorted(lst))
            ptr.append(len(flat))
        self.adj_ptr = np.array(ptr, dtype=np.int64)
        self.adj_nbr = np.array([x[0] for x in flat], dtype=np.int64)
        self.adj_edge = np.array([x[1] for x in flat], dtype=np.int64)
        self.adj_sign = np.array([x[2] for x in flat], dtype=np.int8)

    def _make_face(self, cycle):
        cycle = tuple(int(v) for v in cycle)
        if len(cycle) < 3:
            raise InvalidArgument(f"face {cycle} has fewer than 3 vertices")
        if len(set(cycle)) != len(cycle):
            raise InvalidArgument(f"face {cycle} repeats a vertex")
        edges, signs = [], []
        for j, u in enumerate(cycle):
            v = cycle[(j + 1) % len(cycle)]
            if (u, v) not in self._lookup:
                raise InvalidArgument(f"face {cycle} uses missing edge {(u, v)}")
            e, s = self._lookup[(u, v)]
            edges.append(e)
            signs.append(s)
        return Face(cycle, tuple(edges), tuple(signs))

    # -- queries --------------------------------------------------------------

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_faces(self):
        return len(self.faces)

    def edge(self, u, v):
        """Return ``(edge_index, sign)`` for the ordered pair ``(u, v)``."""
        try:
            return self._lookup[(u, v)]
        except KeyError:
            raise InvalidArgument(f"no edge between {u} and {v}") from None

    def has_edge(self, u, v):
        return (u, v) in self._lookup

    def neighbors(self, v):
        return self.adj_nbr[self.adj_ptr[v] : self.adj_ptr[v + 1]].tolist()

    def flow(self, row, u, v):
        """Signed flow from ``u`` to ``v`` in a single-commodity flow row."""
        e, s = self.edge(u, v)
        return int(row[e]) * s

    @property
    def incidence(self):
        """(|V|, |E|) matrix with +1 at each edge's tail and -1 at its head."""
        inc = np.zeros((self.n_vertices, self.n_edges), dtype=np.int64)
        inc[self.tails, np.arange(self.n_edges)] += 1
        inc[self.heads, np.arange(self.n_edges)] -= 1
        return inc

    def n_components(self):
        seen = np.zeros(self.n_vertices, dtype=bool)
        count = 0
        for root in range(self.n_vertices):
            if seen[root]:
                continue
            count += 1
            stack = [root]
            seen[root] = True
            while stack:
                v = stack.pop()
                for w in self.neighbors(v):
                    if not seen[w]:
                        seen[w] = True
                        stack.append(w)
        return count

    def cycle_rank(self):
        return self.n_edges - self.n_vertices + self.n_components()

    def connected(self, a, b):
        seen = {a}
        stack = [a]
        while stack:
            v = stack.pop()
            if v == b:
                return True
            for w in self.neighbors(v):
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return False

    def faces_form_cycle_basis(self):
        if self.n_faces != self.cycle_rank():
            return False
        if self.n_faces == 0:
            return True
        return int(np.linalg.matrix_rank(self.loop_matrix.astype(float))) == self.n_faces

    def edge_faces(self):
        """For each edge, the list of ``(face_index, sign)`` pairs containing it."""
        out = [[] for _ in range(self.n_edges)]
        for f, face in enumerate(self.faces):
            for e, s in zip(face.edges, face.signs):
                out[e].append((f, s))
        return out

    def path_flow(self, vertex_path):
        """Unit flow row along a vertex sequence."""
        row = np.zeros(self.n_edges, dtype=np.int8)
        for u, v in zip(vertex_path[:-1], vertex_path[1:]):
            e, s = self.edge(u, v)
            row[e] += s
        return row

    def __repr__(self):
        return (
            f"FlowNetwork({self.name!r}, |V|={self.n_vertices}, |E|={self.n_edges}, "
            f"faces={self.n_faces})"
        )


# ---------------------------------------------------------------------------
# built-in families
# ---------------------------------------------------------------------------


def build_grid(rows, cols):
    """Square grid; vertex ``r*cols + c`` sits at x=c, y=r.

    Edges point right and up; every unit square is a counterclockwise face.
    """
    if rows < 2 or cols < 2:
        raise InvalidArgument("grid dimensions must both be >= 2")
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    faces = []
    for r in range(rows - 1):
        for c in range(cols - 1):
            v = r * cols + c
            faces.append((v, v + 1, v + 1 + cols, v + cols))
    return FlowNetwork(
        rows * cols,
        edges,
        faces=faces,
        name=f"grid{rows}x{cols}",
        meta={"family": "grid", "rows": rows, "cols": cols},
    )


def build_triangle_chain(n_triangles):
    """Chain of triangles glued along shared spokes around a hub vertex.

    Vertex 0 is the hub and vertices ``1..m`` form the rim, with
    ``m = max(4, n_triangles)``.  Triangle ``k`` is ``(hub, rim_k, rim_{k+1})``.
    Every rim vertex carries a spoke, so up to four triangles the graph has
    ``n_triangles + 4`` edges on five vertices; four triangles close into a
    wheel.  The source and sink corners are the two rim ends of the first
    triangle.
    """
    if n_triangles < 1:
        raise InvalidArgument("need at least one triangle")
    m = max(4, n_triangles)
    hub = 0
    rim = list(range(1, m + 1))
    edges = [(hub, r) for r in rim]
    for k in range(n_triangles):
        edges.append((rim[k], rim[(k + 1) % m]))
    faces = [(hub, rim[k], rim[(k + 1) % m]) for k in range(n_triangles)]
    return FlowNetwork(
        m + 1,
        edges,
        faces=faces,
        name=f"triangle{n_triangles}",
        meta={
            "family": "triangle",
            "n_triangles": n_triangles,
            "hub": hub,
            "source_corner": rim[0],
            "sink_corner": rim[1],
        },
    )


@dataclass(frozen=True)
class GraphFamily:
    """A named built-in family plus its size parameters."""

    kind: str
    size: tuple

    def build(self):
        if self.kind == "grid":
            return build_grid(*self.size)
        if self.kind == "triangle":
            return build_triangle_chain(*self.size)
        raise InvalidArgument(f"unknown graph family {self.kind!r}")

    @property
    def label(self):
        if self.kind == "grid":
            return f"grid{self.size[0]}x{self.size[1]}"
        return f"{self.kind}{'x'.join(map(str, self.size))}"

    @classmethod
    def parse(cls, text):
        """Parse ``"grid:3x4"``, ``"grid3x4"``, ``"triangle:2"`` or ``"triangle2"``."""
        text = text.strip().lower()
        for kind in ("grid", "triangle"):
            if text.startswith(kind):
                rest = text[len(kind) :].lstrip(":")
                try:
                    size = tuple(int(x) for x in rest.split("x"))
                except ValueError:
                    break
                if kind == "grid" and len(size) == 2 or kind == "triangle" and len(size) == 1:
                    return cls(kind, size)
        raise InvalidArgument(f"cannot parse graph family {text!r}")


# ---------------------------------------------------------------------------
# problem instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Commodity:
    source: int
    sink: int
    demand: int = 1


@dataclass(frozen=True)
class ProblemInstance:
    network: FlowNetwork
    commodities: tuple
    kind: str = SSSP
    penalty: float = 1.0
    seed: int | None = None
    label: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "commodities", tuple(self.commodities))
        if self.kind not in (SSSP, EDP):
            raise InvalidArgument(f"unknown problem kind {self.kind!r}")
        for c in self.commodities:
            if c.source == c.sink:
                raise InvalidArgument("source and sink must differ")
            if c.demand != 1:
                raise InvalidArgument("only unit demands are supported")
            for v in (c.source, c.sink):
                if not 0 <= v < self.network.n_vertices:
                    raise InvalidArgument(f"vertex {v} is not in the network")
        if self.kind == SSSP and len(self.commodities) != 1:
            raise InvalidArgument("SSSP has exactly one commodity")
        if self.kind == EDP and not np.all(self.network.weights == 1.0):
            raise InvalidArgument("EDP instances are unweighted")
        if self.penalty < 0:
            raise InvalidArgument("penalty must be non-negative")

    @property
    def k(self):
        return len(self.commodities)

    def single(self, i):
        """The one-commodity instance for commodity ``i`` (same network)."""
        return ProblemInstance(self.network, (self.commodities[i],), self.kind, self.penalty, self.seed)

    def demand_vector(self, i):
        c = self.commodities[i]
        rho = np.zeros(self.network.n_vertices, dtype=np.int64)
        rho[c.source] += c.demand
        rho[c.sink] -= c.demand
        return rho


def _as_config(cfg, inst):
    cfg = np.asarray(cfg)
    if cfg.ndim == 1:
        cfg = cfg[None, :]
    if cfg.shape != (inst.k, inst.network.n_edges):
        raise InvalidArgument(f"config shape {cfg.shape} does not match instance")
    return cfg


def zero_config(inst):
    return np.zeros((inst.k, inst.network.n_edges), dtype=np.int8)


def divergence(net, cfg, v, i=0):
    """Net outflow of commodity ``i`` at vertex ``v``."""
    row = np.asarray(cfg)
    if row.ndim == 2:
        row = row[i]
    return int(row[net.tails == v].sum() - row[net.heads == v].sum())


def is_feasible(cfg, inst):
    cfg = _as_config(cfg, inst)
    inc = inst.network.incidence
    for i in range(inst.k):
        if not np.array_equal(inc @ cfg[i].astype(np.int64), inst.demand_vector(i)):
            return False
    return True


def has_isolated_loop(cfg, inst):
    """True if some commodity's flow is more than a single simple path."""
    cfg = _as_config(cfg, inst)
    if not is_feasible(cfg, inst):
        raise PreconditionViolation("isolated-loop test needs a feasible configuration")
    return bool(loop_mask(cfg[None], inst)[0])


def loop_mask(configs, inst):
    """Vectorised isolated-loop test over ``(N, k, E)`` feasible configs."""
    net = inst.network
    configs = np.ascontiguousarray(configs, dtype=np.int8)
    out = np.zeros(configs.shape[0], dtype=bool)
    for i, c in enumerate(inst.commodities):
        out |= _kernels.loop_flags(
            np.ascontiguousarray(configs[:, i, :]),
            net.adj_ptr,
            net.adj_nbr,
            net.adj_edge,
            net.adj_sign,
            c.source,
            c.sink,
        )
    return out


def feasible_mask(configs, inst):
    """Gauss-law check over ``(N, k, E)`` configs."""
    net = inst.network
    ok = np.ones(configs.shape[0], dtype=bool)
    for i in range(inst.k):
        div = _kernels.divergences(
            np.ascontiguousarray(configs[:, i, :], dtype=np.int8), net.tails, net.heads, net.n_vertices
        )
        ok &= (div == inst.demand_vector(i)).all(axis=1)
    return ok


def violation_squares(configs, inst):
    """Sum over vertices and commodities of the squared Gauss-law violation."""
    net = inst.network
    total = np.zeros(configs.shape[0], dtype=np.int64)
    for i in range(inst.k):
        div = _kernels.divergences(
            np.ascontiguousarray(configs[:, i, :], dtype=np.int8), net.tails, net.heads, net.n_vertices
        )
        total += ((div - inst.demand_vector(i)) ** 2).sum(axis=1)
    return total


def edp_edge_cost(total_flow):
    """Per-edge congestion cost ((2E^2-1)^2-1)/48, exact for integer E."""
    e2 = np.asarray(total_flow, dtype=np.int64) ** 2
    return (e2 * (e2 - 1)) // 12


def cost_values(configs, inst):
    """Classical cost for every config in an ``(N, k, E)`` stack."""
    configs = np.asarray(configs)
    if inst.kind == EDP:
        total = configs.astype(np.int64).sum(axis=1)
        return edp_edge_cost(total).sum(axis=1).astype(float)
    f = configs[:, 0, :].astype(float)
    return (f * f) @ inst.network.weights


def classical_cost(cfg, inst):
    cfg = _as_config(cfg, inst)
    return float(cost_values(cfg[None], inst)[0])


# ---------------------------------------------------------------------------
# random instances and seed paths
# ---------------------------------------------------------------------------


def _random_pair(rng, n):
    s, t = rng.choice(n, size=2, replace=False)
    return int(s), int(t)


def random_instance(family, kind, rng_seed, k=2, penalty=1.0):
    """Draw a random SSSP or EDP instance on a built-in graph family."""
    if isinstance(family, str):
        family = GraphFamily.parse(family)
    net = family.build()
    rng = np.random.default_rng(rng_seed)
    if kind == SSSP:
        weights = rng.uniform(0.0, 1.0, size=net.n_edges)
        if family.kind == "triangle":
            s, t = net.meta["source_corner"], net.meta["sink_corner"]
        else:
            s, t = _random_pair(rng, net.n_vertices)
        net = FlowNetwork(
            net.n_vertices,
            net.edges,
            weights=weights,
            capacities=net.capacities,
            faces=[f.vertices for f in net.faces],
            name=net.name,
            meta=net.meta,
        )
        commodities = (Commodity(s, t),)
    elif kind == EDP:
        commodities = tuple(Commodity(*_random_pair(rng, net.n_vertices)) for _ in range(k))
    else:
        raise InvalidArgument(f"unknown problem kind {kind!r}")
    return ProblemInstance(net, commodities, kind, penalty, rng_seed, label=family.label)


def all_simple_paths(net, s, t, limit=10**7):
    """Every simple s-t path as unit-flow rows, shape (N, |E|), int8."""
    rows, overflow = _kernels.simple_paths(
        net.adj_ptr, net.adj_nbr, net.adj_edge, net.adj_sign, int(s), int(t), net.n_edges, int(limit)
    )
    if overflow:
        raise ResourceCapError(f"more than {limit} simple paths between {s} and {t}")
    return rows


def _lerw(net, s, t, rng):
    path = [s]
    where = {s: 0}
    v = s
    while v != t:
        nb = net.neighbors(v)
        w = nb[int(rng.integers(len(nb)))]
        if w in where:
            cut = where[w]
            for x in path[cut + 1 :]:
                del where[x]
            path = path[: cut + 1]
        else:
            where[w] = len(path)
            path.append(w)
        v = w
    return path


def seed_path(inst, i, rng_seed, method="lerw"):
    """A random simple path for commodity ``i`` as a full flow config.

    ``method="lerw"`` runs a loop-erased random walk (scales, but is not
    exactly uniform over paths); ``method="uniform"`` draws uniformly from the
    enumerated path set.  Other commodities' rows are left at zero.
    """
    net = inst.network
    c = inst.commodities[i]
    if not net.connected(c.source, c.sink):
        raise NoPathError(f"no path between {c.source} and {c.sink}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    cfg = zero_config(inst)
    if method == "lerw":
        cfg[i] = net.path_flow(_lerw(net, c.source, c.sink, rng))
    elif method == "uniform":
        paths = all_simple_paths(net, c.source, c.sink)
        cfg[i] = paths[int(rng.integers(len(paths)))]
    else:
        raise InvalidArgument(f"unknown seed-path method {method!r}")
    return cfg


# ---------------------------------------------------------------------------
# text graph format
# ---------------------------------------------------------------------------


def write_network(net, path):
    lines = [f"vertices {net.n_vertices}"]
    for (u, v), w, c in zip(net.edges, net.weights, net.capacities):
        lines.append(f"edge {u} {v} {float(w)!r} {'inf' if c is None else c}")
    for face in net.faces:
        lines.append("face " + " ".join(map(str, face.vertices)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_network(path, name=None):
    n = None
    edges, weights, caps, faces = [], [], [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        try:
            if head == "vertices":
                n = int(rest[0])
            elif head == "edge":
                u, v = int(rest[0]), int(rest[1])
                edges.append((u, v))
                weights.append(float(rest[2]) if len(rest) > 2 else 1.0)
                cap = rest[3] if len(rest) > 3 else "inf"
                caps.append(None if cap in ("inf", "-", "none") else int(cap))
            elif head == "face":
                faces.append(tuple(int(x) for x in rest))
            else:
                raise InvalidArgument(f"unknown record {head!r}")
        except (IndexError, ValueError) as exc:
            raise InvalidArgument(f"{path}:{lineno}: {exc}") from None
    if n is None:
        raise InvalidArgument(f"{path}: missing 'vertices' header")
    return FlowNetwork(n, edges, weights, caps, faces, name=name or Path(path).stem)

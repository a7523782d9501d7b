"""Face heights (dual-graph encoding) and path transformations by loop moves.

Any divergence-free flow difference on a planar graph is a unique integer
combination of the elementary face circulations.  The coefficients are the
face heights; the outer face sits at height 0.  Heights are integrated
breadth-first across the dual graph, which makes the map from a flow
difference to heights a fixed integer matrix per network.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import FlowRangeError, InfeasibilityError, InvalidArgument


def _row(cfg, net):
    row = np.asarray(cfg)
    if row.ndim == 2:
        if row.shape[0] != 1:
            raise InvalidArgument("heights are defined per commodity; pass a single row")
        row = row[0]
    if row.shape != (net.n_edges,):
        raise InvalidArgument("flow row does not match the network")
    return row.astype(np.int64)


def height_matrix(net):
    """Integer ``(F, E)`` matrix ``M`` with ``heights = M @ difference``.

    Also returns the breadth-first face order used for the integration.
    Cached on the network.
    """
    cached = getattr(net, "_height_matrix", None)
    if cached is not None:
        return cached
    F, E = net.n_faces, net.n_edges
    edge_faces = net.edge_faces()
    M = np.zeros((F, E), dtype=np.int64)
    known = np.zeros(F, dtype=bool)
    order = []
    queue = deque()
    # faces on the outer boundary: a boundary edge carries exactly its face's circulation
    for e, fs in enumerate(edge_faces):
        if len(fs) == 1:
            f, s = fs[0]
            if not known[f]:
                known[f] = True
                M[f, e] = s
                order.append(f)
                queue.append(f)
    while queue:
        f = queue.popleft()
        for e, s in zip(net.faces[f].edges, net.faces[f].signs):
            for g, sg in edge_faces[e]:
                if g == f or known[g]:
                    continue
                # d_e = s h_f + sg h_g  =>  h_g = sg (d_e - s h_f)
                row = -s * M[f]
                row[e] += 1
                M[g] = sg * row
                known[g] = True
                order.append(g)
                queue.append(g)
    if not known.all():
        raise InvalidArgument("some faces are not reachable from the outer boundary")
    result = (M, tuple(order))
    net._height_matrix = result
    return result


def dual_heights(net, ref_cfg, target_cfg):
    """Face heights whose circulation turns ``ref_cfg`` into ``target_cfg``."""
    diff = _row(target_cfg, net) - _row(ref_cfg, net)
    if np.any(net.incidence @ diff):
        raise InfeasibilityError("flow difference is not divergence free")
    M, _ = height_matrix(net)
    h = M @ diff
    if not np.array_equal(net.loop_matrix.T.astype(np.int64) @ h, diff):
        raise InfeasibilityError("flow difference is not spanned by the faces")
    return h


def apply_heights(net, ref_cfg, heights, bound=1):
    """``ref + sum_f h_f * circulation_f``; the inverse of :func:`dual_heights`."""
    h = np.asarray(heights, dtype=np.int64)
    if h.shape != (net.n_faces,):
        raise InvalidArgument("need one height per face")
    out = _row(ref_cfg, net) + net.loop_matrix.T.astype(np.int64) @ h
    if bound is not None and np.abs(out).max(initial=0) > bound:
        raise FlowRangeError(f"resulting flow leaves [-{bound}, {bound}]")
    return out.astype(np.int8)


# ---------------------------------------------------------------------------
# path transformations
# ---------------------------------------------------------------------------


def path_vertices(net, row):
    """Vertex sequence of a unit flow that is a single simple path."""
    row = _row(row, net)
    div = net.incidence @ row
    src = np.flatnonzero(div == 1)
    snk = np.flatnonzero(div == -1)
    if src.size != 1 or snk.size != 1 or np.any(np.abs(div) > 1) or np.abs(row).max(initial=0) > 1:
        raise InvalidArgument("flow is not a unit s-t flow")
    s, t = int(src[0]), int(snk[0])
    seq = [s]
    seen = {s}
    v = s
    used = 0
    while v != t:
        nxt = [
            int(net.adj_nbr[k])
            for k in range(net.adj_ptr[v], net.adj_ptr[v + 1])
            if row[net.adj_edge[k]] * net.adj_sign[k] == 1
        ]
        if len(nxt) != 1 or nxt[0] in seen:
            raise InvalidArgument("flow is not a simple path")
        v = nxt[0]
        seen.add(v)
        seq.append(v)
        used += 1
    if used != np.count_nonzero(row):
        raise InvalidArgument("flow carries an isolated loop")
    return seq


def path_transform(net, P1, P2):
    """Signed plaquette moves ``[(face, +-1), ...]`` that turn ``P1`` into ``P2``.

    Faces are listed by increasing ``|height|`` (ties in breadth-first order),
    each repeated ``|height|`` times.
    """
    a, b = path_vertices(net, P1), path_vertices(net, P2)
    if (a[0], a[-1]) != (b[0], b[-1]):
        raise InvalidArgument("paths have different endpoints")
    h = dual_heights(net, P1, P2)
    _, order = height_matrix(net)
    rank = {f: j for j, f in enumerate(order)}
    faces = sorted(np.flatnonzero(h).tolist(), key=lambda f: (abs(int(h[f])), rank[f]))
    ops = []
    for f in faces:
        ops.extend([(int(f), int(np.sign(h[f])))] * abs(int(h[f])))
    return ops


def replay(net, P1, ops):
    """Apply a move list to ``P1``; returns every intermediate flow row."""
    cur = _row(P1, net).copy()
    trail = [cur.copy()]
    for f, d in ops:
        cur = cur + d * net.loop_matrix[f].astype(np.int64)
        trail.append(cur.copy())
    return trail


@dataclass
class RegionReport:
    """Decomposition of a path pair at their shared vertices."""

    regions: list  # (start_vertex, end_vertex, op_count)
    consistent: bool  # shared vertices appear in the same order on both paths
    total_ops: int

    @property
    def single_region(self):
        return self.consistent and len(self.regions) == 1


def transform_regions(net, P1, P2):
    """Split a transform into regions between consecutive shared vertices.

    If the shared vertices are not visited in the same order by both paths
    the split is not defined; the whole height field is then reported as one
    region with ``consistent=False``.
    """
    a, b = path_vertices(net, P1), path_vertices(net, P2)
    total = int(np.abs(dual_heights(net, P1, P2)).sum())
    pos_b = {v: j for j, v in enumerate(b)}
    common = [v for v in a if v in pos_b]
    order_b = [pos_b[v] for v in common]
    if order_b != sorted(order_b):
        return RegionReport([(a[0], a[-1], total)], False, total)
    pos_a = {v: j for j, v in enumerate(a)}
    regions = []
    for u, v in zip(common[:-1], common[1:]):
        sa, sb = a[pos_a[u] : pos_a[v] + 1], b[pos_b[u] : pos_b[v] + 1]
        if sa == sb:
            continue
        diff = net.path_flow(sb).astype(np.int64) - net.path_flow(sa)
        M, _ = height_matrix(net)
        regions.append((u, v, int(np.abs(M @ diff).sum())))
    return RegionReport(regions, True, total)


def pairwise_op_counts(net, paths):
    """``Σ_f |h_f|`` for every ordered pair of rows in an ``(N, E)`` path stack."""
    M, _ = height_matrix(net)
    g = np.asarray(paths, dtype=np.int64) @ M.T
    return np.abs(g[None, :, :] - g[:, None, :]).sum(axis=2)


@dataclass
class PairRegionTable:
    """Region statistics for every ordered pair of paths in a stack."""

    consistent: np.ndarray
    n_regions: np.ndarray
    max_region_ops: np.ndarray
    # regions may overlap with opposite orientation, so this can exceed the height count
    region_op_sum: np.ndarray


def pairwise_regions(net, paths):
    """Vectorised :func:`transform_regions` over all ordered pairs of ``paths``.

    Region columns are zero for inconsistent pairs; use
    :func:`pairwise_op_counts` for the height-field count of every pair.
    """
    paths = np.asarray(paths)
    n, V = len(paths), net.n_vertices
    M, _ = height_matrix(net)
    seqs = np.full((n, V), -1, dtype=np.int64)
    lens = np.zeros(n, dtype=np.int64)
    pos = np.full((n, V), -1, dtype=np.int64)
    gp = np.zeros((n, V, net.n_faces), dtype=np.int64)
    for i, row in enumerate(paths):
        seq = path_vertices(net, row)
        lens[i] = len(seq)
        seqs[i, : len(seq)] = seq
        pos[i, seq] = np.arange(len(seq))
        prefix = np.zeros(net.n_edges, dtype=np.int64)
        for k, (u, v) in enumerate(zip(seq[:-1], seq[1:]), start=1):
            e, s = net.edge(u, v)
            prefix[e] += s
            gp[i, k] = M @ prefix
    c, nr, mx, tot = _kernels.pair_regions(seqs, lens, pos, gp)
    return PairRegionTable(c, nr, mx, tot)


def trace_json(ops):
    return json.dumps([{"face_id": f, "direction": d} for f, d in ops])

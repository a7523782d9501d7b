"""Inner loops shared by the basis, operator and dynamics modules.

Every kernel exists twice: a numba-compiled ``*_nb`` version and a plain
numpy/Python ``*_np`` version with identical semantics.  The unsuffixed name is
bound to one of them at import time.  Set ``QEDQAOA_NUMBA=0`` in the
environment to force the numpy path (also used automatically when numba is not
importable).
"""

import os

import numpy as np
import scipy.sparse as sp

# the TBB build shipped with some numba wheels is too old and warns on import
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("QEDQAOA_NUMBA", "1").strip().lower() not in (
    "0",
    "false",
    "no",
    "off",
)

if not HAVE_NUMBA:  # pragma: no cover

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f

    prange = range


# ---------------------------------------------------------------------------
# simple s-t paths
# ---------------------------------------------------------------------------


@njit(cache=True)
def simple_paths_nb(ptr, nbr, eid, esign, s, t, n_edges, limit):
    nv = ptr.size - 1
    cap = 64
    out = np.zeros((cap, n_edges), np.int8)
    count = 0
    on_path = np.zeros(nv, np.bool_)
    stack_v = np.empty(nv + 1, np.int64)
    stack_k = np.empty(nv + 1, np.int64)
    stack_e = np.empty(nv + 1, np.int64)
    cur = np.zeros(n_edges, np.int8)
    depth = 0
    stack_v[0] = s
    stack_k[0] = ptr[s]
    stack_e[0] = -1
    on_path[s] = True
    while depth >= 0:
        v = stack_v[depth]
        k = stack_k[depth]
        if v != t and k < ptr[v + 1]:
            stack_k[depth] = k + 1
            w = nbr[k]
            if not on_path[w]:
                cur[eid[k]] = esign[k]
                on_path[w] = True
                depth += 1
                stack_v[depth] = w
                stack_k[depth] = ptr[w]
                stack_e[depth] = eid[k]
            continue
        if v == t:
            if count == limit:
                return out[:count], True
            if count == cap:
                cap *= 2
                grown = np.zeros((cap, n_edges), np.int8)
                grown[:count] = out[:count]
                out = grown
            out[count] = cur
            count += 1
        on_path[v] = False
        if stack_e[depth] >= 0:
            cur[stack_e[depth]] = 0
        depth -= 1
    return out[:count], False


def simple_paths_np(ptr, nbr, eid, esign, s, t, n_edges, limit):
    ptr = ptr.tolist()
    nbr = nbr.tolist()
    eid = eid.tolist()
    esign = esign.tolist()
    found = []
    cur = [0] * n_edges
    on_path = [False] * (len(ptr) - 1)
    on_path[s] = True
    # (vertex, next adjacency slot, edge used to get here)
    stack = [[s, ptr[s], -1]]
    while stack:
        frame = stack[-1]
        v, k = frame[0], frame[1]
        if v != t and k < ptr[v + 1]:
            frame[1] = k + 1
            w = nbr[k]
            if not on_path[w]:
                cur[eid[k]] = esign[k]
                on_path[w] = True
                stack.append([w, ptr[w], eid[k]])
            continue
        if v == t:
            if len(found) == limit:
                return np.array(found, dtype=np.int8).reshape(-1, n_edges), True
            found.append(list(cur))
        on_path[v] = False
        if frame[2] >= 0:
            cur[frame[2]] = 0
        stack.pop()
    return np.array(found, dtype=np.int8).reshape(-1, n_edges), False


# ---------------------------------------------------------------------------
# isolated-loop detection for unit-demand feasible flows
# ---------------------------------------------------------------------------


@njit(cache=True)
def loop_flags_nb(flows, ptr, nbr, eid, esign, s, t):
    n = flows.shape[0]
    nv = ptr.size - 1
    out = np.zeros(n, np.bool_)
    seen = np.zeros(nv, np.bool_)
    for r in range(n):
        f = flows[r]
        carried = 0
        bad = False
        for e in range(f.size):
            if f[e] != 0:
                carried += 1
                if f[e] > 1 or f[e] < -1:
                    bad = True
        if bad:
            out[r] = True
            continue
        seen[:] = False
        v = s
        seen[v] = True
        steps = 0
        while True:
            nxt = -1
            n_out = 0
            for k in range(ptr[v], ptr[v + 1]):
                if f[eid[k]] * esign[k] == 1:
                    n_out += 1
                    nxt = nbr[k]
            if v == t:
                if n_out != 0:
                    bad = True
                break
            if n_out != 1 or seen[nxt]:
                bad = True
                break
            seen[nxt] = True
            steps += 1
            v = nxt
        out[r] = bad or steps != carried
    return out


def loop_flags_np(flows, ptr, nbr, eid, esign, s, t):
    flows = np.asarray(flows)
    out = np.zeros(flows.shape[0], dtype=bool)
    carried = np.count_nonzero(flows, axis=1)
    overfull = (np.abs(flows) > 1).any(axis=1)
    ptr = ptr.tolist()
    nbr = nbr.tolist()
    eid = eid.tolist()
    esign = esign.tolist()
    for r, f in enumerate(flows.tolist()):
        if overfull[r]:
            out[r] = True
            continue
        seen = {s}
        v = s
        steps = 0
        bad = False
        while True:
            outs = [nbr[k] for k in range(ptr[v], ptr[v + 1]) if f[eid[k]] * esign[k] == 1]
            if v == t:
                bad = bool(outs)
                break
            if len(outs) != 1 or outs[0] in seen:
                bad = True
                break
            v = outs[0]
            seen.add(v)
            steps += 1
        out[r] = bad or steps != carried[r]
    return out


# ---------------------------------------------------------------------------
# plaquette (Wilson loop) scan
# ---------------------------------------------------------------------------


@njit(cache=True)
def plaquette_scan_nb(flows, edges, signs, hi):
    """Per config: the decision count V and whether the +1 circulation fits."""
    n = flows.shape[0]
    ell = edges.size
    vcount = np.zeros(n, np.int64)
    fits = np.zeros(n, np.bool_)
    for r in range(n):
        ok = True
        acc = 0
        prev = flows[r, edges[ell - 1]] * signs[ell - 1]
        for j in range(ell):
            cur = flows[r, edges[j]] * signs[j]
            acc += (prev - cur) * (prev - cur)
            if cur + 1 > hi:
                ok = False
            prev = cur
        vcount[r] = acc
        fits[r] = ok
    return vcount, fits


def plaquette_scan_np(flows, edges, signs, hi):
    along = flows[:, edges].astype(np.int64) * signs
    vcount = ((np.roll(along, 1, axis=1) - along) ** 2).sum(axis=1)
    fits = (along + 1 <= hi).all(axis=1)
    return vcount, fits


# ---------------------------------------------------------------------------
# vertex divergences
# ---------------------------------------------------------------------------


@njit(cache=True)
def divergences_nb(flows, tails, heads, n_vertices):
    n = flows.shape[0]
    out = np.zeros((n, n_vertices), np.int64)
    for r in range(n):
        for e in range(tails.size):
            x = flows[r, e]
            if x != 0:
                out[r, tails[e]] += x
                out[r, heads[e]] -= x
    return out


def divergences_np(flows, tails, heads, n_vertices):
    inc = np.zeros((tails.size, n_vertices), dtype=np.int64)
    inc[np.arange(tails.size), tails] += 1
    inc[np.arange(tails.size), heads] -= 1
    return flows.astype(np.int64) @ inc


# ---------------------------------------------------------------------------
# same single-site unitary on every qudit of a product register
# ---------------------------------------------------------------------------


@njit(cache=True)
def qudit_apply_nb(psi, u, n_sites):
    d = u.shape[0]
    out = psi.copy()
    tmp = np.empty(d, np.complex128)
    stride = 1
    for _ in range(n_sites):
        block = stride * d
        for base in range(0, out.size, block):
            for off in range(stride):
                for a in range(d):
                    tmp[a] = out[base + off + a * stride]
                for a in range(d):
                    acc = 0j
                    for b in range(d):
                        acc += u[a, b] * tmp[b]
                    out[base + off + a * stride] = acc
        stride = block
    return out


def qudit_apply_np(psi, u, n_sites):
    d = u.shape[0]
    out = psi
    for site in range(n_sites):
        out = out.reshape(d**site, d, d ** (n_sites - site - 1))
        out = np.einsum("ab,ibj->iaj", u, out)
    return out.reshape(-1)


# ---------------------------------------------------------------------------
# CSR matrix-vector product
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def csr_matvec_nb(indptr, indices, data, x):
    n = indptr.size - 1
    out = np.zeros(n, np.complex128)
    for i in prange(n):
        acc = 0j
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        out[i] = acc
    return out


def csr_matvec_np(indptr, indices, data, x):
    n = indptr.size - 1
    return sp.csr_matrix((data, indices, indptr), shape=(n, x.size)) @ x


# ---------------------------------------------------------------------------
# region decomposition of path pairs (shared-vertex splitting)
# ---------------------------------------------------------------------------


@njit(cache=True)
def pair_regions_nb(seqs, lens, pos, gp):
    """Per ordered pair: consistent flag, region count, max and summed region ops.

    ``seqs[i, :lens[i]]`` is path i's vertex sequence, ``pos[i, v]`` the index
    of vertex v on path i (-1 if absent) and ``gp[i, k]`` the face heights of
    the first k edges of path i.
    """
    n = seqs.shape[0]
    nf = gp.shape[2]
    consistent = np.zeros((n, n), np.bool_)
    n_regions = np.zeros((n, n), np.int64)
    max_ops = np.zeros((n, n), np.int64)
    total = np.zeros((n, n), np.int64)
    for i in range(n):
        for j in range(n):
            ok = True
            last_b = -1
            prev_a = -1
            prev_b = -1
            nr = 0
            mx = 0
            tot = 0
            for k in range(lens[i]):
                v = seqs[i, k]
                b = pos[j, v]
                if b < 0:
                    continue
                if b < last_b:
                    ok = False
                    break
                last_b = b
                if prev_a >= 0:
                    c = 0
                    for f in range(nf):
                        d = gp[j, b, f] - gp[j, prev_b, f] - gp[i, k, f] + gp[i, prev_a, f]
                        c += d if d >= 0 else -d
                    if c > 0:
                        nr += 1
                        tot += c
                        if c > mx:
                            mx = c
                prev_a = k
                prev_b = b
            consistent[i, j] = ok
            if not ok:
                continue
            n_regions[i, j] = nr
            max_ops[i, j] = mx
            total[i, j] = tot
    return consistent, n_regions, max_ops, total


def pair_regions_np(seqs, lens, pos, gp):
    n = seqs.shape[0]
    consistent = np.zeros((n, n), dtype=bool)
    n_regions = np.zeros((n, n), dtype=np.int64)
    max_ops = np.zeros((n, n), dtype=np.int64)
    total = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        seq = seqs[i, : lens[i]]
        for j in range(n):
            b = pos[j, seq]
            hit = b >= 0
            ka = np.flatnonzero(hit)
            kb = b[hit]
            if np.any(np.diff(kb) < 0):
                continue
            consistent[i, j] = True
            d = gp[j, kb[1:]] - gp[j, kb[:-1]] - gp[i, ka[1:]] + gp[i, ka[:-1]]
            c = np.abs(d).sum(axis=1)
            c = c[c > 0]
            n_regions[i, j] = c.size
            max_ops[i, j] = c.max(initial=0)
            total[i, j] = c.sum()
    return consistent, n_regions, max_ops, total


if USE_NUMBA:
    simple_paths = simple_paths_nb
    loop_flags = loop_flags_nb
    plaquette_scan = plaquette_scan_nb
    divergences = divergences_nb
    qudit_apply = qudit_apply_nb
    csr_matvec = csr_matvec_nb
    pair_regions = pair_regions_nb
else:
    simple_paths = simple_paths_np
    loop_flags = loop_flags_np
    plaquette_scan = plaquette_scan_np
    divergences = divergences_np
    qudit_apply = qudit_apply_np
    csr_matvec = csr_matvec_np
    pair_regions = pair_regions_np

KERNELS = (
    "simple_paths",
    "loop_flags",
    "plaquette_scan",
    "divergences",
    "qudit_apply",
    "csr_matvec",
    "pair_regions",
)


def backend():
    return "numba" if USE_NUMBA else "numpy"

"""Wall-clock comparison of the numba and numpy kernel implementations.

Run with ``python benchmarks/bench_kernels.py``.  Each kernel is warmed up
once (so numba compile time is excluded) and then timed over several repeats.
"""

import argparse
import time

import numpy as np
import scipy.sparse as sp

from qedqaoa import _kernels as K
from qedqaoa.duality import height_matrix, path_vertices
from qedqaoa.graph import Commodity, ProblemInstance, all_simple_paths, build_grid
from qedqaoa.hilbert import basis_configs, enumerate_feasible, full_basis


def _cases():
    g4 = build_grid(4, 4)
    g3 = build_grid(3, 3)
    inst3 = ProblemInstance(g3, (Commodity(0, 8),))
    loopy = np.ascontiguousarray(enumerate_feasible(inst3, loopless=False).configs[:, 0, :])
    full = np.ascontiguousarray(basis_configs(full_basis(ProblemInstance(build_grid(2, 4), (Commodity(0, 7),))))[:, 0, :])
    face = g3.faces[0]
    rng = np.random.default_rng(0)
    m = sp.random(20000, 20000, density=5e-4, random_state=1, format="csr").astype(np.complex128)
    x = rng.standard_normal(20000).astype(np.complex128)
    psi = rng.standard_normal(3**10) + 1j * rng.standard_normal(3**10)
    u = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))

    P = all_simple_paths(g4, 0, 15)[:400]
    M, _ = height_matrix(g4)
    n, V = len(P), g4.n_vertices
    seqs = np.full((n, V), -1, dtype=np.int64)
    lens = np.zeros(n, dtype=np.int64)
    pos = np.full((n, V), -1, dtype=np.int64)
    gp = np.zeros((n, V, g4.n_faces), dtype=np.int64)
    for i, row in enumerate(P):
        seq = path_vertices(g4, row)
        lens[i] = len(seq)
        seqs[i, : len(seq)] = seq
        pos[i, seq] = np.arange(len(seq))
        prefix = np.zeros(g4.n_edges, dtype=np.int64)
        for k, (a, b) in enumerate(zip(seq[:-1], seq[1:]), start=1):
            e, s = g4.edge(a, b)
            prefix[e] += s
            gp[i, k] = M @ prefix

    return {
        "simple_paths": (g4.adj_ptr, g4.adj_nbr, g4.adj_edge, g4.adj_sign, 0, 15, g4.n_edges, 10**7),
        "loop_flags": (loopy, g3.adj_ptr, g3.adj_nbr, g3.adj_edge, g3.adj_sign, 0, 8),
        "plaquette_scan": (full, np.asarray(face.edges, dtype=np.int64), np.asarray(face.signs, dtype=np.int64), 1),
        "divergences": (full, *(lambda n: (n.tails, n.heads, n.n_vertices))(build_grid(2, 4))),
        "qudit_apply": (psi, u, 10),
        "csr_matvec": (m.indptr, m.indices, m.data, x),
        "pair_regions": (seqs, lens, pos, gp),
    }


def _time(fn, args, repeats):
    fn(*args)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        print("numba is not installed; only the numpy versions can run")
    print(f"{'kernel':<16}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name, call_args in _cases().items():
        t_np = _time(getattr(K, f"{name}_np"), call_args, args.repeats)
        t_nb = _time(getattr(K, f"{name}_nb"), call_args, args.repeats) if K.HAVE_NUMBA else np.nan
        print(f"{name:<16}{1e3 * t_nb:>12.2f}{1e3 * t_np:>12.2f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()

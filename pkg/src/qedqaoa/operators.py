"""Hamiltonians and projectors as sparse Hermitian operators over a basis.

Operators remember how they were built.  Diagonal operators keep their
diagonal, the X-mixer keeps its single-site block, and Kronecker sums over
commodities keep their factors.  The time-evolution code exploits these
structures, and the CSR matrix is only materialised when somebody asks for it.
"""

from __future__ import annotations

import csv
import io
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import (
    InvalidArgument,
    InvalidBasisError,
    InvalidCombinationError,
)
from .graph import violation_squares
from .hilbert import (
    ConfigBasis,
    FeasibleBasis,
    basis_configs,
    basis_costs,
    feasibility_masks,
    require_same_basis,
)

HERMITIAN_TOL = 1e-12


class SparseHermitianOperator:
    """A Hermitian operator on ``basis`` (CSR storage, built lazily)."""

    def __init__(self, basis, matrix=None, diagonal=None, factors=None, qudit_block=None, name="", dropped=0):
        self.basis = basis
        self.dim = basis.dim
        self.name = name
        self.dropped = int(dropped)
        self.diagonal = None if diagonal is None else np.asarray(diagonal, dtype=float)
        self.factors = tuple(factors) if factors else None
        self.qudit_block = None if qudit_block is None else np.asarray(qudit_block, dtype=complex)
        self._matrix = None
        if matrix is not None:
            m = sp.csr_matrix(matrix, dtype=np.complex128)
            m.sort_indices()
            if m.shape != (self.dim, self.dim):
                raise InvalidArgument(f"matrix shape {m.shape} does not match basis dimension {self.dim}")
            self._matrix = m
        if self.diagonal is not None and self.diagonal.shape != (self.dim,):
            raise InvalidArgument("diagonal length does not match basis dimension")
        if matrix is None and diagonal is None and factors is None and qudit_block is None:
            raise InvalidArgument("operator needs some representation")

    # -- representations ------------------------------------------------------

    @property
    def is_diagonal(self):
        return self.diagonal is not None

    @property
    def matrix(self):
        if self._matrix is None:
            if self.diagonal is not None:
                m = sp.diags(self.diagonal.astype(np.complex128), format="csr")
            elif self.factors is not None:
                m = _kron_sum([f.matrix for f in self.factors])
            else:
                m = _qudit_sum_matrix(self.qudit_block, self.basis)
            m.sort_indices()
            self._matrix = m.astype(np.complex128).tocsr()
        return self._matrix

    def toarray(self):
        return self.matrix.toarray()

    @property
    def nnz(self):
        return self.matrix.nnz

    def matvec(self, x):
        x = np.asarray(x, dtype=np.complex128)
        if self.diagonal is not None:
            return self.diagonal * x
        m = self.matrix
        return _kernels.csr_matvec(m.indptr, m.indices, m.data, x)

    __matmul__ = matvec

    def hermiticity_error(self):
        if self.diagonal is not None:
            return 0.0
        d = self.matrix - self.matrix.conj().T
        return float(abs(d).max()) if d.nnz else 0.0

    @property
    def hermitian(self):
        return self.hermiticity_error() <= HERMITIAN_TOL

    def entries(self):
        """Sorted ``(row, col, value)`` triplets."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]

    # -- algebra --------------------------------------------------------------

    def __add__(self, other):
        require_same_basis(self.basis, other.basis)
        if self.is_diagonal and other.is_diagonal:
            return SparseHermitianOperator(self.basis, diagonal=self.diagonal + other.diagonal, name="sum")
        return SparseHermitianOperator(self.basis, matrix=self.matrix + other.matrix, name="sum")

    def scaled(self, c):
        c = float(c)
        if self.is_diagonal:
            return SparseHermitianOperator(self.basis, diagonal=c * self.diagonal, name=self.name)
        if self.qudit_block is not None:
            return SparseHermitianOperator(self.basis, qudit_block=c * self.qudit_block, name=self.name)
        if self.factors is not None:
            return SparseHermitianOperator(
                self.basis, factors=[f.scaled(c) for f in self.factors], name=self.name, dropped=self.dropped
            )
        return SparseHermitianOperator(self.basis, matrix=c * self.matrix, name=self.name, dropped=self.dropped)

    def commutator_max(self, other):
        """Largest entry magnitude of ``[self, other]``."""
        require_same_basis(self.basis, other.basis)
        a, b = self.matrix, other.matrix
        c = a @ b - b @ a
        c.eliminate_zeros()
        return float(abs(c).max()) if c.nnz else 0.0

    def __repr__(self):
        kind = "diag" if self.is_diagonal else "sparse"
        return f"SparseHermitianOperator({self.name or kind}, dim={self.dim})"


def _kron_sum(mats):
    """``sum_i I ⊗ .. ⊗ A_i ⊗ .. ⊗ I`` with factor 0 most significant."""
    dims = [m.shape[0] for m in mats]
    total = sp.csr_matrix((int(np.prod(dims)),) * 2, dtype=np.complex128)
    for i, m in enumerate(mats):
        left = sp.identity(int(np.prod(dims[:i])), dtype=np.complex128, format="csr")
        right = sp.identity(int(np.prod(dims[i + 1 :])), dtype=np.complex128, format="csr")
        total = total + sp.kron(sp.kron(left, m, format="csr"), right, format="csr")
    return total.tocsr()


def _qudit_sum_matrix(block, basis):
    """``sum_sites block_site`` on the full product register."""
    d = block.shape[0]
    n = basis.n_sites
    idx = np.arange(basis.dim, dtype=np.int64)
    diag = np.zeros(basis.dim, dtype=np.complex128)
    rows, cols, vals = [idx], [idx], [diag]
    for s in range(n):
        place = int(basis.place[s])
        digit = (idx // place) % d
        diag += block[digit, digit]
        for shift in range(1, d):
            target = (digit + shift) % d
            v = block[target, digit]
            keep = v != 0
            if np.any(keep):
                rows.append(idx[keep] + (target[keep] - digit[keep]) * place)
                cols.append(idx[keep])
                vals.append(v[keep])
    m = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(basis.dim, basis.dim),
    )
    m.sum_duplicates()
    return m


# ---------------------------------------------------------------------------
# diagonal operators
# ---------------------------------------------------------------------------


def flow_operator(e, i, basis):
    """Flow of commodity ``i`` on edge ``e``."""
    configs = basis_configs(basis)
    return SparseHermitianOperator(basis, diagonal=configs[:, i, e].astype(float), name=f"E[{e}]^{i}")


def total_flow_operator(e, basis):
    """Total flow of all commodities on edge ``e``."""
    configs = basis_configs(basis)
    return SparseHermitianOperator(basis, diagonal=configs[:, :, e].astype(float).sum(axis=1), name=f"E[{e}]")


def divergence_operator(u, i, basis):
    """Net outflow of commodity ``i`` at vertex ``u`` (the Gauss-law generator)."""
    net = basis.inst.network
    configs = basis_configs(basis)
    div = _kernels.divergences(
        np.ascontiguousarray(configs[:, i, :]), net.tails, net.heads, net.n_vertices
    )[:, u]
    return SparseHermitianOperator(basis, diagonal=div.astype(float), name=f"G[{u}]^{i}")


def cost_hamiltonian(inst, basis, penalty=0.0):
    """Diagonal classical cost, plus ``penalty`` times the Gauss-law violation."""
    if basis.inst.network is not inst.network:
        raise InvalidArgument("basis was built for a different network")
    diag = basis_costs(basis)
    if penalty:
        diag = diag + penalty_hamiltonian(inst, penalty, basis).diagonal
    return SparseHermitianOperator(basis, diagonal=diag, name="H_C")


def penalty_hamiltonian(inst, delta, basis):
    if delta < 0:
        raise InvalidArgument("penalty coefficient must be non-negative")
    configs = basis_configs(basis)
    return SparseHermitianOperator(
        basis, diagonal=float(delta) * violation_squares(configs, inst).astype(float), name="H_P"
    )


def feasible_projector(inst, basis, loopless=True):
    """0/1 diagonal projector onto the (loopless) feasible configurations."""
    feas, clean = feasibility_masks(basis)
    mask = clean if loopless else feas
    return SparseHermitianOperator(basis, diagonal=mask.astype(float), name="Pi")


# ---------------------------------------------------------------------------
# mixers
# ---------------------------------------------------------------------------


def x_mixer(basis):
    """``-sum_sites J`` with ``J`` the all-ones qudit matrix."""
    if not isinstance(basis, ConfigBasis):
        raise InvalidBasisError("the X-mixer is only defined on the full configuration space")
    block = -np.ones((basis.level, basis.level), dtype=complex)
    return SparseHermitianOperator(basis, qudit_block=block, name="H_X")


def decision_polynomial(v, ell):
    """Exact value of ``prod_{j=0..ell, j!=1} (2j - v) / (2j - 2)``."""
    out = Fraction(1)
    for j in range(ell + 1):
        if j != 1:
            out *= Fraction(2 * j - v, 2 * j - 2)
    return out


def plaquette_v(cfg, face, i=0):
    """Number of flow-line crossings of a face boundary for commodity ``i``."""
    row = np.asarray(cfg)
    if row.ndim == 2:
        row = row[i]
    along = row[list(face.edges)].astype(np.int64) * np.asarray(face.signs)
    return int(((np.roll(along, 1) - along) ** 2).sum())


def plaquette_moves(basis, face, i, restricted):
    """Raising moves of the plaquette operator on one commodity.

    Returns ``(src, dst, dropped)``: basis indices of each source configuration
    whose image survives, the image's index, and how many images fell outside
    the basis (possible only on the loopless feasible basis).
    """
    configs = basis_configs(basis)
    flows = np.ascontiguousarray(configs[:, i, :])
    edges = np.asarray(face.edges, dtype=np.int64)
    signs = np.asarray(face.signs, dtype=np.int64)
    hi = basis.inst.commodities[i].demand
    vcount, fits = _kernels.plaquette_scan(flows, edges, signs, hi)
    if np.any(vcount % 2):
        raise InvalidArgument("odd crossing count; configuration violates the Gauss law")
    ok = fits & (vcount == 2) if restricted else fits
    src = np.flatnonzero(ok)
    if isinstance(basis, ConfigBasis):
        n_e = basis.inst.network.n_edges
        shift = int((signs * basis.place[i * n_e + edges]).sum())
        return src, src + shift, 0
    images = np.array(configs[src], copy=True)
    images[:, i, edges] += signs.astype(np.int8)
    dst = basis.lookup(images)
    keep = dst >= 0
    return src[keep], dst[keep], int((~keep).sum())


def wilson_loop(face, i, basis, restricted=False):
    """The pair ``(U, U_dagger)`` for a face, as sparse operators."""
    if isinstance(basis, FeasibleBasis) and basis.loopless and not restricted:
        _check_closure(basis, [face], i)
    src, dst, dropped = plaquette_moves(basis, face, i, restricted)
    u = sp.csr_matrix((np.ones(src.size, dtype=np.complex128), (dst, src)), shape=(basis.dim, basis.dim))
    return (
        _raw_operator(basis, u, "U", dropped),
        _raw_operator(basis, u.conj().T.tocsr(), "U+", dropped),
    )


def _raw_operator(basis, m, name, dropped):
    # U alone is not Hermitian; it only enters mixers via U + U^dagger.
    op = SparseHermitianOperator.__new__(SparseHermitianOperator)
    op.basis, op.dim, op.name, op.dropped = basis, basis.dim, name, dropped
    op.diagonal = op.factors = op.qudit_block = None
    m = m.tocsr()
    m.sort_indices()
    op._matrix = m
    return op


def _check_closure(basis, faces, i):
    for face in faces:
        _, _, dropped = plaquette_moves(basis, face, i, restricted=False)
        if dropped:
            raise InvalidCombinationError(
                "unrestricted plaquette moves leave the loopless basis; "
                "use the loops-allowed feasible basis or the restricted mixer"
            )


def _mixer_single(basis, restricted):
    net = basis.inst.network
    rows, cols = [], []
    dropped = 0
    for i in range(basis.inst.k):
        if isinstance(basis, FeasibleBasis) and basis.loopless and not restricted:
            _check_closure(basis, net.faces, i)
        for face in net.faces:
            src, dst, d = plaquette_moves(basis, face, i, restricted)
            dropped += d
            rows += [dst, src]
            cols += [src, dst]
    if rows:
        r, c = np.concatenate(rows), np.concatenate(cols)
    else:
        r = c = np.zeros(0, dtype=np.int64)
    m = sp.csr_matrix((-np.ones(r.size, dtype=np.complex128), (r, c)), shape=(basis.dim, basis.dim))
    m.sum_duplicates()
    return SparseHermitianOperator(basis, matrix=m, name="H_RQED" if restricted else "H_QED", dropped=dropped)


def qed_mixer(inst, basis, restricted=True):
    """``-sum_i sum_f (U_f + U_f^dagger)``, optionally with the single-path restriction."""
    if basis.inst.network is not inst.network:
        raise InvalidArgument("basis was built for a different network")
    if isinstance(basis, FeasibleBasis) and basis.factors is not None:
        parts = [_mixer_single(f, restricted) for f in basis.factors]
        return SparseHermitianOperator(
            basis,
            factors=parts,
            name="H_RQED" if restricted else "H_QED",
            dropped=sum(p.dropped for p in parts),
        )
    return _mixer_single(basis, restricted)


def build_mixer(kind, inst, basis):
    kind = kind.upper()
    if kind == "X":
        return x_mixer(basis)
    if kind == "QED":
        return qed_mixer(inst, basis, restricted=False)
    if kind == "RQED":
        return qed_mixer(inst, basis, restricted=True)
    raise InvalidArgument(f"unknown mixer {kind!r}")


# ---------------------------------------------------------------------------
# measurements and dumps
# ---------------------------------------------------------------------------


def expectation(op, state):
    require_same_basis(op.basis, state.basis)
    psi = state.amplitudes
    val = np.vdot(psi, op.matvec(psi))
    scale = max(1.0, abs(val))
    if abs(val.imag) > 1e-10 * scale:
        raise InvalidArgument(f"expectation has imaginary part {val.imag:.3e}; operator not Hermitian?")
    return float(val.real)


def spectrum_csv(op):
    """Diagonal entries as CSV ``index,value`` (diagonal operators only)."""
    if not op.is_diagonal:
        raise InvalidArgument("spectrum dump needs a diagonal operator")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "value"])
    for j, v in enumerate(op.diagonal):
        w.writerow([j, repr(float(v))])
    return buf.getvalue()

"""Time evolution and ground states for :class:`SparseHermitianOperator`.

The general-purpose routine is a Lanczos (Krylov) approximation of
``exp(-iHt) psi`` with adaptive sub-stepping driven by the usual a posteriori
error estimate.  :class:`Propagator` picks an exact shortcut whenever the
operator's structure allows one: diagonal phases, a product of identical
single-qudit unitaries, a Kronecker sum of small factors, or a dense
eigendecomposition for modest dimensions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import InvalidArgument, NumericalError
from .hilbert import StateVector, require_same_basis

DENSE_MAX_DIM = 2048


@dataclass(frozen=True)
class EvolutionConfig:
    tol: float = 1e-8
    krylov_dim: int = 30
    max_substeps: int = 100_000
    # shrink factor applied to a rejected sub-step
    shrink: float = 0.5

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidArgument("tolerance must be positive")
        if self.krylov_dim < 2:
            raise InvalidArgument("Krylov dimension must be at least 2")
        if not 0 < self.shrink < 1:
            raise InvalidArgument("shrink factor must lie in (0, 1)")


DEFAULT_EVOLUTION = EvolutionConfig()


def _lanczos(H, v0, m):
    """Orthonormal Krylov basis (full reorthogonalisation) and tridiagonal entries."""
    n = v0.size
    m = min(m, n)
    V = np.zeros((m + 1, n), dtype=np.complex128)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[0] = v0
    for j in range(m):
        w = H.matvec(V[j])
        alpha[j] = np.vdot(V[j], w).real
        w = w - alpha[j] * V[j]
        if j:
            w -= beta[j - 1] * V[j - 1]
        for _ in range(2):
            w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        if beta[j] < 1e-12 * max(1.0, abs(alpha[j])):
            return V[: j + 1], alpha[: j + 1], beta[: j + 1], True
        V[j + 1] = w / beta[j]
    return V, alpha, beta, False


def _tridiag_exp_e1(alpha, beta, tau):
    """``exp(-i tau T) e_1`` for the Lanczos tridiagonal matrix ``T``."""
    if alpha.size == 1:
        return np.array([np.exp(-1j * tau * alpha[0])])
    w, Q = la.eigh_tridiagonal(alpha, beta[: alpha.size - 1])
    return Q @ (np.exp(-1j * tau * w) * Q[0].conj())


def krylov_expm_multiply(H, psi, t, cfg=DEFAULT_EVOLUTION):
    """``exp(-iHt) psi`` by restarted Lanczos with adaptive sub-steps.

    Returns the vector and a diagnostics dict.  The local error of each
    sub-step of length ``tau`` is kept below ``tol * tau / |t|`` so the global
    2-norm error stays below ``tol``.
    """
    w = np.array(psi, dtype=np.complex128)
    total = float(t)
    if total == 0.0:
        return w, {"substeps": 0, "error_estimate": 0.0}
    direction = np.sign(total)
    remaining = abs(total)
    tau = remaining
    err_sum = 0.0
    steps = 0
    rejected = 0
    while remaining > 0:
        if steps + rejected > cfg.max_substeps:
            raise NumericalError(
                "Krylov evolution did not finish within the sub-step budget",
                substeps=steps,
                rejected=rejected,
                remaining=remaining,
            )
        b0 = np.linalg.norm(w)
        V, alpha, beta, happy = _lanczos(H, w / b0, cfg.krylov_dim)
        m = alpha.size
        tau = min(tau, remaining)
        while True:
            y = _tridiag_exp_e1(alpha, beta, direction * tau)
            err = 0.0 if happy else b0 * beta[m - 1] * abs(y[m - 1])
            # the floor absorbs roundoff in the small exponential
            if happy or err <= max(cfg.tol * tau / abs(total), 64 * np.finfo(float).eps * b0):
                break
            rejected += 1
            tau *= cfg.shrink
            if tau < 1e-15 * abs(total) or rejected > cfg.max_substeps:
                raise NumericalError(
                    "Krylov step size underflow",
                    error_estimate=err,
                    krylov_dim=m,
                    remaining=remaining,
                )
        w = b0 * (V[:m].T @ y)
        remaining = max(0.0, remaining - tau)
        err_sum += err
        steps += 1
        if not happy and err < 0.1 * cfg.tol * tau / abs(total):
            tau *= 2.0
        if happy:
            tau = remaining
    return w, {"substeps": steps, "rejected": rejected, "error_estimate": err_sum}


def _checked_state(amps, basis, tol):
    norm = np.linalg.norm(amps)
    if abs(norm - 1.0) > max(tol, 1e-10):
        raise NumericalError("norm drift during evolution", norm=norm)
    return StateVector(amps / norm, basis)


def evolve(H, t, state, cfg=DEFAULT_EVOLUTION, method="krylov"):
    """``exp(-iHt)|state>``.

    ``method="krylov"`` always uses the Lanczos integrator; ``"auto"`` lets
    :class:`Propagator` choose an exact structural shortcut.
    """
    require_same_basis(H.basis, state.basis)
    if t == 0:
        return StateVector(state.amplitudes.copy(), state.basis)
    if method == "auto":
        amps = Propagator(H, cfg).apply(state.amplitudes, t)
    elif method == "krylov":
        amps, _ = krylov_expm_multiply(H, state.amplitudes, t, cfg)
    else:
        raise InvalidArgument(f"unknown evolution method {method!r}")
    return _checked_state(amps, state.basis, cfg.tol)


def apply_diagonal_phase(H, gamma, state):
    """Multiply every amplitude by ``exp(-i gamma h_jj)``."""
    if not H.is_diagonal:
        raise InvalidArgument("apply_diagonal_phase needs a diagonal operator")
    require_same_basis(H.basis, state.basis)
    return StateVector(np.exp(-1j * gamma * H.diagonal) * state.amplitudes, state.basis)


class Propagator:
    """Reusable ``t -> exp(-iHt)`` action that exploits operator structure."""

    def __init__(self, H, cfg=DEFAULT_EVOLUTION, dense_max=DENSE_MAX_DIM):
        self.H = H
        self.cfg = cfg
        if H.is_diagonal:
            self.strategy = "diagonal"
        elif H.qudit_block is not None:
            self.strategy = "qudit"
            self._w, self._v = la.eigh(H.qudit_block)
        elif H.factors is not None and all(f.dim <= dense_max for f in H.factors):
            self.strategy = "kron"
            self._eig = [la.eigh(f.toarray()) for f in H.factors]
        elif H.dim <= dense_max:
            self.strategy = "dense"
            self._w, self._v = la.eigh(H.toarray())
        else:
            self.strategy = "krylov"

    def apply(self, psi, t):
        psi = np.asarray(psi, dtype=np.complex128)
        if t == 0:
            return psi.copy()
        s = self.strategy
        if s == "diagonal":
            return np.exp(-1j * t * self.H.diagonal) * psi
        if s == "qudit":
            u = (self._v * np.exp(-1j * t * self._w)) @ self._v.conj().T
            return _kernels.qudit_apply(np.ascontiguousarray(psi), np.ascontiguousarray(u), self.H.basis.n_sites)
        if s == "kron":
            dims = [f.dim for f in self.H.factors]
            out = psi.reshape(dims)
            for axis, (w, v) in enumerate(self._eig):
                u = (v * np.exp(-1j * t * w)) @ v.conj().T
                out = np.moveaxis(np.tensordot(u, out, axes=([1], [axis])), 0, axis)
            return out.reshape(-1)
        if s == "dense":
            return self._v @ (np.exp(-1j * t * self._w) * (self._v.conj().T @ psi))
        out, _ = krylov_expm_multiply(self.H, psi, t, self.cfg)
        return out

    def evolve(self, state, t):
        require_same_basis(self.H.basis, state.basis)
        return _checked_state(self.apply(state.amplitudes, t), state.basis, self.cfg.tol)


# ---------------------------------------------------------------------------
# ground states
# ---------------------------------------------------------------------------


class GroundState(NamedTuple):
    energy: float
    state: StateVector
    degenerate: bool
    residual: float


class DegenerateGroundStateWarning(UserWarning):
    pass


def _fix_phase(v):
    k = int(np.argmax(np.abs(v)))
    return v * (abs(v[k]) / v[k])


def _lowest_pair(H, tol, seed, dense_max):
    """Lowest eigenvalue, its vector, and the gap to the next level."""
    if H.dim == 1:
        return float(H.toarray()[0, 0].real), np.ones(1, dtype=complex), np.inf
    if H.dim <= dense_max:
        w, v = la.eigh(H.toarray(), subset_by_index=[0, 1])
        return float(w[0]), v[:, 0], float(w[1] - w[0])
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(H.dim) + 1j * rng.standard_normal(H.dim)
    op = spla.LinearOperator((H.dim, H.dim), matvec=H.matvec, dtype=np.complex128)
    try:
        w, v = spla.eigsh(op, k=2, which="SA", v0=v0, tol=min(tol, 1e-10) * 1e-2, maxiter=50 * H.dim)
    except spla.ArpackNoConvergence as exc:
        raise NumericalError("eigensolver did not converge", dim=H.dim) from exc
    order = np.argsort(w)
    return float(w[order[0]]), v[:, order[0]], float(w[order[1]] - w[order[0]])


def ground_state(H, tol=1e-8, seed=0, dense_max=DENSE_MAX_DIM):
    """Lowest eigenpair of ``H``; flags (and warns about) a degenerate ground space."""
    if H.is_diagonal:
        j = int(np.argmin(H.diagonal))
        e0 = float(H.diagonal[j])
        degenerate = int(np.sum(np.abs(H.diagonal - e0) <= 1e-12 * max(1.0, abs(e0)))) > 1
        amps = np.zeros(H.dim, dtype=np.complex128)
        amps[j] = 1.0
    elif H.qudit_block is not None:
        w, v = la.eigh(H.qudit_block)
        single = _fix_phase(v[:, 0])
        amps = np.ones(1, dtype=np.complex128)
        for _ in range(H.basis.n_sites):
            amps = np.kron(amps, single)
        e0 = float(H.basis.n_sites * w[0])
        degenerate = w.size > 1 and (w[1] - w[0]) <= 1e-9 * max(1.0, abs(w[0]))
    elif H.factors is not None:
        parts = [ground_state(f, tol, seed, dense_max) for f in H.factors]
        e0 = sum(p.energy for p in parts)
        degenerate = any(p.degenerate for p in parts)
        amps = np.ones(1, dtype=np.complex128)
        for p in parts:
            amps = np.kron(amps, p.state.amplitudes)
    else:
        e0, vec, gap = _lowest_pair(H, tol, seed, dense_max)
        amps = _fix_phase(vec / np.linalg.norm(vec))
        degenerate = gap <= 1e-9 * max(1.0, abs(e0))
    amps = amps / np.linalg.norm(amps)
    residual = float(np.linalg.norm(H.matvec(amps) - e0 * amps))
    if residual > max(tol, 1e-8) * max(1.0, abs(e0)):
        raise NumericalError("ground-state residual above tolerance", residual=residual, energy=e0)
    if degenerate:
        warnings.warn("ground space is degenerate; returning one member", DegenerateGroundStateWarning, stacklevel=2)
    return GroundState(e0, StateVector(amps, H.basis), bool(degenerate), residual)

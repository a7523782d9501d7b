import warnings

import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given
from hypothesis import strategies as st

from conftest import corner_instance
from qedqaoa.dynamics import (
    DegenerateGroundStateWarning,
    EvolutionConfig,
    Propagator,
    apply_diagonal_phase,
    evolve,
    ground_state,
    krylov_expm_multiply,
)
from qedqaoa.errors import InvalidArgument, NumericalError
from qedqaoa.graph import EDP, Commodity, FlowNetwork, ProblemInstance, build_grid, build_triangle_chain, random_instance
from qedqaoa.hilbert import IndexBasis, StateVector, basis_state, enumerate_feasible, full_basis, uniform_superposition
from qedqaoa.operators import SparseHermitianOperator, cost_hamiltonian, divergence_operator, qed_mixer, x_mixer
from qedqaoa.prep import ipr


def random_hermitian(dim, rng, density=None):
    A = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    if density is not None:
        A = A * (rng.random((dim, dim)) < density)
    H = (A + A.conj().T) / 2
    return SparseHermitianOperator(IndexBasis(dim), matrix=H), H


def random_state(basis, rng):
    v = rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim)
    return StateVector.normalized(v, basis)


def test_evolve_zero_time_is_identity(rng):
    H, _ = random_hermitian(20, rng)
    psi = random_state(H.basis, rng)
    assert np.array_equal(evolve(H, 0.0, psi).amplitudes, psi.amplitudes)


def test_evolve_forward_backward(rng):
    H, _ = random_hermitian(60, rng, density=0.1)
    psi = random_state(H.basis, rng)
    cfg = EvolutionConfig(tol=1e-9)
    back = evolve(H, -3.0, evolve(H, 3.0, psi, cfg), cfg)
    assert np.linalg.norm(back.amplitudes - psi.amplitudes) <= 2e-9


def test_evolve_diagonal_closed_form(rng):
    d = rng.uniform(-2, 2, 30)
    H = SparseHermitianOperator(IndexBasis(30), matrix=np.diag(d))
    psi = random_state(H.basis, rng)
    out = evolve(H, 1.7, psi)
    assert np.allclose(out.amplitudes, np.exp(-1.7j * d) * psi.amplitudes, atol=1e-8)


@pytest.mark.parametrize("dim", [1, 2, 5, 50, 200])
def test_krylov_matches_dense_expm(dim, rng):
    H, M = random_hermitian(dim, rng)
    psi = random_state(H.basis, rng)
    for t in (0.1, 1.0, 4.0):
        exact = la.expm(-1j * t * M) @ psi.amplitudes
        out, diag = krylov_expm_multiply(H, psi.amplitudes, t)
        assert np.linalg.norm(out - exact) <= 1e-7
        assert diag["substeps"] >= 1


@given(st.integers(2, 40), st.floats(0, 10), st.integers(0, 2**32 - 1))
def test_unitarity_property(dim, t, seed):
    rng = np.random.default_rng(seed)
    H, _ = random_hermitian(dim, rng)
    out = evolve(H, t, random_state(H.basis, rng))
    assert abs(out.norm() - 1) <= 1e-8


@given(st.floats(0.1, 5), st.integers(0, 2**32 - 1))
def test_energy_conservation(t, seed):
    rng = np.random.default_rng(seed)
    H, M = random_hermitian(30, rng, density=0.3)
    psi = random_state(H.basis, rng)
    e0 = np.vdot(psi.amplitudes, M @ psi.amplitudes).real
    out = evolve(H, t, psi)
    assert np.vdot(out.amplitudes, M @ out.amplitudes).real == pytest.approx(e0, abs=1e-7)


def test_gauss_law_conserved_under_qed_evolution(rng):
    g = build_grid(2, 3)
    inst = ProblemInstance(g, (Commodity(0, 5),))
    b = full_basis(inst)
    H = qed_mixer(inst, b, restricted=False)
    psi = random_state(b, rng)
    G = [divergence_operator(u, 0, b) for u in range(g.n_vertices)]
    before = [(psi.probabilities() @ Gu.diagonal, psi.probabilities() @ Gu.diagonal**2) for Gu in G]
    for t in (0.5, 2.0, 6.0):
        out = evolve(H, t, psi)
        after = [(out.probabilities() @ Gu.diagonal, out.probabilities() @ Gu.diagonal**2) for Gu in G]
        assert np.allclose(after, before, atol=1e-7)


def test_evolve_rejects_unknown_method(rng):
    H, _ = random_hermitian(4, rng)
    with pytest.raises(InvalidArgument):
        evolve(H, 1.0, random_state(H.basis, rng), method="euler")


def test_krylov_budget_error(rng):
    H, _ = random_hermitian(100, rng)
    with pytest.raises(NumericalError) as info:
        krylov_expm_multiply(H, random_state(H.basis, rng).amplitudes, 50.0, EvolutionConfig(krylov_dim=3, max_substeps=5))
    assert info.value.diagnostics


def test_evolution_config_validation():
    with pytest.raises(InvalidArgument):
        EvolutionConfig(tol=0)
    with pytest.raises(InvalidArgument):
        EvolutionConfig(krylov_dim=1)


def test_apply_diagonal_phase():
    inst = random_instance("triangle:3", "sssp", 1)
    b = full_basis(inst)
    H = cost_hamiltonian(inst, b)
    psi = uniform_superposition(b)
    assert np.array_equal(apply_diagonal_phase(H, 0.0, psi).amplitudes, psi.amplitudes)
    out = apply_diagonal_phase(H, 1.3, psi)
    zero = H.diagonal == 0
    assert np.array_equal(out.amplitudes[zero], psi.amplitudes[zero])
    ints = SparseHermitianOperator(b, diagonal=np.round(H.diagonal * 10))
    assert np.allclose(apply_diagonal_phase(ints, 2 * np.pi, psi).amplitudes, psi.amplitudes, atol=1e-12)
    with pytest.raises(InvalidArgument):
        apply_diagonal_phase(x_mixer(b), 1.0, psi)


def _strategy_cases():
    tri = corner_instance(build_triangle_chain(2))
    edp = random_instance("grid:3x3", EDP, 3)
    grid = ProblemInstance(build_grid(5, 5), (Commodity(0, 24),))
    fb = full_basis(tri)
    return [
        ("diagonal", cost_hamiltonian(tri, fb)),
        ("qudit", x_mixer(fb)),
        ("kron", qed_mixer(edp, enumerate_feasible(edp))),
        ("dense", qed_mixer(tri, enumerate_feasible(tri, loopless=False), restricted=False)),
        ("krylov", qed_mixer(grid, enumerate_feasible(grid))),
    ]


@pytest.mark.parametrize("strategy,H", _strategy_cases())
def test_propagator_strategies_agree_with_krylov(strategy, H, rng):
    prop = Propagator(H)
    assert prop.strategy == strategy
    psi = random_state(H.basis, rng)
    for t in (0.3, 2.5):
        ref, _ = krylov_expm_multiply(H, psi.amplitudes, t, EvolutionConfig(tol=1e-11))
        assert np.linalg.norm(prop.apply(psi.amplitudes, t) - ref) <= 1e-8


def test_ground_state_diagonal():
    d = np.array([3.0, 1.0, 2.0])
    H = SparseHermitianOperator(IndexBasis(3), diagonal=d)
    gs = ground_state(H)
    assert gs.energy == 1.0 and abs(gs.state.amplitudes[1]) == 1
    assert not gs.degenerate
    with pytest.warns(DegenerateGroundStateWarning):
        gs = ground_state(SparseHermitianOperator(IndexBasis(3), diagonal=[1.0, 0.0, 0.0]))
    assert gs.degenerate


def test_ground_state_single_edge_x():
    inst = ProblemInstance(FlowNetwork(2, [(0, 1)]), (Commodity(0, 1),))
    gs = ground_state(x_mixer(full_basis(inst)))
    assert gs.energy == pytest.approx(-3)
    assert np.allclose(np.abs(gs.state.amplitudes), 1 / np.sqrt(3))


def test_ground_state_iterative_matches_dense(rng):
    H, M = random_hermitian(300, rng, density=0.05)
    a = ground_state(H, dense_max=10_000)
    b = ground_state(H, dense_max=10)
    assert a.energy == pytest.approx(np.linalg.eigvalsh(M)[0], abs=1e-9)
    assert b.energy == pytest.approx(a.energy, abs=1e-9)
    assert abs(abs(np.vdot(a.state.amplitudes, b.state.amplitudes)) - 1) <= 1e-8
    # seeded start vector: repeated calls agree bitwise
    c = ground_state(H, dense_max=10)
    assert np.array_equal(b.state.amplitudes, c.state.amplitudes)


def test_ground_state_of_product_mixer_matches_dense():
    inst = random_instance("grid:3x3", EDP, 8)
    b = enumerate_feasible(inst)
    H = qed_mixer(inst, b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateGroundStateWarning)
        gs = ground_state(H)
    assert gs.energy == pytest.approx(np.linalg.eigvalsh(H.toarray())[0], abs=1e-9)
    assert gs.residual <= 1e-8


def test_rqed_ground_state_ipr_above_uniform_floor():
    inst = ProblemInstance(build_grid(4, 4), (Commodity(0, 15),))
    b = enumerate_feasible(inst)
    gs = ground_state(qed_mixer(inst, b))
    assert ipr(gs.state) > 1 / b.dim
    assert gs.residual <= 1e-8

import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from conftest import corner_instance
from qedqaoa.errors import BasisMismatchError, InvalidArgument, InvalidBasisError, InvalidCombinationError
from qedqaoa.graph import EDP, Commodity, FlowNetwork, ProblemInstance, build_grid, build_triangle_chain
from qedqaoa.graph import has_isolated_loop, is_feasible, random_instance
from qedqaoa.hilbert import basis_state, embed, enumerate_feasible, full_basis, uniform_superposition
from qedqaoa.operators import (
    cost_hamiltonian,
    decision_polynomial,
    divergence_operator,
    expectation,
    feasible_projector,
    flow_operator,
    penalty_hamiltonian,
    plaquette_v,
    qed_mixer,
    spectrum_csv,
    total_flow_operator,
    wilson_loop,
    x_mixer,
)


def _single_edge():
    return ProblemInstance(FlowNetwork(2, [(0, 1)]), (Commodity(0, 1),))


def test_flow_operator_eigenvalues():
    inst = _single_edge()
    b = full_basis(inst)
    E = flow_operator(0, 0, b)
    for v in (-1, 0, 1):
        assert E.diagonal[b.index(np.array([[v]]))] == v


def test_total_flow_doubly_used_edge():
    g = build_grid(2, 2)
    inst = ProblemInstance(g, (Commodity(0, 3), Commodity(0, 1)), EDP)
    b = enumerate_feasible(inst)
    cfg = np.stack([g.path_flow([0, 1, 3]), g.path_flow([0, 1])])
    e = g.edge(0, 1)[0]
    assert total_flow_operator(e, b).diagonal[b.index(cfg)] == 2


def test_x_mixer_single_edge():
    b = full_basis(_single_edge())
    H = x_mixer(b)
    assert np.allclose(H.toarray(), -np.ones((3, 3)))
    w, v = np.linalg.eigh(H.toarray())
    assert w[0] == pytest.approx(-3)
    assert np.allclose(np.abs(v[:, 0]), 1 / np.sqrt(3))


def test_x_mixer_uniform_expectation(tri2):
    b = full_basis(tri2)
    H = x_mixer(b)
    assert expectation(H, uniform_superposition(b)) == pytest.approx(-3 * tri2.network.n_edges)
    assert H.hermiticity_error() <= 1e-12


def test_x_mixer_rejects_feasible_basis(tri2):
    with pytest.raises(InvalidBasisError):
        x_mixer(enumerate_feasible(tri2))


def test_x_mixer_matrix_matches_kron_sum():
    g = build_grid(2, 2)
    inst = ProblemInstance(g, (Commodity(0, 3),))
    b = full_basis(inst)
    J = np.ones((3, 3))
    ref = np.zeros((81, 81))
    for site in range(4):
        ops = [np.eye(3)] * 4
        ops[site] = J
        term = ops[0]
        for o in ops[1:]:
            term = np.kron(term, o)
        ref -= term
    assert np.allclose(x_mixer(b).toarray(), ref)
    psi = np.random.default_rng(0).standard_normal(81) + 0j
    assert np.allclose(x_mixer(b).matvec(psi), ref @ psi)


def test_cost_hamiltonian_examples():
    g = build_grid(3, 3)
    inst = ProblemInstance(g, (Commodity(0, 2), Commodity(6, 8)), EDP)
    b = enumerate_feasible(inst)
    H = cost_hamiltonian(inst, b)
    cfg = np.stack([g.path_flow([0, 1, 2]), g.path_flow([6, 7, 8])])
    assert H.diagonal[b.index(cfg)] == 0
    inst2 = ProblemInstance(g, (Commodity(0, 2), Commodity(0, 4)), EDP)
    b2 = enumerate_feasible(inst2)
    cfg2 = np.stack([g.path_flow([0, 1, 2]), g.path_flow([0, 1, 4])])
    assert cost_hamiltonian(inst2, b2).diagonal[b2.index(cfg2)] == 1


def test_sssp_cost_hamiltonian():
    w = np.zeros(6)
    net = build_triangle_chain(2)
    w[net.edge(1, 0)[0]] = 0.3
    w[net.edge(0, 2)[0]] = 0.5
    inst = corner_instance(net, weights=w)
    b = enumerate_feasible(inst)
    cfg = inst.network.path_flow([1, 0, 2])
    assert cost_hamiltonian(inst, b).diagonal[b.index(cfg)] == pytest.approx(0.8)


def test_penalty_examples(tri2):
    b = full_basis(tri2)
    P = penalty_hamiltonian(tri2, 1.0, b)
    zero = b.index(np.zeros((1, 6), dtype=np.int8))
    assert P.diagonal[zero] == 2
    assert penalty_hamiltonian(tri2, 2.5, b).diagonal[zero] == 5
    feas = enumerate_feasible(tri2, loopless=False)
    assert np.all(P.diagonal[b.indices(feas.configs)] == 0)
    with pytest.raises(InvalidArgument):
        penalty_hamiltonian(tri2, -1.0, b)
    # a violation is penalised exactly where the Gauss law fails
    inc = tri2.network.incidence
    div = b.configs()[:, 0, :].astype(np.int64) @ inc.T
    ref = ((div - tri2.demand_vector(0)) ** 2).sum(axis=1)
    assert np.array_equal(P.diagonal, ref)


def test_wilson_loop_on_zero_config(grid3):
    inst = ProblemInstance(grid3, (Commodity(0, 8),))
    b = full_basis(inst)
    zero = basis_state(np.zeros((1, 12), dtype=np.int8), b)
    face = grid3.faces[0]
    U, Ud = wilson_loop(face, 0, b, restricted=False)
    out = U.matvec(zero.amplitudes)
    j = int(np.flatnonzero(out)[0])
    assert np.array_equal(b.config(j)[0], grid3.loop_matrix[0])
    assert abs(Ud.matrix - U.matrix.conj().T).max() == 0
    Ur, _ = wilson_loop(face, 0, b, restricted=True)
    assert not np.any(Ur.matvec(zero.amplitudes))


def test_wilson_loop_twice_entered_plaquette(grid3):
    inst = ProblemInstance(grid3, (Commodity(0, 6),))
    path = grid3.path_flow([0, 1, 2, 5, 4, 3, 6])
    face = grid3.faces[0]
    assert plaquette_v(path, face) == 4
    b = enumerate_feasible(inst, loopless=False)
    src = basis_state(path[None], b)
    U, Ud = wilson_loop(face, 0, b, restricted=True)
    assert not np.any(Ud.matvec(src.amplitudes))
    U, Ud = wilson_loop(face, 0, b, restricted=False)
    out = Ud.matvec(src.amplitudes)
    (j,) = np.flatnonzero(out)
    assert has_isolated_loop(b.config(j), inst)


@pytest.mark.parametrize("ell", [3, 4, 5, 6])
def test_decision_polynomial_is_delta(ell):
    for v in range(0, 2 * ell + 1, 2):
        assert decision_polynomial(v, ell) == (1 if v == 2 else 0)


@pytest.mark.parametrize(
    "inst",
    [
        corner_instance(build_triangle_chain(2)),
        corner_instance(build_triangle_chain(4)),
        ProblemInstance(build_grid(3, 3), (Commodity(0, 8),)),
        ProblemInstance(build_grid(3, 3), (Commodity(1, 4),)),
    ],
)
def test_crossing_count_even_on_feasible(inst):
    b = enumerate_feasible(inst, loopless=False)
    for cfg in b.configs:
        for face in inst.network.faces:
            assert plaquette_v(cfg, face) % 2 == 0


def _reference_mixer(inst, basis, restricted):
    """Loop over configs; gate each raising move by the exact decision polynomial."""
    net = inst.network
    H = np.zeros((basis.dim, basis.dim))
    configs = basis.configs if hasattr(basis, "loopless") and not callable(basis.configs) else basis.configs()
    for j, cfg in enumerate(configs):
        for i in range(inst.k):
            for face in net.faces:
                ell = len(face)
                if restricted and decision_polynomial(plaquette_v(cfg, face, i), ell) == 0:
                    continue
                new = cfg.copy()
                new[i, list(face.edges)] += np.asarray(face.signs, dtype=np.int8)
                if np.abs(new[i]).max() > 1:
                    continue
                k = basis.lookup(new[None])[0]
                if k < 0:
                    continue
                H[k, j] -= 1
                H[j, k] -= 1
    return H


@pytest.mark.parametrize(
    "inst",
    [
        corner_instance(build_triangle_chain(3)),
        ProblemInstance(build_grid(3, 3), (Commodity(0, 8),)),
        ProblemInstance(build_grid(3, 3), (Commodity(3, 5),)),
        ProblemInstance(build_grid(2, 3), (Commodity(0, 4), Commodity(2, 3)), EDP),
    ],
)
def test_mixers_match_polynomial_oracle(inst):
    loopless = enumerate_feasible(inst, loopless=True)
    loopy = enumerate_feasible(inst, loopless=False)
    assert np.array_equal(qed_mixer(inst, loopless, True).toarray().real, _reference_mixer(inst, loopless, True))
    assert np.array_equal(qed_mixer(inst, loopy, False).toarray().real, _reference_mixer(inst, loopy, False))
    assert np.array_equal(qed_mixer(inst, loopy, True).toarray().real, _reference_mixer(inst, loopy, True))


def test_qed_mixer_on_full_basis_restricts_to_feasible_block(grid3):
    inst = ProblemInstance(grid3, (Commodity(0, 8),))
    full = full_basis(inst)
    loopy = enumerate_feasible(inst, loopless=False)
    H_full = qed_mixer(inst, full, restricted=False).matrix
    idx = full.indices(loopy.configs)
    block = H_full[idx][:, idx].toarray()
    assert np.array_equal(block, qed_mixer(inst, loopy, restricted=False).toarray())
    # no leakage from feasible to infeasible states
    leak = H_full[:, idx].toarray()
    mask = np.ones(full.dim, dtype=bool)
    mask[idx] = False
    assert not np.any(leak[mask])


@pytest.mark.parametrize(
    "inst",
    [corner_instance(build_triangle_chain(n)) for n in (2, 3, 4)] + [ProblemInstance(build_grid(3, 3), (Commodity(0, 8),))],
)
def test_gauge_invariance_exact(inst):
    for basis in (enumerate_feasible(inst, loopless=False), full_basis(inst)):
        H = qed_mixer(inst, basis, restricted=False)
        for u in range(inst.network.n_vertices):
            assert H.commutator_max(divergence_operator(u, 0, basis)) == 0


def test_restricted_equals_projected_unrestricted_on_triangles():
    for n in (2, 3, 4):
        inst = corner_instance(build_triangle_chain(n))
        loopy = enumerate_feasible(inst, loopless=False)
        loopless = enumerate_feasible(inst, loopless=True)
        idx = loopy.lookup(loopless.configs)
        H = qed_mixer(inst, loopy, restricted=False).toarray()
        assert np.array_equal(H[np.ix_(idx, idx)], qed_mixer(inst, loopless, restricted=True).toarray())


def test_unrestricted_on_loopless_basis_rejected(tri2, grid3):
    with pytest.raises(InvalidCombinationError):
        qed_mixer(tri2, enumerate_feasible(tri2, loopless=True), restricted=False)
    with pytest.raises(InvalidCombinationError):
        inst = ProblemInstance(grid3, (Commodity(0, 8),))
        wilson_loop(grid3.faces[0], 0, enumerate_feasible(inst), restricted=False)


def test_mixers_keep_feasibility(grid3):
    inst = ProblemInstance(grid3, (Commodity(0, 8),))
    full = full_basis(inst)
    Pi = feasible_projector(inst, full, loopless=False)
    H = qed_mixer(inst, full, restricted=False)
    psi = embed(uniform_superposition(enumerate_feasible(inst)), full)
    out = H.matvec(psi.amplitudes)
    out = out / np.linalg.norm(out)
    assert np.vdot(out, Pi.matvec(out)).real == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("rows,cols,pairs", [(3, 3, None), (3, 4, [(0, 11), (1, 6), (5, 6)])])
def test_rqed_connected(rows, cols, pairs):
    g = build_grid(rows, cols)
    pairs = pairs or list(itertools.permutations(range(g.n_vertices), 2))
    for s, t in pairs:
        inst = ProblemInstance(g, (Commodity(s, t),))
        b = enumerate_feasible(inst)
        H = qed_mixer(inst, b, restricted=True)
        n, _ = connected_components(sp.csr_matrix(H.matrix != 0), directed=False)
        assert n == 1, (s, t)


def test_mixers_hermitian():
    inst = random_instance("grid:3x3", EDP, 4)
    for restricted, loopless in ((True, True), (False, False), (True, False)):
        H = qed_mixer(inst, enumerate_feasible(inst, loopless=loopless), restricted)
        assert H.hermiticity_error() <= 1e-12
        M = H.matrix
        assert abs(M - M.conj().T).max() <= 1e-12


def test_projector_examples(tri2):
    b = full_basis(tri2)
    Pi = feasible_projector(tri2, b, loopless=True)
    assert Pi.diagonal.sum() == 3
    assert np.array_equal(Pi.diagonal**2, Pi.diagonal)
    path = basis_state(tri2.network.path_flow([1, 2])[None], b)
    assert np.allclose(Pi.matvec(path.amplitudes), path.amplitudes)
    zero = basis_state(np.zeros((1, 6), dtype=np.int8), b)
    assert not np.any(Pi.matvec(zero.amplitudes))
    assert feasible_projector(tri2, b, loopless=False).diagonal.sum() == 5


def test_expectation_examples(tri2):
    b = enumerate_feasible(tri2)
    Pi = feasible_projector(tri2, b)
    s = basis_state(b.config(1), b)
    assert expectation(Pi, s) == 1
    inst = random_instance("triangle:2", "sssp", 3)
    fb = enumerate_feasible(inst)
    H = cost_hamiltonian(inst, fb)
    costs = [float((c[0].astype(float) ** 2) @ inst.network.weights) for c in fb.configs]
    assert expectation(H, basis_state(fb.config(2), fb)) == pytest.approx(costs[2])
    assert expectation(H, uniform_superposition(fb)) == pytest.approx(np.mean(costs))
    with pytest.raises(BasisMismatchError):
        expectation(H, uniform_superposition(full_basis(inst)))


def test_spectrum_csv(tri2):
    b = enumerate_feasible(tri2)
    text = spectrum_csv(cost_hamiltonian(tri2, b))
    assert text.splitlines()[0] == "index,value"
    assert len(text.splitlines()) == 4
    with pytest.raises(InvalidArgument):
        spectrum_csv(x_mixer(full_basis(tri2)))

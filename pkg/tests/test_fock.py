import math

import numpy as np
import pytest
import scipy.sparse as sp

from bosonlc.fock import (CapacityError, FockBasis, Interaction, ModelSpec,
                          PiecewiseConstant, bose_hubbard, build_hamiltonian,
                          check_number_conservation, count_states, dump_sparse,
                          ladder_op, random_model_spec, total_number_op)
from bosonlc.lattice import build_path
from conftest import recursive_state_count


# -- enumeration -------------------------------------------------------------

def test_counts_small():
    assert FockBasis(2, 1).dim == 4
    assert FockBasis(3, 2).dim == 27


def test_count_matches_recursive_oracle():
    for sites, cap, total in [(3, 2, None), (4, 3, 5), (2, 5, 3), (5, 1, None), (4, 2, 8)]:
        expected = recursive_state_count(sites, cap, total)
        assert count_states(sites, cap, total) == expected
        assert FockBasis(sites, cap, total).dim == expected


def test_total_cap_binomial():
    # cap >= total_cap: number of vectors with sum <= N is C(N+L, L)
    n, length = 3, 4
    basis = FockBasis(length, per_site_cap=n, total_cap=n)
    assert basis.dim == math.comb(n + length, length)


def test_enumeration_lexicographic_unique():
    basis = FockBasis(3, 2, total_cap=4)
    rows = [tuple(r) for r in basis.states]
    assert rows == sorted(rows)
    assert len(set(rows)) == len(rows)
    assert all(sum(r) <= 4 for r in rows)
    assert all(max(r) <= 2 for r in rows)


def test_index_roundtrip():
    basis = FockBasis(4, 3, total_cap=6)
    for i in (0, 5, basis.dim - 1):
        assert basis.index(basis.states[i]) == i
    with pytest.raises(KeyError):
        basis.index([3, 3, 3, 3])  # total 12 > 6


def test_capacity_error():
    with pytest.raises(CapacityError) as err:
        FockBasis(10, 20, state_budget=10_000)
    assert err.value.requested == 21 ** 10


# -- ladder operators ---------------------------------------------------------

def test_annihilate_vacuum_zero_column():
    basis = FockBasis(1, 4)
    b = ladder_op(basis, 0, "annihilate")
    assert abs(b[:, basis.index([0])]).sum() == 0


def test_create_then_annihilate_below_cap():
    basis = FockBasis(1, 5)
    b = ladder_op(basis, 0, "annihilate")
    bdag = ladder_op(basis, 0, "create")
    bbdag = (b @ bdag).toarray().real
    for n in range(5):  # below the cap
        assert bbdag[basis.index([n]), basis.index([n])] == pytest.approx(n + 1, rel=1e-14)


def test_commutator_identity_below_cap():
    basis = FockBasis(1, 6)
    b = ladder_op(basis, 0, "annihilate")
    bdag = ladder_op(basis, 0, "create")
    comm = (b @ bdag - bdag @ b).toarray().real
    sub = comm[:6, :6]  # states with n < cap
    assert np.allclose(sub, np.eye(6), atol=1e-12)


def test_number_equals_bdag_b():
    basis = FockBasis(2, 4)
    for site in (0, 1):
        n_op = ladder_op(basis, site, "number")
        prod = ladder_op(basis, site, "create") @ ladder_op(basis, site, "annihilate")
        assert np.allclose(prod.toarray(), n_op.toarray(), atol=1e-12)


def test_total_number_trace():
    basis = FockBasis(3, 2, total_cap=3)
    n = total_number_op(basis)
    assert n.diagonal().sum() == pytest.approx(basis.totals.sum())
    assert n[basis.index([0, 0, 0]), basis.index([0, 0, 0])] == 0
    basis2 = FockBasis(2, 1)
    n2 = total_number_op(basis2)
    assert n2[basis2.index([1, 1]), basis2.index([1, 1])] == 2


# -- Hamiltonians -------------------------------------------------------------

def test_two_site_hardcore_hopping():
    # 4x4 with exactly one off-diagonal pair of magnitude 1
    model = bose_hubbard(build_path(2), 1.0, 0.0)
    basis = FockBasis(2, 1)
    h = build_hamiltonian(model, basis).toarray()
    i01 = basis.index([0, 1])
    i10 = basis.index([1, 0])
    expected = np.zeros((4, 4))
    expected[i10, i01] = expected[i01, i10] = 1.0
    assert np.array_equal(h.real, expected)
    assert np.array_equal(h.imag, np.zeros((4, 4)))


def test_bose_hubbard_diagonal():
    model = bose_hubbard(build_path(3), 1.0, 2.5)
    basis = FockBasis(3, 3)
    h = build_hamiltonian(model, basis)
    for i in range(0, basis.dim, 7):
        occ = [int(n) for n in basis.states[i]]
        expected = sum(2.5 * n * (n - 1) for n in occ)
        assert h[i, i].real == pytest.approx(expected, abs=1e-12)


def test_zero_hopping_fully_diagonal():
    model = bose_hubbard(build_path(3), 0.0, 1.0)
    basis = FockBasis(3, 2)
    h = build_hamiltonian(model, basis)
    off = h - sp.diags(h.diagonal())
    assert abs(off).sum() == 0


def test_hermitian_exactly():
    rng = np.random.default_rng(5)
    for _ in range(10):
        model = random_model_spec(rng)
        basis = FockBasis(model.graph.num_vertices, 3)
        h = build_hamiltonian(model, basis, t=0.37)
        assert (h != h.conjugate().transpose()).nnz == 0


def test_number_conservation_random_models():
    rng = np.random.default_rng(11)
    for _ in range(20):
        model = random_model_spec(rng)
        basis = FockBasis(model.graph.num_vertices, 3)
        h = build_hamiltonian(model, basis, t=float(rng.uniform(0, 1)))
        assert check_number_conservation(h, total_number_op(basis))


def test_pair_creation_breaks_conservation():
    basis = FockBasis(2, 2)
    model = bose_hubbard(build_path(2), 1.0, 1.0)
    h = build_hamiltonian(model, basis)
    bad = ladder_op(basis, 0, "create") @ ladder_op(basis, 1, "create")
    assert not check_number_conservation(h + bad + bad.conjugate().transpose(),
                                         total_number_op(basis))


def test_diagonal_conserves():
    basis = FockBasis(2, 2)
    diag = sp.diags(np.arange(basis.dim, dtype=np.complex128)).tocsr()
    assert check_number_conservation(diag, total_number_op(basis))


def test_truncation_drops_raising_transitions():
    # on the capped site, b+ b hopping into the capped state is absent
    model = bose_hubbard(build_path(2), 1.0, 0.0)
    basis = FockBasis(2, 2, total_cap=4)
    h = build_hamiltonian(model, basis)
    # state (2,2) can only hop to (3,1)/(1,3) which exceed the cap: row empty
    i22 = basis.index([2, 2])
    assert abs(h[i22]).sum() == 0


# -- schedules and model validation -------------------------------------------

def test_schedule_lookup():
    sched = PiecewiseConstant((1.0, 2.0), (1.0, 0.5j, 0.25))
    assert sched.at(0.5) == 1.0
    assert sched.at(1.0) == 0.5j
    assert sched.at(1.5) == 0.5j
    assert sched.at(3.0) == 0.25
    assert sched.max_abs() == 1.0


def test_schedule_validation():
    with pytest.raises(ValueError):
        PiecewiseConstant((2.0, 1.0), (1, 2, 3))
    with pytest.raises(ValueError):
        PiecewiseConstant((1.0,), (1,))


def test_model_rejects_large_hopping():
    g = build_path(2)
    with pytest.raises(ValueError):
        ModelSpec(graph=g, hopping={(0, 1): PiecewiseConstant.constant(1.5)},
                  interactions=(), interaction_range=0)


def test_model_rejects_wide_interaction():
    g = build_path(4)
    term = Interaction(support=(0, 3), monomials=((1.0, ((0, 1), (3, 1))),))
    with pytest.raises(ValueError):
        ModelSpec(graph=g, hopping={}, interactions=(term,), interaction_range=1)


def test_interaction_requires_real_coefficients():
    with pytest.raises(ValueError):
        Interaction(support=(0,), monomials=((1j, ((0, 1),)),))


def test_hopping_matrix_hermitian():
    rng = np.random.default_rng(3)
    model = random_model_spec(rng)
    h = model.hopping_matrix(0.3)
    assert np.allclose(h, h.conj().T)


def test_hermiticity_of_schedule_orientation():
    # J stored on (x, y); reverse orientation must use the conjugate
    g = build_path(2)
    j = 0.3 + 0.4j
    model = ModelSpec(graph=g, hopping={(0, 1): PiecewiseConstant.constant(j)},
                      interactions=(), interaction_range=0)
    h = model.hopping_matrix(0.0)
    assert h[0, 1] == j and h[1, 0] == np.conj(j)


def test_dump_sparse_format(tmp_path):
    basis = FockBasis(2, 1)
    op = ladder_op(basis, 0, "create")
    path = tmp_path / "op.dump"
    dump_sparse(op, path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == op.nnz
    row, col, re, im = lines[0].split()
    assert float(re) == 1.0 and float(im) == 0.0

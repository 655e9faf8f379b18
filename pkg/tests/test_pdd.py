import itertools
import math

import numpy as np
import pytest

from pddsens.errors import NumericError, ParameterError, ShapeError, TruncationError
from pddsens.measures import Distribution, sample_design
from pddsens.pdd import (BasisSet, BasisTerm, PddModel, TrainingSet, basis_size, design_matrix,
                         enumerate_basis, eval_basis_term, evaluate_basis, predict)
from pddsens.bench import ishigami

U11 = Distribution.uniform(-1, 1)
UPI = Distribution.uniform(-math.pi, math.pi)


@pytest.mark.parametrize("N,S,m,L", [(3, 2, 11, 199), (15, 2, 5, 1126), (5, 2, 11, 606)])
def test_basis_sizes_of_studies(N, S, m, L):
    assert basis_size(N, S, m) == L
    assert len(enumerate_basis(N, S, m)) == L


def test_basis_size_formula_exhaustive():
    for N in range(1, 9):
        for S in range(1, N + 1):
            for m in range(S, 9):
                basis = enumerate_basis(N, S, m)
                L = 1 + sum(math.comb(N, s) * math.comb(m, s) for s in range(1, S + 1))
                assert len(basis) == L
                assert len(set(basis.terms)) == L


def brute_force_terms(N, S, m):
    out = []
    for s in range(1, S + 1):
        for U in itertools.combinations(range(N), s):
            for j in itertools.product(range(1, m + 1), repeat=s):
                if sum(j) <= m:
                    out.append(BasisTerm(U, j))
    return out


@pytest.mark.parametrize("N,S,m", [(3, 2, 4), (4, 3, 5), (2, 2, 2), (5, 1, 3)])
def test_basis_contents_and_ordering(N, S, m):
    basis = enumerate_basis(N, S, m)
    assert basis[0].is_constant
    expect = brute_force_terms(N, S, m)
    assert set(basis.terms[1:]) == set(expect)
    keys = [(len(t.subset), t.subset, t.degrees) for t in basis.terms[1:]]
    assert keys == sorted(keys)
    for t in basis.terms[1:]:
        assert 1 <= len(t.subset) <= S
        assert len(t.subset) <= t.total_degree <= m
        assert all(d >= 1 for d in t.degrees)


def test_truncation_errors():
    with pytest.raises(TruncationError):
        enumerate_basis(2, 3, 5)
    with pytest.raises(TruncationError):
        enumerate_basis(3, 2, 1)
    with pytest.raises(ParameterError):
        BasisTerm((1, 0), (1, 1))
    with pytest.raises(ParameterError):
        BasisTerm((0,), (0,))


def test_basis_json_round_trip():
    basis = enumerate_basis(4, 2, 3)
    d = basis.to_dict()
    assert d["terms"][1]["subset"] == [1]  # 1-based in files
    assert BasisSet.from_dict(d) == basis
    assert basis.index(BasisTerm((0, 2), (1, 1))) > 0


def test_eval_basis_term_examples():
    fams = enumerate_basis(3, 2, 3).families([U11] * 3)
    x = np.array([0.5, 0.5, 0.1])
    assert eval_basis_term(BasisTerm((), ()), fams, x) == 1.0
    assert eval_basis_term(BasisTerm((0,), (1,)), fams, x) == pytest.approx(math.sqrt(3) * 0.5)
    assert eval_basis_term(BasisTerm((0, 1), (1, 1)), fams, x) == pytest.approx(0.75)
    with pytest.raises(ShapeError):
        eval_basis_term(BasisTerm((0,), (1,)), fams, np.zeros(2))


def test_evaluate_basis_matches_termwise():
    basis = enumerate_basis(3, 2, 4)
    dists = [UPI, Distribution.normal(1, 2), Distribution.uniform(0, 1)]
    X = sample_design(dists, 7, seed=1)
    A = evaluate_basis(basis, dists, X)
    fams = basis.families(dists)
    for i in range(7):
        for k, term in enumerate(basis):
            assert A[i, k] == pytest.approx(eval_basis_term(term, fams, X[i]), rel=1e-13, abs=1e-13)


def test_design_matrix_trivial():
    ts = TrainingSet(np.array([[0.3]]), np.array([2.5]), (U11,))
    basis = BasisSet((BasisTerm((), ()),), dims=1, order=0, variate=1)
    A, b = design_matrix(ts, basis)
    assert A.tolist() == [[1.0]] and b.tolist() == [2.5]


def test_ishigami_design_rank():
    dists = (UPI,) * 3
    X = sample_design(dists, 59, seed=7)
    ts = TrainingSet(X, ishigami(X), dists)
    A, b = design_matrix(ts, enumerate_basis(3, 2, 11))
    assert A.shape == (59, 199)
    assert np.all(A[:, 0] == 1.0)
    assert np.linalg.matrix_rank(A) == 59


def test_empirical_gram_near_identity():
    dists = (UPI, Distribution.normal(0, 2), Distribution.uniform(0, 3))
    basis = enumerate_basis(3, 2, 3)
    n = 10 ** 5
    X = sample_design(dists, n, seed=0, method="mc")
    A = evaluate_basis(basis, dists, X)
    G = A.T @ A / n
    assert np.max(np.abs(G - np.eye(len(basis)))) < 0.05


def test_training_set_validation():
    with pytest.raises(ParameterError, match="row 2"):
        TrainingSet(np.array([[0.0], [2.0]]), np.array([1.0, 1.0]), (U11,))
    with pytest.raises((ShapeError, ParameterError)):
        TrainingSet(np.zeros((3, 2)), np.zeros(2), (U11, U11))
    with pytest.raises((NumericError, ParameterError)):
        TrainingSet(np.zeros((1, 1)), np.array([np.nan]), (U11,))
    ts = TrainingSet(np.zeros((2, 1)), np.zeros(2), (U11,))
    with pytest.raises(ValueError):
        ts.inputs[0, 0] = 1.0  # read-only


def test_predict_constant_and_shapes():
    basis = enumerate_basis(2, 1, 2)
    c = np.zeros(len(basis))
    c[0] = 4.2
    model = PddModel(basis, c, (U11, U11))
    assert predict(model, [0.1, -0.3]) == 4.2
    assert np.all(model.predict(np.zeros((5, 2))) == 4.2)
    with pytest.raises(ShapeError):
        model.predict(np.zeros(3))
    with pytest.raises((ShapeError, ParameterError)):
        PddModel(basis, np.zeros(2), (U11, U11))


def test_predict_reproduces_polynomial_in_span():
    dists = (U11,) * 3
    basis = enumerate_basis(3, 2, 3)
    X = sample_design(dists, 60, seed=2)
    ts = TrainingSet(X, X[:, 0], dists)
    A, b = design_matrix(ts, basis)
    c = np.linalg.lstsq(A, b, rcond=None)[0]
    model = PddModel(basis, c, dists)
    g = np.linspace(-1, 1, 7)
    grid = np.array(list(itertools.product(g, g, g)))
    assert np.max(np.abs(model.predict(grid) - grid[:, 0])) < 1e-10

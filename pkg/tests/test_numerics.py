"""Dense symmetric kernels: Cholesky, SPD solve, smallest eigenvalue."""

import math

import numpy as np
import pytest

from maxcrps import ContractError, NumericalError, RngStream
from maxcrps.linalg import cholesky, solve_spd, symmetric_eigen_min


def test_cholesky_identity():
    assert np.array_equal(cholesky(np.eye(3)), np.eye(3))


def test_cholesky_hand_example():
    low = cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]))
    assert np.allclose(low, np.array([[2.0, 0.0], [1.0, math.sqrt(2.0)]]), atol=1e-14)


def test_cholesky_singular_fails():
    with pytest.raises(NumericalError):
        cholesky(np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_cholesky_requires_symmetry():
    with pytest.raises(ContractError):
        cholesky(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_solve_identity_and_diagonal():
    assert np.allclose(solve_spd(np.eye(2), np.array([3.0, -1.0])), [3.0, -1.0])
    assert np.allclose(solve_spd(np.diag([2.0, 4.0]), np.array([2.0, 4.0])), [1.0, 1.0])


def test_random_spd_corpus():
    gen = RngStream(55).generator()
    for _ in range(100):
        p = int(gen.integers(1, 11))
        base = gen.standard_normal((p, p))
        mat = base @ base.T + p * np.eye(p)
        low = cholesky(mat)
        assert np.linalg.norm(low @ low.T - mat) <= 1e-9 * max(np.linalg.norm(mat), 1.0)
        rhs = gen.standard_normal(p)
        x = solve_spd(mat, rhs)
        assert np.linalg.norm(mat @ x - rhs) <= 1e-8 * max(np.linalg.norm(rhs), 1.0)


def test_eigen_min_examples():
    assert symmetric_eigen_min(np.eye(4)) == pytest.approx(1.0, abs=1e-12)
    assert symmetric_eigen_min(np.diag([3.0, -2.0])) == pytest.approx(-2.0, abs=1e-12)
    gen = RngStream(56).generator()
    g = gen.standard_normal((6, 4))
    gram = g.T @ g
    assert symmetric_eigen_min(gram) >= -1e-10 * np.trace(gram)

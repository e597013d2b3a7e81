"""
Tests unitarios para el módulo numkit.py
"""
import itertools

import pytest
import numpy as np
import scipy.linalg
from hypothesis import given, settings
import hypothesis.strategies as st

from reduction_core import numkit
from reduction_core.exceptions import NotPositiveDefiniteError, SingularPencilError, UnstableSystemError
from tests.conftest import make_stable_system


class TestQrPivoted:
    """Tests para la QR con pivoteo y filas ordenadas"""

    def test_reconstruction_and_orthonormality(self):
        """Test de reconstrucción m[:, perm] = q r con q ortonormal"""
        rng = np.random.default_rng(0)
        m = rng.standard_normal((10, 4))

        qr = numkit.qr_pivoted_row_sorted(m)

        np.testing.assert_allclose(qr.q @ qr.r, m[:, qr.column_permutation], atol=1e-12)
        np.testing.assert_allclose(qr.q.T @ qr.q, np.eye(4), atol=1e-12)
        assert np.all(np.diag(qr.r) >= 0)
        assert not qr.rank_deficient
        assert qr.numerical_rank == 4

    def test_rank_deficiency_is_flagged(self):
        """Test de columna repetida: bandera de rango, sin excepción"""
        rng = np.random.default_rng(1)
        m = rng.standard_normal((8, 3))
        m = np.column_stack([m, m[:, 0]])

        qr = numkit.qr_pivoted_row_sorted(m)

        assert qr.rank_deficient
        assert qr.numerical_rank == 3

    def test_wide_matrix_rejected(self):
        """Test de matriz con menos filas que columnas"""
        with pytest.raises(ValueError):
            numkit.qr_pivoted_row_sorted(np.ones((2, 3)))

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=25, deadline=None)
    def test_reconstruction_property(self, seed):
        """Propiedad: la reconstrucción vale para matrices con filas de escalas muy distintas"""
        rng = np.random.default_rng(seed)
        m = rng.standard_normal((12, 5)) * np.logspace(-6, 6, 12)[:, None]

        qr = numkit.qr_pivoted_row_sorted(m)

        scale = np.abs(m).max()
        np.testing.assert_allclose(qr.q @ qr.r, m[:, qr.column_permutation], atol=1e-12 * scale)


class TestEigenvalues:
    """Tests para autovalores ordinarios y generalizados"""

    def test_eigenvalues_diagonal(self):
        """Test de autovalores de una matriz diagonal"""
        values = numkit.eigenvalues(np.diag([-1.0, -2.0, -3.0]))
        np.testing.assert_allclose(np.sort(values.real), [-3.0, -2.0, -1.0])

    def test_infinite_eigenvalue_is_tagged(self):
        """Test de haz con E singular: el autovalor infinito se etiqueta"""
        spectrum = numkit.generalized_eigenvalues(np.diag([1.0, 2.0]), np.diag([1.0, 0.0]))

        assert spectrum.infinite_count == 1
        np.testing.assert_allclose(spectrum.finite, [1.0])
        assert numkit.InfiniteEigenvalue.INFINITE in spectrum.values

    def test_singular_pencil_raises(self):
        """Test de haz singular (det(A - zE) ≡ 0)"""
        a = np.diag([1.0, 0.0])
        e = np.diag([1.0, 0.0])
        with pytest.raises(SingularPencilError):
            numkit.generalized_eigenvalues(a, e)

    def test_eigen_decomposition_pencil(self):
        """Test de descomposición del haz: A X = E X Λ"""
        rng = np.random.default_rng(2)
        a = rng.standard_normal((4, 4))
        e = np.eye(4) + 0.1 * rng.standard_normal((4, 4))

        values, vectors = numkit.eigen_decomposition(a, e)

        np.testing.assert_allclose(a @ vectors, e @ vectors * values[None, :], atol=1e-10)


class TestLyapunov:
    """Tests para la ecuación de Lyapunov"""

    def test_matches_scipy(self):
        """Test contra scipy.linalg.solve_continuous_lyapunov"""
        sys = make_stable_system(6, seed=4)
        rhs = -np.outer(sys.b, sys.b)

        w = numkit.solve_lyapunov(sys.a, rhs)
        reference = scipy.linalg.solve_continuous_lyapunov(sys.a, rhs)

        assert np.isrealobj(w)
        np.testing.assert_allclose(w, reference, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(sys.a @ w + w @ sys.a.T, rhs, atol=1e-10)

    @given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=1, max_value=8))
    @settings(max_examples=30, deadline=None)
    def test_solution_is_symmetric_psd(self, seed, n):
        """Propiedad: con rhs = -b bᵀ la solución es simétrica y semidefinida positiva"""
        sys = make_stable_system(n, seed)

        w = numkit.solve_lyapunov(sys.a, -np.outer(sys.b, sys.b))

        np.testing.assert_allclose(w, w.T, atol=1e-14 * max(1.0, np.max(np.abs(w))))
        assert np.min(np.linalg.eigvalsh(w)) >= -1e-10 * np.max(np.abs(w))

    def test_unstable_matrix_rejected(self):
        """Test de matriz inestable"""
        with pytest.raises(UnstableSystemError):
            numkit.solve_lyapunov(np.array([[1.0]]), np.array([[-1.0]]))


class TestLinearAssignment:
    """Tests para el algoritmo húngaro"""

    def test_known_optimum(self):
        """Test de un problema 3x3 con óptimo conocido (coste 5)"""
        cost = np.array([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])

        perm = numkit.linear_assignment(cost)

        assert perm.tolist() == [1, 0, 2]
        assert cost[np.arange(3), perm].sum() == pytest.approx(5.0)

    @given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=1, max_value=6))
    @settings(max_examples=40, deadline=None)
    def test_matches_brute_force(self, seed, n):
        """Propiedad: el coste coincide con el mínimo por enumeración de permutaciones"""
        rng = np.random.default_rng(seed)
        cost = rng.uniform(0.0, 10.0, (n, n))

        perm = numkit.linear_assignment(cost)

        assert sorted(perm.tolist()) == list(range(n))
        best = min(cost[np.arange(n), list(p)].sum() for p in itertools.permutations(range(n)))
        assert cost[np.arange(n), perm].sum() == pytest.approx(best, rel=1e-12)

    def test_non_square_rejected(self):
        """Test de matriz de costes no cuadrada"""
        with pytest.raises(ValueError):
            numkit.linear_assignment(np.ones((2, 3)))


class TestSvdValues:
    """Tests para los valores singulares"""

    def test_diagonal_matrix(self):
        """Test: diag(3, -1, 2) da (3, 2, 1)"""
        np.testing.assert_allclose(numkit.svd_values(np.diag([3.0, -1.0, 2.0])), [3.0, 2.0, 1.0])

    def test_empty_matrix(self):
        """Test de matriz vacía"""
        assert numkit.svd_values(np.zeros((0, 3))).size == 0

    @given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=1, max_value=7),
           st.integers(min_value=1, max_value=7))
    @settings(max_examples=30, deadline=None)
    def test_invariant_under_conjugate_transpose(self, seed, rows, cols):
        """Propiedad: σ(M) = σ(M*), ordenados de forma descendente"""
        rng = np.random.default_rng(seed)
        m = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))

        sigma = numkit.svd_values(m)

        np.testing.assert_allclose(sigma, numkit.svd_values(m.conj().T), rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(sigma, numkit.svd_values(m.T), rtol=1e-12, atol=1e-14)
        assert np.all(np.diff(sigma) <= 0)
        assert sigma.size == min(rows, cols)


class TestSchurComplementMin:
    """Tests para el mínimo de la forma cuadrática por bloques"""

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=30, deadline=None)
    def test_matches_direct_minimization(self, seed):
        """Propiedad: coincide con la forma evaluada en x* = -a⁻¹ b y y no la supera ningún otro x"""
        rng = np.random.default_rng(seed)
        n, m = 4, 2
        g = rng.standard_normal((n + m, n + m)) + 1j * rng.standard_normal((n + m, n + m))
        full = g @ g.conj().T + 0.5 * np.eye(n + m)
        a, b, c = full[:n, :n], full[:n, n:], full[n:, n:]
        y = rng.standard_normal(m) + 1j * rng.standard_normal(m)

        value = numkit.schur_complement_min(a, b, c, y)

        x_star = -np.linalg.solve(a, b @ y)
        vec = np.concatenate([x_star, y])
        direct = float(np.real(np.vdot(vec, full @ vec)))
        assert value == pytest.approx(direct, rel=1e-8, abs=1e-10)
        x_other = x_star + 0.1 * rng.standard_normal(n)
        other = np.concatenate([x_other, y])
        assert value <= float(np.real(np.vdot(other, full @ other))) + 1e-10

    def test_indefinite_block_rejected(self):
        """Test de bloque a no definido positivo"""
        with pytest.raises(NotPositiveDefiniteError):
            numkit.schur_complement_min(np.diag([1.0, -1.0]), np.zeros((2, 1)), np.eye(1), np.ones(1))

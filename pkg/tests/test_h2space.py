"""
Tests unitarios para el módulo h2space.py
"""
import pytest
import numpy as np
from hypothesis import given, settings
import hypothesis.strategies as st

from reduction_core.exceptions import DuplicateSampleError
from reduction_core.h2space import (
    SampleSet,
    cauchy_cholesky,
    cauchy_gram,
    kernel_subspace_angle,
    principal_angles,
    projected_mismatch,
    projected_norm,
    projection_gap,
    subspace_angle_full,
    subspace_angle_tangent,
    tangent_gram,
)
from reduction_core.systems import h2_norm_rom
from tests.conftest import make_random_rom


def random_points(rng, n):
    return rng.uniform(0.1, 3.0, n) + 1j * rng.uniform(-5.0, 5.0, n)


class TestSampleSet:
    """Tests para el conjunto de puntos de muestreo"""

    def test_rejects_left_half_plane(self):
        """Test de puntos fuera de C+"""
        with pytest.raises(ValueError):
            SampleSet(np.array([1.0, -0.5]))

    def test_rejects_duplicates(self):
        """Test de puntos duplicados"""
        with pytest.raises(DuplicateSampleError):
            SampleSet(np.array([1 + 1j, 2.0, 1 + 1j]))

    def test_close_under_conjugation(self):
        """Test de cierre bajo conjugación"""
        samples = SampleSet.from_points([1 + 1j, 2.0], close=True)
        assert samples.n == 3
        assert samples.contains(1 - 1j)
        assert samples.closed_under_conjugation

    def test_append_is_nested(self):
        """Test: append conserva los puntos anteriores y sus valores"""
        samples = SampleSet(np.array([1.0, 2.0]), np.array([0.5, 0.25]))
        extended = samples.append([3.0], [0.1])
        np.testing.assert_array_equal(extended.mu[:2], samples.mu)
        np.testing.assert_array_equal(extended.values[:2], samples.values)
        assert samples.n == 2

    def test_append_requires_values(self):
        """Test: un conjunto con valores exige los valores nuevos"""
        samples = SampleSet(np.array([1.0]), np.array([0.5]))
        with pytest.raises(ValueError):
            samples.append([2.0])


class TestCauchyCholesky:
    """Tests para la factorización de Cauchy con alta precisión relativa"""

    def test_reconstruction_well_separated(self):
        """Test de reconstrucción de M(μ) con puntos separados"""
        rng = np.random.default_rng(0)
        mu = random_points(rng, 8)

        fact = cauchy_cholesky(mu)

        np.testing.assert_allclose(fact.reconstruct(), cauchy_gram(mu), rtol=1e-12)

    def test_reconstruction_clustered(self):
        """Test de reconstrucción entrada a entrada con puntos agrupados (cond(M) > 1e12)"""
        rng = np.random.default_rng(1)
        mu = 1.0 + 1e-6 * (rng.uniform(0, 1, 20) + 1j * rng.uniform(-1, 1, 20))
        gram = cauchy_gram(mu)
        assert np.linalg.cond(gram) > 1e12

        fact = cauchy_cholesky(mu)

        np.testing.assert_allclose(fact.reconstruct(), gram, rtol=1e-12)
        assert np.all(fact.diag > 0)

    @pytest.mark.parametrize("seed", range(3))
    def test_conventional_cholesky_fails_on_clustered(self, seed):
        """Test: Cholesky sobre M(μ) formada explícitamente falla o pierde más de 1e-3 por entrada"""
        rng = np.random.default_rng(seed)
        mu = 1.0 + 1e-6 * (rng.uniform(0, 1, 20) + 1j * rng.uniform(-1, 1, 20))
        gram = cauchy_gram(mu)
        fact = cauchy_cholesky(mu)
        accurate = fact.lower * np.sqrt(fact.diag)[None, :]

        np.testing.assert_allclose(fact.reconstruct(), gram, rtol=1e-12)
        try:
            conventional = np.linalg.cholesky(gram[np.ix_(fact.permutation, fact.permutation)])
        except np.linalg.LinAlgError:
            return
        mask = np.tril(np.ones(gram.shape, dtype=bool))
        relative = np.abs(conventional - accurate)[mask] / np.abs(accurate)[mask]
        assert not np.all(np.isfinite(conventional)) or np.max(relative) > 1e-3

    def test_whitening_gives_kernel_norm(self):
        """Test: P(μ) reproduce exactamente un núcleo v[μ_1]"""
        rng = np.random.default_rng(2)
        mu = random_points(rng, 6)
        fact = cauchy_cholesky(mu)
        values = cauchy_gram(mu)[:, 0]

        assert projected_norm(fact, values) == pytest.approx(np.sqrt(1.0 / (2 * mu[0].real)), rel=1e-10)

    def test_projected_mismatch_length_check(self):
        """Test de longitudes incompatibles"""
        fact = cauchy_cholesky(np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            projected_mismatch(fact, np.ones(2), np.ones(3))

    @pytest.mark.slow
    def test_quadratic_scaling(self):
        """Test: duplicar n no multiplica el tiempo por más de 5 (con holgura para el ruido)"""
        import time
        rng = np.random.default_rng(3)
        timings = []
        for n in (100, 200):
            mu = random_points(rng, n)
            start = time.perf_counter()
            for _ in range(3):
                cauchy_cholesky(mu)
            timings.append(time.perf_counter() - start)
        assert timings[1] / timings[0] <= 5.0 * 1.6


@given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=2, max_value=8))
@settings(max_examples=40, deadline=None)
def test_projection_is_contraction_and_monotone(seed, n):
    """Propiedad: ‖P(μ)F‖ ≤ ‖F‖ y no decrece al añadir muestras"""
    rng = np.random.default_rng(seed)
    rom = make_random_rom(4, seed)
    mu = random_points(rng, n + 2)
    norm_f = h2_norm_rom(rom)

    previous = 0.0
    for k in range(n, n + 3):
        pts = mu[:k]
        value = projected_norm(cauchy_cholesky(pts), rom.evaluate(pts))
        assert value <= norm_f + 1e-10 * max(1.0, norm_f)
        assert value >= previous - 1e-10 * max(1.0, norm_f)
        previous = value


class TestTangentSpace:
    """Tests para la Gram del espacio tangente y los ángulos"""

    def test_tangent_gram_single_pole(self):
        """Test de M̂ para λ = -1: [[1/2, 1/4], [1/4, 1/4]]"""
        gram = tangent_gram([-1.0])
        np.testing.assert_allclose(gram.mhat, [[0.5, 0.25], [0.25, 0.25]])

    def test_tangent_gram_second_pole(self):
        """Test de M̂ para λ = -2: ‖1/(z+2)‖² = 1/4 y ‖1/(z+2)²‖² = 1/32"""
        gram = tangent_gram([-2.0])
        np.testing.assert_allclose(np.diag(gram.mhat).real, [0.25, 1.0 / 32.0])

    def test_angle_requires_stable_pole(self):
        """Test de polo en el semiplano derecho"""
        with pytest.raises(ValueError):
            subspace_angle_tangent(np.array([1.0, 2.0]), None, 0.5)

    def test_methods_agree_on_separated_samples(self):
        """Test: la ruta SVD y la ruta residual dan los mismos ángulos"""
        rng = np.random.default_rng(4)
        mu = random_points(rng, 10)
        poles = [-0.5 + 1j, -1.5 - 2j]

        svd = principal_angles(mu, poles, method="svd")
        residual = principal_angles(mu, poles, method="residual")

        np.testing.assert_allclose(svd, residual, atol=1e-7)

    def test_missing_dimensions_are_right_angles(self):
        """Test: con menos muestras que 2r los ángulos que faltan valen π/2"""
        angles = principal_angles(np.array([1.0]), [-1.0, -2.0], method="svd")
        assert angles.size == 4
        assert np.sum(np.isclose(angles, np.pi / 2)) >= 3

    def test_default_method_follows_factorization(self):
        """Test: con fact se usa su blanqueo (svd) y sin fact la Gram residual"""
        rng = np.random.default_rng(6)
        mu = random_points(rng, 8)
        fact = cauchy_cholesky(mu)
        lam = -0.7 + 1.5j

        with_fact = subspace_angle_tangent(mu, fact, lam)
        without_fact = subspace_angle_tangent(mu, None, lam)

        assert with_fact == subspace_angle_tangent(mu, fact, lam, method="svd")
        assert without_fact == subspace_angle_tangent(mu, None, lam, method="residual")
        assert with_fact == pytest.approx(without_fact, abs=1e-7)

    def test_nearby_samples_cover_tangent_space(self):
        """Test: -conj λ y dos puntos a 1e-8 de él dan sin φ_max ≤ 1e-6"""
        lam = -1.0 + 2.0j
        center = -np.conj(lam)
        mu = np.array([center, center + 1e-8, center + 1e-8j, 3.0])

        angle = subspace_angle_tangent(mu, None, lam)

        assert 0.0 <= np.sin(angle) <= 1e-6

    def test_unknown_method(self):
        """Test de método desconocido"""
        with pytest.raises(ValueError):
            principal_angles(np.array([1.0, 2.0]), [-1.0], method="qr")

    def test_full_angle_bounds_single(self):
        """Test: el ángulo del conjunto completo no es menor que el de un polo"""
        rng = np.random.default_rng(5)
        mu = random_points(rng, 12)
        poles = [-1.0 + 0.5j, -2.0]
        single = subspace_angle_tangent(mu, cauchy_cholesky(mu), poles[0], method="svd")
        full = subspace_angle_full(mu, poles)
        assert full >= single - 1e-10

    @pytest.mark.parametrize("seed", range(10))
    def test_angle_shrinks_with_clustered_samples(self, seed):
        """Test: con tres muestras a distancia ε de -conj λ, sin φ_max / ε no crece al reducir ε"""
        rng = np.random.default_rng(seed)
        lam = complex(-rng.uniform(0.5, 3.0), rng.uniform(-3.0, 3.0))
        center = -np.conj(lam)
        roots = np.exp(2j * np.pi * np.arange(3) / 3)

        def sine(eps):
            return np.sin(subspace_angle_tangent(center + eps * roots, None, lam, method="residual"))

        reference = sine(1e-1) / 1e-1
        for eps in (1e-2, 1e-3):
            assert sine(eps) / eps <= 3.0 * reference
        assert sine(5e-3) <= 0.7 * sine(1e-2)


class TestKernelAngles:
    """Tests para ángulos entre espacios de núcleos y la distancia tangente"""

    def test_subset_has_zero_angle(self):
        """Test: V(ν) ⊂ V(μ) cuando ν ⊂ μ"""
        rng = np.random.default_rng(6)
        mu = random_points(rng, 6)
        assert kernel_subspace_angle(mu, mu[:3]) == pytest.approx(0.0, abs=1e-6)

    def test_disjoint_sets_have_positive_angle(self):
        """Test de conjuntos disjuntos"""
        assert kernel_subspace_angle(np.array([1.0, 2.0]), np.array([5.0 + 3j])) > 0.1

    def test_projection_gap_bounded_by_angle(self):
        """Test: la distancia tangente está acotada por sin² φ_max · ‖y‖²_M̂"""
        rng = np.random.default_rng(7)
        mu = random_points(rng, 5)
        poles = [-1.0 + 1j]
        y = np.array([1.0 + 0.5j, -0.3j])

        gap = projection_gap(mu, poles, y)
        norm_sq = float(np.real(np.vdot(y, tangent_gram(poles).mhat @ y)))
        phi = subspace_angle_tangent(mu, None, poles[0])

        assert gap >= -1e-12
        assert gap <= np.sin(phi) ** 2 * norm_sq + 1e-10

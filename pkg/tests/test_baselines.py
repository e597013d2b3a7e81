"""
Tests unitarios para los algoritmos de referencia (baselines.py)
"""
import pytest
import numpy as np

from reduction_core.baselines import (
    IrkaConfig,
    QuadVfConfig,
    irka,
    loewner_matrices,
    quadrature_nodes,
    quadvf,
    tfirka,
)
from reduction_core.exceptions import ConfigError, MissingMomentsError, UnsupportedModelError
from reduction_core.systems import (
    RationalRom,
    StateSpace,
    TabulatedResponse,
    TransferFunctionModel,
    check_meier_luenberger,
    h2_error,
    h2_norm_state_space,
)
from tests.conftest import make_stable_system


def sorted_shifts(points):
    return sorted(points, key=lambda z: (round(z.real, 6), z.imag))


@pytest.fixture
def first_order_system():
    """Sistema 1/(z + 1)"""
    return StateSpace(np.array([[-1.0]]), np.array([1.0]), np.array([1.0]))


class TestIrkaConfig:
    """Tests para la configuración de IRKA y TF-IRKA"""

    @pytest.mark.parametrize("kwargs", [
        {"r": 0},
        {"r": 2, "initial_shifts": [1.0]},
        {"r": 2, "initial_shifts": [1.0, -1.0]},
        {"r": 2, "initial_shifts": [1.0, 1.0]},
        {"r": 2, "initial_shifts": [1 + 1j, 2.0]},
        {"r": 2, "tol_term": 0.0},
    ])
    def test_invalid_values(self, kwargs):
        """Test de configuraciones inválidas"""
        with pytest.raises(ConfigError):
            IrkaConfig(**kwargs)

    def test_from_dict_accepts_target_r(self):
        """Test: 'target_r' como alias de r"""
        cfg = IrkaConfig.from_dict({"target_r": 2, "initial_shifts": [[1.0, 1.0], [1.0, -1.0]]})
        assert cfg.r == 2
        assert len(cfg.initial_shifts) == 2

    def test_quadvf_from_dict(self):
        """Test de la configuración de QuadVF con sección 'fit'"""
        cfg = QuadVfConfig.from_dict({"r": 4, "num_nodes": 500, "fit": {"max_nfev": 30}})
        assert cfg.num_nodes == 500
        assert cfg.fit_options.max_nfev == 30
        with pytest.raises(ConfigError):
            QuadVfConfig(r=2, scale_L=0.0)


class TestIrka:
    """Tests para IRKA con bases de Krylov"""

    def test_scalar_system(self, first_order_system):
        """Test: 1/(z+1) con r = 1 se recupera y converge en la segunda iteración"""
        rom, record = irka(first_order_system, IrkaConfig(r=1, initial_shifts=[2.0]))

        np.testing.assert_allclose(rom.poles, [-1.0], atol=1e-12)
        np.testing.assert_allclose(rom.residues, [1.0], atol=1e-12)
        assert record.status == "converged"
        assert len(record.iterations) == 2

    def test_full_order_reproduces_system(self, stable_system):
        """Test: con r = n el ROM coincide con el sistema"""
        model = TransferFunctionModel.from_state_space(stable_system)
        rom, record = irka(model, IrkaConfig(r=8, max_iters=5))
        assert h2_error(model, rom) <= 1e-10

    def test_meier_luenberger_at_convergence(self, stable_system):
        """Test: el punto fijo cumple las condiciones de interpolación de Hermite"""
        model = TransferFunctionModel.from_state_space(stable_system)
        rom, record = irka(model, IrkaConfig(r=4, max_iters=200))

        assert record.status == "converged"
        report = check_meier_luenberger(model, rom)
        assert report.max_mismatch <= 1e-6 * h2_norm_state_space(stable_system)

    def test_solves_are_counted(self, stable_system):
        """Test: cada iteración cuenta 2r resoluciones"""
        model = TransferFunctionModel.from_state_space(stable_system)
        _, record = irka(model, IrkaConfig(r=2, initial_shifts=[1 + 1j, 1 - 1j], max_iters=3))
        assert [it.fom_evals for it in record.iterations] == [4 * k for k in range(1, len(record.iterations) + 1)]

    def test_order_too_large(self, first_order_system):
        """Test: r mayor que el orden del sistema"""
        with pytest.raises(ConfigError):
            irka(first_order_system, IrkaConfig(r=2))

    def test_delay_model_rejected(self, delay_model):
        """Test: IRKA necesita una realización"""
        with pytest.raises(UnsupportedModelError):
            irka(delay_model, IrkaConfig(r=2, initial_shifts=[1.0, 2.0]))


class TestTfIrka:
    """Tests para TF-IRKA con matrices de Loewner"""

    def test_first_order_model(self):
        """Test: 1/(z+1) con r = 1 da el polo -1"""
        model = TransferFunctionModel.from_rational(RationalRom(np.array([1.0]), np.array([1.0])))
        rom, record = tfirka(model, IrkaConfig(r=1, initial_shifts=[2.0]))
        np.testing.assert_allclose(rom.poles, [-1.0], atol=1e-10)
        assert record.converged

    def test_loewner_interpolant_is_hermite(self, simple_rom):
        """Test: el ROM de cada iteración interpola H y H' en los desplazamientos"""
        model = TransferFunctionModel.from_rational(simple_rom)
        _, record = tfirka(model, IrkaConfig(r=2, initial_shifts=[1.0, 3.0], max_iters=2))

        first = record.iterations[0]
        for s in first.added_points:
            h = model.evaluate(s, record=False)
            dh = model.evaluate_derivative(s, record=False)
            assert abs(first.rom.evaluate(s) - h) <= 1e-8 * abs(h)
            assert abs(first.rom.derivative(s) - dh) <= 1e-8 * abs(dh)

    def test_loewner_matrices_diagonal(self):
        """Test de las entradas diagonales de E y A"""
        e, a = loewner_matrices(np.array([1.0, 2.0]), np.array([0.5, 1.0 / 3.0]), np.array([-0.25, -1.0 / 9.0]))
        np.testing.assert_allclose(np.diag(e), [0.25, 1.0 / 9.0])
        np.testing.assert_allclose(np.diag(a), [-(0.5 - 0.25), -(1.0 / 3.0 - 2.0 / 9.0)])
        assert e[0, 1] == pytest.approx(-(0.5 - 1.0 / 3.0) / (1.0 - 2.0))

    def test_matches_irka_shift_sequence(self):
        """Test: IRKA y TF-IRKA producen los mismos desplazamientos en las primeras 5 iteraciones"""
        sys = make_stable_system(6, seed=11)
        shifts = [1 + 1j, 1 - 1j]
        model_a = TransferFunctionModel.from_state_space(sys)
        model_b = TransferFunctionModel.from_state_space(sys)

        _, rec_irka = irka(model_a, IrkaConfig(r=2, initial_shifts=shifts, max_iters=5, tol_term=1e-300))
        _, rec_tf = tfirka(model_b, IrkaConfig(r=2, initial_shifts=shifts, max_iters=5, tol_term=1e-300))

        count = min(len(rec_irka.iterations), len(rec_tf.iterations))
        assert count >= 2
        for it_a, it_b in zip(rec_irka.iterations[:count], rec_tf.iterations[:count]):
            np.testing.assert_allclose(sorted_shifts(it_a.added_points), sorted_shifts(it_b.added_points),
                                       rtol=1e-8, atol=1e-8)

    def test_evaluations_per_iteration(self, delay_model):
        """Test: cada iteración cuenta r evaluaciones de H y r de H' sin reutilizar caché"""
        _, record = tfirka(delay_model, IrkaConfig(r=2, initial_shifts=[1 + 1j, 1 - 1j], max_iters=3))
        evals = [it.fom_evals for it in record.iterations]
        assert evals == [4 * k for k in range(1, len(evals) + 1)]

    def test_tabulated_model_rejected(self):
        """Test: los modelos tabulados no tienen H'"""
        table = TabulatedResponse(np.array([1.0, 2.0]), np.array([0.5, 1.0 / 3.0]))
        with pytest.raises(UnsupportedModelError):
            tfirka(TransferFunctionModel.from_tabulated(table), IrkaConfig(r=1, initial_shifts=[1.0]))

    def test_delay_model_requires_shifts(self, delay_model):
        """Test: sin polos accesibles se exigen desplazamientos iniciales"""
        with pytest.raises(ConfigError):
            tfirka(delay_model, IrkaConfig(r=2))


class TestQuadVf:
    """Tests para el ajuste sobre la cuadratura BCC"""

    def test_single_node_rule(self):
        """Test: con un nodo la regla es z = 0 con peso L/4"""
        rule = quadrature_nodes(1, scale_L=10.0)
        np.testing.assert_allclose(rule.nodes, [0.0])
        np.testing.assert_allclose(rule.weights, [2.5])
        assert rule.moment_weight == pytest.approx(1.0 / 80.0)

    def test_recovers_rational_model(self, simple_rom):
        """Test: un racional de grado 2 se recupera con r = 2"""
        model = TransferFunctionModel.from_rational(simple_rom)

        rom, record = quadvf(model, QuadVfConfig(r=2, num_nodes=200))

        assert h2_error(model, rom) <= 1e-8
        assert record.status in ("converged", "degraded")
        assert len(record.iterations) == 1

    def test_conjugate_nodes_share_evaluations(self, simple_rom):
        """Test: los nodos conjugados cuestan una sola evaluación"""
        model = TransferFunctionModel.from_rational(simple_rom)
        _, record = quadvf(model, QuadVfConfig(r=2, num_nodes=201))
        assert record.fom_evals == 101

    def test_reports_nominal_count(self, simple_rom):
        """Test: el registro conserva n + 2 cantidades nominales junto a las evaluaciones reales"""
        model = TransferFunctionModel.from_rational(simple_rom)

        _, with_moments = quadvf(model, QuadVfConfig(r=2, num_nodes=201))
        _, without_moments = quadvf(model.clone(), QuadVfConfig(r=2, num_nodes=201, use_moments=False))

        assert with_moments.nominal_evals == 203
        assert without_moments.nominal_evals == 201
        assert with_moments.fom_evals < with_moments.nominal_evals

    def test_missing_moments(self, delay_model):
        """Test: sin momentos en infinito y con use_moments se rechaza"""
        with pytest.raises(MissingMomentsError):
            quadvf(delay_model, QuadVfConfig(r=2, num_nodes=50))

    def test_without_moments(self, delay_model):
        """Test: con use_moments=False el sistema con retardo se ajusta"""
        rom, record = quadvf(delay_model, QuadVfConfig(r=2, num_nodes=100, use_moments=False))
        assert rom.degree == 2
        assert np.all(rom.poles.real < 0)

"""
Tests de integración: descriptor de modelo -> algoritmos -> resumen
"""
import json

import pytest
import numpy as np
import pandas as pd
import scipy.io

from reduction_core.harness import ExperimentConfig, run_experiment
from tests.conftest import make_stable_system

SHARED_POINTS = [[0.5, 1.0], [0.5, -1.0], [0.5, 5.0], [0.5, -5.0], [0.5, 20.0], [0.5, -20.0]]


@pytest.fixture
def matrix_market_descriptor(temp_data_dir):
    """Sistema de orden 10 guardado en Matrix Market con su descriptor JSON"""
    sys = make_stable_system(10, seed=8)
    scipy.io.mmwrite(str(temp_data_dir / "A.mtx"), sys.a)
    scipy.io.mmwrite(str(temp_data_dir / "b.mtx"), sys.b.reshape(-1, 1))
    scipy.io.mmwrite(str(temp_data_dir / "c.mtx"), sys.c.reshape(1, -1))
    path = temp_data_dir / "modelo.json"
    path.write_text(json.dumps({"kind": "state_space", "a": "A.mtx", "b": "b.mtx", "c": "c.mtx",
                                "name": "ss10"}), encoding="utf-8")
    return path


@pytest.mark.integration
class TestIntegration:
    """Tests de integración entre módulos"""

    def test_all_algorithms_on_matrix_market_model(self, matrix_market_descriptor, temp_data_dir):
        """Test del flujo completo: Matrix Market -> cuatro algoritmos -> resumen e historiales"""
        cfg = ExperimentConfig(
            model=str(matrix_market_descriptor),
            algorithms=["ph2", "irka", "tfirka", "quadvf"],
            rom_dims=[2, 4],
            algorithm_params={"ph2": {"max_outer_iters": 40}, "quadvf": {"num_nodes": 400}},
            output_dir=str(temp_data_dir / "out"),
            h2_error_quad_points=2000,
        )

        rows = run_experiment(cfg)

        assert len(rows) == 8
        assert all(row.error is None for row in rows), [row.error for row in rows if row.error]
        assert all(0 <= row.rel_h2_error < 1 for row in rows)
        summary = pd.read_csv(temp_data_dir / "out" / "summary.csv")
        assert len(summary) == 8
        for row in rows:
            assert (temp_data_dir / "out" / f"history_{row.algorithm}_r{row.r}.csv").exists()

    @pytest.mark.slow
    def test_delay_system_comparison(self, temp_data_dir):
        """Test: sobre el sistema con retardo (n = 200, r = 6) PH2 usa menos evaluaciones que TF-IRKA
        con un error H2 comparable"""
        cfg = ExperimentConfig(
            model={"kind": "delay", "n": 200, "tau": 1.0, "rho": 0.1, "epsilon": 0.01},
            algorithms=["ph2", "tfirka"],
            rom_dims=[6],
            algorithm_params={
                "ph2": {"initial_mu": SHARED_POINTS},
                "tfirka": {"initial_shifts": SHARED_POINTS},
            },
            output_dir=str(temp_data_dir / "delay"),
            h2_error_quad_points=10000,
        )

        rows = run_experiment(cfg)

        by_algo = {row.algorithm: row for row in rows}
        ph2_row, tf_row = by_algo["ph2"], by_algo["tfirka"]
        assert ph2_row.error is None and tf_row.error is None
        assert ph2_row.fom_evals < tf_row.fom_evals
        assert np.isfinite(ph2_row.rel_h2_error)
        assert ph2_row.rel_h2_error <= 2.0 * tf_row.rel_h2_error

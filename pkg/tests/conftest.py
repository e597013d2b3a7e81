"""
Configuración compartida para todos los tests.
Proporciona fixtures comunes (sistemas estables aleatorios, modelos
racionales, sistema con retardo) y configuración de pytest.
"""
import pytest
import numpy as np
import tempfile
from pathlib import Path
import sys

# Agregar el directorio raíz al path para importar módulos
sys.path.insert(0, str(Path(__file__).parent.parent))

from reduction_core.systems import (
    DelaySystem,
    RationalRom,
    StateSpace,
    TransferFunctionModel,
)


def make_stable_system(n, seed):
    """Sistema real estable de orden n con polos -α ± iβ bien separados, rotado por una Q ortogonal."""
    rng = np.random.default_rng(seed)
    d = np.zeros((n, n))
    k = 0
    while k + 1 < n:
        alpha = rng.uniform(0.5, 3.0)
        beta = rng.uniform(0.5, 5.0)
        d[k:k + 2, k:k + 2] = [[-alpha, beta], [-beta, -alpha]]
        k += 2
    if k < n:
        d[k, k] = -rng.uniform(0.5, 3.0)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return StateSpace(q @ d @ q.T, rng.standard_normal(n), rng.standard_normal(n))


def make_random_rom(r, seed):
    """ROM real estable de grado r con polos complejos conjugados (y uno real si r es impar)."""
    rng = np.random.default_rng(seed)
    poles, residues = [], []
    for _ in range(r // 2):
        lam = complex(-rng.uniform(0.3, 3.0), rng.uniform(0.5, 6.0))
        rho = complex(rng.standard_normal(), rng.standard_normal())
        poles += [lam, np.conj(lam)]
        residues += [rho, np.conj(rho)]
    if r % 2:
        poles.append(complex(-rng.uniform(0.3, 3.0)))
        residues.append(complex(rng.standard_normal()))
    return RationalRom.from_pole_residue(poles, residues)


@pytest.fixture
def temp_data_dir():
    """Crear directorio temporal para resultados de prueba"""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def simple_rom():
    """ROM 1/(z² + 2z + 2): polos -1 ± i"""
    return RationalRom(np.array([1.0, 0.0]), np.array([2.0, 2.0]))


@pytest.fixture
def random_rom():
    """ROM aleatorio de grado 4 con semilla fija"""
    return make_random_rom(4, seed=7)


@pytest.fixture
def rational_model(random_rom):
    """Modelo de orden completo que es exactamente un racional de grado 4"""
    return TransferFunctionModel.from_rational(random_rom, name="racional4")


@pytest.fixture
def stable_system():
    """Sistema en espacio de estados estable de orden 8"""
    return make_stable_system(8, seed=3)


@pytest.fixture
def state_space_model(stable_system):
    """Modelo envolvente del sistema de orden 8"""
    return TransferFunctionModel.from_state_space(stable_system, name="ss8")


@pytest.fixture
def small_delay_system():
    """Sistema con retardo pequeño (n = 20) para comparar con la forma densa"""
    return DelaySystem(20, delay_tau=1.0, rho=0.1, epsilon=0.01)


@pytest.fixture
def delay_model(small_delay_system):
    """Modelo envolvente del sistema con retardo pequeño"""
    return TransferFunctionModel.from_delay(small_delay_system, name="delay20")

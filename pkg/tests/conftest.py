"""
Fixtures compartidas: parámetros del dispositivo, rejillas y fuentes ideales.
"""
import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))
os.environ.setdefault('SIM_ENV', 'testing')

from src.models import AtomParams, TimeGrid
from src.dynamics import ideal_phi_plus, exponential_photon

T1 = 136.0


@pytest.fixture(scope="session")
def atom() -> AtomParams:
    return AtomParams.from_T1(T1)


@pytest.fixture(scope="session")
def atom_dephased() -> AtomParams:
    """γ* = 0.11γ, el valor que da M_s = 0.82"""
    return AtomParams.from_T1(T1, gamma_star=0.11 / T1)


@pytest.fixture(scope="session")
def phi_grid(atom) -> TimeGrid:
    """Rejilla con T1/2 sobre un borde de celda (100 celdas antes del umbral)"""
    paso = atom.half_life / 100
    return TimeGrid.covering(10 * T1 + atom.half_life, paso)


@pytest.fixture(scope="session")
def ideal_phi(atom, phi_grid):
    return ideal_phi_plus(atom, phi_grid)


@pytest.fixture(scope="session")
def photon_grid() -> TimeGrid:
    return TimeGrid.covering(10 * T1, 1.0)


@pytest.fixture(scope="session")
def ideal_photon(atom, photon_grid):
    return exponential_photon(atom, photon_grid)


@pytest.fixture(scope="session")
def ideal_phi_maps(ideal_phi):
    from src.correlations import build_maps
    return build_maps(ideal_phi)

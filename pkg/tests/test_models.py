"""
Tipos base y lectura del documento de simulación
"""
import math

import numpy as np
import pytest

from src.errors import ValidationError, ConfigParseError, NumericalError
from src.models import (
    AtomParams, PulseSequence, SimulationOptions, TimeGrid, TimeBinPartition, PhotonicState,
    normalize, parse_config, dump_config,
)


# ========================
# DOCUMENTO DE CONFIGURACIÓN
# ========================

def test_parse_config_mapa_compacto():
    atom, seq, opciones = parse_config("{T1: 136, dt: [98]}")
    assert atom.gamma == pytest.approx(1 / 136)
    assert atom.gamma_star == 0
    assert seq.n_pulses == 2
    assert seq.separations == (98.0,)
    assert seq.is_ideal
    assert opciones.grid_step == 1.0


def test_parse_config_lineas_clave_valor():
    texto = """
    # dispositivo
    T1: 136
    tp: 20
    dt: [98]
    gamma_star: 0.00081
    jitter_fwhm: 50
    seed: 7
    """
    atom, seq, opciones = parse_config(texto)
    assert atom.T1 == pytest.approx(136)
    assert seq.pulse_width == 20
    assert seq.rabi == pytest.approx(math.pi / 20)
    assert opciones.jitter_fwhm == 50
    assert opciones.seed == 7


def test_parse_config_json_estricto():
    atom, seq, _ = parse_config('{"T1": 136, "dt": [50, 50, 50]}')
    assert seq.n_pulses == 4
    assert seq.chronological_gaps == (50.0, 50.0, 50.0)


def test_T1_negativo_es_error_de_gamma():
    with pytest.raises(ValidationError) as exc:
        parse_config("{T1: -5}")
    assert exc.value.field == 'gamma'
    assert exc.value.exit_code == 2


def test_clave_duplicada():
    with pytest.raises(ConfigParseError) as exc:
        parse_config("T1: 136\nT1: 100\n")
    assert exc.value.linea == 2


def test_clave_desconocida():
    with pytest.raises(ValidationError) as exc:
        parse_config("{T1: 136, color: 3}")
    assert exc.value.field == 'color'


def test_falta_T1():
    with pytest.raises(ValidationError) as exc:
        parse_config("{dt: [98]}")
    assert exc.value.field == 'T1'


def test_linea_mal_formada():
    with pytest.raises(ConfigParseError):
        parse_config("T1 136")


def test_dump_config_reproduce_el_documento():
    original = parse_config("T1: 136\ntp: 20\ndt: [98, 60]\njitter_fwhm: 50\nseed: 3\n")
    releido = parse_config(dump_config(*original))
    assert releido[0].T1 == pytest.approx(original[0].T1)
    assert releido[1] == original[1]
    assert releido[2] == original[2]


# ========================
# SECUENCIAS Y OPCIONES
# ========================

def test_numero_de_separaciones():
    with pytest.raises(ValidationError) as exc:
        PulseSequence(n_pulses=3, separations=(50.0,))
    assert exc.value.field == 'dt'


def test_separacion_implicita_infinita():
    seq = PulseSequence(n_pulses=3, separations=(10.0, 20.0))
    assert seq.separation(1) == math.inf
    assert seq.separation(2) == 10.0
    # cronológicamente el primer hueco es Δt_3
    assert seq.chronological_gaps == (20.0, 10.0)
    np.testing.assert_allclose(seq.pulse_starts, [0, 20, 30])


def test_opciones_invalidas():
    with pytest.raises(ValidationError):
        SimulationOptions(grid_step=0)
    with pytest.raises(ValidationError):
        SimulationOptions(jitter_fwhm=-1)


def test_semivida():
    atom = AtomParams.from_T1(136)
    assert atom.half_life == pytest.approx(136 * math.log(2))


# ========================
# REJILLAS
# ========================

def test_rejilla_de_celdas():
    grid = TimeGrid.covering(10.0, 1.0)
    assert grid.n_points == 10
    assert grid.lower_edge == pytest.approx(0)
    assert grid.upper_edge == pytest.approx(10)
    assert grid.integrate(np.ones(10)) == pytest.approx(10)


def test_pesos_tempranos():
    grid = TimeGrid.covering(10.0, 1.0)
    np.testing.assert_allclose(grid.early_weights(3.0)[:5], [1, 1, 1, 0, 0])
    # la celda que contiene T cuenta a medias
    np.testing.assert_allclose(grid.early_weights(3.5)[:5], [1, 1, 1, 0.5, 0])


def test_particion_creciente():
    with pytest.raises(ValidationError):
        TimeBinPartition(thresholds=(5.0, 3.0))


# ========================
# ESTADOS
# ========================

def test_estado_no_normalizado():
    with pytest.raises(ValidationError):
        PhotonicState(2, {'00': 1, '11': 1})


def test_normalize_conserva_fases():
    bruto = PhotonicState(2, {'00': 1, '11': 1j}, check_norm=False)
    estado = normalize(bruto)
    assert estado.norm == pytest.approx(1)
    assert estado.amplitude('11') / estado.amplitude('00') == pytest.approx(1j)


def test_normalize_vacio():
    with pytest.raises(ValidationError) as exc:
        normalize(PhotonicState(2, {}))
    assert exc.value.field == 'amplitudes'
    assert exc.value.exit_code == 2


def test_normalize_amplitudes_nulas():
    with pytest.raises(ValidationError):
        normalize(PhotonicState(2, {'00': 0, '11': 0}, check_norm=False))


def test_normalize_norma_no_finita():
    with pytest.raises(NumericalError):
        normalize(PhotonicState(2, {'00': float('inf')}, check_norm=False))


def test_patron_ideal():
    with pytest.raises(ValidationError):
        PhotonicState(2, {'01': 1})
    PhotonicState(2, {'01': 1}, ideal=False)


def test_guardar_y_cargar(tmp_path):
    s = 1 / math.sqrt(2)
    estado = PhotonicState(2, {'00': s, '11': s})
    ruta = tmp_path / 'estado.json'
    estado.guardar(str(ruta))
    cargado = PhotonicState.cargar(str(ruta))
    assert cargado.n_bins == 2
    for bits in ('00', '11'):
        assert cargado.amplitude(bits) == pytest.approx(s)

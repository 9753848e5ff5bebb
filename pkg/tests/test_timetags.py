"""
Monte Carlo de etiquetas de tiempo, histogramas y mapas desde clics
"""
import math

import numpy as np
import pytest

from src.errors import ValidationError
from src.models import TimeGrid
from src.dynamics import two_pulse
from src.correlations import quadrant_reduce, fit_phase_quadratic
from src.timetags import (
    HBT3, MZI, DetectionConfig, EventStream, EmissionModel, generate_events,
    histogram_g2, histogram_g3, correlation_map_from_tags, phase_resolved_hom,
    CABECERA, REGISTRO, write_events, read_events,
)

T1 = 136.0


@pytest.fixture(scope="module")
def coarse_grid(atom):
    """Rejilla gruesa (T1/2 en borde de celda) para no construir mapas grandes"""
    return TimeGrid.covering(10 * T1 + atom.half_life, atom.half_life / 20)


@pytest.fixture(scope="module")
def phi_model(atom, coarse_grid):
    return EmissionModel.ideal_phi_plus(atom, coarse_grid)


@pytest.fixture(scope="module")
def phi_stream(phi_model):
    return generate_events(phi_model, HBT3, DetectionConfig(n_pulses=30_000, seed=3))


# ========================
# MODELOS DE EMISIÓN
# ========================

def test_momentos_del_modelo_phi_plus(phi_model):
    m = phi_model.moments()
    assert m['mu'] == pytest.approx(1.0)
    assert m['g2'] == pytest.approx(1.0)
    assert m['g3'] == pytest.approx(0.0)
    assert phi_model.M == pytest.approx(0.5, abs=1e-9)


def test_momentos_del_modelo_coherente(atom, photon_grid):
    m = EmissionModel.coherent(0.5, atom, photon_grid).moments()
    assert m['mu'] == pytest.approx(0.5, abs=1e-9)
    assert m['g2'] == pytest.approx(1.0, abs=1e-6)
    assert m['g3'] == pytest.approx(1.0, abs=1e-6)


def test_coherente_sin_fotones(atom, photon_grid):
    with pytest.raises(ValidationError):
        EmissionModel.coherent(0.0, atom, photon_grid)


def test_probabilidades_del_modelo(photon_grid):
    with pytest.raises(ValidationError):
        EmissionModel(photon_grid, (0.5, 0.2), ((), (0,)), (np.ones(photon_grid.n_points),))


# ========================
# HBT
# ========================

def test_foton_unico_sin_coincidencias(atom, photon_grid):
    modelo = EmissionModel.single_photon(atom, photon_grid)
    cfg = DetectionConfig(n_pulses=20_000, seed=1)
    stream = generate_events(modelo, HBT3, cfg)
    h = histogram_g2(stream, cfg)
    assert h.counts[h.delays == 0][0] == 0
    assert h.g2_zero == 0
    assert h.side_mean > 0


def test_g2_de_phi_plus(phi_stream):
    h = histogram_g2(phi_stream, DetectionConfig())
    assert h.g2_zero == pytest.approx(1.0, abs=0.06)
    assert len(h.to_frame()) == 23


def test_g3_de_phi_plus(phi_stream):
    assert histogram_g3(phi_stream, DetectionConfig()).g3_zero == 0


def test_fuente_coherente(atom, photon_grid):
    modelo = EmissionModel.coherent(1.0, atom, photon_grid)
    cfg = DetectionConfig(n_pulses=30_000, seed=5)
    stream = generate_events(modelo, HBT3, cfg)
    assert histogram_g2(stream, cfg).g2_zero == pytest.approx(1.0, abs=0.1)
    assert histogram_g3(stream, cfg).g3_zero == pytest.approx(1.0, abs=0.2)


def test_g2_invariante_frente_a_perdidas(phi_model):
    cfg = DetectionConfig(efficiency=0.3, n_pulses=30_000, seed=8)
    stream = generate_events(phi_model, HBT3, cfg)
    assert histogram_g2(stream, cfg).g2_zero == pytest.approx(1.0, abs=0.1)


def test_eficiencia_por_detector(phi_model):
    cfg = DetectionConfig(efficiency=(1.0, 0.0, 1.0), n_pulses=2_000, seed=4)
    stream = generate_events(phi_model, HBT3, cfg)
    assert not np.any(stream.detector == 1)


def test_determinista_por_semilla(phi_model):
    cfg = DetectionConfig(n_pulses=5_000, seed=21, jitter_fwhm=50.0)
    a = generate_events(phi_model, HBT3, cfg)
    b = generate_events(phi_model, HBT3, cfg)
    np.testing.assert_array_equal(a.time, b.time)
    np.testing.assert_array_equal(a.detector, b.detector)
    c = generate_events(phi_model, HBT3, DetectionConfig(n_pulses=5_000, seed=22, jitter_fwhm=50.0))
    assert len(c) != len(a) or np.any(c.time != a.time)


def test_lotes_no_cambian_el_numero_de_pulsos(phi_model):
    cfg = DetectionConfig(n_pulses=5_000, seed=2, batch_pulses=1_000)
    stream = generate_events(phi_model, HBT3, cfg)
    assert stream.periods.max() < 5_000
    assert stream.clock_offset == 0


def test_fondo_anade_clics(phi_model):
    sin = generate_events(phi_model, HBT3, DetectionConfig(n_pulses=5_000, seed=9))
    con = generate_events(phi_model, HBT3, DetectionConfig(n_pulses=5_000, seed=9, background_rate=1e7))
    assert len(con) > len(sin)


def test_topologia_desconocida(phi_model):
    with pytest.raises(ValidationError) as exc:
        generate_events(phi_model, 'hbt4', DetectionConfig(n_pulses=100, seed=1))
    assert exc.value.field == 'topology'


def test_pocos_periodos(phi_model):
    cfg = DetectionConfig(n_pulses=50, seed=1)
    stream = generate_events(phi_model, HBT3, cfg)
    with pytest.raises(ValidationError):
        histogram_g2(stream, cfg)


def test_picos_independientes_del_binado(phi_stream):
    fino = histogram_g2(phi_stream, DetectionConfig(bin_width=8.0))
    grueso = histogram_g2(phi_stream, DetectionConfig(bin_width=100.0))
    assert fino.bin_edges[1] - fino.bin_edges[0] == pytest.approx(8.0)
    assert grueso.bin_edges[1] - grueso.bin_edges[0] == pytest.approx(100.0)
    np.testing.assert_array_equal(fino.counts, grueso.counts)
    assert fino.fine_counts.sum() == pytest.approx(fino.counts.sum())
    assert len(fino.fine_frame()) == len(fino.fine_counts)


def test_pico_central_ensanchado_por_el_jitter(phi_model):
    nitido = DetectionConfig(n_pulses=20_000, seed=6)
    borroso = DetectionConfig(n_pulses=20_000, seed=6, jitter_fwhm=200.0)
    a = histogram_g2(generate_events(phi_model, HBT3, nitido), nitido)
    b = histogram_g2(generate_events(phi_model, HBT3, borroso), borroso)

    def anchura(h):
        centros = (h.bin_edges[:-1] + h.bin_edges[1:]) / 2
        sel = np.abs(centros) < h.bin_edges[-1] / (2 * 11.5)
        return math.sqrt(np.sum(h.fine_counts[sel] * centros[sel] ** 2) / np.sum(h.fine_counts[sel]))

    assert anchura(b) > anchura(a)
    assert b.g2_zero == pytest.approx(a.g2_zero, abs=0.1)


def test_g3_sin_condiciones_periodicas():
    # clics en los extremos del flujo: con envoltura periódica formarían tripletes
    rep = 12_300
    tiempos = np.array([100, 149 * rep + 100, 148 * rep + 100], dtype=np.uint64)
    detectores = np.array([0, 1, 2], dtype=np.uint8)
    orden = np.argsort(tiempos)
    stream = EventStream(detectores[orden], tiempos[orden], 3, HBT3, n_pulses=150)
    with pytest.raises(ValidationError):
        histogram_g3(stream, DetectionConfig())


def test_ventana_de_coincidencia_de_g3(atom, photon_grid):
    modelo = EmissionModel.coherent(1.0, atom, photon_grid)
    ancho = DetectionConfig(n_pulses=20_000, seed=12)
    estrecho = DetectionConfig(n_pulses=20_000, seed=12, coincidence_window=100.0)
    stream = generate_events(modelo, HBT3, ancho)
    assert histogram_g3(stream, estrecho).counts.sum() < histogram_g3(stream, ancho).counts.sum()
    with pytest.raises(ValidationError) as exc:
        DetectionConfig(coincidence_window=20_000.0)
    assert exc.value.field == 'coincidence_window'


@pytest.fixture(scope="module")
def finite_pulse_stream(atom):
    rejilla = TimeGrid.covering(10 * T1 + 118.0, 2.0)
    modelo = EmissionModel.from_two_pulse(two_pulse(atom, math.pi / 20, 20.0, 98.0, rejilla))
    cfg = DetectionConfig(n_pulses=100_000, seed=17)
    return modelo, cfg, generate_events(modelo, HBT3, cfg)


def test_g2_de_pulsos_finitos_frente_a_los_momentos(finite_pulse_stream):
    modelo, cfg, stream = finite_pulse_stream
    h = histogram_g2(stream, cfg)
    assert abs(h.g2_zero - modelo.moments()['g2']) < 3 * h.sigma


def test_g3_de_pulsos_finitos_frente_a_los_momentos(finite_pulse_stream):
    modelo, cfg, stream = finite_pulse_stream
    esperado = modelo.moments()['g3']
    assert esperado > 0.05
    h = histogram_g3(stream, cfg)
    assert h.g3_zero == pytest.approx(esperado, rel=0.15)


def test_configuracion_invalida():
    with pytest.raises(ValidationError):
        DetectionConfig(efficiency=1.5)
    with pytest.raises(ValidationError):
        DetectionConfig(efficiency=(0.5, 0.5)).efficiencies(3)


def test_tiempos_desordenados():
    with pytest.raises(ValidationError):
        EventStream(np.array([0, 1], dtype=np.uint8), np.array([10, 5], dtype=np.uint64), 3)


# ========================
# MAPAS DESDE CLICS
# ========================

def test_mapa_de_clics_de_phi_plus(phi_stream, atom):
    # T1/2 cae en un borde de bin
    cfg = DetectionConfig(n_pulses=30_000, seed=3, bin_width=atom.half_life / 12)
    maps = correlation_map_from_tags(phi_stream, cfg, span=10 * T1 + atom.half_life)
    s = quadrant_reduce(maps, atom.half_life)
    assert s.mu == pytest.approx(1.0, abs=0.03)
    assert s.mu_bar_e == pytest.approx(0.5, abs=0.03)
    assert s.g2_ab['el'] > 1.9
    assert s.g2_ab['ee'] < 0.1


# ========================
# MZI
# ========================

@pytest.mark.slow
def test_ajuste_de_fase_en_el_mzi(atom, photon_grid):
    foton = EmissionModel.single_photon(atom, photon_grid).profiles[0]
    perfil = np.sqrt(foton / photon_grid.step)
    modelo = EmissionModel.from_patterns(
        photon_grid, [(0.945, ()), (0.05, (perfil,)), (0.005, (perfil, perfil))],
        M=0.9, c2=0.5, c1=0.5,
    )
    n_pulsos = 16_000_000
    duracion_s = n_pulsos * 12300e-12
    cfg = DetectionConfig(
        n_pulses=n_pulsos, seed=13, drift_rate=2 * math.pi / duracion_s, phase_window=duracion_s / 100,
    )
    stream = generate_events(modelo, MZI, cfg)
    assert stream.n_detectors == 2

    tabla = phase_resolved_hom(stream, cfg)
    assert len(tabla) >= 95
    assert tabla['i_sh'].abs().max() == pytest.approx(0.5, abs=0.1)

    ajuste = fit_phase_quadratic(list(zip(tabla['i_sh'], tabla['g2_hom'])), c1=modelo.c1)
    assert ajuste.c2 == pytest.approx(0.5, rel=0.15)


def test_hom_resuelto_necesita_mzi(phi_stream):
    with pytest.raises(ValidationError):
        phase_resolved_hom(phi_stream, DetectionConfig())


# ========================
# E/S BINARIA
# ========================

def test_fichero_ttag(tmp_path, phi_stream):
    ruta = tmp_path / 'clics.ttag'
    write_events(phi_stream, str(ruta))
    leido = read_events(str(ruta))
    assert leido.topology == HBT3
    assert leido.n_detectors == 3
    assert leido.n_pulses == phi_stream.n_pulses
    np.testing.assert_array_equal(leido.time, phi_stream.time)
    np.testing.assert_array_equal(leido.detector, phi_stream.detector)


def test_fichero_ttag_con_jitter_conserva_el_reloj(tmp_path, phi_model, atom):
    cfg = DetectionConfig(n_pulses=5_000, seed=23, jitter_fwhm=50.0, bin_width=atom.half_life / 12)
    stream = generate_events(phi_model, HBT3, cfg)
    assert stream.clock_offset > 0
    ruta = tmp_path / 'jitter.ttag'
    write_events(stream, str(ruta))
    leido = read_events(str(ruta))
    assert leido.n_pulses == stream.n_pulses == 5_000
    assert leido.clock_offset == stream.clock_offset
    assert leido.rep_period == stream.rep_period
    span = 10 * T1 + atom.half_life
    original = correlation_map_from_tags(stream, cfg, span)
    releido = correlation_map_from_tags(leido, cfg, span)
    for kind in ('G2', 'intensity_product'):
        np.testing.assert_array_equal(releido[kind].values, original[kind].values)


def test_fichero_ttag_con_resolucion(tmp_path, phi_stream):
    ruta = tmp_path / 'grueso.ttag'
    write_events(phi_stream, str(ruta), resolution_ps=4)
    leido = read_events(str(ruta))
    np.testing.assert_array_equal(leido.time, phi_stream.time // np.uint64(4) * np.uint64(4))


def test_fichero_ttag_version_1(tmp_path):
    registros = np.zeros(2, dtype=REGISTRO)
    registros['detector'] = [0, 1]
    registros['time'] = [100, 3 * 12_300 + 50]
    ruta = tmp_path / 'antiguo.ttag'
    ruta.write_bytes(CABECERA.pack(b'TTAG', 1, 2, 1) + registros.tobytes())
    leido = read_events(str(ruta))
    assert leido.topology == MZI
    assert leido.n_pulses == 3
    assert leido.clock_offset == 0
    np.testing.assert_array_equal(leido.time, [100, 3 * 12_300 + 50])


def test_fichero_ttag_con_magia_incorrecta(tmp_path):
    ruta = tmp_path / 'malo.ttag'
    ruta.write_bytes(b'XXXX' + b'\x00' * 40)
    with pytest.raises(ValidationError):
        read_events(str(ruta))


def test_fichero_ttag_truncado(tmp_path, phi_stream):
    ruta = tmp_path / 'corto.ttag'
    write_events(phi_stream, str(ruta))
    ruta.write_bytes(ruta.read_bytes()[:CABECERA.size + 4])
    with pytest.raises(ValidationError):
        read_events(str(ruta))

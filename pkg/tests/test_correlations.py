"""
Mapas de correlación, jitter, cuadrantes y observables HOM / auto-homodino
"""
import math

import numpy as np
import pytest

from src.errors import ValidationError, NumericalError
from src.models import TimeGrid
from src.dynamics import two_pulse, overlap_fraction
from src.correlations import (
    CorrelationMap, FWHM_A_SIGMA, build_maps, first_order_coherence, gaussian_kernel,
    apply_jitter, jitter_maps, quadrant_reduce, sweep_threshold, sweep_frame,
    hom_g2, hom_from_summary, self_homodyne, fit_phase_quadratic, overlap_from_hom,
    write_map_binary, read_map_binary,
)


@pytest.fixture(scope="module")
def phi_summary(ideal_phi_maps, atom):
    return quadrant_reduce(ideal_phi_maps, atom.half_life)


@pytest.fixture(scope="module")
def dephased_maps(atom_dephased, ideal_photon):
    return build_maps(ideal_photon, atom_dephased.gamma_star)


# ========================
# PHI+ IDEAL
# ========================

def test_intensidades_de_bin(phi_summary):
    assert phi_summary.mu == pytest.approx(1, abs=1e-9)
    assert phi_summary.mu_bar_e == pytest.approx(0.5, abs=1e-9)
    assert phi_summary.mu_bar_l == pytest.approx(0.5, abs=1e-9)


def test_cuadrantes_de_phi_plus(phi_summary):
    s = phi_summary
    assert s.g2_ab['ee'] == pytest.approx(0, abs=1e-9)
    assert s.g2_ab['ll'] == pytest.approx(0, abs=1e-9)
    assert s.g2_ab['el'] == pytest.approx(2, abs=1e-9)
    assert s.M_ab['ee'] == pytest.approx(1, abs=1e-9)
    assert s.M_ab['ll'] == pytest.approx(1, abs=1e-9)
    assert s.M_ab['el'] == pytest.approx(0, abs=1e-9)
    assert s.c2_ab['el'] == pytest.approx(1, abs=1e-9)
    assert s.g2 == pytest.approx(1, abs=1e-9)
    assert s.M == pytest.approx(0.5, abs=1e-9)
    assert s.c2 == pytest.approx(0.5, abs=1e-9)


def test_media_ponderada_de_cuadrantes(phi_summary):
    s = phi_summary
    assert s.weighted(s.g2_ab) == pytest.approx(s.g2, abs=1e-9)
    assert s.weighted(s.M_ab) == pytest.approx(s.M, abs=1e-9)
    assert s.weighted(s.c2_ab) == pytest.approx(s.c2, abs=1e-9)


def test_sin_coherencia_de_primer_orden(ideal_phi):
    assert first_order_coherence(ideal_phi) == 0


def test_barrido_de_umbral(ideal_phi_maps, atom):
    umbrales = np.linspace(0.3, 1.7, 5) * atom.half_life
    resumenes = sweep_threshold(ideal_phi_maps, umbrales)
    tabla = sweep_frame(resumenes)
    assert len(tabla) == 5
    assert {'T', 'mu_bar_e', 'g2_el', 'M_ee', 'c2_el'} <= set(tabla.columns)
    # μ̄_e crece con el umbral
    assert tabla['mu_bar_e'].is_monotonic_increasing


def test_umbral_fuera_de_la_rejilla(ideal_phi_maps):
    with pytest.raises(ValidationError):
        quadrant_reduce(ideal_phi_maps, -5.0)


# ========================
# DESFASE
# ========================

def test_indistinguibilidad_con_desfase(dephased_maps, atom):
    s = quadrant_reduce(dephased_maps, atom.half_life)
    assert s.g2 == pytest.approx(0, abs=1e-12)
    # M_s = γ/(γ+2γ*) con γ* = 0.11γ
    assert s.M == pytest.approx(1 / 1.22, abs=1e-3)
    assert s.M == pytest.approx(0.820, abs=1e-3)


def test_cuadrante_temprano_mas_indistinguible(dephased_maps, atom):
    s = quadrant_reduce(dephased_maps, 0.5 * atom.half_life)
    assert s.M_ab['ee'] > s.M


def test_coherencia_de_dos_fotones_con_desfase(atom, atom_dephased, ideal_phi):
    g, gs = atom.gamma, atom_dephased.gamma_star
    T = atom.half_life
    s = quadrant_reduce(build_maps(ideal_phi, gs), T)
    temprano = 2 * g * (math.exp(-2 * gs * T) - 0.5) / (g - 2 * gs)
    tardio = g / (g + 2 * gs)
    assert s.c2 == pytest.approx(0.5 * temprano * tardio, rel=1e-3)
    assert s.c2 == pytest.approx(0.37681, rel=1e-3)
    assert s.g2 == pytest.approx(1, abs=1e-9)


def test_hom_de_un_foton_desfasado_sin_fase(dephased_maps, atom):
    s = quadrant_reduce(dephased_maps, atom.half_life)
    esperado = (1 - 1 / 1.22) / 2
    for phi in (0.0, math.pi / 3, math.pi / 2, math.pi):
        assert hom_from_summary(s, phi)['total'] == pytest.approx(esperado, abs=1e-3)


def test_gamma_star_negativa(ideal_photon):
    with pytest.raises(ValidationError):
        build_maps(ideal_photon, -1e-3)


def test_c_minus_nulo_para_fuente_pura(atom):
    grid = TimeGrid.covering(6 * atom.T1 + 118, 2.0)
    dec = two_pulse(atom, math.pi / 20, 20.0, 98.0, grid)
    maps = build_maps(dec, include_c_minus=True)
    escala = float(np.max(maps['G2'].values))
    assert np.max(np.abs(maps['Cminus'].values)) <= 1e-12 * escala
    s = quadrant_reduce(maps, 118.0)
    assert s.c_minus_el == pytest.approx(0, abs=1e-12)


# ========================
# JITTER
# ========================

def test_jitter_conserva_la_integral(ideal_phi_maps):
    original = ideal_phi_maps['G2']
    convolucionado = apply_jitter(original, 50.0)
    assert convolucionado.integral() == pytest.approx(original.integral(), rel=1e-10)


def test_jitter_solo_cambia_el_reparto_entre_cuadrantes(ideal_phi_maps, atom):
    T = atom.half_life
    antes = quadrant_reduce(ideal_phi_maps, T)
    despues = quadrant_reduce(jitter_maps(ideal_phi_maps, 50.0), T)
    assert despues.mu == pytest.approx(antes.mu, abs=1e-6)
    assert despues.g2 == pytest.approx(antes.g2, abs=1e-6)
    assert despues.M == pytest.approx(antes.M, abs=1e-6)
    assert despues.c2 == pytest.approx(antes.c2, abs=1e-6)
    assert despues.g2_ab['ee'] > antes.g2_ab['ee']


def test_jitter_nulo_es_identidad(ideal_phi_maps):
    original = ideal_phi_maps['absG1sq']
    np.testing.assert_array_equal(apply_jitter(original, 0.0).values, original.values)


def test_anchura_del_jitter():
    grid = TimeGrid(start=0.5, step=1.0, n_points=301)
    valores = np.zeros((301, 301))
    valores[150, 150] = 1.0
    mapa = apply_jitter(CorrelationMap(grid, 'G2', valores), 50.0)
    perfil = mapa.values.sum(axis=0)
    x = np.arange(301) - 150
    sigma = math.sqrt(np.sum(x ** 2 * perfil) / np.sum(perfil))
    assert sigma / FWHM_A_SIGMA == pytest.approx(50.0, rel=0.01)


def test_nucleo_normalizado():
    k = gaussian_kernel(50.0, 0.5)
    assert k.sum() == pytest.approx(1)
    np.testing.assert_allclose(k, k[::-1])


def test_fuga_hacia_la_diagonal(ideal_phi_maps, atom):
    T = atom.half_life
    antes = quadrant_reduce(ideal_phi_maps, T)
    despues = quadrant_reduce(jitter_maps(ideal_phi_maps, 50.0), T)

    def diagonal(s):
        return s.weights['ee'] * s.g2_ab['ee'] + s.weights['ll'] * s.g2_ab['ll']

    fuga = (diagonal(despues) - diagonal(antes)) / despues.g2
    assert fuga == pytest.approx(overlap_fraction(atom.gamma, 20.0, 50.0), abs=0.03)


def test_jitter_negativo(ideal_phi_maps):
    with pytest.raises(ValidationError):
        apply_jitter(ideal_phi_maps['G2'], -1.0)


# ========================
# HOM Y AUTO-HOMODINO
# ========================

def test_hom_con_valores_medidos():
    assert hom_g2(0.3, 0.77, 0.063, 0.0) == pytest.approx(0.1465)


def test_rango_hom_de_phi_plus(phi_summary):
    phi = np.linspace(0, 2 * math.pi, 721)
    curva = hom_g2(phi, phi_summary.M, phi_summary.g2, phi_summary.c2)
    assert curva.min() == pytest.approx(0.5, abs=1e-9)
    assert curva.max() == pytest.approx(1 / phi_summary.mu, abs=1e-9)


def test_hom_por_cuadrante(phi_summary):
    valores = hom_from_summary(phi_summary, 0.0)
    assert valores['ee'] == pytest.approx(0, abs=1e-9)
    assert valores['el'] == pytest.approx(1, abs=1e-9)
    assert valores['total'] == pytest.approx(
        hom_g2(0.0, phi_summary.M, phi_summary.g2, phi_summary.c2), abs=1e-9
    )


def test_hom_solape_invalido():
    with pytest.raises(ValidationError):
        hom_g2(0.0, 1.5, 0.1, 0.0)


def test_solape_desde_hom():
    M, Ms = overlap_from_hom(0.145, 0.063)
    assert M == pytest.approx(0.773, abs=1e-3)
    assert Ms == pytest.approx(0.825, abs=1e-3)


def test_solape_sin_ms_para_g2_grande():
    M, Ms = overlap_from_hom(0.6, 1.2)
    assert Ms is None


@pytest.mark.parametrize("c1, sesgo", [(0.1, 0.005), (0.03, 0.00045)])
def test_sesgo_de_normalizacion(c1, sesgo):
    phi = np.linspace(0, 2 * math.pi, 400, endpoint=False)
    sh = self_homodyne(c1, phi)
    assert sh.averaged_bias == pytest.approx(sesgo)
    assert 1 - sh.normalization_factor.mean() == pytest.approx(sesgo)
    np.testing.assert_allclose(sh.mu_plus + sh.mu_minus, 2.0)


def test_auto_homodino_coherencia_invalida():
    with pytest.raises(ValidationError):
        self_homodyne(1.5, 0.0)


# ========================
# AJUSTE DE FASE
# ========================

def _puntos(c1, c2, offset, phi, ruido=None):
    i_sh = c1 * np.cos(phi)
    g2 = offset - (c2 / c1 ** 2) * i_sh ** 2
    if ruido is not None:
        g2 = g2 + ruido
    return list(zip(i_sh, g2))


def test_ajuste_sin_ruido():
    phi = np.linspace(0, math.pi, 25)
    ajuste = fit_phase_quadratic(_puntos(0.5, 0.2, 0.6, phi))
    assert ajuste.c1 == pytest.approx(0.5)
    assert ajuste.offset == pytest.approx(0.6)
    assert ajuste.c2 == pytest.approx(0.2)
    assert ajuste.stderr == pytest.approx(0, abs=1e-12)


def test_ajuste_con_ruido():
    rng = np.random.default_rng(11)
    phi = np.linspace(0, 2 * math.pi, 200)
    ajuste = fit_phase_quadratic(_puntos(0.5, 0.2, 0.6, phi, rng.normal(0, 0.002, 200)), c1=0.5)
    assert ajuste.c2 == pytest.approx(0.2, abs=4 * ajuste.c2_stderr + 1e-3)
    assert ajuste.stderr == pytest.approx(0.002, rel=0.2)


def test_ajuste_con_dos_puntos():
    ajuste = fit_phase_quadratic([(0.0, 0.6), (0.5, 0.4)])
    assert ajuste.offset == pytest.approx(0.6)
    assert ajuste.c2 == pytest.approx(0.2)
    assert ajuste.stderr == 0


def test_ajuste_degenerado():
    with pytest.raises(NumericalError):
        fit_phase_quadratic([(0.3, 0.5), (-0.3, 0.52), (0.3, 0.49)])


# ========================
# MAPAS Y E/S
# ========================

def test_mapa_no_simetrico():
    grid = TimeGrid(start=0.5, step=1.0, n_points=3)
    valores = np.zeros((3, 3))
    valores[0, 1] = 1.0
    with pytest.raises(ValidationError):
        CorrelationMap(grid, 'G2', valores)


def test_tipo_de_mapa_desconocido():
    grid = TimeGrid(start=0.5, step=1.0, n_points=3)
    with pytest.raises(ValidationError):
        CorrelationMap(grid, 'G3', np.zeros((3, 3)))


def test_mapa_binario(tmp_path):
    grid = TimeGrid(start=0.25, step=0.5, n_points=40)
    rng = np.random.default_rng(2)
    a = rng.random((40, 40))
    mapa = CorrelationMap(grid, 'G2', a + a.T)
    ruta = tmp_path / 'g2.bin'
    write_map_binary(mapa, str(ruta))
    leido = read_map_binary(str(ruta), 'G2')
    assert leido.grid == grid
    np.testing.assert_array_equal(leido.values, mapa.values)


def test_mapa_binario_truncado(tmp_path):
    ruta = tmp_path / 'roto.bin'
    ruta.write_bytes(b'\x00' * 10)
    with pytest.raises(ValidationError):
        read_map_binary(str(ruta), 'G2')


def test_mapa_a_tabla(phi_summary, ideal_phi_maps):
    grid = TimeGrid(start=0.5, step=1.0, n_points=4)
    tabla = CorrelationMap(grid, 'G2', np.ones((4, 4))).to_frame()
    assert list(tabla.columns) == ['t1', 't2', 'value']
    assert len(tabla) == 16
    assert phi_summary.to_dict()['mu_bar_e'] == pytest.approx(0.5, abs=1e-9)

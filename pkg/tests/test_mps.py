"""
Recursión ideal, conteo de Fibonacci y calendario dorado
"""
import itertools
import math

import numpy as np
import pytest

from src.errors import ValidationError
from src.models import PulseSequence, PhotonicState, PATRON_IDEAL
from src.mps import (
    Isometry, fibonacci, count_terms, pascal_diagonal, golden_separation, golden_schedule,
    build_state, w_state_thresholds, w_state, split_bin, bipartition_amplitudes,
)

T1 = 136.0


def test_phi_plus_con_semivida(atom):
    estado = build_state(atom, PulseSequence(2, (T1 * math.log(2),)))
    assert estado.n_terms == 2
    assert estado.amplitude('00') == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    assert estado.amplitude('11') == pytest.approx(1 / math.sqrt(2), abs=1e-12)


def test_calendario_dorado_tres_pulsos(atom):
    estado = build_state(atom, golden_schedule(3, T1).to_sequence())
    assert set(estado.amplitudes) == {'001', '100', '111'}
    for amp in estado.amplitudes.values():
        assert amp.real == pytest.approx(1 / math.sqrt(3), abs=1e-12)


def test_cinco_terminos_con_cuatro_pulsos(atom):
    estado = build_state(atom, PulseSequence(4, (50.0, 50.0, 50.0)))
    assert estado.n_terms == 5
    assert estado.norm == pytest.approx(1, abs=1e-12)
    assert all(PATRON_IDEAL.match(bits) for bits in estado.amplitudes)


def test_vacio_sin_pulsos(atom):
    estado = build_state(atom, PulseSequence(0))
    assert estado.n_bins == 0
    assert estado.amplitude('') == 1


def test_pulso_finito_no_admitido(atom):
    with pytest.raises(ValidationError) as exc:
        build_state(atom, PulseSequence(2, (98.0,), pulse_width=20.0, rabi=math.pi / 20))
    assert exc.value.field == 'tp'


@pytest.mark.parametrize("N", range(1, 17))
def test_conteo_contra_fuerza_bruta(N):
    validos = sum(
        1 for bits in itertools.product('01', repeat=N) if PATRON_IDEAL.match(''.join(bits))
    )
    assert count_terms(N) == validos


def test_terminos_de_la_recursion_siguen_el_patron(atom):
    rng = np.random.default_rng(5)
    seq = PulseSequence(9, tuple(rng.uniform(10, 300, size=8)))
    estado = build_state(atom, seq)
    assert estado.n_terms == count_terms(9) == 55
    assert estado.norm == pytest.approx(1, abs=1e-12)


def test_fibonacci():
    assert fibonacci(6) == [1, 1, 2, 3, 5, 8, 13]
    assert count_terms(0) == 1


def test_diagonal_de_pascal_suma_fibonacci():
    for N in range(1, 15):
        assert sum(pascal_diagonal(N)) == count_terms(N)
    assert pascal_diagonal(4) == [1, 3, 1]


def test_limite_del_calendario_dorado():
    plan = golden_schedule(40, T1)
    assert plan.separations[-1] == pytest.approx(golden_separation(T1), rel=1e-10)
    assert golden_separation(T1) == pytest.approx(0.9624 * T1, rel=1e-3)
    assert plan.separations[0] == pytest.approx(T1 * math.log(2))


def test_calendario_dorado_iguala_amplitudes(atom):
    for N in (4, 6, 8):
        estado = build_state(atom, golden_schedule(N, T1).to_sequence())
        amps = np.array([a.real for a in estado.amplitudes.values()])
        np.testing.assert_allclose(amps, 1 / math.sqrt(count_terms(N)), rtol=1e-10)


def test_calendario_dorado_requiere_dos_pulsos():
    with pytest.raises(ValidationError):
        golden_schedule(1, T1)


def test_isometria():
    iso = Isometry.from_separation(2, T1 * math.log(2), 1 / T1)
    assert iso.alpha ** 2 == pytest.approx(0.5)
    assert iso.beta ** 2 == pytest.approx(0.5)


def test_estado_w():
    estado = w_state(3, T1)
    assert set(estado.amplitudes) == {'100', '010', '001'}
    for amp in estado.amplitudes.values():
        assert abs(amp) ** 2 == pytest.approx(1 / 3)
    assert w_state_thresholds(2, T1).thresholds[0] == pytest.approx(T1 * math.log(2))


def test_partir_bin_temprano_de_phi_plus():
    s = 1 / math.sqrt(2)
    phi = PhotonicState(2, {'00': s, '11': s})
    partido = split_bin(phi, 0, 0.5)
    assert partido.n_bins == 3
    assert partido.amplitude('000') == pytest.approx(s)
    assert abs(partido.amplitude('101')) ** 2 == pytest.approx(0.25)
    assert abs(partido.amplitude('011')) ** 2 == pytest.approx(0.25)
    assert partido.norm == pytest.approx(1)


def test_partir_bin_peso_invalido():
    phi = PhotonicState(1, {'1': 1})
    with pytest.raises(ValidationError):
        split_bin(phi, 0, 1.0)


def test_schmidt_de_phi_plus(atom):
    estado = build_state(atom, PulseSequence(2, (T1 * math.log(2),)))
    np.testing.assert_allclose(bipartition_amplitudes(estado, 1), [1 / math.sqrt(2)] * 2, atol=1e-12)


def test_schmidt_corte_invalido(atom):
    estado = build_state(atom, PulseSequence(2, (T1 * math.log(2),)))
    with pytest.raises(ValidationError):
        bipartition_amplitudes(estado, 2)

"""
Generación ideal (pulsos cortos, t_p -> 0) mediante la recursión MPS de
dimensión de enlace 2:

    |psi_N> = alpha_N |0>|0>|psi_{N-2}> + beta_N |1>|psi_{N-1}>

con alpha_m = exp(-gamma·Δt_m/2). Incluye la combinatoria de Fibonacci,
el calendario dorado y la partición de un fotón en estados W.
"""
from dataclasses import dataclass
from typing import Dict, List, Tuple
import math

import numpy as np
from rich.console import Console

from .errors import ValidationError
from .models import AtomParams, PulseSequence, PhotonicState, TimeBinPartition

console = Console(stderr=True)

PHI = (1 + math.sqrt(5)) / 2


@dataclass(frozen=True)
class Isometry:
    """Mapa de amortiguamiento V_[m] entre el pulso m y el siguiente"""
    m: int
    alpha: float
    beta: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValidationError('alpha', f"fuera de (0, 1) para m={self.m}: {self.alpha}")
        if abs(self.alpha ** 2 + self.beta ** 2 - 1) > 1e-14:
            raise ValidationError('beta', f"alpha² + beta² != 1 para m={self.m}")

    @classmethod
    def from_separation(cls, m: int, dt: float, gamma: float) -> 'Isometry':
        x = gamma * dt
        return cls(m=m, alpha=math.exp(-x / 2), beta=math.sqrt(-math.expm1(-x)))


@dataclass(frozen=True)
class GoldenSchedule:
    """Separaciones Δt_2..Δt_N que igualan todas las amplitudes"""
    separations: Tuple[float, ...]
    fib: Tuple[int, ...]

    @property
    def n_pulses(self) -> int:
        return len(self.separations) + 1

    def to_sequence(self) -> PulseSequence:
        return PulseSequence(n_pulses=self.n_pulses, separations=self.separations)


def fibonacci(n: int) -> List[int]:
    """F_0..F_n con F_0 = F_1 = 1"""
    fib = [1, 1]
    while len(fib) <= n:
        fib.append(fib[-1] + fib[-2])
    return fib[:n + 1]


def count_terms(N: int) -> int:
    """Número de estados producto de |psi_N>: F_N"""
    if N < 0:
        raise ValidationError('N', "debe ser >= 0")
    return fibonacci(N)[N]


def pascal_diagonal(N: int) -> List[int]:
    """K_i: estados producto con i pares de vacío (diagonal 'plana' de Pascal)"""
    return [math.comb(N - i, i) for i in range(N // 2 + 1)]


def golden_separation(T1: float) -> float:
    """Límite del calendario dorado: 2·T1·ln(phi)"""
    return 2 * T1 * math.log(PHI)


def golden_schedule(N: int, T1: float) -> GoldenSchedule:
    """Δt_m = T1·ln(F_m / F_{m-2}) para m = 2..N"""
    if N < 2:
        raise ValidationError('N', "el calendario dorado necesita N >= 2")
    fib = fibonacci(N)
    seps = tuple(T1 * math.log(fib[m] / fib[m - 2]) for m in range(2, N + 1))
    return GoldenSchedule(separations=seps, fib=tuple(fib))


def build_state(atom: AtomParams, seq: PulseSequence) -> PhotonicState:
    """
    Estado emitido por N pulsos ideales.

    Args:
        atom: parámetros del átomo
        seq: secuencia con pulse_width = 0

    Returns:
        PhotonicState con F_N amplitudes reales y positivas
    """
    if seq.pulse_width != 0:
        raise ValidationError('tp', "el modelo ideal requiere pulse_width = 0")

    N = seq.n_pulses
    if N == 0:
        console.print("[yellow]⚠ N=0: no hay pulsos, el estado es el vacío sin bins[/yellow]")
        return PhotonicState(n_bins=0, amplitudes={'': 1.0})

    # psi_{m-2}, psi_{m-1}
    previo: Dict[str, float] = {'': 1.0}
    actual: Dict[str, float] = {'1': 1.0}
    for m in range(2, N + 1):
        iso = Isometry.from_separation(m, seq.separation(m), atom.gamma)
        nuevo = {'00' + bits: iso.alpha * amp for bits, amp in previo.items()}
        nuevo.update({'1' + bits: iso.beta * amp for bits, amp in actual.items()})
        previo, actual = actual, nuevo

    return PhotonicState(n_bins=N, amplitudes=actual)


def w_state_thresholds(N: int, T1: float) -> TimeBinPartition:
    """T_[m] = T1·ln(N/(N-m)) para m = 1..N-1"""
    if N < 2:
        raise ValidationError('N', "se necesitan al menos 2 bins")
    return TimeBinPartition(tuple(T1 * math.log(N / (N - m)) for m in range(1, N)))


def w_state(N: int, T1: float) -> PhotonicState:
    """Un fotón exponencial partido por w_state_thresholds: estado W de N bins"""
    umbrales = (0.0,) + w_state_thresholds(N, T1).thresholds + (math.inf,)
    amps = {}
    for k in range(N):
        peso = math.exp(-umbrales[k] / T1) - math.exp(-umbrales[k + 1] / T1)
        bits = '0' * k + '1' + '0' * (N - k - 1)
        amps[bits] = math.sqrt(peso)
    return PhotonicState(n_bins=N, amplitudes=amps, ideal=False)


def split_bin(state: PhotonicState, bin_index: int, weight: float) -> PhotonicState:
    """
    Divide un bin (con 0 o 1 fotón) en dos sub-bins con pesos w y 1-w.
    Por ejemplo, partir el bin temprano de phi+ da un estado de clase W.
    """
    if not 0 <= bin_index < state.n_bins:
        raise ValidationError('bin_index', f"fuera de rango: {bin_index}")
    if not 0 < weight < 1:
        raise ValidationError('weight', "debe estar en (0, 1)")

    amps: Dict[str, complex] = {}
    for bits, amp in state.amplitudes.items():
        antes, bit, despues = bits[:bin_index], bits[bin_index], bits[bin_index + 1:]
        if bit == '0':
            amps[antes + '00' + despues] = amps.get(antes + '00' + despues, 0) + amp
        else:
            amps[antes + '10' + despues] = amps.get(antes + '10' + despues, 0) + amp * math.sqrt(weight)
            amps[antes + '01' + despues] = amps.get(antes + '01' + despues, 0) + amp * math.sqrt(1 - weight)
    return PhotonicState(n_bins=state.n_bins + 1, amplitudes=amps, ideal=False)


def bipartition_amplitudes(state: PhotonicState, cut: int) -> np.ndarray:
    """Coeficientes de Schmidt entre los bins [0, cut) y [cut, N)"""
    if not 1 <= cut < state.n_bins:
        raise ValidationError('cut', f"debe cumplir 1 <= cut < {state.n_bins}")

    filas = sorted({bits[:cut] for bits in state.amplitudes})
    columnas = sorted({bits[cut:] for bits in state.amplitudes})
    idx_f = {b: i for i, b in enumerate(filas)}
    idx_c = {b: i for i, b in enumerate(columnas)}

    matriz = np.zeros((len(filas), len(columnas)), dtype=complex)
    for bits, amp in state.amplitudes.items():
        matriz[idx_f[bits[:cut]], idx_c[bits[cut:]]] = amp

    valores = np.linalg.svd(matriz, compute_uv=False)
    valores = valores / math.sqrt(float(np.sum(valores ** 2)))
    return valores[valores > 1e-14 * valores[0]]

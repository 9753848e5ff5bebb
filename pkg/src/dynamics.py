"""
Dinámica con pulsos finitos.

- Formas cerradas de un pulso (régimen de pulso rápido) y de dos pulsos
  con su descomposición en intervalos.
- Modelo de colisiones discretizado, truncado a dos fotones, que sirve de
  oráculo de fuerza bruta para las formas cerradas.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple
import math

import numpy as np
import pandas as pd
from rich.console import Console

from .errors import ValidationError, NumericalError
from .models import AtomParams, PulseSequence, TimeGrid

console = Console(stderr=True)

MIN_MUESTRAS_PULSO = 8


# ========================
# CONTENEDORES
# ========================

@dataclass(frozen=True)
class TwoPhotonTerm:
    """Componente factorizada amplitude · sym(first ⊗ second)"""
    amplitude: float
    first: np.ndarray
    second: np.ndarray


@dataclass(frozen=True)
class TemporalWavefunctions:
    """
    Amplitudes temporales de uno y dos fotones sobre una rejilla.

    f2 se guarda factorizada como suma de términos simetrizados; la matriz
    densa solo se construye al pedirla (f2_dense).
    """
    grid: TimeGrid
    f1: np.ndarray
    f1_noise: np.ndarray
    f2_terms: Tuple[TwoPhotonTerm, ...]
    p0: float
    p1: float
    p2: float
    noise_overlap: complex = 0j
    warnings: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.p0 + self.p1 + self.p2 > 1 + 1e-9:
            raise ValidationError('p', f"p0+p1+p2 = {self.p0 + self.p1 + self.p2:.6f} > 1")
        if self.p1 > 0 and abs(self.grid.integrate(np.abs(self.f1) ** 2) - 1) > 1e-6:
            raise ValidationError('f1', "f1 no está normalizada")

    def f2_dense(self) -> np.ndarray:
        """f2(t1, t2) simétrica con ∫∫|f2|² = 1 (ceros si p2 = 0)"""
        n = self.grid.n_points
        total = np.zeros((n, n), dtype=complex)
        for term in self.f2_terms:
            total += term.amplitude * _simetrizada(term.first, term.second, self.grid)
        norma = self.grid.step ** 2 * float(np.sum(np.abs(total) ** 2))
        return total / math.sqrt(norma) if norma > 0 else total

    @property
    def intensity(self) -> np.ndarray:
        """N(t) = p1|f1|² + 2 p2 ∫|f2(t,s)|² ds"""
        f2 = self.f2_dense() if self.p2 > 0 else None
        n = self.p1 * np.abs(self.f1) ** 2
        if f2 is not None:
            n = n + 2 * self.p2 * np.sum(np.abs(f2) ** 2, axis=1) * self.grid.step
        return n

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            't': self.grid.times,
            're_f1': self.f1.real,
            'im_f1': self.f1.imag,
            'abs2_f1': np.abs(self.f1) ** 2,
        })

    def guardar_csv(self, filepath: str):
        self.to_frame().to_csv(filepath, index=False)


@dataclass(frozen=True)
class TwoPulseDecomposition:
    """Probabilidades y componentes en la base de bins temprano/tardío"""
    grid: TimeGrid
    threshold: float
    intervals: Dict[str, float]
    p0: float
    p01: float
    p10: float
    p20: float
    p11: float
    f_10: np.ndarray
    f_01: np.ndarray
    f_20: Tuple[np.ndarray, np.ndarray]
    f_e: np.ndarray
    f_l: np.ndarray
    warnings: Tuple[str, ...] = ()

    def __post_init__(self):
        for nombre in ('p0', 'p01', 'p10', 'p20', 'p11'):
            valor = getattr(self, nombre)
            if not -1e-12 <= valor <= 1 + 1e-12:
                raise ValidationError(nombre, f"probabilidad fuera de [0,1]: {valor}")

    @property
    def p1(self) -> float:
        return self.p01 + self.p10

    @property
    def p2(self) -> float:
        return self.p20 + self.p11

    @property
    def p3_estimate(self) -> float:
        return 1 - (self.p0 + self.p1 + self.p2)

    @property
    def f_11(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.f_e, self.f_l

    def to_wavefunctions(self) -> TemporalWavefunctions:
        """Reexpresa la descomposición como TemporalWavefunctions"""
        n = self.grid.n_points
        f1 = np.zeros(n, dtype=complex)
        if self.p1 > 0:
            f1 = (math.sqrt(self.p10) * self.f_10 + math.sqrt(self.p01) * self.f_01) / math.sqrt(self.p1)
            f1 = _normalizar(f1, self.grid)
        terms = []
        if self.p2 > 0:
            if self.p20 > 0:
                terms.append(TwoPhotonTerm(math.sqrt(self.p20 / self.p2), *self.f_20))
            if self.p11 > 0:
                terms.append(TwoPhotonTerm(math.sqrt(self.p11 / self.p2), self.f_e, self.f_l))
        return TemporalWavefunctions(
            grid=self.grid, f1=f1, f1_noise=np.zeros(n, dtype=complex),
            f2_terms=tuple(terms), p0=self.p0, p1=self.p1, p2=self.p2,
            warnings=self.warnings,
        )

    def to_dict(self) -> dict:
        return {
            'threshold': self.threshold,
            'p0': self.p0, 'p01': self.p01, 'p10': self.p10,
            'p20': self.p20, 'p11': self.p11,
            'p1': self.p1, 'p2': self.p2, 'p3_estimate': self.p3_estimate,
            'intervals': dict(self.intervals),
        }


# ========================
# UTILIDADES
# ========================

def _normalizar(f: np.ndarray, grid: TimeGrid) -> np.ndarray:
    norma = grid.integrate(np.abs(f) ** 2)
    if norma <= 0:
        return np.zeros_like(f, dtype=complex)
    return np.asarray(f, dtype=complex) / math.sqrt(norma)


def _simetrizada(fa: np.ndarray, fb: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """sym(fa ⊗ fb) normalizada"""
    sym = (np.outer(fa, fb) + np.outer(fb, fa)) / math.sqrt(2)
    norma = grid.step ** 2 * float(np.sum(np.abs(sym) ** 2))
    return sym / math.sqrt(norma) if norma > 0 else sym


def _comprobar_pulso(rabi: float, tp: float, grid: TimeGrid, atom: AtomParams, inicio: float = 0.0) -> Tuple[str, ...]:
    avisos = []
    if atom.gamma * tp >= 1:
        raise ValidationError('tp', f"el régimen de pulso rápido requiere tp < 1/gamma ({atom.T1:.1f} ps)")
    if tp > 0:
        if grid.samples_in(inicio, inicio + tp) < MIN_MUESTRAS_PULSO:
            raise ValidationError(
                'grid_step', f"rejilla demasiado gruesa: menos de {MIN_MUESTRAS_PULSO} muestras en el pulso de {tp} ps"
            )
        area = rabi * tp
        if abs(area - math.pi) > 1e-3 * math.pi:
            aviso = f"área del pulso {area:.4f} rad != pi"
            console.print(f"[yellow]⚠ {aviso}[/yellow]")
            avisos.append(aviso)
    return tuple(avisos)


# ========================
# FORMAS CERRADAS
# ========================

def _perfil_un_foton(t: np.ndarray, gamma: float, rabi: float, tp: float) -> np.ndarray:
    """Amplitud sin normalizar del fotón tras un pulso cuadrado"""
    u = np.zeros_like(t, dtype=float)
    durante = (t >= 0) & (t < tp)
    despues = t >= tp
    u[durante] = (np.sin(rabi * t[durante] / 2) * np.cos(rabi * (tp - t[durante]) / 2)
                  * math.exp(-gamma * tp / 4))
    seno = math.sin(rabi * tp / 2) if tp > 0 else 1.0
    u[despues] = seno * np.exp(-gamma * (2 * t[despues] - tp) / 4)
    return math.sqrt(gamma) * u


def _perfil_ruido(t: np.ndarray, gamma: float, rabi: float, tp: float) -> np.ndarray:
    """Fotón de re-excitación emitido durante el pulso (sin el factor √p1)"""
    u = np.zeros_like(t, dtype=float)
    if tp <= 0:
        return u
    durante = (t >= 0) & (t < tp)
    u[durante] = (np.sin(rabi * t[durante] / 2) * np.sin(rabi * (tp - t[durante]) / 2)
                  / math.sin(rabi * tp / 2))
    return math.sqrt(gamma) * u


def exponential_photon(atom: AtomParams, grid: TimeGrid, t0: float = 0.0) -> TemporalWavefunctions:
    """Fotón ideal con perfil sqrt(gamma)·exp(-gamma (t - t0)/2)"""
    t = grid.times
    f = np.where(t >= t0, np.exp(-atom.gamma * (t - t0) / 2), 0.0)
    n = grid.n_points
    return TemporalWavefunctions(
        grid=grid, f1=_normalizar(f, grid), f1_noise=np.zeros(n, dtype=complex),
        f2_terms=(), p0=0.0, p1=1.0, p2=0.0,
    )


def single_pulse(atom: AtomParams, rabi: float, tp: float, grid: TimeGrid) -> TemporalWavefunctions:
    """
    Emisión tras un único pulso pi cuadrado de anchura tp.

    Args:
        atom: parámetros del átomo
        rabi: frecuencia de Rabi (rad/ps)
        tp: anchura del pulso (ps)
        grid: rejilla temporal

    Returns:
        TemporalWavefunctions con f1, el fotón de ruido y p0, p1, p2
    """
    avisos = _comprobar_pulso(rabi, tp, grid, atom)
    t = grid.times

    u1 = _perfil_un_foton(t, atom.gamma, rabi, tp)
    p1 = grid.integrate(u1 ** 2)
    un = math.sqrt(p1) * _perfil_ruido(t, atom.gamma, rabi, tp)
    p2 = grid.integrate(un ** 2)
    p0 = max(0.0, 1 - p1 - p2)

    f1 = _normalizar(u1, grid)
    fn = _normalizar(un, grid) if p2 > 0 else np.zeros(grid.n_points, dtype=complex)
    solape = complex(np.sum(np.conj(fn) * f1) * grid.step)

    terms = (TwoPhotonTerm(1.0, fn, f1),) if p2 > 0 else ()
    return TemporalWavefunctions(
        grid=grid, f1=f1, f1_noise=fn, f2_terms=terms,
        p0=p0, p1=p1, p2=p2, noise_overlap=solape, warnings=avisos,
    )


def _clave(*intervalos: int) -> str:
    """'0101' para un fotón en el intervalo 1 y otro en el 3"""
    clave = [0] * 4
    for i in intervalos:
        clave[i] += 1
    return ''.join(str(c) for c in clave)


def _masas_un_foton(indice: np.ndarray, grid: TimeGrid, componentes) -> Dict[str, float]:
    """P_I = sum_c p_c ∫_I |f_c|²"""
    masas = {_clave(i): 0.0 for i in range(4)}
    for p, f in componentes:
        for i in range(4):
            masas[_clave(i)] += p * grid.integrate(np.abs(f[indice == i]) ** 2)
    return masas


def _masas_dos_fotones(indice: np.ndarray, grid: TimeGrid, componentes) -> Dict[str, float]:
    """
    Masa de p·|sym(fa ⊗ fb)|² en cada caja I×J de intervalos.

    Con A_I = ∫_I|fa|², B_I = ∫_I|fb|² y X_I = ∫_I fa·conj(fb), la caja vale
    (A_I B_J + B_I A_J + 2 Re X_I conj(X_J)) / (2 (A B + |X|²)).
    """
    masas = {_clave(i, j): 0.0 for i in range(4) for j in range(i, 4)}
    for p, fa, fb in componentes:
        if p <= 0:
            continue
        A = np.array([grid.integrate(np.abs(fa[indice == i]) ** 2) for i in range(4)])
        B = np.array([grid.integrate(np.abs(fb[indice == i]) ** 2) for i in range(4)])
        X = np.array([complex(np.sum(fa[indice == i] * np.conj(fb[indice == i])) * grid.step)
                      for i in range(4)])
        caja = np.outer(A, B) + np.outer(B, A) + 2 * np.real(np.outer(X, np.conj(X)))
        norma = float(np.sum(caja))
        if norma <= 0:
            continue
        for i in range(4):
            for j in range(i, 4):
                masa = caja[i, j] + (caja[j, i] if j != i else 0.0)
                masas[_clave(i, j)] += p * float(masa) / norma
    return masas


def two_pulse(atom: AtomParams, rabi: float, tp: float, dt: float, grid: TimeGrid) -> TwoPulseDecomposition:
    """
    Dos pulsos pi separados dt (inicio a inicio). Umbral fijo T = dt + tp.

    Las probabilidades siguen las expresiones de orden dominante en
    gamma·tp: p0, p11 y p2 coinciden con el modelo de colisiones dentro de
    un 2 %; p20 y p10 solo al orden dominante. Las funciones de onda se
    construyen intervalo a intervalo y `intervals` reparte la masa de cada
    componente entre los cuatro intervalos (pulso 1, hueco, pulso 2, cola).
    """
    if dt <= tp:
        raise ValidationError('dt', f"los pulsos se solapan: dt={dt} <= tp={tp}")
    avisos = _comprobar_pulso(rabi, tp, grid, atom)
    if tp > 0:
        _comprobar_pulso(rabi, tp, grid, atom, inicio=dt)

    g = atom.gamma
    x = g * tp
    e_dt = math.exp(-g * dt)
    e_tp = math.exp(-g * tp)

    p0 = e_dt
    p01 = 0.0
    p10 = x / 4 * e_dt
    p20 = 3 * x / 8 * (e_tp - e_dt)
    p11 = (3 * x / 8 + 1) * e_tp + (3 * x / 8 - 1) * e_dt
    T = dt + tp

    t = grid.times
    temprano = t < dt
    f_e = _normalizar(np.where(temprano, _perfil_un_foton(t, g, rabi, tp), 0.0), grid)
    f_l = _normalizar(np.where(t >= T, np.exp(-g * (t - T) / 2), 0.0), grid)

    s = t - dt
    en_pulso2 = (s >= 0) & (s < tp)
    f_10 = np.zeros(grid.n_points)
    if tp > 0:
        f_10[en_pulso2] = np.cos(rabi * s[en_pulso2] / 2) * np.cos(rabi * (tp - s[en_pulso2]) / 2)
    f_10 = _normalizar(f_10, grid)
    f_n = _normalizar(_perfil_ruido(t, g, rabi, tp), grid)

    # 0: pulso 1, 1: hueco, 2: pulso 2, 3: cola tras T
    indice = np.searchsorted(np.array([tp, dt, T]), t, side='right')
    intervals = {}
    for clave, masa in _masas_un_foton(indice, grid, ((p10, f_10), (p01, f_l))).items():
        intervals['P' + clave] = masa
    for clave, masa in _masas_dos_fotones(indice, grid, ((p20, f_n, f_e), (p11, f_e, f_l))).items():
        intervals['P' + clave] = masa

    return TwoPulseDecomposition(
        grid=grid, threshold=T, intervals=intervals,
        p0=p0, p01=p01, p10=p10, p20=p20, p11=p11,
        f_10=f_10, f_01=f_l.copy(), f_20=(f_n, f_e), f_e=f_e, f_l=f_l,
        warnings=avisos,
    )


def ideal_phi_plus(atom: AtomParams, grid: TimeGrid, dt: Optional[float] = None) -> TemporalWavefunctions:
    """Límite tp -> 0 con dt = T_1/2 por defecto: el estado de Bell phi+"""
    dt = atom.half_life if dt is None else dt
    return two_pulse(atom, 0.0, 0.0, dt, grid).to_wavefunctions()


def intrinsic_overlap(dec: TwoPulseDecomposition) -> float:
    """p20/p2: solape intrínseco entre el primer y el segundo fotón"""
    return dec.p20 / dec.p2 if dec.p2 > 0 else 0.0


def overlap_fraction(gamma: float, tp: float, jitter_fwhm: float) -> float:
    """Fracción de coincidencias que cruzan el umbral: (3γ/8)·√(tp² + s²)"""
    return 3 * gamma / 8 * math.sqrt(tp ** 2 + jitter_fwhm ** 2)


# ========================
# MODELO DE COLISIONES
# ========================

@dataclass(frozen=True)
class CollisionResult:
    """Estado conjunto truncado a dos fotones, resumido por sectores"""
    delta_t: float
    grid: TimeGrid
    p0: float
    p1: float
    p2: float
    p3: float
    one_photon_density: np.ndarray
    second_photon_density: np.ndarray
    excited_population: np.ndarray
    intervals: Dict[str, float] = field(default_factory=dict)

    @property
    def norm_deficit(self) -> float:
        return 1 - (self.p0 + self.p1 + self.p2)

    @property
    def one_photon_profile(self) -> np.ndarray:
        """|f1(t)|² normalizada"""
        return self.one_photon_density / (self.p1 * self.delta_t) if self.p1 > 0 else self.one_photon_density


def _angulos_por_paso(seq: PulseSequence, delta_t: float, n_pasos: int) -> np.ndarray:
    """Ángulo de Rabi acumulado en cada paso; los pulsos ideales son rotaciones pi instantáneas"""
    angulos = np.zeros(n_pasos)
    izquierda = np.arange(n_pasos) * delta_t
    derecha = izquierda + delta_t
    for inicio in seq.pulse_starts:
        if seq.pulse_width > 0:
            solape = np.clip(np.minimum(derecha, inicio + seq.pulse_width) - np.maximum(izquierda, inicio), 0, None)
            angulos += seq.rabi * solape
        else:
            angulos[min(int(inicio // delta_t), n_pasos - 1)] += math.pi
    return angulos


def _intervalos(seq: PulseSequence, t: np.ndarray) -> np.ndarray:
    """Índice de intervalo: pulso 1, hueco 1, pulso 2, ..., cola final"""
    fronteras = []
    for inicio in seq.pulse_starts:
        fronteras += [inicio, inicio + seq.pulse_width]
    return np.clip(np.searchsorted(np.asarray(fronteras[1:]), t, side='right'), 0, 2 * seq.n_pulses - 1)


def collision_evolve(
    atom: AtomParams,
    seq: PulseSequence,
    delta_t: float,
    initial: str = 'g',
    span: Optional[float] = None,
) -> CollisionResult:
    """
    Evoluciona átomo + campo con operadores de paso de primer orden.

    Cada paso aplica la rotación del pulso y después el amortiguamiento
    e -> sqrt(1-β²)|e> + β|g, 1_n>. Los sectores de uno y dos fotones se
    propagan como matrices de Gram 2x2 del estado atómico, de modo que el
    coste es lineal en el número de pasos. Lo que pasaría al sector de tres
    fotones se acumula como p3.
    """
    if initial not in ('g', 'e'):
        raise ValidationError('initial', "debe ser 'g' o 'e'")
    escala = max(atom.gamma, seq.rabi if seq.pulse_width > 0 else 0.0)
    if delta_t * escala >= 0.05:
        raise NumericalError(f"paso demasiado grande: delta_t·max(γ,Ω) = {delta_t * escala:.3f} >= 0.05")

    if span is None:
        span = 10 * atom.T1 + sum(seq.separations) + seq.pulse_width
    n_pasos = int(math.ceil(span / delta_t))
    grid = TimeGrid(start=delta_t / 2, step=delta_t, n_points=max(n_pasos, 2))
    t = grid.times[:n_pasos]

    theta = _angulos_por_paso(seq, delta_t, n_pasos)
    cos_h = np.cos(theta / 2)
    sin_h = np.sin(theta / 2)
    alpha = math.exp(-atom.gamma * delta_t / 2)
    beta2 = -math.expm1(-atom.gamma * delta_t)
    beta = math.sqrt(beta2)
    n_int = 2 * max(seq.n_pulses, 1)
    intervalo = _intervalos(seq, t) if seq.n_pulses else np.zeros(n_pasos, dtype=int)

    # Supervivencia sin emisión desde el paso n+1 hasta el final partiendo de |g>
    surv = np.empty(n_pasos)
    s00, s01, s10, s11 = 1.0, 0.0, 0.0, 1.0
    for n in range(n_pasos - 1, -1, -1):
        surv[n] = s00 * s00 + s10 * s10
        c, s = cos_h[n], sin_h[n]
        # W_n = D·R_n,  R = [[c, -s], [s, c]],  D = diag(1, alpha)
        w00, w01, w10, w11 = c, -s, alpha * s, alpha * c
        s00, s01, s10, s11 = (s00 * w00 + s01 * w10, s00 * w01 + s01 * w11,
                              s10 * w00 + s11 * w10, s10 * w01 + s11 * w11)

    pg, pe = (1.0, 0.0) if initial == 'g' else (0.0, 1.0)
    # Gram del sector de un fotón (total y por intervalo del primer fotón) y de dos fotones
    g1 = np.zeros((n_int, 3))
    g2 = [0.0, 0.0, 0.0]
    d1 = np.zeros(n_pasos)
    d2 = np.zeros(n_pasos)
    pob_e = np.zeros(n_pasos)
    p3 = 0.0
    uno = np.zeros(n_int)
    dos = np.zeros((n_int, n_int))

    for n in range(n_pasos):
        c, s = cos_h[n], sin_h[n]
        k = intervalo[n]

        rg, re = c * pg - s * pe, s * pg + c * pe
        c1 = beta * re
        d1[n] = c1 * c1 * surv[n]
        uno[k] += d1[n]
        pg, pe = rg, alpha * re

        # R Γ R^T, solo hace falta la componente ee para la emisión
        ee_por_int = s * s * g1[:, 0] + 2 * s * c * g1[:, 1] + c * c * g1[:, 2]
        gg_r = c * c * g1[:, 0] - 2 * c * s * g1[:, 1] + s * s * g1[:, 2]
        ge_r = c * s * g1[:, 0] + (c * c - s * s) * g1[:, 1] - s * c * g1[:, 2]
        emision2 = beta2 * ee_por_int
        d2[n] = float(np.sum(emision2)) * surv[n]
        dos[:, k] += emision2 * surv[n]
        g1[:, 0] = gg_r
        g1[:, 1] = alpha * ge_r
        g1[:, 2] = alpha * alpha * ee_por_int
        g1[k, 0] += c1 * c1

        a, b, d = g2
        ee2 = s * s * a + 2 * s * c * b + c * c * d
        gg2 = c * c * a - 2 * c * s * b + s * s * d
        ge2 = c * s * a + (c * c - s * s) * b - s * c * d
        p3 += beta2 * ee2
        g2 = [gg2 + float(np.sum(emision2)), alpha * ge2, alpha * alpha * ee2]

        pob_e[n] = pe * pe + float(np.sum(g1[:, 2])) + g2[2]

    p0 = pg * pg + pe * pe
    intervals = {}
    if seq.n_pulses == 2:
        nombres = ['1000', '0100', '0010', '0001']
        for i in range(4):
            intervals['P' + nombres[i]] = float(uno[i])
        for i in range(4):
            for j in range(i, 4):
                clave = ['0'] * 4
                clave[i] = str(int(clave[i]) + 1)
                clave[j] = str(int(clave[j]) + 1)
                intervals['P' + ''.join(clave)] = float(dos[i, j] + (dos[j, i] if j != i else 0.0))

    return CollisionResult(
        delta_t=delta_t, grid=grid, p0=p0, p1=float(np.sum(d1)), p2=float(np.sum(d2)), p3=p3,
        one_photon_density=d1, second_photon_density=d2, excited_population=pob_e,
        intervals=intervals,
    )


def interval_probabilities(atom: AtomParams, rabi: float, tp: float, dt: float,
                           delta_t: float = 0.05) -> Dict[str, float]:
    """P_{n1n2n3n4} de dos pulsos estimadas con el modelo de colisiones"""
    seq = PulseSequence(n_pulses=2, separations=(dt,), pulse_width=tp, rabi=rabi)
    return collision_evolve(atom, seq, delta_t).intervals


def grouped_probabilities(intervals: Dict[str, float]) -> Dict[str, float]:
    """Agrupa P_{n1n2n3n4} en la base temprano/tardío con T = dt + tp"""
    P = lambda clave: intervals.get('P' + clave, 0.0)
    return {
        'p10': P('1000') + P('0100') + P('0010'),
        'p01': P('0001'),
        'p20': P('1100') + P('1010') + P('0110') + P('2000') + P('0200') + P('0020'),
        'p11': P('1001') + P('0101') + P('0011'),
    }

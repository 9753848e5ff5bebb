"""
Correlaciones temporales de la fuente: mapas N·N, G2, |G1|², |C2|² y C⁻,
desfase puro, jitter del detector, reducción por cuadrantes temprano/tardío
y observables HOM / auto-homodino.
"""
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union
import math
import struct

import numpy as np
import pandas as pd
from rich.console import Console
from scipy.ndimage import convolve1d

from .errors import ValidationError, NumericalError
from .models import TimeGrid
from .dynamics import TemporalWavefunctions, TwoPulseDecomposition

console = Console(stderr=True)

KINDS = ('intensity_product', 'G2', 'absG1sq', 'absC2sq', 'Cminus')
SIMETRICOS = ('intensity_product', 'G2', 'absG1sq', 'absC2sq')
CUADRANTES = ('ee', 'el', 'le', 'll')
FWHM_A_SIGMA = 1 / (2 * math.sqrt(2 * math.log(2)))
CABECERA_MAPA = struct.Struct('<qqdd')


# ========================
# MAPAS
# ========================

@dataclass(frozen=True)
class CorrelationMap:
    """Función de dos tiempos muestreada en grid × grid"""
    grid: TimeGrid
    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError('kind', f"desconocido: {self.kind}")
        n = self.grid.n_points
        if self.values.shape != (n, n):
            raise ValidationError('values', f"forma {self.values.shape} != ({n}, {n})")
        escala = max(float(np.max(np.abs(self.values))), 1e-300)
        if self.kind in SIMETRICOS:
            if np.max(np.abs(self.values - self.values.T)) > 1e-12 * escala:
                raise ValidationError('values', f"{self.kind} debe ser simétrico")
            if np.min(self.values) < -1e-12 * escala:
                raise ValidationError('values', f"{self.kind} debe ser >= 0")
        elif np.max(np.abs(self.values + self.values.T)) > 1e-12 * escala:
            raise ValidationError('values', "Cminus debe ser antisimétrico")

    def integral(self) -> float:
        return float(np.sum(self.values)) * self.grid.step ** 2

    def to_frame(self) -> pd.DataFrame:
        t = self.grid.times
        t1, t2 = np.meshgrid(t, t, indexing='ij')
        return pd.DataFrame({'t1': t1.ravel(), 't2': t2.ravel(), 'value': self.values.ravel()})

    def guardar_csv(self, filepath: str):
        self.to_frame().to_csv(filepath, index=False)


MapSet = Dict[str, CorrelationMap]


def _fuente(source: Union[TemporalWavefunctions, TwoPulseDecomposition]) -> TemporalWavefunctions:
    if isinstance(source, TwoPulseDecomposition):
        return source.to_wavefunctions()
    return source


def build_maps(
    source: Union[TemporalWavefunctions, TwoPulseDecomposition],
    gamma_star: float = 0.0,
    include_c_minus: bool = False,
) -> MapSet:
    """
    Construye los mapas de correlación del estado puro
    sqrt(p0)|0> + sqrt(p1)|f1> + sqrt(p2)|f2>.

    Args:
        source: funciones de onda o descomposición de dos pulsos
        gamma_star: tasa de desfase puro (1/ps). Núcleo exp(-gamma_star·|t1 - t2|)
            sobre G1 y sobre el término de dos fotones de C⁻; su cuadrado
            sobre |C2|²
        include_c_minus: calcula también el término antisimétrico C⁻

    Returns:
        Diccionario kind -> CorrelationMap
    """
    if gamma_star < 0:
        raise ValidationError('gamma_star', "debe ser >= 0")
    wf = _fuente(source)
    grid = wf.grid
    h = grid.step
    t = grid.times

    f1 = wf.f1
    f2 = wf.f2_dense() if wf.p2 > 0 else np.zeros((grid.n_points, grid.n_points), dtype=complex)

    N = wf.p1 * np.abs(f1) ** 2 + 2 * wf.p2 * np.sum(np.abs(f2) ** 2, axis=1) * h
    intensidad = np.outer(N, N)

    G2 = 2 * wf.p2 * np.abs(f2) ** 2

    # G1(t1, t2) = <a†(t2) a(t1)>
    G1 = wf.p1 * np.outer(f1, np.conj(f1)) + 2 * wf.p2 * (f2 @ np.conj(f2).T) * h
    desfase = np.exp(-gamma_star * np.abs(t[:, None] - t[None, :])) if gamma_star > 0 else None
    if desfase is not None:
        G1 = G1 * desfase
    absG1 = np.abs(G1) ** 2

    # la coherencia vacío-dos fotones pierde fase entre las dos emisiones
    absC2 = 2 * wf.p0 * wf.p2 * np.abs(f2) ** 2
    if desfase is not None:
        absC2 = absC2 * desfase ** 2

    maps = {
        'intensity_product': CorrelationMap(grid, 'intensity_product', _simetrizar(intensidad)),
        'G2': CorrelationMap(grid, 'G2', _simetrizar(G2)),
        'absG1sq': CorrelationMap(grid, 'absG1sq', _simetrizar(absG1)),
        'absC2sq': CorrelationMap(grid, 'absC2sq', _simetrizar(absC2)),
    }
    if include_c_minus:
        # C⁻ = Re[<a(t2)><a†(t2)a†(t1)a(t1)> - (t1 <-> t2)]
        a = math.sqrt(wf.p0 * wf.p1) * f1
        B = math.sqrt(2 * wf.p1 * wf.p2) * f1[:, None] * np.conj(f2)
        if desfase is not None:
            B = B * desfase
        cm = np.real(a[None, :] * B - a[:, None] * B.T)
        maps['Cminus'] = CorrelationMap(grid, 'Cminus', (cm - cm.T) / 2)
    return maps


def _simetrizar(valores: np.ndarray) -> np.ndarray:
    return (valores + valores.T) / 2


def first_order_coherence(source: Union[TemporalWavefunctions, TwoPulseDecomposition]) -> float:
    """c1 = μ⁻¹ ∫|<a(t)>|² dt"""
    wf = _fuente(source)
    mu = wf.p1 + 2 * wf.p2
    if mu <= 0:
        return 0.0
    return wf.p0 * wf.p1 * wf.grid.integrate(np.abs(wf.f1) ** 2) / mu


# ========================
# JITTER
# ========================

def gaussian_kernel(fwhm: float, step: float) -> np.ndarray:
    """Gaussiana muestreada y truncada en ±4σ, normalizada a suma 1"""
    sigma = fwhm * FWHM_A_SIGMA / step
    mitad = max(int(math.ceil(4 * sigma)), 1)
    x = np.arange(-mitad, mitad + 1)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / np.sum(k)


def apply_jitter(cmap: CorrelationMap, fwhm: float) -> CorrelationMap:
    """
    Convolución gaussiana separable a lo largo de los dos ejes.

    Con un núcleo simétrico el modo 'reflect' conserva la integral total
    exactamente.
    """
    if fwhm < 0:
        raise ValidationError('jitter_fwhm', "debe ser >= 0")
    if fwhm == 0:
        return CorrelationMap(cmap.grid, cmap.kind, cmap.values.copy())
    k = gaussian_kernel(fwhm, cmap.grid.step)
    valores = convolve1d(cmap.values, k, axis=0, mode='reflect')
    valores = convolve1d(valores, k, axis=1, mode='reflect')
    if cmap.kind in SIMETRICOS:
        valores = np.clip(_simetrizar(valores), 0.0, None)
    else:
        valores = (valores - valores.T) / 2
    return CorrelationMap(cmap.grid, cmap.kind, valores)


def jitter_maps(maps: MapSet, fwhm: float) -> MapSet:
    return {kind: apply_jitter(m, fwhm) for kind, m in maps.items()}


# ========================
# CUADRANTES
# ========================

@dataclass(frozen=True)
class QuadrantSummary:
    """
    Cantidades integradas por cuadrante (a, b ∈ {e, l}), normalizadas por
    μ_a·μ_b. Un cuadrante sin intensidad queda como None.
    """
    threshold: float
    mu: float
    mu_e: float
    mu_l: float
    g2_ab: Dict[str, Optional[float]]
    M_ab: Dict[str, Optional[float]]
    c2_ab: Dict[str, Optional[float]]
    c_minus_ab: Dict[str, Optional[float]]
    g2: float
    M: float
    c2: float
    c1: float = 0.0
    weights: Dict[str, float] = field(default_factory=dict)

    @property
    def mu_bar_e(self) -> float:
        return self.mu_e / self.mu if self.mu > 0 else 0.0

    @property
    def mu_bar_l(self) -> float:
        return self.mu_l / self.mu if self.mu > 0 else 0.0

    @property
    def c_minus_el(self) -> Optional[float]:
        return self.c_minus_ab.get('el')

    def weighted(self, por_cuadrante: Dict[str, Optional[float]]) -> float:
        """Σ_ab (μ_aμ_b/μ²)·x_ab; los cuadrantes indefinidos pesan cero"""
        return sum(self.weights[q] * (v or 0.0) for q, v in por_cuadrante.items())

    def to_dict(self) -> dict:
        return {
            'threshold': self.threshold,
            'mu': self.mu, 'mu_e': self.mu_e, 'mu_l': self.mu_l,
            'mu_bar_e': self.mu_bar_e, 'mu_bar_l': self.mu_bar_l,
            'g2_ab': dict(self.g2_ab), 'M_ab': dict(self.M_ab),
            'c2_ab': dict(self.c2_ab), 'c_minus_ab': dict(self.c_minus_ab),
            'g2': self.g2, 'M': self.M, 'c2': self.c2, 'c1': self.c1,
        }


def _integrales_cuadrante(valores: np.ndarray, w: Dict[str, np.ndarray], h: float) -> Dict[str, float]:
    return {q: float(w[q[0]] @ valores @ w[q[1]]) * h * h for q in CUADRANTES}


def quadrant_reduce(maps: MapSet, T: float, c1: float = 0.0) -> QuadrantSummary:
    """
    Integra cada mapa en los cuadrantes definidos por el umbral T.

    Las intensidades de bin salen del mapa intensity_product, de modo que
    siguen siendo coherentes después de aplicar jitter.
    """
    intensidad = maps['intensity_product']
    grid = intensidad.grid
    if not grid.lower_edge < T < grid.upper_edge:
        raise ValidationError('threshold', f"T={T} fuera de la rejilla")

    pesos_e = grid.early_weights(T)
    w = {'e': pesos_e, 'l': 1.0 - pesos_e}
    h = grid.step

    I = _integrales_cuadrante(intensidad.values, w, h)
    total = sum(I.values())
    mu = math.sqrt(total) if total > 0 else 0.0
    mu_e = (I['ee'] + I['el']) / mu if mu > 0 else 0.0
    mu_l = (I['ll'] + I['le']) / mu if mu > 0 else 0.0

    def normalizado(kind: str) -> Tuple[Dict[str, Optional[float]], float]:
        if kind not in maps:
            return {q: (0.0 if I[q] > 0 else None) for q in CUADRANTES}, 0.0
        Q = _integrales_cuadrante(maps[kind].values, w, h)
        por_q = {q: (Q[q] / I[q] if I[q] > 0 else None) for q in CUADRANTES}
        return por_q, (sum(Q.values()) / total if total > 0 else 0.0)

    g2_ab, g2 = normalizado('G2')
    M_ab, M = normalizado('absG1sq')
    c2_ab, c2 = normalizado('absC2sq')
    cm_ab, _ = normalizado('Cminus')
    for q in ('ee', 'll'):
        if cm_ab[q] is not None:
            cm_ab[q] = 0.0

    return QuadrantSummary(
        threshold=T, mu=mu, mu_e=mu_e, mu_l=mu_l,
        g2_ab=g2_ab, M_ab=M_ab, c2_ab=c2_ab, c_minus_ab=cm_ab,
        g2=g2, M=M, c2=c2, c1=c1,
        weights={q: (I[q] / total if total > 0 else 0.0) for q in CUADRANTES},
    )


def sweep_threshold(maps: MapSet, thresholds: Iterable[float], c1: float = 0.0) -> List[QuadrantSummary]:
    return [quadrant_reduce(maps, T, c1) for T in thresholds]


def sweep_frame(summaries: Sequence[QuadrantSummary]) -> pd.DataFrame:
    filas = []
    for s in summaries:
        fila = {'T': s.threshold, 'mu_bar_e': s.mu_bar_e, 'mu_bar_l': s.mu_bar_l,
                'g2': s.g2, 'M': s.M, 'c2': s.c2}
        for q in ('ee', 'el', 'll'):
            fila[f'g2_{q}'] = s.g2_ab[q]
            fila[f'M_{q}'] = s.M_ab[q]
            fila[f'c2_{q}'] = s.c2_ab[q]
        filas.append(fila)
    return pd.DataFrame(filas)


# ========================
# HOM Y AUTO-HOMODINO
# ========================

def hom_g2(phi, M: float, g2: float, c2: float, c_minus: float = 0.0):
    """g2_HOM(φ) = (1 - M + g2 - c2·cos 2φ + 2·c⁻·cos φ)/2"""
    if not 0 <= M <= 1 + 1e-9:
        raise ValidationError('M', f"fuera de [0, 1]: {M}")
    if g2 < 0 or c2 < 0:
        raise ValidationError('g2', "g2 y c2 deben ser >= 0")
    phi = np.asarray(phi, dtype=float)
    valor = (1 - M + g2 - c2 * np.cos(2 * phi) + 2 * c_minus * np.cos(phi)) / 2
    return float(valor) if valor.ndim == 0 else valor


def hom_from_summary(summary: QuadrantSummary, phi: float) -> Dict[str, Optional[float]]:
    """g2_HOM por cuadrante y su media ponderada ('total')"""
    salida: Dict[str, Optional[float]] = {}
    for q in CUADRANTES:
        if summary.g2_ab[q] is None:
            salida[q] = None
            continue
        cm = summary.c_minus_ab[q] or 0.0
        salida[q] = (1 - summary.M_ab[q] + summary.g2_ab[q]
                     - summary.c2_ab[q] * math.cos(2 * phi) + 2 * cm * math.cos(phi)) / 2
    salida['total'] = summary.weighted({q: salida[q] for q in CUADRANTES})
    return salida


@dataclass(frozen=True)
class SelfHomodyne:
    i_sh: np.ndarray
    mu_plus: np.ndarray
    mu_minus: np.ndarray
    normalization_factor: np.ndarray
    averaged_bias: float


def self_homodyne(c1: float, phi, mu: float = 1.0) -> SelfHomodyne:
    """
    Señal I_SH = c1·cos φ y tasas μ± = μ(1 ± c1·cos φ).

    normalization_factor es 1 - I_SH²: cuánto se subestima μ² al normalizar
    con el producto de tasas. Su media en fase es c1²/2 (averaged_bias).
    """
    if not 0 <= c1 <= 1:
        raise ValidationError('c1', "debe estar en [0, 1]")
    i_sh = c1 * np.cos(np.asarray(phi, dtype=float))
    return SelfHomodyne(
        i_sh=i_sh,
        mu_plus=mu * (1 + i_sh),
        mu_minus=mu * (1 - i_sh),
        normalization_factor=1 - i_sh ** 2,
        averaged_bias=c1 ** 2 / 2,
    )


@dataclass(frozen=True)
class PhaseFit:
    """Ajuste g2_HOM = a - b·I_SH², con c2 = b·c1²"""
    offset: float
    slope: float
    c2: float
    stderr: float
    c2_stderr: float
    c1: float
    n_points: int


def fit_phase_quadratic(points: Sequence[Tuple[float, float]], c1: Optional[float] = None) -> PhaseFit:
    """
    Mínimos cuadrados de g2_HOM frente a I_SH².

    Args:
        points: pares (I_SH, g2_HOM)
        c1: coherencia de primer orden; por defecto max|I_SH|

    Returns:
        PhaseFit; con dos puntos distintos la interpolación es exacta y el
        error estándar es 0
    """
    datos = np.asarray(points, dtype=float)
    if datos.ndim != 2 or datos.shape[1] != 2:
        raise ValidationError('points', "se esperan pares (I_SH, g2_HOM)")
    x = datos[:, 0] ** 2
    y = datos[:, 1]
    if len(np.unique(np.round(x, 15))) < 2:
        raise NumericalError("ajuste degenerado: todos los I_SH² son iguales")

    A = np.column_stack([np.ones_like(x), -x])
    coef, _, _, _ = np.linalg.lstsq(A, y, rcond=None)
    a, b = float(coef[0]), float(coef[1])
    residuo = y - A @ coef
    n = len(y)
    if n > 2:
        s2 = float(residuo @ residuo) / (n - 2)
        stderr = math.sqrt(s2)
        cov = s2 * np.linalg.inv(A.T @ A)
        se_b = math.sqrt(max(cov[1, 1], 0.0))
    else:
        stderr = se_b = 0.0

    c1 = float(np.max(np.abs(datos[:, 0]))) if c1 is None else c1
    return PhaseFit(offset=a, slope=b, c2=b * c1 ** 2, stderr=stderr,
                    c2_stderr=se_b * c1 ** 2, c1=c1, n_points=n)


def overlap_from_hom(g2_hom: float, g2: float) -> Tuple[float, Optional[float]]:
    """M = 1 - 2·g2_HOM + g2 y M_s = M/(1 - g2); M_s es None si g2 >= 1"""
    if g2_hom < 0 or g2 < 0:
        raise ValidationError('g2', "las entradas deben ser >= 0")
    M = 1 - 2 * g2_hom + g2
    if g2 >= 1:
        console.print("[yellow]⚠ g2 >= 1: M_s no está definido[/yellow]")
        return M, None
    return M, M / (1 - g2)


# ========================
# E/S BINARIA
# ========================

def write_map_binary(cmap: CorrelationMap, filepath: str):
    """Cabecera <qqdd (filas, columnas, paso, inicio) y valores <f8 por filas"""
    filas, columnas = cmap.values.shape
    with open(filepath, 'wb') as f:
        f.write(CABECERA_MAPA.pack(filas, columnas, cmap.grid.step, cmap.grid.start))
        f.write(np.ascontiguousarray(cmap.values, dtype='<f8').tobytes())


def read_map_binary(filepath: str, kind: str) -> CorrelationMap:
    with open(filepath, 'rb') as f:
        contenido = f.read()
    if len(contenido) < CABECERA_MAPA.size:
        raise ValidationError('map', "fichero truncado")
    filas, columnas, paso, inicio = CABECERA_MAPA.unpack_from(contenido)
    if filas != columnas or len(contenido) != CABECERA_MAPA.size + 8 * filas * columnas:
        raise ValidationError('map', f"tamaño inconsistente para {filas}x{columnas}")
    valores = np.frombuffer(contenido, dtype='<f8', offset=CABECERA_MAPA.size).reshape(filas, columnas)
    return CorrelationMap(TimeGrid(start=inicio, step=paso, n_points=filas), kind, valores.astype(float))

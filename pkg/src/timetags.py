"""
Monte Carlo de etiquetas de tiempo: genera clics de detector para una
topología HBT de tres detectores o un interferómetro Mach-Zehnder
desbalanceado, y reconstruye los histogramas g2 / g3 y los mapas de
correlación resueltos en tiempo.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple
import math
import struct

import numpy as np
import pandas as pd
from rich.console import Console

from .errors import ValidationError
from .models import AtomParams, TimeGrid
from .dynamics import TemporalWavefunctions, TwoPulseDecomposition, ideal_phi_plus, exponential_photon
from .correlations import CorrelationMap, MapSet, FWHM_A_SIGMA, build_maps, quadrant_reduce, hom_g2, first_order_coherence

console = Console(stderr=True)

HBT3 = 'hbt3'
MZI = 'mzi'
TOPOLOGIAS = {HBT3: 3, MZI: 2}

MAGIA = b'TTAG'
VERSION = 2
# magia, versión, n_detectores, resolución (ps)
CABECERA = struct.Struct('<4sHBI')
# n_pulsos, offset del reloj (ps), periodo de repetición (ps); solo desde la versión 2
CABECERA_V2 = struct.Struct('<QQd')
REGISTRO = np.dtype([('detector', 'u1'), ('time', '<u8')])

# clics de referencia por bloque al buscar coincidencias
LOTE_HISTOGRAMA = 200_000


# ========================
# CONFIGURACIÓN
# ========================

@dataclass(frozen=True)
class DetectionConfig:
    """
    Parámetros de detección y de la deriva de fase del MZI.

    efficiency admite un valor por detector o uno solo para todos.
    background_rate está en cuentas/s por detector y coincidence_window es
    el lado (ps) de los cuadrados de integración de g3.
    """
    efficiency: Tuple[float, ...] = (1.0,)
    jitter_fwhm: float = 0.0
    bin_width: float = 8.0
    rep_period: float = 12300.0
    n_pulses: int = 10_000
    seed: Optional[int] = None
    background_rate: float = 0.0
    phase0: float = 0.0
    drift_rate: float = math.pi / 5
    phase_window: float = 0.1
    batch_pulses: int = 1_000_000
    coincidence_window: float = 5000.0

    def __post_init__(self):
        object.__setattr__(self, 'efficiency', tuple(float(e) for e in np.atleast_1d(self.efficiency)))
        if any(not 0 <= e <= 1 for e in self.efficiency):
            raise ValidationError('efficiency', "debe estar en [0, 1]")
        if not self.bin_width > 0:
            raise ValidationError('bin_width', "debe ser > 0")
        if not self.rep_period > 0:
            raise ValidationError('rep_period', "debe ser > 0")
        if self.n_pulses < 1:
            raise ValidationError('n_pulses', "debe ser >= 1")
        if self.jitter_fwhm < 0 or self.background_rate < 0:
            raise ValidationError('jitter_fwhm', "jitter y fondo deben ser >= 0")
        if self.phase_window <= 0 or self.batch_pulses < 1:
            raise ValidationError('phase_window', "ventana y lote deben ser > 0")
        if not 0 < self.coincidence_window <= self.rep_period:
            raise ValidationError('coincidence_window', "debe estar en (0, rep_period]")

    @property
    def jitter_sigma(self) -> float:
        return self.jitter_fwhm * FWHM_A_SIGMA

    @property
    def clock_offset(self) -> int:
        """Retardo fijo que mantiene los tiempos positivos pese al jitter"""
        return int(math.ceil(5 * self.jitter_sigma))

    def efficiencies(self, n_detectors: int) -> np.ndarray:
        if len(self.efficiency) == 1:
            return np.full(n_detectors, self.efficiency[0])
        if len(self.efficiency) != n_detectors:
            raise ValidationError('efficiency', f"se esperaban {n_detectors} valores")
        return np.asarray(self.efficiency)

    def phase_at(self, t_ps) -> np.ndarray:
        return self.phase0 + self.drift_rate * np.asarray(t_ps, dtype=float) * 1e-12

    def to_dict(self) -> dict:
        datos = {k: getattr(self, k) for k in self.__dataclass_fields__}
        datos['efficiency'] = list(self.efficiency)
        return datos


@dataclass(frozen=True)
class EventStream:
    """Clics (detector, tiempo en ps) ordenados en el tiempo"""
    detector: np.ndarray
    time: np.ndarray
    n_detectors: int
    topology: str = HBT3
    n_pulses: int = 0
    rep_period: float = 12300.0
    clock_offset: int = 0

    def __post_init__(self):
        if len(self.detector) != len(self.time):
            raise ValidationError('events', "detector y time con longitudes distintas")
        if len(self.time) and np.any(np.diff(self.time.astype(np.int64)) < 0):
            raise ValidationError('time', "los tiempos deben ser no decrecientes")
        if len(self.detector) and int(np.max(self.detector)) >= self.n_detectors:
            raise ValidationError('detector', f"id fuera de rango para {self.n_detectors} detectores")

    def __len__(self) -> int:
        return len(self.time)

    @property
    def periods(self) -> np.ndarray:
        """Índice del pulso de reloj de cada clic"""
        return (self.time // np.uint64(int(self.rep_period))).astype(np.int64)

    def window(self, t0_ps: float, t1_ps: float) -> 'EventStream':
        sel = (self.time >= t0_ps) & (self.time < t1_ps)
        return EventStream(self.detector[sel], self.time[sel], self.n_detectors, self.topology,
                           self.n_pulses, self.rep_period, self.clock_offset)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'detector': self.detector, 'time': self.time})


# ========================
# MODELO DE EMISIÓN
# ========================

@dataclass(frozen=True)
class EmissionModel:
    """
    Patrones de emisión por pulso: cada patrón es (probabilidad, perfiles)
    y cada perfil es la distribución de masa |f|²·h sobre la rejilla.

    M, c2 y c1 son los totales que fijan la estadística HOM en el MZI.
    """
    grid: TimeGrid
    probabilities: Tuple[float, ...]
    patterns: Tuple[Tuple[int, ...], ...]
    profiles: Tuple[np.ndarray, ...]
    M: float = 1.0
    c2: float = 0.0
    c1: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.probabilities)
        if np.any(p < -1e-12) or abs(p.sum() - 1) > 1e-6:
            raise ValidationError('probabilities', "deben ser >= 0 y sumar 1")
        if len(self.patterns) != len(p):
            raise ValidationError('patterns', "un patrón por probabilidad")

    @property
    def photon_numbers(self) -> np.ndarray:
        return np.array([len(pat) for pat in self.patterns])

    def moments(self) -> Dict[str, float]:
        """μ, g2 = <n(n-1)>/μ² y g3 = <n(n-1)(n-2)>/μ³"""
        p = np.clip(np.asarray(self.probabilities), 0, None)
        n = self.photon_numbers
        mu = float(p @ n)
        return {
            'mu': mu,
            'g2': float(p @ (n * (n - 1))) / mu ** 2 if mu > 0 else 0.0,
            'g3': float(p @ (n * (n - 1) * (n - 2))) / mu ** 3 if mu > 0 else 0.0,
        }

    # ---------- constructores ----------

    @staticmethod
    def _masa(f: np.ndarray, grid: TimeGrid) -> np.ndarray:
        m = np.abs(f) ** 2 * grid.step
        return m / m.sum()

    @classmethod
    def from_patterns(cls, grid: TimeGrid, entradas: Sequence[Tuple[float, Sequence[np.ndarray]]], **totales) -> 'EmissionModel':
        perfiles: List[np.ndarray] = []
        patrones = []
        probs = []
        for p, funciones in entradas:
            if p <= 0:
                continue
            idx = []
            for f in funciones:
                perfiles.append(cls._masa(f, grid))
                idx.append(len(perfiles) - 1)
            patrones.append(tuple(idx))
            probs.append(p)
        total = sum(probs)
        return cls(grid, tuple(p / total for p in probs), tuple(patrones), tuple(perfiles), **totales)

    @classmethod
    def from_wavefunctions(cls, wf: TemporalWavefunctions, gamma_star: float = 0.0) -> 'EmissionModel':
        """
        Un fotón según |f1|² y pares según cada término factorizado de f2.
        Las dos marcas de un par se muestrean de forma independiente.
        """
        entradas = [(wf.p0, ())]
        if wf.p1 > 0:
            entradas.append((wf.p1, (wf.f1,)))
        pesos = [t.amplitude ** 2 for t in wf.f2_terms]
        for term, w in zip(wf.f2_terms, pesos):
            entradas.append((wf.p2 * w / sum(pesos), (term.first, term.second)))
        maps = build_maps(wf, gamma_star)
        resumen = quadrant_reduce(maps, wf.grid.start + wf.grid.step * (wf.grid.n_points // 2))
        return cls.from_patterns(wf.grid, entradas, M=min(resumen.M, 1.0), c2=resumen.c2,
                                 c1=first_order_coherence(wf))

    @classmethod
    def from_two_pulse(cls, dec: TwoPulseDecomposition) -> 'EmissionModel':
        """Incluye p3 como tres fotones (ruido, temprano, tardío)"""
        f_n, f_e = dec.f_20
        entradas = [
            (dec.p0, ()), (dec.p10, (dec.f_10,)), (dec.p01, (dec.f_01,)),
            (dec.p20, (f_n, f_e)), (dec.p11, (dec.f_e, dec.f_l)),
            (max(dec.p3_estimate, 0.0), (f_n, dec.f_e, dec.f_l)),
        ]
        wf = dec.to_wavefunctions()
        maps = build_maps(wf)
        resumen = quadrant_reduce(maps, dec.threshold)
        return cls.from_patterns(dec.grid, entradas, M=min(resumen.M, 1.0), c2=resumen.c2)

    @classmethod
    def ideal_phi_plus(cls, atom: AtomParams, grid: TimeGrid) -> 'EmissionModel':
        return cls.from_wavefunctions(ideal_phi_plus(atom, grid))

    @classmethod
    def single_photon(cls, atom: AtomParams, grid: TimeGrid) -> 'EmissionModel':
        wf = exponential_photon(atom, grid)
        return cls.from_patterns(grid, [(1.0, (wf.f1,))], M=1.0)

    @classmethod
    def coherent(cls, mean: float, atom: AtomParams, grid: TimeGrid) -> 'EmissionModel':
        """Pulso coherente: número de fotones de Poisson con perfil exponencial"""
        if mean <= 0:
            raise ValidationError('mean', "debe ser > 0")
        perfil = exponential_photon(atom, grid).f1
        entradas = []
        n = 0
        p = math.exp(-mean)
        while n <= mean or p > 1e-12:
            entradas.append((p, (perfil,) * n))
            n += 1
            p *= mean / n
        return cls.from_patterns(grid, entradas, M=1.0, c2=1.0, c1=1.0)


# ========================
# GENERACIÓN
# ========================

def _muestrear_fotones(model: EmissionModel, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """(índice de pulso, tiempo de emisión) de cada fotón de n pulsos"""
    patron = rng.choice(len(model.patterns), size=n, p=np.asarray(model.probabilities))
    cdfs = [np.cumsum(m) for m in model.profiles]
    grid = model.grid
    pulsos, tiempos = [], []
    for k, pat in enumerate(model.patterns):
        cuales = np.nonzero(patron == k)[0]
        if not len(cuales) or not pat:
            continue
        for perfil in pat:
            cdf = cdfs[perfil]
            idx = np.searchsorted(cdf, rng.random(len(cuales)) * cdf[-1], side='right')
            idx = np.minimum(idx, len(cdf) - 1)
            t = grid.lower_edge + (idx + rng.random(len(cuales))) * grid.step
            pulsos.append(cuales)
            tiempos.append(t)
    if not pulsos:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    return np.concatenate(pulsos).astype(np.int64), np.concatenate(tiempos)


def _enrutar_hbt(n_fotones: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 3, n_fotones)


def _enrutar_mzi(
    model: EmissionModel,
    cfg: DetectionConfig,
    pulso: np.ndarray,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cada fotón toma el brazo corto o el largo (retardo de un periodo). En
    cada ranura de llegada los pares se separan con probabilidad
    q = g2_HOM(φ)/(1 + g2); si no, salen juntos por un mismo puerto. Los
    fotones sueltos y los grupos de tres o más se reparten con el sesgo
    (1 ± I_SH)/2.
    """
    ranura = pulso + rng.integers(0, 2, len(pulso))
    orden = np.argsort(ranura, kind='stable')
    ranura_o = ranura[orden]
    _, inicio, cuenta = np.unique(ranura_o, return_index=True, return_counts=True)
    grupo = np.repeat(np.arange(len(inicio)), cuenta)
    rango = np.arange(len(ranura_o)) - inicio[grupo]
    n_grupo = cuenta[grupo]

    fase = cfg.phase_at(ranura_o * cfg.rep_period)
    i_sh = model.c1 * np.cos(fase)
    detector = (rng.random(len(ranura_o)) >= (1 + i_sh) / 2).astype(np.int64)

    g2 = model.moments()['g2']
    fase_g = cfg.phase_at(ranura_o[inicio] * cfg.rep_period)
    q = np.clip(hom_g2(fase_g, model.M, g2, model.c2) / (1 + g2), 0.0, 1.0)
    separa = rng.random(len(inicio)) < q

    par = (n_grupo == 2) & (rango == 1)
    primero = detector[inicio[grupo[par]]]
    detector[par] = np.where(separa[grupo[par]], 1 - primero, primero)

    salida = np.empty_like(detector)
    salida[orden] = detector
    return salida, ranura


def generate_events(model: EmissionModel, topology: str, cfg: DetectionConfig) -> EventStream:
    """
    Genera el flujo de clics por lotes de pulsos. Cada lote usa su propia
    semilla derivada, así que el resultado depende solo de (seed, config).

    Args:
        model: patrones de emisión por pulso
        topology: 'hbt3' o 'mzi'
        cfg: configuración de detección

    Returns:
        EventStream ordenado
    """
    if topology not in TOPOLOGIAS:
        raise ValidationError('topology', f"desconocida: {topology}; usa {sorted(TOPOLOGIAS)}")
    n_det = TOPOLOGIAS[topology]
    eficiencias = cfg.efficiencies(n_det)
    n_lotes = int(math.ceil(cfg.n_pulses / cfg.batch_pulses))
    semillas = np.random.SeedSequence(cfg.seed).spawn(n_lotes + 1)
    offset = cfg.clock_offset

    detectores, tiempos = [], []
    for b in range(n_lotes):
        rng = np.random.default_rng(semillas[b])
        primero = b * cfg.batch_pulses
        n = min(cfg.batch_pulses, cfg.n_pulses - primero)
        pulso, t_emit = _muestrear_fotones(model, n, rng)
        pulso = pulso + primero

        if topology == HBT3:
            det = _enrutar_hbt(len(pulso), rng)
            ranura = pulso
        else:
            det, ranura = _enrutar_mzi(model, cfg, pulso, rng)

        detectado = rng.random(len(det)) < eficiencias[det]
        t = ranura * cfg.rep_period + offset + t_emit
        if cfg.jitter_fwhm > 0:
            t = t + rng.normal(0.0, cfg.jitter_sigma, len(t))
        detectores.append(det[detectado])
        tiempos.append(t[detectado])

    if cfg.background_rate > 0:
        rng = np.random.default_rng(semillas[-1])
        duracion = (cfg.n_pulses + 1) * cfg.rep_period
        for d in range(n_det):
            n_fondo = rng.poisson(cfg.background_rate * duracion * 1e-12)
            detectores.append(np.full(n_fondo, d, dtype=np.int64))
            tiempos.append(rng.uniform(0.0, duracion, n_fondo))

    det = np.concatenate(detectores) if detectores else np.zeros(0, dtype=np.int64)
    t = np.concatenate(tiempos) if tiempos else np.zeros(0)
    t = np.rint(np.clip(t, 0, None)).astype(np.uint64)
    orden = np.lexsort((det, t))
    return EventStream(
        detector=det[orden].astype(np.uint8), time=t[orden], n_detectors=n_det,
        topology=topology, n_pulses=cfg.n_pulses, rep_period=cfg.rep_period, clock_offset=offset,
    )


# ========================
# HISTOGRAMAS
# ========================

@dataclass(frozen=True)
class G2Histogram:
    """Picos de coincidencias por periodo y el histograma fino a bin_width"""
    delays: np.ndarray
    counts: np.ndarray
    normalized: np.ndarray
    g2_zero: float
    sigma: float
    side_mean: float
    bin_edges: np.ndarray
    fine_counts: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'delay': self.delays, 'counts': self.counts, 'g2': self.normalized})

    def fine_frame(self) -> pd.DataFrame:
        centros = (self.bin_edges[:-1] + self.bin_edges[1:]) / 2
        return pd.DataFrame({'tau_ps': centros, 'counts': self.fine_counts})


def _n_periodos(stream: EventStream) -> int:
    if len(stream) == 0:
        return stream.n_pulses + 1
    return max(int(stream.periods.max()) + 1, stream.n_pulses + 1)


def _tiempos_por_detector(stream: EventStream) -> List[np.ndarray]:
    t = stream.time.astype(np.int64)
    return [t[stream.detector == d] for d in range(stream.n_detectors)]


def _vecinos(ta: np.ndarray, tb: np.ndarray, alcance: float) -> Tuple[np.ndarray, np.ndarray]:
    """(índice en ta, tb - ta) de todos los pares con |tb - ta| <= alcance"""
    lo = np.searchsorted(tb, ta - alcance, side='left')
    hi = np.searchsorted(tb, ta + alcance, side='right')
    n = hi - lo
    total = int(n.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    ia = np.repeat(np.arange(len(ta)), n)
    ib = np.repeat(lo - (np.cumsum(n) - n), n) + np.arange(total)
    return ia, (tb[ib] - ta[ia]).astype(float)


def histogram_g2(stream: EventStream, cfg: DetectionConfig, max_delay: int = 11) -> G2Histogram:
    """
    Retardos entre clics de detectores distintos binados a bin_width y
    agrupados en un pico por periodo de repetición. g2(0) = pico central /
    media de los picos laterales con |m| >= 2.
    """
    n_periodos = _n_periodos(stream)
    if n_periodos < 100:
        raise ValidationError('stream', "se necesitan al menos 100 periodos")
    laterales = [m for m in range(-max_delay, max_delay + 1) if abs(m) >= 2]
    if len(laterales) < 10:
        raise ValidationError('max_delay', "se necesitan al menos 10 picos laterales")

    rep = stream.rep_period
    b = cfg.bin_width
    n_fino = int(math.ceil((max_delay + 0.5) * rep / b))
    bordes = np.arange(-n_fino, n_fino + 1) * b
    fino = np.zeros(len(bordes) - 1)
    tiempos = _tiempos_por_detector(stream)
    for a in range(stream.n_detectors):
        for c in range(stream.n_detectors):
            if a == c:
                continue
            for i0 in range(0, len(tiempos[a]), LOTE_HISTOGRAMA):
                _, tau = _vecinos(tiempos[a][i0:i0 + LOTE_HISTOGRAMA], tiempos[c], bordes[-1])
                fino += np.histogram(tau, bins=bordes)[0]

    delays = np.arange(-max_delay, max_delay + 1)
    pico = np.rint((bordes[:-1] + bordes[1:]) / 2 / rep).astype(int)
    dentro = np.abs(pico) <= max_delay
    counts = np.bincount(pico[dentro] + max_delay, weights=fino[dentro], minlength=len(delays))

    lateral = counts[np.isin(delays, laterales)]
    media = float(lateral.mean())
    if media <= 0:
        raise ValidationError('stream', "sin coincidencias en los picos laterales")
    centro = float(counts[delays == 0][0])
    g2 = centro / media
    # cada par cuenta dos veces, una por orden de detectores
    sigma = g2 * math.sqrt((2 / centro if centro > 0 else 0.0) + 2 / lateral.sum())
    if centro == 0:
        sigma = 2 / media
    return G2Histogram(delays=delays, counts=counts, normalized=counts / media,
                       g2_zero=g2, sigma=sigma, side_mean=media, bin_edges=bordes, fine_counts=fino)


@dataclass(frozen=True)
class G3Histogram:
    delays: np.ndarray
    counts: np.ndarray
    normalized: np.ndarray
    g3_zero: float
    sigma: float

    def to_frame(self) -> pd.DataFrame:
        m1, m2 = np.meshgrid(self.delays, self.delays, indexing='ij')
        return pd.DataFrame({'tau1': m1.ravel(), 'tau2': m2.ravel(),
                             'counts': self.counts.ravel(), 'g3': self.normalized.ravel()})


def _en_cuadrado(tau: np.ndarray, rep: float, ventana: float, max_delay: int) -> Tuple[np.ndarray, np.ndarray]:
    """Pico m de cada retardo y si cae dentro del cuadrado de integración"""
    m = np.rint(tau / rep).astype(int)
    return m, (np.abs(tau - m * rep) <= ventana / 2) & (np.abs(m) <= max_delay)


def histogram_g3(stream: EventStream, cfg: DetectionConfig, max_delay: int = 6) -> G3Histogram:
    """
    Triples coincidencias entre los tres detectores integradas en cuadrados
    de coincidence_window × coincidence_window centrados en (m1, m2)
    periodos. El centro se normaliza con los cuadrados donde los tres clics
    caen en periodos distintos y alejados. Solo cuentan los tripletes que
    caben en el flujo, sin condiciones periódicas.
    """
    if stream.n_detectors != 3:
        raise ValidationError('stream', "g3 necesita tres detectores")
    n_periodos = _n_periodos(stream)
    if n_periodos < 100:
        raise ValidationError('stream', "se necesitan al menos 100 periodos")

    rep = stream.rep_period
    ventana = cfg.coincidence_window
    alcance = max_delay * rep + ventana / 2
    delays = np.arange(-max_delay, max_delay + 1)
    k = len(delays)
    counts = np.zeros((k, k))
    tiempos = _tiempos_por_detector(stream)
    permutaciones = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    for a, b, c in permutaciones:
        for i0 in range(0, len(tiempos[a]), LOTE_HISTOGRAMA):
            ref = tiempos[a][i0:i0 + LOTE_HISTOGRAMA]
            ia1, tau1 = _vecinos(ref, tiempos[b], alcance)
            ia2, tau2 = _vecinos(ref, tiempos[c], alcance)
            m1, ok1 = _en_cuadrado(tau1, rep, ventana, max_delay)
            m2, ok2 = _en_cuadrado(tau2, rep, ventana, max_delay)
            primeros = pd.DataFrame({'i': ia1[ok1], 'm1': m1[ok1]})
            segundos = pd.DataFrame({'i': ia2[ok2], 'm2': m2[ok2]})
            triples = primeros.merge(segundos, on='i')
            np.add.at(counts, (triples['m1'].to_numpy() + max_delay, triples['m2'].to_numpy() + max_delay), 1.0)

    m1, m2 = np.meshgrid(delays, delays, indexing='ij')
    lejos = (np.abs(m1) >= 2) & (np.abs(m2) >= 2) & (np.abs(m1 - m2) >= 2)
    if np.count_nonzero(lejos) < 10:
        raise ValidationError('max_delay', "muy pocos cuadrados de normalización")
    media = float(counts[lejos].mean())
    if media <= 0:
        raise ValidationError('stream', "sin triples coincidencias fuera del centro")
    centro = float(counts[max_delay, max_delay])
    g3 = centro / media
    # cada triplete cuenta seis veces, una por permutación
    sigma = math.sqrt(6 * centro if centro > 0 else 36.0) / media
    return G3Histogram(delays=delays, counts=counts, normalized=counts / media, g3_zero=g3, sigma=sigma)


def correlation_map_from_tags(
    stream: EventStream,
    cfg: DetectionConfig,
    span: float,
    window: Optional[Tuple[float, float]] = None,
) -> MapSet:
    """
    Mapa (t1, t2) de pares dentro del mismo periodo en detectores distintos,
    referido al reloj del pulso y binado a bin_width. Devuelve G2 y el
    producto de intensidades de los clics individuales, normalizados para
    que correlations.quadrant_reduce dé g2_ab directamente.

    Args:
        span: ventana temporal tras el pulso que cubre el mapa (ps)
        window: (t0, t1) en ps para quedarse con una ventana de fase
    """
    if window is not None:
        stream = stream.window(*window)
    b = cfg.bin_width
    grid = TimeGrid.covering(span, b)
    n_bins = grid.n_points
    n_det = stream.n_detectors
    eta = cfg.efficiencies(n_det)
    # P(detectado) y P(par detectado en detectores distintos) para reparto uniforme
    reparto = np.full(n_det, 1 / n_det)
    simple = float(reparto @ eta)
    par = float((reparto * eta).sum() ** 2 - ((reparto * eta) ** 2).sum())

    n_periodos = max(stream.n_pulses, 1)
    if window is not None:
        n_periodos = max(int(round((window[1] - window[0]) / stream.rep_period)), 1)

    if len(stream) == 0:
        ceros = np.zeros((n_bins, n_bins))
        return {'intensity_product': CorrelationMap(grid, 'intensity_product', ceros),
                'G2': CorrelationMap(grid, 'G2', ceros.copy())}

    eventos = pd.DataFrame({
        'periodo': stream.periods,
        'detector': stream.detector.astype(int),
        't': stream.time.astype(float) - stream.periods * stream.rep_period - stream.clock_offset,
    })
    eventos = eventos[(eventos['t'] >= 0) & (eventos['t'] < grid.upper_edge)]
    eventos['bin'] = (eventos['t'] // b).astype(int)

    singles = np.bincount(eventos['bin'], minlength=n_bins)[:n_bins].astype(float)
    N = singles / (n_periodos * b * simple) if simple > 0 else singles

    multiples = eventos[eventos.groupby('periodo')['periodo'].transform('size') >= 2]
    pares = multiples.merge(multiples, on='periodo', suffixes=('_1', '_2'))
    pares = pares[pares['detector_1'] != pares['detector_2']]
    G = np.zeros((n_bins, n_bins))
    np.add.at(G, (pares['bin_1'].to_numpy(), pares['bin_2'].to_numpy()), 1.0)
    G = (G + G.T) / 2
    if par > 0:
        G = G / (n_periodos * b * b * par)

    return {
        'intensity_product': CorrelationMap(grid, 'intensity_product', np.outer(N, N)),
        'G2': CorrelationMap(grid, 'G2', G),
    }


def phase_resolved_hom(stream: EventStream, cfg: DetectionConfig, max_delay: int = 11) -> pd.DataFrame:
    """
    Divide un flujo MZI en ventanas de fase constante y calcula en cada una
    I_SH (desequilibrio de tasas) y g2_HOM corregido por 1 - I_SH².
    """
    if stream.topology != MZI:
        raise ValidationError('topology', "phase_resolved_hom necesita un flujo mzi")
    ventana_ps = cfg.phase_window * 1e12
    n_ventanas = int(math.ceil(stream.n_pulses * stream.rep_period / ventana_ps))
    filas = []
    for w in range(n_ventanas):
        t0, t1 = w * ventana_ps, (w + 1) * ventana_ps
        sub = stream.window(t0, t1)
        periodos_sub = int(round((min(t1, stream.n_pulses * stream.rep_period) - t0) / stream.rep_period))
        if len(sub) == 0 or periodos_sub < 100:
            continue
        base = int(t0 // stream.rep_period)
        desplazado = EventStream(
            sub.detector, sub.time - np.uint64(base * int(stream.rep_period)), sub.n_detectors,
            sub.topology, periodos_sub, sub.rep_period, sub.clock_offset,
        )
        h = histogram_g2(desplazado, cfg, max_delay)
        n0 = int(np.count_nonzero(sub.detector == 0))
        n1 = int(np.count_nonzero(sub.detector == 1))
        i_sh = (n0 - n1) / (n0 + n1)
        filas.append({
            'window': w,
            'phi': float(cfg.phase_at((t0 + min(t1, stream.n_pulses * stream.rep_period)) / 2)),
            'i_sh': i_sh,
            'g2_raw': h.g2_zero,
            'g2_hom': h.g2_zero * (1 - i_sh ** 2),
            'sigma': h.sigma,
        })
    return pd.DataFrame(filas)


# ========================
# E/S BINARIA
# ========================

def write_events(stream: EventStream, filepath: str, resolution_ps: int = 1):
    """
    Cabecera {b'TTAG', versión u16, n_detectores u8, resolución u32} seguida
    de {n_pulsos u64, offset del reloj u64, periodo f64} y registros
    {detector u1, tiempo <u8} con el tiempo en unidades de la resolución.
    """
    if resolution_ps < 1:
        raise ValidationError('resolution_ps', "debe ser >= 1")
    registros = np.empty(len(stream), dtype=REGISTRO)
    registros['detector'] = stream.detector
    registros['time'] = stream.time // np.uint64(resolution_ps)
    with open(filepath, 'wb') as f:
        f.write(CABECERA.pack(MAGIA, VERSION, stream.n_detectors, resolution_ps))
        f.write(CABECERA_V2.pack(stream.n_pulses, stream.clock_offset, stream.rep_period))
        f.write(registros.tobytes())


def read_events(filepath: str, topology: Optional[str] = None) -> EventStream:
    """
    Lee un fichero TTAG. Los de la versión 1 no guardan pulsos, offset ni
    periodo: se asume 12300 ps, offset nulo y tantos pulsos como periodos
    cubre el último clic.
    """
    with open(filepath, 'rb') as f:
        contenido = f.read()
    if len(contenido) < CABECERA.size:
        raise ValidationError('ttag', "fichero truncado")
    magia, version, n_det, resolucion = CABECERA.unpack_from(contenido)
    if magia != MAGIA:
        raise ValidationError('ttag', f"magia inválida: {magia!r}")
    if version not in (1, VERSION):
        raise ValidationError('ttag', f"versión no soportada: {version}")
    inicio = CABECERA.size
    n_pulsos, offset, rep_period = None, 0, 12300.0
    if version >= 2:
        if len(contenido) < inicio + CABECERA_V2.size:
            raise ValidationError('ttag', "fichero truncado")
        n_pulsos, offset, rep_period = CABECERA_V2.unpack_from(contenido, inicio)
        inicio += CABECERA_V2.size
    cuerpo = len(contenido) - inicio
    if cuerpo % REGISTRO.itemsize:
        raise ValidationError('ttag', "tamaño de registros inconsistente")
    registros = np.frombuffer(contenido, dtype=REGISTRO, offset=inicio)
    tiempos = registros['time'] * np.uint64(max(resolucion, 1))
    if topology is None:
        topology = HBT3 if n_det == 3 else MZI
    if n_pulsos is None:
        n_pulsos = int(tiempos.max() // int(rep_period)) if len(tiempos) else 0
    return EventStream(
        detector=registros['detector'].copy(), time=tiempos.copy(), n_detectors=n_det,
        topology=topology, n_pulses=int(n_pulsos), rep_period=rep_period, clock_offset=int(offset),
    )

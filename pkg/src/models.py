"""
Modelos de datos del simulador de entrelazamiento en número de fotones.
Tipos compartidos, rejillas temporales y lectura de la configuración.

Convenciones: tiempos en ps, tasas en 1/ps, marco rotante (omega0 solo
como metadato).
"""
from dataclasses import dataclass, field
from typing import Optional, Dict, Any, Mapping, Tuple
import json
import math
import re

import numpy as np

from .errors import ValidationError, ConfigParseError, NumericalError


# Patrón de los estados ideales leídos cronológicamente
PATRON_IDEAL = re.compile(r"^(1|00)*$")

CLAVES_CONFIG = (
    'T1', 'tp', 'dt', 'N', 'rabi', 'gamma_star',
    'grid_step', 'jitter_fwhm', 'seed', 'background_rate'
)


# ========================
# PARÁMETROS FÍSICOS
# ========================

@dataclass(frozen=True)
class AtomParams:
    """Átomo de dos niveles"""
    gamma: float
    gamma_star: float = 0.0
    omega0: float = 0.0

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValidationError('gamma', f"debe ser > 0 (recibido {self.gamma})")
        if not self.gamma_star >= 0:
            raise ValidationError('gamma_star', f"debe ser >= 0 (recibido {self.gamma_star})")

    @classmethod
    def from_T1(cls, T1: float, gamma_star: float = 0.0) -> 'AtomParams':
        if not T1 > 0:
            raise ValidationError('gamma', f"T1 debe ser > 0 (recibido {T1})")
        return cls(gamma=1.0 / T1, gamma_star=gamma_star)

    @property
    def T1(self) -> float:
        return 1.0 / self.gamma

    @property
    def half_life(self) -> float:
        """T_1/2 = T1 ln 2"""
        return self.T1 * math.log(2)


@dataclass(frozen=True)
class PulseSequence:
    """
    Secuencia de pulsos pi.

    `separations` guarda Δt_2..Δt_N con el índice de la literatura (m
    decreciente en el tiempo): separations[0] es la última separación
    cronológica. Δt_1 es implícito e infinito.
    """
    n_pulses: int
    separations: Tuple[float, ...] = ()
    pulse_width: float = 0.0
    rabi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'separations', tuple(float(s) for s in self.separations))
        if self.n_pulses < 0:
            raise ValidationError('N', f"debe ser >= 0 (recibido {self.n_pulses})")
        esperado = max(self.n_pulses - 1, 0)
        if len(self.separations) != esperado:
            raise ValidationError(
                'dt', f"se esperaban {esperado} separaciones para N={self.n_pulses}, hay {len(self.separations)}"
            )
        if any(not (s > 0 and math.isfinite(s)) for s in self.separations):
            raise ValidationError('dt', "todas las separaciones deben ser > 0")
        if not self.pulse_width >= 0:
            raise ValidationError('tp', f"debe ser >= 0 (recibido {self.pulse_width})")

    def separation(self, m: int) -> float:
        """Δt_m para m >= 2; Δt_1 es infinito"""
        if m == 1:
            return math.inf
        return self.separations[m - 2]

    @property
    def chronological_gaps(self) -> Tuple[float, ...]:
        """Separaciones en orden cronológico: Δt_N, ..., Δt_2"""
        return tuple(reversed(self.separations))

    @property
    def pulse_starts(self) -> np.ndarray:
        """Instantes de inicio de cada pulso (el primero en t=0)"""
        return np.concatenate([[0.0], np.cumsum(self.chronological_gaps)]) if self.n_pulses else np.zeros(0)

    @property
    def is_ideal(self) -> bool:
        return self.pulse_width == 0


@dataclass(frozen=True)
class SimulationOptions:
    """Opciones numéricas fuera del modelo físico"""
    grid_step: float = 1.0
    jitter_fwhm: float = 0.0
    seed: Optional[int] = None
    background_rate: float = 0.0

    def __post_init__(self):
        if not self.grid_step > 0:
            raise ValidationError('grid_step', "debe ser > 0")
        if not self.jitter_fwhm >= 0:
            raise ValidationError('jitter_fwhm', "debe ser >= 0")
        if not self.background_rate >= 0:
            raise ValidationError('background_rate', "debe ser >= 0")


# ========================
# REJILLAS TEMPORALES
# ========================

@dataclass(frozen=True)
class TimeGrid:
    """Rejilla uniforme; cada punto representa la celda [t - step/2, t + step/2)"""
    start: float
    step: float
    n_points: int

    def __post_init__(self):
        if not self.step > 0:
            raise ValidationError('step', "debe ser > 0")
        if self.n_points < 2:
            raise ValidationError('n_points', "se necesitan al menos 2 puntos")

    @classmethod
    def covering(cls, span: float, step: float, origin: float = 0.0) -> 'TimeGrid':
        """Rejilla centrada en celdas que cubre [origin, origin + span]"""
        n = max(int(math.ceil(span / step - 1e-9)), 2)
        return cls(start=origin + step / 2, step=step, n_points=n)

    @classmethod
    def for_sequence(cls, atom: AtomParams, seq: PulseSequence, step: float = 1.0) -> 'TimeGrid':
        """Rejilla por defecto: [0, 10·T1 + ΣΔt_m]"""
        span = 10 * atom.T1 + sum(seq.separations) + seq.pulse_width
        return cls.covering(span, step)

    @property
    def times(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.n_points)

    @property
    def end(self) -> float:
        return self.start + self.step * (self.n_points - 1)

    @property
    def lower_edge(self) -> float:
        return self.start - self.step / 2

    @property
    def upper_edge(self) -> float:
        return self.end + self.step / 2

    def integrate(self, values: np.ndarray) -> float:
        """Regla del punto medio"""
        return float(np.sum(values) * self.step)

    def early_weights(self, T: float) -> np.ndarray:
        """
        Fracción de cada celda que cae antes de T: 1, 0 o 1/2 para la
        celda que contiene T.
        """
        t = self.times
        pesos = np.full(self.n_points, 0.5)
        tol = 1e-9 * self.step
        pesos[t + self.step / 2 <= T + tol] = 1.0
        pesos[t - self.step / 2 >= T - tol] = 0.0
        return pesos

    def samples_in(self, a: float, b: float) -> int:
        t = self.times
        return int(np.count_nonzero((t >= a) & (t < b)))

    def to_dict(self) -> dict:
        return {'start': self.start, 'step': self.step, 'n_points': self.n_points}

    @classmethod
    def from_dict(cls, data: dict) -> 'TimeGrid':
        return cls(start=data['start'], step=data['step'], n_points=data['n_points'])


@dataclass(frozen=True)
class TimeBinPartition:
    """Umbrales T_[m] que dividen un paquete de ondas en bins"""
    thresholds: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, 'thresholds', tuple(float(t) for t in self.thresholds))
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValidationError('thresholds', "deben ser estrictamente crecientes")

    def check_within(self, grid: TimeGrid):
        for T in self.thresholds:
            if not grid.lower_edge < T < grid.upper_edge:
                raise ValidationError('thresholds', f"T={T} fuera de la rejilla")

    @property
    def n_bins(self) -> int:
        return len(self.thresholds) + 1


# ========================
# ESTADOS FOTÓNICOS
# ========================

@dataclass(frozen=True)
class PhotonicState:
    """
    Mapa disperso bitstring -> amplitud sobre N bins temporales.
    Los bitstrings se leen cronológicamente (primer bin a la izquierda).
    """
    n_bins: int
    amplitudes: Mapping[str, complex] = field(default_factory=dict)
    ideal: bool = True
    check_norm: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        amps = {str(k): complex(v) for k, v in dict(self.amplitudes).items()}
        object.__setattr__(self, 'amplitudes', amps)
        for bits in amps:
            if len(bits) != self.n_bins or set(bits) - {'0', '1'}:
                raise ValidationError('amplitudes', f"bitstring {bits!r} no válido para {self.n_bins} bins")
            if self.ideal and not PATRON_IDEAL.match(bits):
                raise ValidationError('amplitudes', f"{bits!r} no sigue el patrón (1|00)*")
        if self.check_norm and amps and abs(self.norm - 1.0) > 1e-12:
            raise ValidationError('amplitudes', f"estado no normalizado (norma {self.norm:.15f})")

    @property
    def norm(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    @property
    def n_terms(self) -> int:
        return sum(1 for a in self.amplitudes.values() if a != 0)

    def amplitude(self, bits: str) -> complex:
        return self.amplitudes.get(bits, 0j)

    def to_vector(self) -> np.ndarray:
        """Vector denso de 2^N componentes (bit más significativo = primer bin)"""
        vec = np.zeros(2 ** self.n_bins, dtype=complex)
        for bits, amp in self.amplitudes.items():
            vec[int(bits, 2) if bits else 0] = amp
        return vec

    def to_dict(self) -> dict:
        return {
            'n_bins': self.n_bins,
            'terms': [
                {'bits': bits, 're': amp.real, 'im': amp.imag}
                for bits, amp in sorted(self.amplitudes.items())
            ]
        }

    @classmethod
    def from_dict(cls, data: dict, ideal: bool = True) -> 'PhotonicState':
        amps = {t['bits']: complex(t['re'], t.get('im', 0.0)) for t in data.get('terms', [])}
        return cls(n_bins=data['n_bins'], amplitudes=amps, ideal=ideal)

    def guardar(self, filepath: str):
        with open(filepath, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)

    @classmethod
    def cargar(cls, filepath: str) -> 'PhotonicState':
        with open(filepath, 'r', encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


def normalize(state: PhotonicState) -> PhotonicState:
    """Reescala a norma 1 conservando las fases relativas"""
    norma = state.norm
    if not math.isfinite(norma):
        raise NumericalError(f"norma no finita: {norma}")
    if norma == 0:
        raise ValidationError('amplitudes', "no se puede normalizar un estado de norma cero")
    escala = 1.0 / math.sqrt(norma)
    return PhotonicState(
        n_bins=state.n_bins,
        amplitudes={k: v * escala for k, v in state.amplitudes.items()},
        ideal=state.ideal,
    )


# ========================
# DOCUMENTO DE CONFIGURACIÓN
# ========================

def _leer_documento(text: str) -> Dict[str, Any]:
    """JSON, mapeo estilo {T1: 136, dt: [98]} o líneas `clave: valor`"""
    cuerpo = text.strip()
    if not cuerpo:
        return {}

    if cuerpo.startswith('{'):
        try:
            datos = json.loads(cuerpo)
        except json.JSONDecodeError:
            citado = re.sub(r'([{,]\s*)([A-Za-z_]\w*)\s*:', r'\1"\2":', cuerpo)
            try:
                datos = json.loads(citado)
            except json.JSONDecodeError as e:
                lineas = cuerpo.splitlines()
                linea = lineas[e.lineno - 1] if 0 < e.lineno <= len(lineas) else ""
                raise ConfigParseError(e.msg, e.lineno, linea)
        if not isinstance(datos, dict):
            raise ConfigParseError("el documento debe ser un mapeo clave-valor", 1, cuerpo.splitlines()[0])
        return datos

    datos: Dict[str, Any] = {}
    for num, linea in enumerate(text.splitlines(), start=1):
        limpia = linea.split('#', 1)[0].strip()
        if not limpia:
            continue
        m = re.match(r'^([A-Za-z_]\w*)\s*[:=]\s*(.*)$', limpia)
        if not m:
            raise ConfigParseError("se esperaba `clave: valor`", num, linea)
        clave, valor = m.group(1), m.group(2).strip()
        if clave in datos:
            raise ConfigParseError(f"clave duplicada {clave!r}", num, linea)
        try:
            datos[clave] = json.loads(valor) if valor else None
        except json.JSONDecodeError:
            raise ConfigParseError(f"valor no válido para {clave!r}", num, linea)
    return datos


def _numero(datos: dict, clave: str, defecto: Optional[float] = None) -> Optional[float]:
    valor = datos.get(clave, defecto)
    if valor is None:
        return None
    if isinstance(valor, bool) or not isinstance(valor, (int, float)):
        raise ValidationError(clave, f"debe ser numérico (recibido {valor!r})")
    return float(valor)


def parse_config(text: str) -> Tuple[AtomParams, PulseSequence, SimulationOptions]:
    """
    Lee el documento de simulación.

    Claves: T1, tp, dt (lista Δt_2..Δt_N), N, rabi, gamma_star, grid_step,
    jitter_fwhm, seed, background_rate. Las claves desconocidas son error.
    """
    datos = _leer_documento(text)

    desconocidas = sorted(set(datos) - set(CLAVES_CONFIG))
    if desconocidas:
        raise ValidationError(desconocidas[0], "clave desconocida")
    if 'T1' not in datos:
        raise ValidationError('T1', "clave obligatoria")

    T1 = _numero(datos, 'T1')
    if not T1 > 0:
        raise ValidationError('gamma', f"T1 debe ser > 0 (gamma = 1/T1), recibido {T1}")
    atom = AtomParams(gamma=1.0 / T1, gamma_star=_numero(datos, 'gamma_star', 0.0))

    dt = datos.get('dt', [])
    if dt is None:
        dt = []
    if isinstance(dt, (int, float)) and not isinstance(dt, bool):
        dt = [dt]
    if not isinstance(dt, list):
        raise ValidationError('dt', "debe ser una lista de separaciones")
    dt = [_numero({'dt': v}, 'dt') for v in dt]

    n = datos.get('N', len(dt) + 1)
    if isinstance(n, bool) or not isinstance(n, (int, float)) or int(n) != n:
        raise ValidationError('N', f"debe ser entero (recibido {n!r})")

    tp = _numero(datos, 'tp', 0.0)
    rabi = _numero(datos, 'rabi')
    if rabi is None:
        rabi = math.pi / tp if tp and tp > 0 else 0.0

    seq = PulseSequence(n_pulses=int(n), separations=tuple(dt), pulse_width=tp, rabi=rabi)

    seed = datos.get('seed')
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise ValidationError('seed', "debe ser entero")

    opciones = SimulationOptions(
        grid_step=_numero(datos, 'grid_step', 1.0),
        jitter_fwhm=_numero(datos, 'jitter_fwhm', 0.0),
        seed=seed,
        background_rate=_numero(datos, 'background_rate', 0.0),
    )
    return atom, seq, opciones


def dump_config(atom: AtomParams, seq: PulseSequence, opciones: SimulationOptions) -> str:
    """Documento JSON canónico equivalente"""
    datos = {
        'T1': atom.T1,
        'tp': seq.pulse_width,
        'dt': list(seq.separations),
        'N': seq.n_pulses,
        'rabi': seq.rabi,
        'gamma_star': atom.gamma_star,
        'grid_step': opciones.grid_step,
        'jitter_fwhm': opciones.jitter_fwhm,
        'seed': opciones.seed,
        'background_rate': opciones.background_rate,
    }
    return json.dumps(datos, indent=2, ensure_ascii=False)

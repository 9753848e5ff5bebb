"""
Módulo de informes: manifiesto de ejecución, análisis de una secuencia de
pulsos y el informe JSON de los estimadores.
"""
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional
import hashlib
import json
import math
import time

import numpy as np
import pandas as pd

from . import __version__
from .errors import ValidationError
from .models import AtomParams, PulseSequence, SimulationOptions, TimeGrid
from .dynamics import TemporalWavefunctions, TwoPulseDecomposition, single_pulse, two_pulse, exponential_photon
from .correlations import (
    MapSet, QuadrantSummary, build_maps, jitter_maps, quadrant_reduce, sweep_threshold, sweep_frame,
    hom_g2, first_order_coherence,
)
from .estimators import (
    MomentSet, BellInputs, PhotonProbabilities, PHI_PLUS, PSI_PLUS,
    probabilities_from_moments, fidelity_phi_plus, fidelity_psi_plus,
    build_partial_dm, sample_concurrence,
)


# ========================
# MANIFIESTO
# ========================

def sha256_file(filepath: str) -> str:
    h = hashlib.sha256()
    with open(filepath, 'rb') as f:
        for bloque in iter(lambda: f.read(1 << 20), b''):
            h.update(bloque)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Registro de una ejecución: comando, configuración y ficheros con su hash"""
    command: str
    config: Dict[str, Any]
    seed: Optional[int]
    version: str = __version__
    artifacts: Dict[str, str] = field(default_factory=dict)
    created: str = field(default_factory=lambda: datetime.now().isoformat(timespec='seconds'))
    wall_time: float = 0.0
    _inicio: float = field(default_factory=time.perf_counter, repr=False, compare=False)

    @staticmethod
    def run_dir(root: str, seed: Optional[int]) -> Path:
        """<root>/<timestamp>-<seed>/"""
        marca = datetime.now().strftime('%Y%m%d-%H%M%S')
        ruta = Path(root) / f"{marca}-{seed if seed is not None else 'noseed'}"
        ruta.mkdir(parents=True, exist_ok=True)
        return ruta

    def registrar(self, filepath: Path) -> str:
        """Añade un fichero al manifiesto y devuelve su hash"""
        digest = sha256_file(str(filepath))
        self.artifacts[Path(filepath).name] = digest
        return digest

    def to_dict(self) -> dict:
        return {
            'command': self.command,
            'config': self.config,
            'seed': self.seed,
            'version': self.version,
            'artifacts': dict(sorted(self.artifacts.items())),
            'created': self.created,
            'wall_time': self.wall_time,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'RunManifest':
        return cls(
            command=data['command'], config=data.get('config', {}), seed=data.get('seed'),
            version=data.get('version', __version__), artifacts=data.get('artifacts', {}),
            created=data.get('created', ''), wall_time=data.get('wall_time', 0.0),
        )

    def guardar(self, directorio: Path) -> Path:
        self.wall_time = time.perf_counter() - self._inicio
        ruta = Path(directorio) / 'manifest.json'
        with open(ruta, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)
        return ruta

    @classmethod
    def cargar(cls, filepath: str) -> 'RunManifest':
        with open(filepath, 'r', encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


def guardar_json(datos: Any, filepath: Path):
    with open(filepath, 'w', encoding='utf-8') as f:
        json.dump(datos, f, indent=2, ensure_ascii=False, default=_json_default)


def _json_default(valor):
    if isinstance(valor, (np.integer,)):
        return int(valor)
    if isinstance(valor, (np.floating,)):
        return float(valor)
    if isinstance(valor, np.ndarray):
        return valor.tolist()
    raise TypeError(f"no serializable: {type(valor).__name__}")


# ========================
# ANÁLISIS DE UNA SECUENCIA
# ========================

class SequenceAnalyzer:
    """Analiza la emisión de una secuencia de uno o dos pulsos"""

    def __init__(self, atom: AtomParams, seq: PulseSequence, opciones: SimulationOptions):
        if seq.n_pulses not in (1, 2):
            raise ValidationError('N', "el análisis de correlaciones admite 1 o 2 pulsos")
        self.atom = atom
        self.seq = seq
        self.opciones = opciones
        self._fuente: Optional[TemporalWavefunctions] = None
        self._descomposicion: Optional[TwoPulseDecomposition] = None
        self._mapas: Optional[MapSet] = None

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.for_sequence(self.atom, self.seq, self.opciones.grid_step)

    @property
    def threshold(self) -> float:
        """Umbral por defecto: dt + tp con dos pulsos, T1/2 con uno"""
        if self.seq.n_pulses == 2:
            return self.seq.separations[0] + self.seq.pulse_width
        return self.atom.half_life + self.seq.pulse_width

    @property
    def fuente(self) -> TemporalWavefunctions:
        if self._fuente is None:
            if self.seq.n_pulses == 2:
                self._descomposicion = two_pulse(
                    self.atom, self.seq.rabi, self.seq.pulse_width, self.seq.separations[0], self.grid
                )
                self._fuente = self._descomposicion.to_wavefunctions()
            elif self.seq.pulse_width > 0:
                self._fuente = single_pulse(self.atom, self.seq.rabi, self.seq.pulse_width, self.grid)
            else:
                self._fuente = exponential_photon(self.atom, self.grid)
        return self._fuente

    @property
    def mapas(self) -> MapSet:
        """Mapas deterministas con desfase y jitter aplicados"""
        if self._mapas is None:
            maps = build_maps(self.fuente, self.atom.gamma_star)
            self._mapas = jitter_maps(maps, self.opciones.jitter_fwhm)
        return self._mapas

    def resumen_probabilidades(self) -> Dict[str, Any]:
        fuente = self.fuente
        resumen = {'p0': fuente.p0, 'p1': fuente.p1, 'p2': fuente.p2,
                   'mu': fuente.p1 + 2 * fuente.p2}
        if self._descomposicion is not None:
            resumen.update(self._descomposicion.to_dict())
        return resumen

    def resumen_cuadrantes(self, T: Optional[float] = None) -> QuadrantSummary:
        return quadrant_reduce(self.mapas, self.threshold if T is None else T, first_order_coherence(self.fuente))

    def barrido_umbral(self, n: int = 41) -> List[QuadrantSummary]:
        """Barre T a lo largo del paquete, desde 0 hasta 3·T1 tras el umbral por defecto"""
        grid = self.grid
        fin = min(self.threshold + 3 * self.atom.T1, grid.upper_edge - grid.step)
        umbrales = np.linspace(grid.lower_edge + grid.step, fin, n)
        return sweep_threshold(self.mapas, umbrales, first_order_coherence(self.fuente))

    def tabla_barrido(self, n: int = 41) -> pd.DataFrame:
        return sweep_frame(self.barrido_umbral(n))

    def curva_hom(self, n: int = 73) -> pd.DataFrame:
        r = self.resumen_cuadrantes()
        phi = np.linspace(0, 2 * math.pi, n)
        return pd.DataFrame({'phi': phi, 'g2_hom': hom_g2(phi, min(r.M, 1.0), r.g2, r.c2)})


# ========================
# INFORME DE ESTIMADORES
# ========================

def _probabilidades(doc: dict) -> PhotonProbabilities:
    if 'moments' in doc:
        return probabilities_from_moments(MomentSet.from_dict(doc['moments']))
    if 'probabilities' in doc:
        p = doc['probabilities']
        valores = tuple(float(p.get(f'p{i}', 0.0)) for i in range(4))
        sigmas = tuple(float(p.get(f'sigma_p{i}', 0.0)) for i in range(4))
        return PhotonProbabilities(p=valores, sigma=sigmas)
    raise ValidationError('inputs', "se necesita 'moments' o 'probabilities'")


def build_estimator_report(
    doc: dict,
    n_samples: int,
    seed: int,
    batch_size: int = 50_000,
    show_progress: bool = False,
) -> Dict[str, Any]:
    """
    Ejecuta la cadena completa de estimadores sobre un documento de entrada.

    Args:
        doc: {'case', 'moments' | 'probabilities', 'measurements', 'mu_range'?}
        n_samples: matrices aceptadas para la concurrencia
        seed: semilla del muestreo

    Returns:
        Diccionario serializable con entradas, probabilidades, fidelidad,
        matriz parcial y concurrencia
    """
    case = doc.get('case', PHI_PLUS)
    if case not in (PHI_PLUS, PSI_PLUS):
        raise ValidationError('case', f"desconocido: {case}")
    probs = _probabilidades(doc)
    medidas = dict(doc.get('measurements', {}))
    medidas.setdefault('p0', probs.p0)
    medidas.setdefault('p1', probs.p1)
    medidas.setdefault('p2', probs.p2)
    sigmas = dict(medidas.pop('sigmas', {}))
    sigmas.setdefault('p0', probs.sigma[0])
    entradas = BellInputs.from_dict({**medidas, 'sigmas': sigmas})

    rango = doc.get('mu_range')
    rango = tuple(rango) if rango else None
    if case == PHI_PLUS:
        fidelidad = fidelity_phi_plus(
            entradas.p0, entradas.p2, entradas.mu_tilde, entradas.mu_bar_e, entradas.mu_bar_l,
            entradas.M_ee, entradas.M_ll, entradas.c2_el, mu_range=rango,
        )
    else:
        M_s = doc.get('M_s')
        fidelidad = fidelity_psi_plus(
            entradas.mu_tilde, entradas.mu_bar_e, entradas.mu_bar_l,
            entradas.M_ee, entradas.M_ll, entradas.M_el, mu_range=rango,
            p1=entradas.p1, M_s=M_s,
        )

    pdm = build_partial_dm(case, entradas)
    concurrencia = sample_concurrence(pdm, n_samples, seed, batch_size=batch_size, show_progress=show_progress)

    return {
        'case': case,
        'inputs': {k: v for k, v in doc.items() if k != 'case'},
        'probabilities': probs.to_dict(),
        'fidelity': fidelidad.to_dict(),
        'partial_density_matrix': pdm.to_dict(),
        'concurrence': concurrencia.to_dict(),
    }

"""
Simulador de entrelazamiento en número de fotones - Módulos principales
"""
__version__ = '0.1.0'

from .errors import SimulationError, ValidationError, ConfigParseError, UnphysicalRegimeError, NumericalError
from .models import AtomParams, PulseSequence, SimulationOptions, TimeGrid, TimeBinPartition, PhotonicState
from .mps import build_state, golden_schedule, count_terms
from .dynamics import single_pulse, two_pulse, collision_evolve, overlap_fraction
from .correlations import build_maps, apply_jitter, quadrant_reduce, hom_g2
from .estimators import probabilities_from_moments, build_partial_dm, sample_concurrence, wootters_concurrence
from .timetags import DetectionConfig, EmissionModel, generate_events
from .reports import RunManifest, SequenceAnalyzer

__all__ = [
    'SimulationError',
    'ValidationError',
    'ConfigParseError',
    'UnphysicalRegimeError',
    'NumericalError',
    'AtomParams',
    'PulseSequence',
    'SimulationOptions',
    'TimeGrid',
    'TimeBinPartition',
    'PhotonicState',
    'build_state',
    'golden_schedule',
    'count_terms',
    'single_pulse',
    'two_pulse',
    'collision_evolve',
    'overlap_fraction',
    'build_maps',
    'apply_jitter',
    'quadrant_reduce',
    'hom_g2',
    'probabilities_from_moments',
    'build_partial_dm',
    'sample_concurrence',
    'wootters_concurrence',
    'DetectionConfig',
    'EmissionModel',
    'generate_events',
    'RunManifest',
    'SequenceAnalyzer',
]

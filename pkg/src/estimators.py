"""
Estimadores a partir de medidas: probabilidades de número de fotones,
fidelidades con los estados de Bell, matriz densa parcial y concurrencia
por muestreo con rechazo.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union
import math

import numpy as np
import pandas as pd
from rich.console import Console
from rich.progress import Progress, SpinnerColumn, TextColumn, BarColumn

from .errors import ValidationError, UnphysicalRegimeError, NumericalError
from .correlations import QuadrantSummary

console = Console(stderr=True)

PSI_PLUS = 'psi_plus'
PHI_PLUS = 'phi_plus'
CASOS = (PSI_PLUS, PHI_PLUS)
BASE = ('00', '01', '10', '11')
TOL_PSD = -1e-10
HIST_BINS = 64

# sigma_y ⊗ sigma_y (real)
_YY = np.array([
    [0, 0, 0, -1],
    [0, 0, 1, 0],
    [0, 1, 0, 0],
    [-1, 0, 0, 0],
], dtype=float)


# ========================
# MOMENTOS -> PROBABILIDADES
# ========================

@dataclass(frozen=True)
class MomentSet:
    """μ/μ_π, g2(0), g3(0) y el anclaje μ_π, con sus incertidumbres"""
    mu_ratio: float
    g2: float
    g3: float
    mu_pi: float = 1.0
    sigma_mu_ratio: float = 0.0
    sigma_g2: float = 0.0
    sigma_g3: float = 0.0
    sigma_mu_pi: float = 0.0

    def __post_init__(self):
        for nombre in ('mu_ratio', 'g2', 'g3', 'mu_pi', 'sigma_mu_ratio', 'sigma_g2', 'sigma_g3', 'sigma_mu_pi'):
            if getattr(self, nombre) < 0:
                raise ValidationError(nombre, "debe ser >= 0")

    @property
    def mu(self) -> float:
        return self.mu_ratio * self.mu_pi

    @property
    def sigma_mu(self) -> float:
        return math.hypot(self.mu_pi * self.sigma_mu_ratio, self.mu_ratio * self.sigma_mu_pi)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: dict) -> 'MomentSet':
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class PhotonProbabilities:
    p: Tuple[float, float, float, float]
    sigma: Tuple[float, float, float, float]
    warnings: Tuple[str, ...] = ()

    @property
    def p0(self) -> float:
        return self.p[0]

    @property
    def p1(self) -> float:
        return self.p[1]

    @property
    def p2(self) -> float:
        return self.p[2]

    @property
    def p3(self) -> float:
        return self.p[3]

    @property
    def mu(self) -> float:
        return self.p[1] + 2 * self.p[2] + 3 * self.p[3]

    def to_dict(self) -> dict:
        return {
            **{f'p{i}': v for i, v in enumerate(self.p)},
            **{f'sigma_p{i}': s for i, s in enumerate(self.sigma)},
        }


def probabilities_from_moments(m: MomentSet) -> PhotonProbabilities:
    """
    Invierte g3 ≃ 6p3/μ³ y g2 ≃ (2p2 + 6p3)/μ² truncando en tres fotones.
    Las incertidumbres se propagan a primer orden.
    """
    mu = m.mu
    if mu <= 0:
        raise ValidationError('mu', "μ = mu_ratio·mu_pi debe ser > 0")
    g2, g3 = m.g2, m.g3

    p3 = g3 * mu ** 3 / 6
    p2 = (g2 * mu ** 2 - 6 * p3) / 2
    p1 = mu - 2 * p2 - 3 * p3
    p0 = 1 - p1 - p2 - p3

    # filas: p0..p3; columnas: d/dg2, d/dg3, d/dμ
    jac = np.array([
        [mu ** 2 / 2, -mu ** 3 / 6, -1 + g2 * mu - g3 * mu ** 2 / 2],
        [-mu ** 2, mu ** 3 / 2, 1 - 2 * g2 * mu + 1.5 * g3 * mu ** 2],
        [mu ** 2 / 2, -mu ** 3 / 2, g2 * mu - 1.5 * g3 * mu ** 2],
        [0.0, mu ** 3 / 6, g3 * mu ** 2 / 2],
    ])
    sig_in = np.array([m.sigma_g2, m.sigma_g3, m.sigma_mu])
    sigma = np.sqrt((jac ** 2) @ (sig_in ** 2))

    avisos = []
    for i, (p, s) in enumerate(zip((p0, p1, p2, p3), sigma)):
        if p < -3 * s - 1e-12:
            raise UnphysicalRegimeError(f'p{i}', f"{p:.4f} < -3σ ({-3 * s:.4f})")
        if p < 0:
            aviso = f"p{i} = {p:.4f} negativa pero compatible con 0"
            console.print(f"[yellow]⚠ {aviso}[/yellow]")
            avisos.append(aviso)

    return PhotonProbabilities(
        p=(p0, p1, p2, p3), sigma=tuple(float(s) for s in sigma), warnings=tuple(avisos)
    )


def synthetic_moments(p0: float, p1: float, p2: float, p3: float, mu_pi: float = 1.0) -> MomentSet:
    """Momentos que generaría una distribución p0..p3 dada"""
    if abs(p0 + p1 + p2 + p3 - 1) > 1e-9:
        raise ValidationError('p', "las probabilidades deben sumar 1")
    mu = p1 + 2 * p2 + 3 * p3
    if mu <= 0:
        raise ValidationError('mu', "la distribución no tiene fotones")
    return MomentSet(mu_ratio=mu / mu_pi, g2=(2 * p2 + 6 * p3) / mu ** 2, g3=6 * p3 / mu ** 3, mu_pi=mu_pi)


# ========================
# FIDELIDADES
# ========================

@dataclass(frozen=True)
class FidelityEstimate:
    value: float
    low: float
    high: float
    bound: Optional[float] = None

    def to_dict(self) -> dict:
        return {'value': self.value, 'low': self.low, 'high': self.high, 'bound': self.bound}


def _comprobar_proporciones(mu_bar_e: float, mu_bar_l: float, **overlaps: float):
    if abs(mu_bar_e + mu_bar_l - 1) > 1e-6:
        raise ValidationError('mu_bar', f"μ̄_e + μ̄_l = {mu_bar_e + mu_bar_l:.6f} != 1")
    for nombre, valor in overlaps.items():
        if not 0 <= valor <= 1 + 1e-9:
            raise ValidationError(nombre, f"fuera de [0, 1]: {valor}")


def fidelity_psi_plus(
    mu_tilde_pi: float,
    mu_bar_e: float,
    mu_bar_l: float,
    M_ee: float,
    M_ll: float,
    M_el: float,
    mu_range: Optional[Tuple[float, float]] = None,
    p1: Optional[float] = None,
    M_s: Optional[float] = None,
) -> FidelityEstimate:
    """
    F = (μ̃_π/2)(μ̄_e√M_ee + μ̄_l√M_ll + 2√(μ̄_e μ̄_l M_el))

    Args:
        mu_range: intervalo de μ̃_π, típicamente [p1, μ_π]
        p1, M_s: si se dan, se informa la cota p1·√M_s
    """
    _comprobar_proporciones(mu_bar_e, mu_bar_l, M_ee=M_ee, M_ll=M_ll, M_el=M_el)

    def F(mt: float) -> float:
        return mt / 2 * (mu_bar_e * math.sqrt(M_ee) + mu_bar_l * math.sqrt(M_ll)
                         + 2 * math.sqrt(mu_bar_e * mu_bar_l * M_el))

    low, high = (F(mu_range[0]), F(mu_range[1])) if mu_range else (F(mu_tilde_pi), F(mu_tilde_pi))
    cota = p1 * math.sqrt(M_s) if p1 is not None and M_s is not None else None
    return FidelityEstimate(value=F(mu_tilde_pi), low=low, high=high, bound=cota)


def fidelity_phi_plus(
    p0: float,
    p2: float,
    mu_tilde: float,
    mu_bar_e: float,
    mu_bar_l: float,
    M_ee: float,
    M_ll: float,
    c2_el: float,
    mu_range: Optional[Tuple[float, float]] = None,
) -> FidelityEstimate:
    """F = ½(p0 + (μ̃²/p2)·μ̄_eμ̄_l·√(M_ee M_ll) + 2μ̃·√(μ̄_eμ̄_l·c2_el))"""
    if p2 <= 0:
        raise ValidationError('p2', "debe ser > 0")
    _comprobar_proporciones(mu_bar_e, mu_bar_l, M_ee=M_ee, M_ll=M_ll)
    if c2_el < 0:
        raise ValidationError('c2_el', "debe ser >= 0")
    prod = mu_bar_e * mu_bar_l

    def F(mt: float) -> float:
        return 0.5 * (p0 + mt ** 2 / p2 * prod * math.sqrt(M_ee * M_ll) + 2 * mt * math.sqrt(prod * c2_el))

    low, high = (F(mu_range[0]), F(mu_range[1])) if mu_range else (F(mu_tilde), F(mu_tilde))
    return FidelityEstimate(value=F(mu_tilde), low=low, high=high)


def fidelity_sweep(
    summaries: Sequence[QuadrantSummary],
    case: str,
    mu_tilde: float,
    p0: float = 0.0,
    p1: Optional[float] = None,
    p2: float = 0.0,
    mu_range: Optional[Tuple[float, float]] = None,
) -> pd.DataFrame:
    """Fidelidad frente al umbral; los cuadrantes indefinidos dan NaN"""
    if case not in CASOS:
        raise ValidationError('case', f"debe ser uno de {CASOS}")
    filas = []
    for s in summaries:
        fila = {'T': s.threshold, 'F': math.nan, 'F_low': math.nan, 'F_high': math.nan, 'bound': math.nan}
        if case == PSI_PLUS:
            M = s.M_ab
            if None not in (M['ee'], M['ll'], M['el']):
                M_s = s.M / (1 - s.g2) if s.g2 < 1 else None
                est = fidelity_psi_plus(mu_tilde, s.mu_bar_e, s.mu_bar_l,
                                        min(M['ee'], 1.0), min(M['ll'], 1.0), min(M['el'], 1.0),
                                        mu_range=mu_range, p1=p1, M_s=M_s)
                fila.update(F=est.value, F_low=est.low, F_high=est.high,
                            bound=est.bound if est.bound is not None else math.nan)
        else:
            if None not in (s.M_ab['ee'], s.M_ab['ll'], s.c2_ab['el']):
                est = fidelity_phi_plus(p0, p2, mu_tilde, s.mu_bar_e, s.mu_bar_l,
                                        min(s.M_ab['ee'], 1.0), min(s.M_ab['ll'], 1.0), s.c2_ab['el'],
                                        mu_range=mu_range)
                fila.update(F=est.value, F_low=est.low, F_high=est.high)
        filas.append(fila)
    return pd.DataFrame(filas)


# ========================
# MATRIZ DENSA PARCIAL
# ========================

@dataclass(frozen=True)
class Measured:
    value: float
    sigma: float = 0.0


@dataclass(frozen=True)
class Bounded:
    upper: float


@dataclass(frozen=True)
class Free:
    pass


ElementStatus = Union[Measured, Bounded, Free]


@dataclass(frozen=True)
class BellInputs:
    """
    Medidas que alimentan la matriz parcial.

    mu_tilde es μ̃ (φ+) o μ̃_π (ψ+). sigmas admite las mismas claves que los
    campos.
    """
    p0: float
    p1: float
    p2: float
    mu_tilde: float
    mu_bar_e: float
    mu_bar_l: float
    M_ee: float
    M_ll: float
    M_el: float = 0.0
    c2_el: float = 0.0
    sigmas: Dict[str, float] = field(default_factory=dict)

    def sigma(self, nombre: str) -> float:
        return self.sigmas.get(nombre, 0.0)

    def replace(self, **cambios) -> 'BellInputs':
        datos = {k: getattr(self, k) for k in self.__dataclass_fields__}
        datos.update(cambios)
        return BellInputs(**datos)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: dict) -> 'BellInputs':
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class PartialDensityMatrix:
    """Bloque 4x4 en la base {00, 01, 10, 11}; solo se guarda el triángulo superior"""
    case: str
    elements: Dict[Tuple[int, int], ElementStatus]
    clamps: Tuple[str, ...] = ()

    def __post_init__(self):
        for (i, j), estado in self.elements.items():
            if i > j:
                raise ValidationError('elements', "solo el triángulo superior (i <= j)")
            if i == j and isinstance(estado, Measured) and not -1e-12 <= estado.value <= 1 + 1e-12:
                raise ValidationError(f'rho_{BASE[i]}{BASE[j]}', f"diagonal fuera de [0, 1]: {estado.value}")

    def status(self, i: int, j: int) -> ElementStatus:
        i, j = min(i, j), max(i, j)
        return self.elements.get((i, j), Free())

    def nominal(self) -> np.ndarray:
        """Solo los elementos medidos; el resto a cero"""
        rho = np.zeros((4, 4), dtype=complex)
        for (i, j), estado in self.elements.items():
            if isinstance(estado, Measured):
                rho[i, j] = estado.value
                rho[j, i] = estado.value
        return rho

    def to_dict(self) -> dict:
        salida = {}
        for i in range(4):
            for j in range(i, 4):
                e = self.status(i, j)
                clave = f'{BASE[i]},{BASE[j]}'
                if isinstance(e, Measured):
                    salida[clave] = {'status': 'measured', 'value': e.value, 'sigma': e.sigma}
                elif isinstance(e, Bounded):
                    salida[clave] = {'status': 'bounded', 'upper': e.upper}
                else:
                    salida[clave] = {'status': 'free'}
        return {'case': self.case, 'elements': salida, 'clamps': list(self.clamps)}


def _elementos_medidos(case: str, x: BellInputs) -> Dict[Tuple[int, int], float]:
    pe, pl = x.mu_bar_e, x.mu_bar_l
    if case == PHI_PLUS:
        return {
            (0, 0): x.p0,
            (3, 3): x.mu_tilde ** 2 / x.p2 * pe * pl * math.sqrt(x.M_ee * x.M_ll),
            (0, 3): x.mu_tilde * math.sqrt(pe * pl * x.c2_el),
        }
    return {
        # |01> es el fotón tardío y |10> el temprano
        (1, 1): x.mu_tilde * pl * math.sqrt(x.M_ll),
        (2, 2): x.mu_tilde * pe * math.sqrt(x.M_ee),
        (1, 2): x.mu_tilde * math.sqrt(pe * pl * x.M_el),
    }


def _propagar_sigmas(case: str, x: BellInputs) -> Dict[Tuple[int, int], float]:
    """Diferencias finitas centradas sobre cada entrada con sigma > 0"""
    var = {k: 0.0 for k in _elementos_medidos(case, x)}
    for nombre, s in x.sigmas.items():
        if s <= 0 or nombre not in x.__dataclass_fields__:
            continue
        v = getattr(x, nombre)
        h = 1e-6 * max(abs(v), 1.0)
        arriba = _elementos_medidos(case, x.replace(**{nombre: v + h}))
        abajo = _elementos_medidos(case, x.replace(**{nombre: max(v - h, 0.0)}))
        paso = v + h - max(v - h, 0.0)
        for k in var:
            var[k] += ((arriba[k] - abajo[k]) / paso * s) ** 2
    return {k: math.sqrt(v) for k, v in var.items()}


def build_partial_dm(case: str, inputs: BellInputs) -> PartialDensityMatrix:
    """
    Asigna a cada elemento su estado: medido (con sigma propagada), acotado
    por p_n o libre.

    Las coherencias medidas son reales no negativas y se recortan a
    √(ρ_aa ρ_bb) si la superan; cada recorte queda en clamps.
    """
    if case not in CASOS:
        raise ValidationError('case', f"debe ser uno de {CASOS}")
    if case == PHI_PLUS and inputs.p2 <= 0:
        raise ValidationError('p2', "debe ser > 0")

    medidos = _elementos_medidos(case, inputs)
    sigmas = _propagar_sigmas(case, inputs)
    coherencia = (0, 3) if case == PHI_PLUS else (1, 2)
    a, b = coherencia
    tope = math.sqrt(max(medidos[(a, a)], 0.0) * max(medidos[(b, b)], 0.0))
    recortes = []
    if medidos[coherencia] > tope:
        aviso = (f"|rho_{BASE[a]}{BASE[b]}| = {medidos[coherencia]:.4f} supera "
                 f"√(ρ_aa ρ_bb) = {tope:.4f}; recortado")
        console.print(f"[yellow]⚠ {aviso}[/yellow]")
        recortes.append(aviso)
        medidos[coherencia] = tope

    elementos: Dict[Tuple[int, int], ElementStatus] = {
        k: Measured(v, sigmas[k]) for k, v in medidos.items()
    }
    if case == PHI_PLUS:
        elementos[(1, 1)] = Bounded(inputs.p1)
        elementos[(2, 2)] = Bounded(inputs.p1)
    else:
        elementos[(0, 0)] = Bounded(inputs.p0)
        elementos[(3, 3)] = Bounded(inputs.p2)
    for i in range(4):
        for j in range(i + 1, 4):
            elementos.setdefault((i, j), Free())

    return PartialDensityMatrix(case=case, elements=elementos, clamps=tuple(recortes))


# ========================
# CONCURRENCIA
# ========================

def _concurrencia_lote(rhos: np.ndarray) -> np.ndarray:
    """Concurrencia de Wootters de un lote (B, 4, 4)"""
    tilde = _YY @ np.conj(rhos) @ _YY
    valores = np.linalg.eigvals(rhos @ tilde)
    lam = np.sqrt(np.clip(valores.real, 0.0, None))
    lam = -np.sort(-lam, axis=-1)
    return np.maximum(0.0, lam[..., 0] - lam[..., 1] - lam[..., 2] - lam[..., 3])


def wootters_concurrence(rho: np.ndarray) -> float:
    """C = max(0, λ1 - λ2 - λ3 - λ4); homogénea de grado 1, sin renormalizar la traza"""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValidationError('rho', "se espera una matriz 4x4")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
        raise ValidationError('rho', "no es hermítica")
    if np.min(np.linalg.eigvalsh(rho)) < TOL_PSD:
        raise UnphysicalRegimeError('rho', "autovalor negativo")
    return float(_concurrencia_lote(rho[None])[0])


@dataclass(frozen=True)
class ConcurrenceEstimate:
    mean: float
    std: float
    histogram: Tuple[int, ...]
    n_accepted: int
    n_rejected: int
    mean_renormalized: float = 0.0
    std_renormalized: float = 0.0
    seed: Optional[int] = None

    @property
    def acceptance(self) -> float:
        total = self.n_accepted + self.n_rejected
        return self.n_accepted / total if total else 0.0

    def to_dict(self) -> dict:
        return {
            'mean': self.mean, 'std': self.std,
            'mean_renormalized': self.mean_renormalized, 'std_renormalized': self.std_renormalized,
            'histogram': list(self.histogram), 'bins': HIST_BINS,
            'n_accepted': self.n_accepted, 'n_rejected': self.n_rejected,
            'acceptance': self.acceptance, 'seed': self.seed,
        }


def _muestrear_lote(pdm: PartialDensityMatrix, n: int, rng: np.random.Generator) -> np.ndarray:
    rhos = np.zeros((n, 4, 4), dtype=complex)
    for i in range(4):
        e = pdm.status(i, i)
        if isinstance(e, Measured):
            rhos[:, i, i] = rng.normal(e.value, e.sigma, n) if e.sigma > 0 else e.value
        elif isinstance(e, Bounded):
            rhos[:, i, i] = rng.uniform(0.0, e.upper, n)
        else:
            rhos[:, i, i] = rng.uniform(0.0, 1.0, n)

    for i in range(4):
        for j in range(i + 1, 4):
            e = pdm.status(i, j)
            if isinstance(e, Measured):
                valor = rng.normal(e.value, e.sigma, n) if e.sigma > 0 else np.full(n, e.value)
            else:
                tope = np.sqrt(np.clip(rhos[:, i, i].real, 0, None) * np.clip(rhos[:, j, j].real, 0, None))
                if isinstance(e, Bounded):
                    tope = np.minimum(tope, e.upper)
                valor = rng.uniform(0.0, 1.0, n) * tope * np.exp(1j * rng.uniform(0.0, 2 * np.pi, n))
            rhos[:, i, j] = valor
            rhos[:, j, i] = np.conj(valor)
    return rhos


def sample_concurrence(
    pdm: PartialDensityMatrix,
    n_samples: int,
    rng_seed: int,
    batch_size: int = 50_000,
    max_attempts: int = 10_000_000,
    show_progress: bool = False,
) -> ConcurrenceEstimate:
    """
    Muestreo con rechazo de matrices compatibles con pdm.

    Cada lote usa su propio flujo de SeedSequence(rng_seed).spawn, así que el
    resultado solo depende de la semilla y del tamaño de lote.
    """
    if n_samples < 1:
        raise ValidationError('n_samples', "debe ser >= 1")

    raiz = np.random.SeedSequence(rng_seed)
    aceptadas: List[np.ndarray] = []
    trazas: List[np.ndarray] = []
    n_ok = 0
    intentos = 0

    with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"), BarColumn(),
                  console=console, transient=True, disable=not show_progress) as progress:
        tarea = progress.add_task("Muestreando matrices...", total=n_samples)
        while n_ok < n_samples:
            rng = np.random.default_rng(raiz.spawn(1)[0])
            rhos = _muestrear_lote(pdm, batch_size, rng)
            intentos += batch_size
            ok = np.linalg.eigvalsh(rhos).min(axis=-1) >= TOL_PSD
            if np.any(ok):
                validas = rhos[ok]
                aceptadas.append(_concurrencia_lote(validas))
                trazas.append(np.trace(validas, axis1=1, axis2=2).real)
                n_ok += int(np.sum(ok))
                progress.update(tarea, completed=min(n_ok, n_samples))
            if intentos >= max_attempts and n_ok / intentos < 1e-4:
                raise NumericalError(
                    f"tasa de aceptación {n_ok / intentos:.2e} tras {intentos} intentos: "
                    f"revisa las cotas y las sigmas de la matriz parcial"
                )

    c = np.concatenate(aceptadas)[:n_samples]
    tr = np.concatenate(trazas)[:n_samples]
    c_norm = np.where(tr > 0, c / np.where(tr > 0, tr, 1.0), 0.0)
    hist, _ = np.histogram(np.clip(c, 0.0, 1.0), bins=HIST_BINS, range=(0.0, 1.0))

    return ConcurrenceEstimate(
        mean=float(np.mean(c)),
        std=float(np.std(c)),
        histogram=tuple(int(h) for h in hist),
        n_accepted=n_samples,
        n_rejected=intentos - n_ok,
        mean_renormalized=float(np.mean(c_norm)),
        std_renormalized=float(np.std(c_norm)),
        seed=rng_seed,
    )

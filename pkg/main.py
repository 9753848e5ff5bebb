#!/usr/bin/env python3
"""
Simulador de entrelazamiento en número de fotones - Interfaz de línea de comandos

Subcomandos: sequence, correlate, estimate, timetags. Cada ejecución crea
<out>/<timestamp>-<seed>/ con manifest.json y los ficheros generados.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd
from rich.console import Console
from rich.table import Table
from rich.panel import Panel
from rich import box

# Añadir el directorio src al path
sys.path.insert(0, str(Path(__file__).parent))

from config import get_config
from src.errors import SimulationError, ValidationError
from src.models import AtomParams, PulseSequence, SimulationOptions, TimeGrid, parse_config, dump_config
from src.mps import build_state, golden_schedule
from src.dynamics import two_pulse
from src.correlations import write_map_binary
from src.timetags import (
    DetectionConfig, EmissionModel, generate_events, histogram_g2, histogram_g3,
    phase_resolved_hom, write_events, HBT3, MZI,
)
from src.reports import RunManifest, SequenceAnalyzer, build_estimator_report, guardar_json

console = Console()

T1_POR_DEFECTO = 136.0


def mostrar_cabecera(comando: str):
    """Muestra la cabecera de la ejecución"""
    console.print(Panel.fit(
        f"[bold blue]⚛ SIMULADOR DE ENTRELAZAMIENTO EN NÚMERO DE FOTONES[/bold blue]\n"
        f"[dim]comando: {comando}[/dim]",
        border_style="blue",
        padding=(1, 4)
    ))


# ========================
# CONFIGURACIÓN
# ========================

def cargar_configuracion(args: argparse.Namespace):
    """
    Lee --config (si lo hay) y aplica las sobrescrituras de la línea de
    comandos. Devuelve (atom, seq, opciones, documento canónico).
    """
    if getattr(args, 'config', None):
        texto = Path(args.config).read_text(encoding='utf-8')
        doc = json.loads(dump_config(*parse_config(texto)))
    else:
        doc = {'T1': T1_POR_DEFECTO}

    if args.T1 is not None:
        doc['T1'] = args.T1
    if args.tp is not None:
        doc['tp'] = args.tp
        doc.pop('rabi', None)
    if args.gamma_star is not None:
        doc['gamma_star'] = args.gamma_star
    if args.jitter is not None:
        doc['jitter_fwhm'] = args.jitter
    if args.seed is not None:
        doc['seed'] = args.seed
    if args.dt is not None:
        doc['dt'] = [float(x) for x in args.dt.split(',') if x.strip()]
        if args.N is None:
            doc['N'] = len(doc['dt']) + 1
    if args.N is not None:
        doc['N'] = args.N
        if args.N <= 1 and args.dt is None:
            doc['dt'] = []
        elif args.dt is None and len(doc.get('dt', [])) != args.N - 1 and not getattr(args, 'golden', False):
            raise ValidationError('dt', f"--N {args.N} necesita {args.N - 1} separaciones (--dt o --golden)")

    if getattr(args, 'golden', False):
        n = doc.get('N', 2)
        doc['N'] = n
        doc['dt'] = list(golden_schedule(n, doc['T1']).separations)

    if doc.get('seed') is None:
        doc['seed'] = get_config().SEED

    atom, seq, opciones = parse_config(json.dumps(doc))
    return atom, seq, opciones, json.loads(dump_config(atom, seq, opciones))


# ========================
# COMANDOS
# ========================

def cmd_sequence(args: argparse.Namespace) -> int:
    atom, seq, opciones, doc = cargar_configuracion(args)
    mostrar_cabecera('sequence')

    estado = build_state(atom, seq)
    salida = RunManifest.run_dir(args.out or get_config().OUTPUT_DIR, opciones.seed)
    manifest = RunManifest(command='sequence', config=doc, seed=opciones.seed)

    ruta_estado = salida / 'state.json'
    estado.guardar(str(ruta_estado))
    manifest.registrar(ruta_estado)

    table = Table(title="📌 Amplitudes", box=box.ROUNDED, show_header=True, header_style="bold cyan")
    table.add_column("Bits", style="white")
    table.add_column("Amplitud", justify="right")
    table.add_column("Probabilidad", justify="right", style="bold")

    filas = sorted(estado.amplitudes.items())
    tabla = pd.DataFrame({
        'bits': [bits for bits, _ in filas],
        'amplitude': [amp.real for _, amp in filas],
        'probability': [abs(amp) ** 2 for _, amp in filas],
    })
    ruta_tabla = salida / 'amplitudes.csv'
    tabla.to_csv(ruta_tabla, index=False, float_format='%.17g')
    manifest.registrar(ruta_tabla)
    for fila in tabla.itertuples(index=False):
        table.add_row(fila.bits or "∅", f"{fila.amplitude:.6f}", f"{fila.probability:.6f}")

    console.print(table)
    console.print(f"[dim]N={seq.n_pulses} | términos: {estado.n_terms} | norma: {estado.norm:.12f}[/dim]")
    manifest.guardar(salida)
    console.print(f"[green]✓ Resultados en {salida}[/green]")
    return 0


def cmd_correlate(args: argparse.Namespace) -> int:
    atom, seq, opciones, doc = cargar_configuracion(args)
    mostrar_cabecera('correlate')

    analyzer = SequenceAnalyzer(atom, seq, opciones)
    salida = RunManifest.run_dir(args.out or get_config().OUTPUT_DIR, opciones.seed)
    manifest = RunManifest(command='correlate', config=doc, seed=opciones.seed)

    probabilidades = analyzer.resumen_probabilidades()
    ruta = salida / 'probabilities.json'
    guardar_json(probabilidades, ruta)
    manifest.registrar(ruta)

    for kind, cmap in analyzer.mapas.items():
        ruta_csv = salida / f'map_{kind}.csv'
        cmap.guardar_csv(str(ruta_csv))
        manifest.registrar(ruta_csv)
        ruta_bin = salida / f'map_{kind}.bin'
        write_map_binary(cmap, str(ruta_bin))
        manifest.registrar(ruta_bin)

    ruta = salida / 'sweep.csv'
    analyzer.tabla_barrido(args.sweep_points).to_csv(ruta, index=False)
    manifest.registrar(ruta)

    resumen = analyzer.resumen_cuadrantes()
    ruta = salida / 'quadrants.json'
    guardar_json(resumen.to_dict(), ruta)
    manifest.registrar(ruta)

    ruta = salida / 'hom.csv'
    analyzer.curva_hom().to_csv(ruta, index=False)
    manifest.registrar(ruta)

    table = Table(title=f"📊 Cuadrantes (T = {resumen.threshold:.2f} ps)", box=box.ROUNDED,
                  show_header=True, header_style="bold cyan")
    table.add_column("Cuadrante")
    table.add_column("g2", justify="right")
    table.add_column("M", justify="right")
    table.add_column("c2", justify="right")
    fmt = lambda v: "—" if v is None else f"{v:.4f}"
    for q in ('ee', 'el', 'll'):
        table.add_row(q, fmt(resumen.g2_ab[q]), fmt(resumen.M_ab[q]), fmt(resumen.c2_ab[q]))
    table.add_row("[bold]total[/bold]", fmt(resumen.g2), fmt(resumen.M), fmt(resumen.c2))
    console.print(table)
    console.print(
        f"[dim]p0={probabilidades['p0']:.4f} | p1={probabilidades['p1']:.4f} | "
        f"p2={probabilidades['p2']:.4f} | μ̄_e={resumen.mu_bar_e:.4f} | μ̄_l={resumen.mu_bar_l:.4f}[/dim]"
    )

    manifest.guardar(salida)
    console.print(f"[green]✓ Resultados en {salida}[/green]")
    return 0


def _cargar_entradas(ruta: str) -> dict:
    """Lee el JSON de entradas de los estimadores"""
    try:
        with open(ruta, 'r', encoding='utf-8') as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise ValidationError('inputs', f"no existe el fichero {ruta}")
    except json.JSONDecodeError as e:
        raise ValidationError('inputs', f"JSON inválido en {ruta}: {e.msg} (línea {e.lineno})")
    if not isinstance(doc, dict):
        raise ValidationError('inputs', "se esperaba un objeto JSON")
    return doc


def cmd_estimate(args: argparse.Namespace) -> int:
    config = get_config()
    mostrar_cabecera('estimate')
    doc = _cargar_entradas(args.inputs)
    seed = args.seed if args.seed is not None else doc.get('seed', config.SEED)
    muestras = args.samples or doc.get('n_samples', config.CONCURRENCE_SAMPLES)

    informe = build_estimator_report(doc, muestras, seed, batch_size=config.BATCH_SIZE,
                                     show_progress=config.SHOW_PROGRESS)

    salida = RunManifest.run_dir(args.out or config.OUTPUT_DIR, seed)
    manifest = RunManifest(command='estimate', config=doc, seed=seed)
    ruta = salida / 'report.json'
    guardar_json(informe, ruta)
    manifest.registrar(ruta)

    p = informe['probabilities']
    fid = informe['fidelity']
    conc = informe['concurrence']
    texto = (
        f"[bold]Caso:[/bold] {informe['case']}\n"
        f"[bold]p0..p3:[/bold] {p['p0']:.4f}  {p['p1']:.4f}  {p['p2']:.4f}  {p['p3']:.4f}\n"
        f"[bold]Fidelidad:[/bold] {fid['value']:.4f}  [dim]rango [{fid['low']:.4f}, {fid['high']:.4f}][/dim]\n"
        f"[bold]Concurrencia:[/bold] {conc['mean']:.4f} ± {conc['std']:.4f}  "
        f"[dim](aceptación {conc['acceptance']:.2%})[/dim]"
    )
    if fid.get('bound') is not None:
        texto += f"\n[bold]Cota p1·√M_s:[/bold] {fid['bound']:.4f}"
    console.print(Panel(texto, title="[bold]📋 Estimadores[/bold]", border_style="blue", padding=(1, 2)))

    manifest.guardar(salida)
    console.print(f"[green]✓ Resultados en {salida}[/green]")
    return 0


def _modelo_emision(args: argparse.Namespace, atom: AtomParams, seq: PulseSequence,
                    opciones: SimulationOptions) -> EmissionModel:
    grid = TimeGrid.covering(10 * atom.T1 + sum(seq.separations) + seq.pulse_width, opciones.grid_step)
    if args.source == 'single':
        return EmissionModel.single_photon(atom, grid)
    if args.source == 'coherent':
        return EmissionModel.coherent(args.mean, atom, grid)
    if args.source == 'two_pulse':
        dt = seq.separations[0] if seq.separations else atom.half_life
        return EmissionModel.from_two_pulse(two_pulse(atom, seq.rabi, seq.pulse_width, dt, grid))
    return EmissionModel.ideal_phi_plus(atom, grid)


def cmd_timetags(args: argparse.Namespace) -> int:
    atom, seq, opciones, doc = cargar_configuracion(args)
    mostrar_cabecera('timetags')

    modelo = _modelo_emision(args, atom, seq, opciones)
    eficiencia = tuple(float(x) for x in args.efficiency.split(','))
    cfg = DetectionConfig(
        efficiency=eficiencia, jitter_fwhm=opciones.jitter_fwhm, n_pulses=args.pulses,
        seed=opciones.seed, background_rate=opciones.background_rate,
    )
    stream = generate_events(modelo, args.topology, cfg)

    salida = RunManifest.run_dir(args.out or get_config().OUTPUT_DIR, opciones.seed)
    manifest = RunManifest(command='timetags', config={**doc, 'detection': cfg.to_dict(),
                                                        'topology': args.topology, 'source': args.source},
                           seed=opciones.seed)
    ruta = salida / 'events.ttag'
    write_events(stream, str(ruta))
    manifest.registrar(ruta)

    g2 = histogram_g2(stream, cfg)
    ruta = salida / 'g2.csv'
    g2.to_frame().to_csv(ruta, index=False)
    manifest.registrar(ruta)
    ruta = salida / 'g2_fine.csv'
    g2.fine_frame().to_csv(ruta, index=False)
    manifest.registrar(ruta)

    momentos = modelo.moments()
    resumen = {'n_events': len(stream), 'g2_zero': g2.g2_zero, 'g2_sigma': g2.sigma,
               'model_g2': momentos['g2'], 'model_g3': momentos['g3']}
    if args.topology == HBT3:
        g3 = histogram_g3(stream, cfg)
        ruta = salida / 'g3.csv'
        g3.to_frame().to_csv(ruta, index=False)
        manifest.registrar(ruta)
        resumen.update(g3_zero=g3.g3_zero, g3_sigma=g3.sigma)
    else:
        ruta = salida / 'hom_phase.csv'
        phase_resolved_hom(stream, cfg).to_csv(ruta, index=False)
        manifest.registrar(ruta)

    ruta = salida / 'summary.json'
    guardar_json(resumen, ruta)
    manifest.registrar(ruta)

    console.print(Panel(
        f"[bold]Eventos:[/bold] {len(stream):,}\n"
        f"[bold]g2(0):[/bold] {g2.g2_zero:.4f} ± {g2.sigma:.4f}  [dim](modelo {momentos['g2']:.4f})[/dim]"
        + (f"\n[bold]g3(0):[/bold] {resumen['g3_zero']:.4f} ± {resumen['g3_sigma']:.4f}  "
           f"[dim](modelo {momentos['g3']:.4f})[/dim]" if 'g3_zero' in resumen else ""),
        title=f"[bold]⏱ Etiquetas de tiempo ({args.topology})[/bold]",
        border_style="blue", padding=(1, 2)
    ))
    manifest.guardar(salida)
    console.print(f"[green]✓ Resultados en {salida}[/green]")
    return 0


# ========================
# ARGUMENTOS
# ========================

def _argumentos_comunes(p: argparse.ArgumentParser):
    p.add_argument('--config', help="documento de simulación (JSON, mapa o clave: valor)")
    p.add_argument('--N', type=int, help="número de pulsos")
    p.add_argument('--dt', help="separaciones Δt_2..Δt_N separadas por comas (ps)")
    p.add_argument('--tp', type=float, help="anchura del pulso (ps)")
    p.add_argument('--T1', type=float, help="tiempo de vida (ps)")
    p.add_argument('--gamma-star', dest='gamma_star', type=float, help="desfase puro (1/ps)")
    p.add_argument('--jitter', type=float, help="FWHM del jitter del detector (ps)")
    p.add_argument('--seed', type=int, help="semilla")
    p.add_argument('--out', help="directorio raíz de resultados")


def crear_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='photon-entanglement',
        description="Simulador de entrelazamiento en número de fotones emitidos por un átomo de dos niveles",
    )
    sub = parser.add_subparsers(dest='comando', required=True)

    p = sub.add_parser('sequence', help="estado ideal de N pulsos")
    _argumentos_comunes(p)
    p.add_argument('--golden', action='store_true', help="usa el calendario dorado de separaciones")
    p.set_defaults(func=cmd_sequence)

    p = sub.add_parser('correlate', help="mapas de correlación y barrido del umbral")
    _argumentos_comunes(p)
    p.add_argument('--sweep-points', dest='sweep_points', type=int, default=41, help="umbrales del barrido")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser('estimate', help="estimadores a partir de medidas")
    p.add_argument('inputs', help="fichero JSON de entradas")
    p.add_argument('--samples', type=int, help="matrices aceptadas para la concurrencia")
    p.add_argument('--seed', type=int, help="semilla")
    p.add_argument('--out', help="directorio raíz de resultados")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser('timetags', help="Monte Carlo de etiquetas de tiempo")
    _argumentos_comunes(p)
    p.add_argument('--topology', choices=[HBT3, MZI], default=HBT3)
    p.add_argument('--source', choices=['phi_plus', 'single', 'two_pulse', 'coherent'], default='phi_plus')
    p.add_argument('--mean', type=float, default=1.0, help="número medio de la fuente coherente")
    p.add_argument('--pulses', type=int, default=100_000, help="número de pulsos")
    p.add_argument('--efficiency', default='1.0', help="eficiencia por detector (lista con comas)")
    p.set_defaults(func=cmd_timetags)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = crear_parser().parse_args(argv)
    try:
        return args.func(args)
    except SimulationError as e:
        console.print(f"[red]✗ {type(e).__name__}: {e}[/red]")
        return e.exit_code


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        console.print("\n[yellow]Saliendo...[/yellow]")
        sys.exit(0)

"""
Command-line surface of sandlab

Subcomandos simulate, exact, green, heights, enumerate e scaling. Cada um
resolve parâmetros (flags > arquivo --config > defaults JSON), executa o
cálculo e grava JSON versionado (e CSV quando há tabela) em --output.
"""

import argparse
import json
import logging
import math
import os
import sys
import time
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src import __version__
from src.Modules.config import resolve_settings, worker_count
from src.Modules.errors import InputError, SandlabError, SizeGuardError, ToleranceError
from src.Modules.Heights.determinants import (HeightModel, height_report, p0_determinantal,
                                              p0_full_lattice)
from src.Modules.Lattice.torus import DENSE_SITE_LIMIT, ModelParams, log_det_delta
from src.Modules.Propagators.green import (FINITE_FOURIER, INFINITE_BESSEL, INFINITE_TENSOR, METHODS,
                                           GreenTable, asymptotic_params, canonical_key,
                                           green_finite_table, green_infinite_many,
                                           green_tensor_quadrature, keys_within)
from src.Modules.Recurrence.burning import enumeration_report, recurrent_log_count
from src.Modules.Scaling.sweep import (SweepSpec, c00_decay_sweep, parse_a_grid,
                                       scaling_function_check, xi_sweep_and_fit)
from src.Modules.Simulation.montecarlo import (ChainConfig, default_pair_displacements, run_chain,
                                              simulation_report, translation_chi2)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
PROG = "sandlab"
# Keys that steer the run but are not model parameters
RUN_KEYS = ('config', 'output', 'log_level', 'progress', 'workers', 'command')

CommandResult = Tuple[Dict[str, Any], Optional[pd.DataFrame]]


class CLIParser(argparse.ArgumentParser):
    """argparse with usage errors raised as InputError (exit code 1)."""

    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


# ===============================================================================
# PARSER
# ===============================================================================

def _common_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("common")
    group.add_argument('--dim', type=int, default=None, help="lattice dimension d >= 2")
    group.add_argument('--L', type=int, default=None, help="torus half-width, period 2L+1")
    group.add_argument('--n', type=int, default=None, help="grains per neighbour per toppling")
    group.add_argument('--m', type=int, default=None, help="grains dissipated per toppling")
    group.add_argument('--seed', type=int, default=None)
    group.add_argument('--config', default=None, help="flat key = value file")
    group.add_argument('--output', default=None, help="output path; .json and .csv share its stem")
    group.add_argument('--log-level', default=None, choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    group.add_argument('--progress', action='store_true', default=None, help="show progress bars")
    group.add_argument('--workers', type=int, default=None, help="worker processes (capped by SANDLAB_THREADS)")


def build_parser() -> CLIParser:
    parser = CLIParser(prog=PROG, description="Dissipative abelian sandpile toolkit")
    parser.add_argument('--version', action='version', version=f"{PROG} {__version__}")
    sub = parser.add_subparsers(dest='command', parser_class=CLIParser)
    sub.required = True

    p = sub.add_parser('simulate', help="Monte Carlo sampling of the stationary state")
    _common_flags(p)
    p.add_argument('--samples', type=int, default=None)
    p.add_argument('--burn-in', type=int, default=None)
    p.add_argument('--thinning', type=int, default=None)
    p.add_argument('--replicas', type=int, default=None)
    p.add_argument('--batches', type=int, default=None)
    p.add_argument('--pair-max-diagonal', type=int, default=None)
    p.add_argument('--check-every', type=int, default=None)
    p.add_argument('--timeseries', action='store_true', default=None)

    p = sub.add_parser('exact', help="finite-torus exact quantities")
    _common_flags(p)
    p.add_argument('--layout', choices=['symmetric', 'as_printed'], default=None)

    p = sub.add_parser('green', help="avalanche propagator table")
    _common_flags(p)
    p.add_argument('--a', type=float, default=None, help="dissipation rate (infinite volume)")
    p.add_argument('--radius', type=int, default=None)
    p.add_argument('--method', choices=list(METHODS), default=None)
    p.add_argument('--tol', type=float, default=None)

    p = sub.add_parser('heights', help="P0, P00 and C00 on the infinite lattice")
    _common_flags(p)
    p.add_argument('--a', type=float, default=None)
    p.add_argument('--r-max', type=int, default=None)
    p.add_argument('--tol', type=float, default=None)
    p.add_argument('--layout', choices=['symmetric', 'as_printed'], default=None)

    p = sub.add_parser('enumerate', help="brute-force allowed-configuration count")
    _common_flags(p)
    p.add_argument('--chunk', type=int, default=None)
    p.add_argument('--size-guard', type=int, default=None)

    p = sub.add_parser('scaling', help="correlation-length exponent and scaling functions")
    _common_flags(p)
    p.add_argument('--a-grid', default=None, help="start:stop:log|lin or a comma list")
    p.add_argument('--points', type=int, default=None)
    p.add_argument('--fit-window', default=None, help="a_min:a_max")
    p.add_argument('--kappa', default=None, help="comma list of kappa values for the scaling check")
    p.add_argument('--check-a', default=None, help="comma list of a values for the scaling check")
    p.add_argument('--from-c00', action='store_true', default=None)
    p.add_argument('--tol', type=float, default=None)
    return parser


# ===============================================================================
# COMMANDS
# ===============================================================================

def _params(s: Dict[str, Any]) -> ModelParams:
    return ModelParams(d=int(s['dim']), L=int(s['L']), n=int(s['n']), m=int(s['m']))


def _float_list(text) -> List[float]:
    if text is None:
        return []
    if isinstance(text, (int, float)):
        return [float(text)]
    try:
        return [float(v) for v in str(text).split(',') if v.strip()]
    except ValueError as e:
        raise InputError(f"expected a comma list of numbers, got {text!r}") from e


def run_simulate(s: Dict[str, Any]) -> CommandResult:
    p = _params(s)
    cfg = ChainConfig(
        params=p, seed=int(s['seed']), samples=int(s['samples']),
        burn_in=None if s.get('burn_in') is None else int(s['burn_in']),
        thinning=int(s['thinning']), replicas=int(s['replicas']), batches=int(s['batches']),
        pair_displacements=tuple(default_pair_displacements(p, int(s['pair_max_diagonal']))),
        check_every=int(s['check_every']), timeseries=bool(s.get('timeseries')),
    )
    merged, streams = run_chain(cfg, workers=s.get('workers'), progress=bool(s.get('progress')))

    exact = {'mean_topplings': 1.0 / p.m}
    table = green_finite_table(p)
    exact['mean_waves'] = table.value((0,) * p.d)
    exact['P0'] = p0_determinantal(table, HeightModel.from_params(p))
    report = simulation_report(merged, exact)
    report['exact'] = exact
    try:
        chi2, dof = translation_chi2(merged)
        report['translation_chi2'] = {'stat': chi2, 'dof': dof}
    except InputError as e:
        logger.warning("Translation check skipped: %s", e)

    if cfg.timeseries:
        frame = pd.concat([st.timeseries.assign(replica=st.replica) for st in streams], ignore_index=True)
    else:
        frame = pd.DataFrame(report['P_alpha'])
    return report, frame


def run_exact(s: Dict[str, Any]) -> CommandResult:
    p = _params(s)
    layout = s.get('layout', 'symmetric')
    model = HeightModel.from_params(p)
    table = green_finite_table(p)
    result = {
        'G00': table.value((0,) * p.d),
        'log_det_delta': log_det_delta(p),
        'log_recurrent_count': recurrent_log_count(p),
        'P0_det': {lay: p0_determinantal(table, model, lay) for lay in ('symmetric', 'as_printed')},
        'layout': layout,
    }
    if p.sites <= DENSE_SITE_LIMIT:
        try:
            result['P0_full_lattice'] = p0_full_lattice(p, layout)
        except SizeGuardError as e:
            logger.warning("full-lattice determinant skipped: %s", e)
    return result, table.to_frame()


def _box_frame(table: GreenTable, radius: int) -> pd.DataFrame:
    """Expand canonical entries to every x in the box [-radius, radius]^d."""
    d = table.d
    axes = np.arange(-radius, radius + 1)
    grid = np.stack(np.meshgrid(*([axes] * d), indexing='ij'), axis=-1).reshape(-1, d)
    rows = []
    for x in grid:
        key = canonical_key(x)
        row = {f'x{i + 1}': int(c) for i, c in enumerate(x)}
        row.update(value=table.value(x), est_abs_error=table.errors.get(key, 0.0), method=table.method)
        rows.append(row)
    return pd.DataFrame(rows)


def run_green(s: Dict[str, Any]) -> CommandResult:
    d, n = int(s['dim']), int(s['n'])
    radius = int(s['radius'])
    method = s['method']
    if radius < 0:
        raise InputError("radius must be non-negative")

    if method == FINITE_FOURIER:
        p = _params(s)
        radius = min(radius, p.L)
        table = green_finite_table(p)
        a = float(p.a)
    else:
        a = float(s['a'])
        keys = keys_within(d, radius)
        if method == INFINITE_BESSEL:
            table = green_infinite_many(d, a, n, keys, tol=float(s['tol']), workers=worker_count(s.get('workers')))
        elif method == INFINITE_TENSOR:
            entries, errors = {}, {}
            for key in keys:
                entries[key], errors[key] = green_tensor_quadrature(d, a, n, key)
            table = GreenTable(entries, errors, INFINITE_TENSOR, d, a, n)
        else:
            raise InputError(f"unknown method {method!r}")

    result = {'method': method, 'a': a, 'radius': radius,
              'G0': table.value((0,) * d), 'max_est_abs_error': max(table.errors.values(), default=0.0)}
    if method != FINITE_FOURIER:
        result['asymptotic'] = asymptotic_params(d, a).as_dict()
    return result, _box_frame(table, radius)


def run_heights(s: Dict[str, Any]) -> CommandResult:
    report = height_report(int(s['dim']), float(s['a']), int(s['n']), r_max=int(s['r_max']),
                           tol=float(s['tol']), layout=s['layout'], workers=worker_count(s.get('workers')))
    summary = report.summary()
    summary['unreliable_points'] = int(sum(not pr.reliable for pr in report.pairs))
    return summary, report.pairs_frame()


def run_enumerate(s: Dict[str, Any]) -> CommandResult:
    p = _params(s)
    report = enumeration_report(p, chunk=int(s['chunk']), size_guard=int(s['size_guard']),
                                workers=worker_count(s.get('workers') or 1), progress=bool(s.get('progress')))
    report.pop('params', None)
    report['matches_determinant'] = report['allowed_count'] == report['expected_count']
    return report, None


def _fit_window(text) -> Optional[Tuple[float, float]]:
    if text in (None, ''):
        return None
    values = _float_list(str(text).replace(':', ','))
    if len(values) != 2:
        raise InputError(f"fit window must be a_min:a_max, got {text!r}")
    return values[0], values[1]


def run_scaling(s: Dict[str, Any]) -> CommandResult:
    d = int(s['dim'])
    workers = worker_count(s.get('workers'))
    spec = SweepSpec(d, parse_a_grid(s['a_grid'], int(s['points'])), fit_window=_fit_window(s.get('fit_window')))
    fit = xi_sweep_and_fit(spec, workers=workers)
    result = fit.as_dict()
    frame = fit.to_frame()

    kappas = _float_list(s.get('kappa'))
    if kappas:
        check = scaling_function_check(d, kappas, _float_list(s.get('check_a')) or (1e-2, 1e-3, 1e-4),
                                       n=int(s['n']), tol=float(s['tol']), workers=workers)
        result['scaling_check'] = check.to_dict(orient='records')
    if s.get('from_c00'):
        result['c00_decay'] = c00_decay_sweep(spec, n=int(s['n']), tol=float(s['tol']),
                                              workers=workers).to_dict(orient='records')
    return result, frame


COMMANDS: Dict[str, Callable[[Dict[str, Any]], CommandResult]] = {
    'simulate': run_simulate,
    'exact': run_exact,
    'green': run_green,
    'heights': run_heights,
    'enumerate': run_enumerate,
    'scaling': run_scaling,
}


# ===============================================================================
# OUTPUT
# ===============================================================================

def to_jsonable(value: Any) -> Any:
    """numpy scalars to Python, NaN to null, tuple keys to strings."""
    if isinstance(value, dict):
        return {str(k) if not isinstance(k, str) else k: to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return None if math.isnan(value) else value
    return value


def build_payload(command: str, settings: Dict[str, Any], result: Dict[str, Any],
                  timestamps: Dict[str, Any]) -> Dict[str, Any]:
    params = {k: v for k, v in settings.items() if k not in RUN_KEYS}
    return to_jsonable({
        'schema': SCHEMA_VERSION,
        'version': __version__,
        'command': command,
        'params': params,
        'seed': settings.get('seed'),
        'timestamps': timestamps,
        'result': result,
    })


def dump_json(payload: Dict[str, Any]) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)


def write_outputs(payload: Dict[str, Any], frame: Optional[pd.DataFrame], output: Optional[str]) -> List[str]:
    """JSON to <stem>.json and the table to <stem>.csv; stdout when no --output."""
    if not output:
        sys.stdout.write(dump_json(payload) + "\n")
        return []
    stem = os.path.splitext(output)[0]
    parent = os.path.dirname(stem)
    if parent:
        os.makedirs(parent, exist_ok=True)
    written = []
    with open(stem + '.json', 'w', encoding='utf-8') as f:
        f.write(dump_json(payload) + "\n")
    written.append(stem + '.json')
    if frame is not None:
        frame.to_csv(stem + '.csv', index=False, float_format='%.17g', encoding='utf-8')
        written.append(stem + '.csv')
    return written


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


# ===============================================================================
# MAIN
# ===============================================================================

def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns 0 on success, 1 on input errors, 2 on tolerance failures."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cli_values = {k: v for k, v in vars(args).items() if k != 'command'}
        settings = resolve_settings(args.command, cli_values, config_path=args.config)
        logging.basicConfig(level=getattr(logging, str(settings.get('log_level') or 'WARNING').upper(), logging.WARNING),
                            format='%(asctime)s %(name)s %(levelname)s: %(message)s', stream=sys.stderr)

        started, clock = _now(), time.perf_counter()
        result, frame = COMMANDS[args.command](settings)
        elapsed = result.pop('elapsed_s', None) or (time.perf_counter() - clock)
        timestamps = {'started': started, 'finished': _now(), 'elapsed_s': elapsed}
        payload = build_payload(args.command, settings, result, timestamps)
        written = write_outputs(payload, frame, settings.get('output'))
    except SystemExit as e:
        return int(e.code or 0)
    except ToleranceError as e:
        print(f"✗ {PROG}: numerical tolerance not reached: {e}", file=sys.stderr)
        return 2
    except InputError as e:
        print(f"✗ {PROG}: {e}", file=sys.stderr)
        return 1
    except SandlabError as e:
        print(f"✗ {PROG}: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        # settings from a config file reach int()/float() unchecked
        print(f"✗ {PROG}: invalid value: {e}", file=sys.stderr)
        return 1

    for path in written:
        print(f"✓ {args.command}: wrote {path}", file=sys.stderr)
    return 0

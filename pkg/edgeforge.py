"""
EdgeForge - One-Side Edge Sampling for GNN edge classification
Command line entry point
"""

import argparse
import json
import os
import sys
import traceback

from utils.colors import (
    Colors,
    format_error,
    format_key_value,
    format_section_header,
    format_status,
    format_table_row,
    log_debug,
    log_error,
    log_info,
    log_success,
)
from utils.config import Config, load_config_file
from utils.errors import EdgeForgeError, explain

from core.data_pipeline import dataset_stats, parse_transactions, prepare_bundle, save_bundle, synthesize_dataset
from core.experiment import BASELINE, OES, SWEEP_AXES, diagnose_depths, run_config_from_mapping, run_experiment, sweep
from core.reporting import emit_diagnostics, emit_report, load_reports, merge_reports


# ==================== RUN CONFIG ====================

def build_run_config(args):
    """--config file first, then command line overrides"""
    mapping = load_config_file(args.config) if getattr(args, 'config', None) else {}
    overrides = {
        'seeds': args.seed,
        'oes': args.oes,
        'compare_oes': True if args.compare else None,
        'dataset': args.dataset,
        'kind': args.kind,
        'depth': args.depth,
        'epochs_total': args.epochs,
        'hidden': args.hidden,
        'workers': args.workers,
    }
    mapping.update({k: v for k, v in overrides.items() if v is not None})
    if args.no_db:
        mapping['metrics_db'] = None
    else:
        mapping.setdefault('metrics_db', Config.DATABASE_PATH)
    return run_config_from_mapping(mapping)


def _out_dir(args, name):
    return args.out or os.path.join(Config.OUTPUT_DIR, name)


def print_summary(reports):
    """Mean test F1 per variant; OES is flagged when it trails the baseline"""
    widths = [14, 10, 7, 20]
    print(format_section_header("RESULTS"))
    print(format_table_row(['point', 'variant', 'seeds', 'F1 mean ± std'], widths))
    for report in reports:
        point = f"{report.axis}={report.value}" if report.axis else '-'
        aggregate = report.aggregate()
        for variant, entry in aggregate.items():
            f1 = entry['f1']
            row = format_table_row([point, variant, entry['seeds'], f"{f1['mean']:.4f} ± {f1['std']:.4f}"], widths)
            if variant == OES and BASELINE in aggregate:
                behind = f1['mean'] < aggregate[BASELINE]['f1']['mean'] - 0.01
                row = format_status('warn' if behind else 'ok', row)
            print(row)


# ==================== COMMANDS ====================

def cmd_synth(args):
    data = synthesize_dataset(
        args.seed, n_accounts=args.accounts, n_transactions=args.transactions,
        illicit_ratio=args.illicit_ratio, cycle_length=args.cycle_length,
    )
    path = args.out or os.path.join(Config.OUTPUT_DIR, f"synthetic_seed{args.seed}.csv")
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(data)
    stats = dataset_stats(parse_transactions(data))
    print(format_section_header("SYNTHETIC DATASET"))
    for key, value in stats.items():
        print(format_key_value(key, value))
    log_success(f"Wrote {path}")


def cmd_ingest(args):
    bundle = prepare_bundle(args.input)
    out = _out_dir(args, 'bundle')
    save_bundle(bundle, out)
    train, valid, test = bundle.window_sizes
    log_success(f"Bundle at {out}: train {train}, valid window {valid}, test window {test}")


def cmd_train(args):
    config = build_run_config(args)
    report = run_experiment(config)
    emit_report([report], _out_dir(args, 'train'), charts=not args.no_charts)
    print_summary([report])


def cmd_sweep(args):
    config = build_run_config(args)
    reports = sweep(config, args.axis, args.values)
    emit_report(reports, _out_dir(args, f"sweep_{args.axis}"), charts=not args.no_charts)
    print_summary(reports)


def cmd_diagnose(args):
    config = build_run_config(args)
    rows = diagnose_depths(config, args.depths, args.at_epochs, args.epsilon)
    emit_diagnostics(rows, _out_dir(args, 'diagnose'))


def cmd_report(args):
    reports = merge_reports(load_reports(path) for path in args.inputs)
    emit_report(reports, _out_dir(args, 'report'), charts=not args.no_charts)
    print_summary(reports)


# ==================== PARSER ====================

def _add_run_flags(parser):
    parser.add_argument('--config', help='key=value run configuration file')
    parser.add_argument('--seed', type=int, action='append', help='seed (repeatable)')
    parser.add_argument('--oes', action=argparse.BooleanOptionalAction, default=None,
                        help='enable or disable one-side edge sampling')
    parser.add_argument('--compare', action='store_true', help='run OES and baseline side by side')
    parser.add_argument('--dataset', help='CSV file or bundle directory (default: synthetic)')
    parser.add_argument('--kind', choices=['GIN', 'GIN_EGO', 'GIN_EU'])
    parser.add_argument('--depth', type=int)
    parser.add_argument('--epochs', type=int, help='total training epochs')
    parser.add_argument('--hidden', type=int)
    parser.add_argument('--workers', type=int)
    parser.add_argument('--no-db', action='store_true', help='skip the sqlite metrics log')
    parser.add_argument('--out', help='output directory')


def build_parser():
    parser = argparse.ArgumentParser(prog='edgeforge', description='One-side edge sampling for GNN edge classification')
    parser.add_argument('--version', action='version', version=f"%(prog)s {Config.VERSION}")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', help=Config.COMMANDS['synth'])
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--accounts', type=int, default=2000)
    p.add_argument('--transactions', type=int, default=20000)
    p.add_argument('--illicit-ratio', type=float, default=0.05)
    p.add_argument('--cycle-length', type=int)
    p.add_argument('--out', help='output CSV path')
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser('ingest', help=Config.COMMANDS['ingest'])
    p.add_argument('input', help='transaction CSV')
    p.add_argument('--out', help='bundle directory')
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser('train', help=Config.COMMANDS['train'])
    _add_run_flags(p)
    p.add_argument('--no-charts', action='store_true')
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser('sweep', help=Config.COMMANDS['sweep'])
    _add_run_flags(p)
    p.add_argument('--axis', choices=SWEEP_AXES, required=True)
    p.add_argument('--values', type=float, nargs='+', required=True)
    p.add_argument('--no-charts', action='store_true')
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser('diagnose', help=Config.COMMANDS['diagnose'])
    _add_run_flags(p)
    p.add_argument('--depths', type=int, nargs='+', default=[2, 4, 8, 16])
    p.add_argument('--at-epochs', type=int, nargs='+', default=[0])
    p.add_argument('--epsilon', type=float, default=1e-3)
    p.set_defaults(handler=cmd_diagnose)

    p = sub.add_parser('report', help=Config.COMMANDS['report'])
    p.add_argument('inputs', nargs='+', help='report.json files or directories')
    p.add_argument('--out', help='output directory')
    p.add_argument('--no-charts', action='store_true')
    p.set_defaults(handler=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == 'sweep' and args.axis in ('depth', 'epochs'):
        args.values = [int(v) for v in args.values]
    try:
        args.handler(args)
    except EdgeForgeError as e:
        log_error(format_error(f"{e.name}: {e.message}", e.code))
        for hint in explain(e.code)['solutions']:
            log_info(f"Hint: {hint}")
        print(json.dumps(e.to_json(), sort_keys=True))
        return 1
    except Exception as e:
        unknown = EdgeForgeError(f"{type(e).__name__}: {e}")
        log_error(f"{Colors.BOLD}Unexpected failure{Colors.RESET}{Colors.RED}: {unknown.message}")
        log_debug(traceback.format_exc())
        print(json.dumps(unknown.to_json(), sort_keys=True))
        return 2
    log_info(f"{args.command} finished")
    return 0


if __name__ == '__main__':
    sys.exit(main())

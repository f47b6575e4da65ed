"""
EdgeForge Configuration
Global settings, error codes and the key=value run-config reader
"""
import os
from pathlib import Path

# Load .env file
_env_path = Path(__file__).resolve().parent.parent / '.env'
if _env_path.exists():
    with open(_env_path) as _f:
        for _line in _f:
            _line = _line.strip()
            if _line and not _line.startswith('#') and '=' in _line:
                _key, _val = _line.split('=', 1)
                os.environ.setdefault(_key.strip(), _val.strip())


def _env_flag(name, default):
    value = os.environ.get(name)
    if value is None:
        return default
    return value.strip().lower() in ('1', 'true', 'yes', 'on')


class Config:
    """EdgeForge global settings"""

    VERSION = '1.0.0'

    # ==========================================
    # STORAGE
    # ==========================================

    # Metrics database (runs, epochs, oes samples)
    DATABASE_PATH = os.environ.get('EDGEFORGE_DB', 'data/edgeforge.db')

    # Default directory for reports and bundles
    OUTPUT_DIR = os.environ.get('EDGEFORGE_OUTPUT_DIR', 'results')

    # ==========================================
    # RUN DEFAULTS
    # ==========================================

    DEFAULT_SEEDS = (0, 1, 2, 3, 4)
    MIN_DEPTH = 2
    MAX_DEPTH = 16

    # Dense spectral routines are O(N^3)
    MAX_SPECTRAL_NODES = 2000

    # Console output
    DEBUG_MODE = _env_flag('EDGEFORGE_DEBUG', False)
    LOG_EPOCHS = _env_flag('EDGEFORGE_LOG_EPOCHS', True)

    # Error codes
    ERROR_CODES = {
        'INVALID_INPUT': '0xBAD1',
        'SHAPE_MISMATCH': '0x5HAP',
        'GRAPH_CONSTRUCTION': '0x6RAF',
        'NODE_INDEX': '0xN0DE',
        'UNKNOWN_EDGE': '0xED6E',
        'NON_FINITE': '0xNAN1',
        'EMPTY_INPUT': '0xE4E1',
        'SCHEMA_ERROR': '0x5C4E',
        'ROW_PARSE': '0xR0W1',
        'SPLIT_ERROR': '0x5P17',
        'INFEASIBLE_PATTERN': '0xPA77',
        'SIZE_GUARD': '0x512E',
        'CONFIG_ERROR': '0xC0NF',
        'REPORT_WRITE': '0xF11E',
        'DIAGNOSTICS_ERROR': '0xD1A6',
        'DATABASE_ERROR': '0xDB01',
        'UNKNOWN_ERROR': '0xDEAF'
    }

    # CLI subcommands
    COMMANDS = {
        'synth': 'Generate a synthetic transaction CSV',
        'ingest': 'Parse, split and encode a CSV into a dataset bundle',
        'train': 'Train one configuration over all seeds',
        'sweep': 'Vary one parameter (depth, percentile, ratio, epochs)',
        'diagnose': 'Spectral smoothing reports per depth',
        'report': 'Merge saved reports and re-emit artifacts'
    }


def load_config_file(path):
    """Read a key=value run configuration file into a dict of strings"""
    values = {}
    with open(path, encoding='utf-8') as f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            if '=' not in line:
                from utils.errors import ConfigError
                raise ConfigError(f"{path}:{number}: expected key=value, got '{line}'")
            key, val = line.split('=', 1)
            values[key.strip()] = val.strip()
    return values

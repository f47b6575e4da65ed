"""
EdgeForge Error Module
Exception hierarchy and error code explanations
"""

from utils.config import Config


# Error code explanations
ERROR_EXPLANATIONS = {
    '0xBAD1': {
        'name': 'Invalid Input',
        'description': 'An argument was outside its allowed range.',
        'solutions': [
            'Check the allowed range in config.example.cfg',
            'Percentiles are 0..100, ratios are 0..1'
        ]
    },
    '0x5HAP': {
        'name': 'Shape Mismatch',
        'description': 'Matrix dimensions do not agree.',
        'solutions': [
            'Feature matrices need N and |E| rows',
            'Check the encoder output width against the model input width'
        ]
    },
    '0x6RAF': {
        'name': 'Graph Construction Failed',
        'description': 'An edge references a node outside [0, N).',
        'solutions': [
            'Check node_count',
            'The message names the offending edge'
        ]
    },
    '0xN0DE': {
        'name': 'Node Index Out Of Range',
        'description': 'A node query used an index outside the graph.',
        'solutions': ['Use an index in [0, node_count)']
    },
    '0xED6E': {
        'name': 'Unknown Edge',
        'description': 'An edge id does not exist in the graph.',
        'solutions': [
            'Edge ids are dense in [0, |E|)',
            'Ids change after remove_edges; use the returned map'
        ]
    },
    '0xNAN1': {
        'name': 'Non-finite Value',
        'description': 'An operation produced NaN or Inf.',
        'solutions': [
            'Lower the learning rate',
            'Enable layer normalization in the model stack'
        ]
    },
    '0xE4E1': {
        'name': 'Empty Input',
        'description': 'An operation received an empty batch, mask or set.',
        'solutions': ['Check the split produced edges in every window']
    },
    '0x5C4E': {
        'name': 'Schema Error',
        'description': 'A required CSV column is missing.',
        'solutions': [
            'Check the header row',
            'Pass a schema mapping for non-default column names'
        ]
    },
    '0xR0W1': {
        'name': 'Row Parse Error',
        'description': 'A CSV row has a malformed timestamp, amount or label.',
        'solutions': ['The message names the 1-based data row']
    },
    '0x5P17': {
        'name': 'Split Error',
        'description': 'Too few records for a 60/20/20 temporal split.',
        'solutions': ['Provide at least 5 transactions']
    },
    '0xPA77': {
        'name': 'Infeasible Pattern',
        'description': 'The requested laundering patterns do not fit the account or transaction budget.',
        'solutions': [
            'Raise n_accounts or n_transactions',
            'Lower illicit_ratio'
        ]
    },
    '0x512E': {
        'name': 'Graph Too Large',
        'description': 'Dense spectral diagnostics are limited in size.',
        'solutions': [f'Use graphs with at most {Config.MAX_SPECTRAL_NODES} nodes']
    },
    '0xC0NF': {
        'name': 'Configuration Error',
        'description': 'A run configuration key or value is invalid.',
        'solutions': [
            'Compare with config.example.cfg',
            'Depth must be within 2..16'
        ]
    },
    '0xF11E': {
        'name': 'Report Write Failed',
        'description': 'An output file could not be written.',
        'solutions': ['Check that --out points to a writable directory']
    },
    '0xD1A6': {
        'name': 'Diagnostics Error',
        'description': 'A spectral diagnostic was called with invalid arguments.',
        'solutions': ['epsilon, d_M and s must be positive']
    },
    '0xDB01': {
        'name': 'Database Error',
        'description': 'The metrics database could not be opened or written.',
        'solutions': ['Check EDGEFORGE_DB in .env']
    },
    '0xDEAF': {
        'name': 'Unknown Error',
        'description': 'An unexpected error occurred.',
        'solutions': ['Run with EDGEFORGE_DEBUG=1 for a traceback']
    }
}


class EdgeForgeError(Exception):
    """Base error carrying a code from Config.ERROR_CODES"""

    code_key = 'UNKNOWN_ERROR'

    def __init__(self, message, code_key=None, **details):
        super().__init__(message)
        if code_key is not None:
            self.code_key = code_key
        self.message = message
        self.details = details

    @property
    def code(self):
        return Config.ERROR_CODES.get(self.code_key, Config.ERROR_CODES['UNKNOWN_ERROR'])

    @property
    def name(self):
        return ERROR_EXPLANATIONS.get(self.code, {}).get('name', self.code_key)

    def to_json(self):
        return {
            'error': {
                'code': self.code,
                'name': self.name,
                'message': self.message,
                'details': {k: _jsonable(v) for k, v in self.details.items()}
            }
        }

    def __str__(self):
        return self.message


def _jsonable(value):
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return str(value)


class InvalidInputError(EdgeForgeError, ValueError):
    code_key = 'INVALID_INPUT'


class ShapeError(EdgeForgeError, ValueError):
    code_key = 'SHAPE_MISMATCH'


class GraphConstructionError(EdgeForgeError, ValueError):
    code_key = 'GRAPH_CONSTRUCTION'


class NodeIndexError(EdgeForgeError, IndexError):
    code_key = 'NODE_INDEX'


class UnknownEdgeError(EdgeForgeError, KeyError):
    code_key = 'UNKNOWN_EDGE'

    def __str__(self):
        # KeyError would otherwise repr() the message
        return self.message


class NonFiniteError(EdgeForgeError, FloatingPointError):
    code_key = 'NON_FINITE'


class EmptyInputError(EdgeForgeError, ValueError):
    code_key = 'EMPTY_INPUT'


class SchemaError(EdgeForgeError, ValueError):
    code_key = 'SCHEMA_ERROR'


class RowParseError(EdgeForgeError, ValueError):
    code_key = 'ROW_PARSE'

    def __init__(self, message, row, **details):
        super().__init__(f"row {row}: {message}", row=row, **details)
        self.row = row


class SplitError(EdgeForgeError, ValueError):
    code_key = 'SPLIT_ERROR'


class InfeasiblePatternError(EdgeForgeError, ValueError):
    code_key = 'INFEASIBLE_PATTERN'


class SizeGuardError(EdgeForgeError, ValueError):
    code_key = 'SIZE_GUARD'


class ConfigError(EdgeForgeError, ValueError):
    code_key = 'CONFIG_ERROR'


class ReportWriteError(EdgeForgeError):
    code_key = 'REPORT_WRITE'


class DiagnosticsError(EdgeForgeError, ValueError):
    code_key = 'DIAGNOSTICS_ERROR'


class DatabaseError(EdgeForgeError):
    code_key = 'DATABASE_ERROR'


def explain(code):
    """Look up the explanation entry for an error code"""
    return ERROR_EXPLANATIONS.get(code, ERROR_EXPLANATIONS['0xDEAF'])

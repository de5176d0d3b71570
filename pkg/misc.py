from __future__ import annotations
import math
import os

import numpy as np

VERSION = '0.3.0'


class TraceFormatError(ValueError):
    '''
    Raised when a trace-csv file cannot be read.

    line -> 1-based number of the offending data row (the header is not counted). None for whole-file problems.
    '''
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class InsufficientDataError(ValueError):
    '''
    Raised when an estimator gets too little (or degenerate) data to produce a value.
    '''


def check_positive(name, value):
    '''
    Raise ValueError unless value is a finite number > 0
    '''
    if not (isinstance(value, (int, float, np.integer, np.floating)) and math.isfinite(value) and value > 0):
        raise ValueError(f'{name} must be positive, got {value!r}')


def check_open_unit(name, value):
    '''
    Raise ValueError unless 0 < value < 1
    '''
    if not (isinstance(value, (int, float, np.integer, np.floating)) and 0 < value < 1):
        raise ValueError(f'{name} must lie in (0, 1), got {value!r}')


def make_rng(seed):
    '''
    Seeded numpy Generator. All randomness in the package goes through this.
    '''
    return np.random.default_rng(seed)


def log_log_slope(x, y):
    '''
    Least-squares slope of log10(y) against log10(x).
    '''
    return float(np.polyfit(np.log10(x), np.log10(y), 1)[0])


def format_float(value):
    '''
    Shortest repr that reads back to the same float. None/NaN print as empty cells.
    '''
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ''
    return repr(float(value))


def write_sidecar(path, config):
    '''
    Write config as key=value lines to path. Keys are written in sorted order
    so two runs with the same config produce identical files.
    '''
    entries = dict(config)
    entries.setdefault('version', VERSION)
    with open(path, 'w', encoding='utf-8') as f:
        for key in sorted(entries):
            f.write(f'{key}={entries[key]}\n')


def read_sidecar(path):
    '''
    Inverse of write_sidecar. Values come back as strings.
    '''
    config = {}
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            line = line.rstrip('\n')
            if not line or line.startswith('#'):
                continue
            key, _, value = line.partition('=')
            config[key] = value
    return config


def remove_quietly(*paths):
    for path in paths:
        try:
            os.remove(path)
        except FileNotFoundError:
            pass

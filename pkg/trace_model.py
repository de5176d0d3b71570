from __future__ import annotations
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from tabulate import tabulate

from misc import TraceFormatError, InsufficientDataError, check_positive

logger = logging.getLogger(__name__)

CSV_HEADER = 'time_s,size_bytes'


@dataclass(frozen=True)
class PacketRecord:
    '''
    A single packet arrival.

    t -> arrival time in seconds (finite, >= 0)
    size -> length in bytes (>= 1)
    '''
    t: float
    size: int

    def __post_init__(self):
        if not math.isfinite(self.t) or self.t < 0:
            raise ValueError(f'Packet time must be finite and non-negative, got {self.t!r}')
        if self.size < 1:
            raise ValueError(f'Packet size must be at least 1 byte, got {self.size!r}')


@dataclass(frozen=True, eq=False)
class Trace:
    '''
    Trace object represents an ordered packet arrival process.

    A Trace is built from two parallel arrays:
        - times (seconds, float64, non-decreasing, finite, >= 0)
        - sizes (bytes, int64, >= 1)
    and a free-form label. Both arrays are copied and frozen, so a Trace can be
    shared read-only between replications.
    '''
    times: np.ndarray
    sizes: np.ndarray
    label: str = ''

    def __post_init__(self):
        times = np.array(self.times, dtype=np.float64)
        sizes = np.array(self.sizes, dtype=np.int64)
        if times.ndim != 1 or times.shape != sizes.shape:
            raise ValueError(f'times and sizes must be 1-d arrays of equal length, got {times.shape} and {sizes.shape}')
        if times.size:
            if not np.all(np.isfinite(times)) or times.min() < 0:
                raise ValueError('Packet times must be finite and non-negative.')
            if sizes.min() < 1:
                raise ValueError('Packet sizes must be at least 1 byte.')
            bad = np.flatnonzero(np.diff(times) < 0)
            if bad.size:
                i = int(bad[0])
                raise ValueError(f'Packet times must be non-decreasing (packet {i + 1} at {times[i + 1]!r} follows {times[i]!r}).')
        times.flags.writeable = False
        sizes.flags.writeable = False
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'sizes', sizes)

    @classmethod
    def from_records(cls, records, label=''):
        records = list(records)
        return cls([r.t for r in records], [r.size for r in records], label)

    def __len__(self):
        return int(self.times.size)

    def __getitem__(self, index):
        return PacketRecord(float(self.times[index]), int(self.sizes[index]))

    def __iter__(self):
        for t, size in zip(self.times.tolist(), self.sizes.tolist()):
            yield PacketRecord(t, size)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.sizes, other.sizes)

    @property
    def total_bytes(self):
        # python int, exact
        return int(self.sizes.sum(dtype=np.int64))

    @property
    def duration(self):
        if not len(self):
            return 0.0
        return float(self.times[-1] - self.times[0])

    def deltas(self):
        '''
        Inter-arrival gaps, first packet's gap defined as 0.
        '''
        return np.diff(self.times, prepend=self.times[:1]) if len(self) else np.empty(0)

    def rebase(self, label=None):
        '''
        Same packets, shifted so the first arrival is at t = 0.
        '''
        if not len(self):
            return self
        return Trace(self.times - self.times[0], self.sizes, self.label if label is None else label)

    def require_non_empty(self):
        if not len(self):
            raise ValueError(f'Trace "{self.label}" is empty.')

    def show(self, no_of_rows=None):
        '''
        Pretty print the trace
        '''
        print(f'\n## {self.label or "trace"} ({len(self)} packets) ##')
        rows = list(zip(self.times[:no_of_rows].tolist(), self.sizes[:no_of_rows].tolist()))
        print(tabulate(rows, headers=['time_s', 'size_bytes'], floatfmt='.9f') + '\n')


@dataclass(frozen=True)
class TraceSummary:
    '''
    n_packets -> count
    duration -> t_last - t_first (seconds)
    total_bytes -> exact sum of sizes
    mean_rate -> bytes/second; None when duration is 0 (single packet)
    '''
    n_packets: int
    duration: float
    total_bytes: int
    mean_rate: float | None = field(default=None)

    def show(self):
        rate = '(undefined)' if self.mean_rate is None else self.mean_rate
        print(tabulate([[self.n_packets, self.duration, self.total_bytes, rate]],
                       headers=['packets', 'duration_s', 'total_bytes', 'mean_rate_Bps']) + '\n')


def load_trace(path, label=None):
    '''
    Read a trace-csv file.

    path -> file with header `time_s,size_bytes` and one packet per row
    label -> trace label. Def: the path
    '''
    times = []
    sizes = []
    with open(path, 'r', encoding='utf-8') as f:
        lines = f.readlines()

    if not lines or not lines[0].strip():
        raise TraceFormatError(f'{path}: empty file', line=None)
    header = lines[0].strip().replace(' ', '')
    if header != CSV_HEADER:
        raise TraceFormatError(f'{path}: expected header "{CSV_HEADER}", got "{lines[0].strip()}"', line=None)

    prev_t = None
    prev_lineno = None
    for lineno, line in enumerate(lines[1:], start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(',')
        try:
            if len(parts) != 2:
                raise ValueError
            t = float(parts[0])
            size = int(parts[1])
        except ValueError:
            raise TraceFormatError(f'{path}: malformed row at line {lineno}: "{line}"', line=lineno) from None
        if not math.isfinite(t) or t < 0 or size < 1:
            raise TraceFormatError(f'{path}: invalid packet at line {lineno}: "{line}"', line=lineno)
        if prev_t is not None and t < prev_t:
            raise TraceFormatError(f'{path}: decreasing timestamp at line {lineno} '
                                   f'({t!r} at line {lineno} follows {prev_t!r} at line {prev_lineno})', line=lineno)
        times.append(t)
        sizes.append(size)
        prev_t, prev_lineno = t, lineno

    if not times:
        raise TraceFormatError(f'{path}: empty file (no packets after header)', line=None)

    logger.debug('loaded %d packets from %s', len(times), path)
    return Trace(times, sizes, str(path) if label is None else label)


def save_trace(trace, path):
    '''
    Write trace as trace-csv. Times are printed with repr so that load_trace gives back the same floats.
    '''
    with open(path, 'w', encoding='utf-8') as f:
        f.write(CSV_HEADER + '\n')
        for t, size in zip(trace.times.tolist(), trace.sizes.tolist()):
            f.write(f'{t!r},{size}\n')
    logger.debug('wrote %d packets to %s', len(trace), path)


def summarize_trace(trace):
    '''
    Packet count, span, byte total and empirical mean rate of a trace.
    '''
    trace.require_non_empty()
    duration = trace.duration
    total = trace.total_bytes
    mean_rate = total / duration if duration > 0 else None
    return TraceSummary(len(trace), duration, total, mean_rate)


def take_window(trace, start_index, n):
    '''
    Contiguous sub-trace of n packets starting at start_index, re-based to t = 0.
    '''
    if n < 1 or start_index < 0 or start_index + n > len(trace):
        raise ValueError(f'Window (start={start_index}, n={n}) out of range for a trace of {len(trace)} packets.')
    sub = Trace(trace.times[start_index:start_index + n], trace.sizes[start_index:start_index + n],
                f'{trace.label}[{start_index}:{start_index + n}]')
    return sub.rebase()


def bin_counts(trace, bin_s):
    '''
    Packet counts per bin of width bin_s, starting at the first arrival.
    The last (partial) bin is dropped.
    '''
    check_positive('bin', bin_s)
    trace.require_non_empty()
    n_bins = int(math.floor(trace.duration / bin_s))
    if n_bins < 1:
        raise InsufficientDataError(f'Trace spans {trace.duration!r} s, shorter than one {bin_s!r} s bin.')
    idx = np.floor((trace.times - trace.times[0]) / bin_s).astype(np.int64)
    idx = idx[idx < n_bins]
    return np.bincount(idx, minlength=n_bins)

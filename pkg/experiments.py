'''
Replicated sweeps over sample size, blocksize and load, plus a variance-time Hurst estimator.

Each sweep point holds the per-replication mean queues, their mean and their sample
standard deviation (n-1 divisor). Replication r always uses seed base_seed + r, and results
are put back in replication order, so the output does not depend on how many jobs ran.
'''
from __future__ import annotations
import concurrent.futures
import logging
from dataclasses import dataclass, field

import numpy as np
from tabulate import tabulate

from misc import InsufficientDataError, check_open_unit, check_positive, format_float, log_log_slope, make_rng, write_sidecar
from queue_sim import calibrate_bandwidth, simulate_packet_queue
from reorder import block_shuffle
from trace_model import Trace, bin_counts, take_window

logger = logging.getLogger(__name__)

DEFAULT_N_REPS = 10
DEFAULT_SAMPLE_SIZES = (1_000, 3_000, 10_000, 30_000, 100_000, 300_000, 1_000_000)
DEFAULT_BLOCKSIZES = (1, 10, 100, 1_000, 10_000, 100_000)
DEFAULT_UTILIZATIONS = (0.3, 0.5, 0.62, 0.7, 0.8, 0.9)
DEFAULT_HURST_LEVELS = (1, 2, 4, 8, 16, 32, 64, 128)

SWEEP_SAMPLES = 'sample-size'
SWEEP_BLOCKS = 'blocksize'
SWEEP_LOAD = 'utilization'


@dataclass(frozen=True)
class SweepPoint:
    '''
    x -> sweep variable (packets, or utilization for load sweeps)
    replication_means -> mean_q of every replication, in replication order
    mean_of_means -> mean of replication_means
    std_dev -> sample standard deviation of replication_means; None for a single replication
    '''
    x: float
    replication_means: tuple
    mean_of_means: float
    std_dev: float | None

    @property
    def n_reps(self):
        return len(self.replication_means)

    @classmethod
    def from_means(cls, x, means):
        mean, std = summarize_replications(means)
        return cls(x, tuple(float(m) for m in means), mean, std)


@dataclass(frozen=True)
class SweepResult:
    '''
    points -> SweepPoints with strictly increasing x
    config -> provenance (sweep type, source, utilization, bandwidth, base seed ...)
    '''
    points: tuple
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        xs = [p.x for p in self.points]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError(f'Sweep x values must be strictly increasing, got {xs}')

    @property
    def xs(self):
        return [p.x for p in self.points]

    @property
    def means(self):
        return [p.mean_of_means for p in self.points]

    def show(self):
        rows = [[p.x, p.mean_of_means, '' if p.std_dev is None else p.std_dev, p.n_reps] for p in self.points]
        print(f"\n## {self.config.get('sweep', 'sweep')} ##")
        print(tabulate(rows, headers=['x', 'mean_of_means', 'std_dev', 'n_reps'], floatfmt='.6g') + '\n')


@dataclass(frozen=True)
class HurstEstimate:
    '''
    H -> Hurst estimate, 1 + slope/2, clamped into (0,1)
    slope -> fitted slope of log variance against log aggregation level
    levels -> aggregation levels used
    base_bin -> bin width, seconds
    out_of_range -> True if 1 + slope/2 fell outside (0,1) and H was clamped
    '''
    H: float
    slope: float
    levels: tuple
    base_bin: float
    out_of_range: bool = False

    def show(self):
        print(tabulate([[self.H, self.slope, self.base_bin, ' '.join(str(m) for m in self.levels), self.out_of_range]],
                       headers=['H', 'slope', 'base_bin_s', 'levels', 'out_of_range'], floatfmt='.6g') + '\n')


def summarize_replications(means):
    '''
    (mean, sample standard deviation). Standard deviation is None for a single value.
    '''
    values = np.asarray(list(means), dtype=np.float64)
    if not values.size:
        raise ValueError('Cannot summarize an empty set of replications.')
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size > 1 else None
    return mean, std


#### replication workers (module level so they pickle) ####

def _queue_window(trace, start, n, target_utilization):
    window = take_window(trace, start, n)
    return simulate_packet_queue(window, calibrate_bandwidth(window, target_utilization)).mean_q


def _queue_generated(source, n, seed, target_utilization):
    trace = source.generate(n, seed)
    return simulate_packet_queue(trace, calibrate_bandwidth(trace, target_utilization)).mean_q


def _queue_shuffled(trace, blocksize, seed, bandwidth):
    return simulate_packet_queue(block_shuffle(trace, blocksize, seed), bandwidth).mean_q


def _run_replications(func, arg_list, jobs):
    '''
    Call func(*args) for each args, in parallel when jobs > 1. Results come back in input order.
    '''
    if jobs <= 1 or len(arg_list) <= 1:
        return [func(*args) for args in arg_list]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as executor:
        futures = [executor.submit(func, *args) for args in arg_list]
        return [f.result() for f in futures]


def _check_grid(grid, name):
    grid = [int(x) for x in grid]
    if not grid:
        raise ValueError(f'{name} grid must not be empty.')
    if any(x < 1 for x in grid):
        raise ValueError(f'{name} grid values must be at least 1, got {grid}')
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError(f'{name} grid must be strictly increasing, got {grid}')
    return grid


def _source_config(source):
    if isinstance(source, Trace):
        return {'source': 'trace', 'trace': source.label, 'n_packets': len(source)}
    return dict(source.describe())


#### sweeps ####

def sweep_sample_size(source, sizes=DEFAULT_SAMPLE_SIZES, n_reps=DEFAULT_N_REPS, target_utilization=0.5,
                      base_seed=0, jobs=1):
    '''
    Mean queue against sample size.

    source -> a Trace (windows of each size are cut at random offsets) or a generator with
              generate(n, seed) (a fresh trace per replication)
    sizes -> increasing packet counts
    n_reps -> replications per size. A window covering the whole trace is run once and has no std_dev.
    target_utilization -> each sample gets its own bandwidth at this utilization
    base_seed -> replication r uses base_seed + r
    jobs -> worker processes
    '''
    sizes = _check_grid(sizes, 'Sample size')
    if n_reps < 1:
        raise ValueError(f'n_reps must be at least 1, got {n_reps!r}')
    check_open_unit('target_utilization', target_utilization)

    is_trace = isinstance(source, Trace)
    if is_trace and sizes[-1] > len(source):
        raise ValueError(f'Sample size {sizes[-1]} exceeds trace length {len(source)}.')

    points = []
    for n in sizes:
        if is_trace:
            if n == len(source):
                args = [(source, 0, n, target_utilization)]
            else:
                starts = [int(make_rng(base_seed + r).integers(0, len(source) - n + 1)) for r in range(n_reps)]
                args = [(source, s, n, target_utilization) for s in starts]
            means = _run_replications(_queue_window, args, jobs)
        else:
            args = [(source, n, base_seed + r, target_utilization) for r in range(n_reps)]
            means = _run_replications(_queue_generated, args, jobs)
        point = SweepPoint.from_means(n, means)
        logger.info('sample size %d: mean_of_means=%.6g over %d reps', n, point.mean_of_means, point.n_reps)
        points.append(point)

    config = {'sweep': SWEEP_SAMPLES, 'utilization': target_utilization, 'base_seed': base_seed,
              'n_reps': n_reps, 'sizes': ' '.join(map(str, sizes))}
    config.update(_source_config(source))
    return SweepResult(tuple(points), config)


def sweep_blocksize(trace, blocksizes=DEFAULT_BLOCKSIZES, n_reps=DEFAULT_N_REPS, target_utilization=0.5,
                    base_seed=0, jobs=1):
    '''
    Mean queue against shuffle blocksize.
    The bandwidth is calibrated once on the unshuffled trace and used for every shuffle, so only
    packet order changes between points. The unshuffled mean queue is kept in config['baseline_mean_q'].
    '''
    blocksizes = _check_grid(blocksizes, 'Blocksize')
    if n_reps < 1:
        raise ValueError(f'n_reps must be at least 1, got {n_reps!r}')
    trace.require_non_empty()
    bandwidth = calibrate_bandwidth(trace, target_utilization)
    baseline = simulate_packet_queue(trace.rebase(), bandwidth).mean_q
    logger.info('baseline mean_q=%.6g at bandwidth %.6g B/s', baseline, bandwidth)

    points = []
    for B in blocksizes:
        args = [(trace, B, base_seed + r, bandwidth) for r in range(n_reps)]
        point = SweepPoint.from_means(B, _run_replications(_queue_shuffled, args, jobs))
        logger.info('blocksize %d: mean_of_means=%.6g', B, point.mean_of_means)
        points.append(point)

    config = {'sweep': SWEEP_BLOCKS, 'utilization': target_utilization, 'bandwidth': bandwidth,
              'baseline_mean_q': baseline, 'base_seed': base_seed, 'n_reps': n_reps,
              'blocksizes': ' '.join(map(str, blocksizes))}
    config.update(_source_config(trace))
    return SweepResult(tuple(points), config)


def sweep_utilization(trace, utilizations=DEFAULT_UTILIZATIONS):
    '''
    Mean queue of the whole trace against target utilization (one run per point).
    '''
    utilizations = [float(u) for u in utilizations]
    if not utilizations or any(b <= a for a, b in zip(utilizations, utilizations[1:])):
        raise ValueError(f'Utilization grid must be non-empty and strictly increasing, got {utilizations}')
    trace.require_non_empty()
    points = []
    for u in utilizations:
        mean_q = simulate_packet_queue(trace, calibrate_bandwidth(trace, u)).mean_q
        points.append(SweepPoint.from_means(u, [mean_q]))
    config = {'sweep': SWEEP_LOAD, 'utilizations': ' '.join(map(repr, utilizations))}
    config.update(_source_config(trace))
    return SweepResult(tuple(points), config)


#### Hurst ####

def hurst_variance_time(trace, base_bin, levels=DEFAULT_HURST_LEVELS):
    '''
    Variance-time Hurst estimate.

    Packet counts are binned at base_bin seconds. For every aggregation level m the counts are
    averaged over non-overlapping blocks of m bins and the variance of those block means taken.
    The slope of log variance against log m gives H = 1 + slope/2.

    The trace must span at least 10 * max(levels) bins.
    '''
    check_positive('base_bin', base_bin)
    levels = _check_grid(levels, 'Aggregation level')
    trace.require_non_empty()
    needed = levels[-1] * base_bin * 10
    if trace.duration < needed:
        raise InsufficientDataError(f'Trace spans {trace.duration!r} s; need at least {needed!r} s '
                                    f'for level {levels[-1]} at {base_bin!r} s bins.')
    counts = bin_counts(trace, base_bin).astype(np.float64)
    if counts.var() == 0:
        raise InsufficientDataError('Binned packet counts have zero variance; H is undefined.')

    variances = []
    for m in levels:
        k = counts.size // m
        block_means = counts[:k * m].reshape(k, m).mean(axis=1)
        variances.append(block_means.var())
    variances = np.asarray(variances)
    if np.any(variances <= 0):
        raise InsufficientDataError('An aggregation level has zero variance; H is undefined.')

    slope = log_log_slope(levels, variances)
    raw = 1.0 + slope / 2.0
    out_of_range = not 0 < raw < 1
    H = min(max(raw, 1e-6), 1 - 1e-6)
    if out_of_range:
        logger.warning('variance-time H=%.4f outside (0,1); clamped', raw)
    return HurstEstimate(H, slope, tuple(levels), float(base_bin), out_of_range)


#### output ####

def save_sweep(result, path):
    '''
    CSV with header x,mean_of_means,std_dev,n_reps,rep_1..rep_K. Missing cells are empty.
    '''
    width = max(p.n_reps for p in result.points)
    header = ['x', 'mean_of_means', 'std_dev', 'n_reps'] + [f'rep_{i + 1}' for i in range(width)]
    with open(path, 'w', encoding='utf-8') as f:
        f.write(','.join(header) + '\n')
        for p in result.points:
            x = str(int(p.x)) if float(p.x).is_integer() and result.config.get('sweep') != SWEEP_LOAD else repr(p.x)
            reps = [format_float(m) for m in p.replication_means] + [''] * (width - p.n_reps)
            row = [x, format_float(p.mean_of_means), format_float(p.std_dev), str(p.n_reps)] + reps
            f.write(','.join(row) + '\n')


def save_sweep_config(result, path, **extra):
    '''
    Sidecar for a sweep CSV: the sweep's own config (sweep, base_seed, bandwidth ...) as is,
    then extra entries (e.g. the run's opt.* options) on top.
    '''
    config = dict(result.config)
    config.update(extra)
    write_sidecar(path, config)


def save_hurst(estimate, path):
    with open(path, 'w', encoding='utf-8') as f:
        f.write('H,slope,base_bin_s,levels,out_of_range\n')
        f.write(f"{estimate.H!r},{estimate.slope!r},{estimate.base_bin!r},"
                f"{' '.join(map(str, estimate.levels))},{int(estimate.out_of_range)}\n")

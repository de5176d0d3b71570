'''
Heavy-tailed on/off traffic.

Fluid side: a single source alternates between "on" (arrival rate a times the
unit server rate) and "off" (silent). On-period lengths are Pareto. Three
constructions are provided:
    - the stationary source (i.i.d. exponential off periods, utilization lambda)
    - the reordered source, where each on period X is followed by an off period of exactly X(a/lambda - 1)
    - the bounded-queue source, whose off periods are long enough to keep the mean queue under q

Packet side: packetize() turns a fluid process into a Trace, and OnOffSource /
PoissonSource produce traces of an exact packet count for the experiments.
'''
from __future__ import annotations
import logging
import math
from dataclasses import dataclass

import numpy as np

from misc import check_positive, check_open_unit, make_rng, InsufficientDataError
from trace_model import Trace

logger = logging.getLogger(__name__)

OFF_IID_EXPONENTIAL = 'iid-exponential'
OFF_DETERMINISTIC_REORDERED = 'deterministic-reordered'
OFF_RULES = (OFF_IID_EXPONENTIAL, OFF_DETERMINISTIC_REORDERED)

DEFAULT_PACKET_SIZE = 1000          # bytes
DEFAULT_SERVER_RATE_REF = 100_000.0  # bytes/second
DEFAULT_X_M = 0.1                   # seconds

# cycles generated per batch while filling a packet-count target
_CYCLE_BATCH = 4096


@dataclass(frozen=True)
class OnOffParams:
    '''
    a -> peak rate as a multiple of the server rate (> 1)
    alpha -> Pareto tail exponent of the on periods (> 1; (1,2) is the heavy-tailed regime)
    x_m -> Pareto scale, seconds (> 0)
    lambda_target -> mean utilization of a unit-rate server, in (0,1)
    off_rule -> 'iid-exponential' or 'deterministic-reordered'
    '''
    a: float = 2.0
    alpha: float = 1.5
    x_m: float = DEFAULT_X_M
    lambda_target: float = 0.5
    off_rule: str = OFF_IID_EXPONENTIAL

    def __post_init__(self):
        if not self.a > 1:
            raise ValueError(f'a must exceed 1, got {self.a!r}')
        if not self.alpha > 1:
            raise ValueError(f'alpha must exceed 1, got {self.alpha!r}')
        check_positive('x_m', self.x_m)
        check_open_unit('lambda_target', self.lambda_target)
        if self.off_rule not in OFF_RULES:
            raise ValueError(f'off_rule must be one of {OFF_RULES}, got {self.off_rule!r}')

    @property
    def mean_on(self):
        return pareto_mean(self.alpha, self.x_m)

    @property
    def off_factor(self):
        '''
        off/on ratio a/lambda - 1 that yields utilization lambda
        '''
        return self.a / self.lambda_target - 1.0

    @property
    def mean_off(self):
        return self.mean_on * self.off_factor

    def describe(self):
        return {'a': self.a, 'alpha': self.alpha, 'x_m': self.x_m,
                'lambda': self.lambda_target, 'off_rule': self.off_rule}


@dataclass(frozen=True, eq=False)
class FluidProcess:
    '''
    Alternating on/off periods.

    on -> on-period lengths, seconds (all > 0)
    off -> off-period lengths, seconds (all >= 0); off[i] follows on[i]
    rate_on -> arrival rate during on periods, in units of the server rate
    '''
    on: np.ndarray
    off: np.ndarray
    rate_on: float

    def __post_init__(self):
        on = np.array(self.on, dtype=np.float64)
        off = np.array(self.off, dtype=np.float64)
        if on.ndim != 1 or on.shape != off.shape or not on.size:
            raise ValueError('on and off must be non-empty 1-d sequences of equal length.')
        if not (np.all(np.isfinite(on)) and np.all(np.isfinite(off))):
            raise ValueError('Period lengths must be finite.')
        if on.min() <= 0:
            raise ValueError('All on periods must be positive.')
        if off.min() < 0:
            raise ValueError('Off periods must be non-negative.')
        if not self.rate_on > 1:
            raise ValueError(f'rate_on must exceed 1, got {self.rate_on!r}')
        on.flags.writeable = False
        off.flags.writeable = False
        object.__setattr__(self, 'on', on)
        object.__setattr__(self, 'off', off)

    def __len__(self):
        return int(self.on.size)

    @property
    def cycles(self):
        return list(zip(self.on.tolist(), self.off.tolist()))

    @property
    def duration(self):
        return float(self.on.sum() + self.off.sum())

    def on_fraction(self):
        return float(self.on.sum() / (self.on.sum() + self.off.sum()))

    def head(self, n_cycles):
        return FluidProcess(self.on[:n_cycles], self.off[:n_cycles], self.rate_on)


@dataclass(frozen=True)
class PacketizationParams:
    '''
    packet_size -> bytes per packet (constant)
    server_rate_ref -> bytes/second that one unit of fluid rate stands for
    '''
    packet_size: int = DEFAULT_PACKET_SIZE
    server_rate_ref: float = DEFAULT_SERVER_RATE_REF

    def __post_init__(self):
        if int(self.packet_size) != self.packet_size or self.packet_size < 1:
            raise ValueError(f'packet_size must be an integer >= 1, got {self.packet_size!r}')
        check_positive('server_rate_ref', self.server_rate_ref)


#### heavy tails ####

def sample_pareto(alpha, x_m, u):
    '''
    Inverse-CDF Pareto draw: x_m * u**(-1/alpha), so P(X > x) = (x/x_m)**(-alpha) for x >= x_m.

    u -> uniform variate in (0, 1]
    '''
    check_positive('alpha', alpha)
    check_positive('x_m', x_m)
    if not 0 < u <= 1:
        raise ValueError(f'u must lie in (0, 1], got {u!r}')
    return x_m * u ** (-1.0 / alpha)


def pareto_samples(alpha, x_m, n, rng):
    '''
    n Pareto(alpha, x_m) draws from rng
    '''
    check_positive('alpha', alpha)
    check_positive('x_m', x_m)
    u = 1.0 - rng.random(n)   # (0, 1]
    return x_m * u ** (-1.0 / alpha)


def pareto_mean(alpha, x_m):
    return math.inf if alpha <= 1 else alpha * x_m / (alpha - 1)


def pareto_second_moment(alpha, x_m):
    return math.inf if alpha <= 2 else alpha * x_m ** 2 / (alpha - 2)


def alpha_for_hurst(hurst):
    '''
    On/off tail exponent giving Hurst parameter H (alpha = 3 - 2H).
    '''
    if not 0.5 < hurst < 1:
        raise ValueError(f'Hurst parameter must lie in (0.5, 1), got {hurst!r}')
    return 3.0 - 2.0 * hurst


def hurst_for_alpha(alpha):
    return (3.0 - alpha) / 2.0 if 1 < alpha < 2 else 0.5


def fit_tail_exponent(samples, tail_fraction=0.1):
    '''
    Tail exponent from the empirical CCDF.
    Fits log CCDF against log x over the largest tail_fraction of the samples and returns minus the slope.

    samples -> at least 100 positive values
    tail_fraction -> share of the samples (largest first) used in the fit, in (0, 0.5]
    '''
    x = np.sort(np.asarray(samples, dtype=np.float64))[::-1]
    n = x.size
    if n < 100:
        raise InsufficientDataError(f'Need at least 100 samples to fit a tail, got {n}.')
    if not 0 < tail_fraction <= 0.5:
        raise ValueError(f'tail_fraction must lie in (0, 0.5], got {tail_fraction!r}')
    if x[-1] <= 0:
        raise ValueError('Tail samples must be positive.')
    k = max(int(n * tail_fraction), 2)
    tail = x[:k]
    if tail[0] == tail[-1]:
        raise InsufficientDataError('Tail samples are all equal; the CCDF slope is undefined.')
    ccdf = np.arange(1, k + 1) / n
    slope = np.polyfit(np.log(tail), np.log(ccdf), 1)[0]
    return float(-slope)


#### fluid constructions ####

def gen_onoff_fluid(params, n_cycles, seed):
    '''
    Single on/off source with Pareto on periods.

    params -> OnOffParams. The off rule decides the off periods:
        iid-exponential -> exponential with mean E[X](a/lambda - 1)
        deterministic-reordered -> exactly X_i(a/lambda - 1) after on period X_i
    n_cycles -> number of (on, off) pairs
    seed -> PRNG seed
    '''
    if n_cycles < 1:
        raise ValueError(f'n_cycles must be at least 1, got {n_cycles!r}')
    rng = make_rng(seed)
    on = pareto_samples(params.alpha, params.x_m, n_cycles, rng)
    if params.off_rule == OFF_DETERMINISTIC_REORDERED:
        off = on * params.off_factor
    else:
        off = rng.exponential(params.mean_off, n_cycles)
    logger.debug('generated %d cycles (%s), longest on period %.6g s', n_cycles, params.off_rule, on.max())
    return FluidProcess(on, off, params.a)


def reordered_fluid(on_lengths, a, lam):
    '''
    The reordered process for given on lengths: every on period X followed by X(a/lambda - 1) of silence.
    '''
    on = np.asarray(on_lengths, dtype=np.float64)
    return FluidProcess(on, on * (a / lam - 1.0), a)


def gen_bounded_q_fluid(on_lengths, a, q):
    '''
    Process whose mean queue never exceeds q.
    Off period after X_i is max((a-1)X_i, (a-1)aX_i^2/(2q) - X_i), which drains the queue and pads
    the cycle until its time-average is at most q.
    '''
    if not a > 1:
        raise ValueError(f'a must exceed 1, got {a!r}')
    check_positive('q', q)
    x = np.asarray(on_lengths, dtype=np.float64)
    if not x.size or x.min() <= 0:
        raise ValueError('on_lengths must be non-empty and positive.')
    off = np.maximum((a - 1) * x, (a - 1) * a * x * x / (2 * q) - x)
    return FluidProcess(x, off, a)


def lower_bound_estimate(on_lengths, a, lam):
    '''
    Time-average queue of the reordered process over the given on periods:
    lambda(a-1) sum(X^2) / (2 sum(X)).

    This is the smallest mean queue any arrangement of these on periods can produce at utilization lambda.
    '''
    if not a > 1:
        raise ValueError(f'a must exceed 1, got {a!r}')
    check_open_unit('lambda', lam)
    x = np.asarray(on_lengths, dtype=np.float64)
    if not x.size:
        raise ValueError('on_lengths must not be empty.')
    return float(lam * (a - 1) * np.dot(x, x) / (2 * x.sum()))


def expected_lower_bound(params):
    '''
    lambda(a-1)E[X^2]/(2E[X]) for Pareto on periods; infinite for alpha <= 2.
    '''
    m2 = pareto_second_moment(params.alpha, params.x_m)
    if math.isinf(m2):
        return math.inf
    return params.lambda_target * (params.a - 1) * m2 / (2 * params.mean_on)


#### packets ####

def _packet_counts(on, rate_on, pp):
    raw = on * rate_on * pp.server_rate_ref / pp.packet_size
    # nudge so exact multiples are not lost to rounding
    return np.maximum(np.floor(raw + 1e-9), 1).astype(np.int64)


def min_burst_packets(params, pp):
    '''
    Packets carried by the shortest possible on period (x_m).
    Block shuffles with blocks shorter than this cannot hold two off gaps in one block,
    which spreads bursts more evenly than a per-packet shuffle does.
    '''
    return int(_packet_counts(np.array([params.x_m]), params.a, pp)[0])


def packetize(fluid, pp, label='packetized', limit=None):
    '''
    Turn a fluid process into packets.
    An on period of length L carries max(1, floor(L*a*server_rate_ref/packet_size)) packets at
    spacing L/count starting at the start of the period. Off periods carry nothing.

    limit -> if given, stop after this many packets. The result is the first `limit` packets
             of the full packetization; nothing past the cut is allocated.
    '''
    counts = _packet_counts(fluid.on, fluid.rate_on, pp)
    starts = np.concatenate(([0.0], np.cumsum(fluid.on + fluid.off)[:-1]))
    spacing = fluid.on / counts
    first = np.cumsum(counts) - counts
    if limit is not None:
        check_positive('limit', limit)
        counts = np.clip(limit - first, 0, counts)
    rank = np.arange(int(counts.sum())) - np.repeat(first, counts)
    times = np.repeat(starts, counts) + rank * np.repeat(spacing, counts)
    sizes = np.full(times.size, pp.packet_size, dtype=np.int64)
    return Trace(times, sizes, label)


def save_fluid(fluid, path):
    with open(path, 'w', encoding='utf-8') as f:
        f.write('on_s,off_s\n')
        for on, off in fluid.cycles:
            f.write(f'{on!r},{off!r}\n')


@dataclass(frozen=True)
class OnOffSource:
    '''
    Packet generator for the stationary heavy-tailed on/off source.
    generate(n, seed) always returns exactly n packets.
    '''
    params: OnOffParams = OnOffParams()
    packetization: PacketizationParams = PacketizationParams()

    def fluid_for(self, n_packets, seed):
        '''
        Smallest cycle prefix (in batches) carrying at least n_packets.
        '''
        if n_packets < 1:
            raise ValueError(f'n_packets must be at least 1, got {n_packets!r}')
        rng = make_rng(seed)
        p = self.params
        on_parts, off_parts = [], []
        total = 0
        while total < n_packets:
            on = pareto_samples(p.alpha, p.x_m, _CYCLE_BATCH, rng)
            if p.off_rule == OFF_DETERMINISTIC_REORDERED:
                off = on * p.off_factor
            else:
                off = rng.exponential(p.mean_off, _CYCLE_BATCH)
            on_parts.append(on)
            off_parts.append(off)
            total += int(_packet_counts(on, p.a, self.packetization).sum())
        return FluidProcess(np.concatenate(on_parts), np.concatenate(off_parts), p.a)

    def generate(self, n_packets, seed):
        fluid = self.fluid_for(n_packets, seed)
        return packetize(fluid, self.packetization, label=f'onoff-alpha{self.params.alpha}-seed{seed}',
                         limit=n_packets)

    def describe(self):
        d = {'source': 'onoff'}
        d.update(self.params.describe())
        d.update({'packet_size': self.packetization.packet_size,
                  'server_rate_ref': self.packetization.server_rate_ref})
        return d


@dataclass(frozen=True)
class PoissonSource:
    '''
    Control source: exponential inter-arrival times, constant packet size.
    '''
    rate_pps: float = 100.0
    packet_size: int = DEFAULT_PACKET_SIZE

    def __post_init__(self):
        check_positive('rate_pps', self.rate_pps)
        if self.packet_size < 1:
            raise ValueError(f'packet_size must be at least 1, got {self.packet_size!r}')

    def generate(self, n_packets, seed):
        if n_packets < 1:
            raise ValueError(f'n_packets must be at least 1, got {n_packets!r}')
        rng = make_rng(seed)
        gaps = rng.exponential(1.0 / self.rate_pps, n_packets)
        gaps[0] = 0.0
        return Trace(np.cumsum(gaps), np.full(n_packets, self.packet_size, dtype=np.int64),
                     f'poisson-seed{seed}')

    def describe(self):
        return {'source': 'poisson', 'rate_pps': self.rate_pps, 'packet_size': self.packet_size}

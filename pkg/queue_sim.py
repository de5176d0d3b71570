'''
Infinite-buffer FIFO queues.

simulate_packet_queue: a single server of fixed bandwidth (bytes/second) serving a packet trace.
A packet of l bytes holds the server for l/bandwidth seconds. Q_t counts packets in the system,
including the one in service. The mean is the exact integral of the piecewise-constant Q_t over
[first arrival, last departure].

simulate_fluid_queue: a unit-rate server fed by an on/off fluid source. The queue rises at a-1
while on and drains at 1 while off, so every segment integrates in closed form.
'''
from __future__ import annotations
import logging
from dataclasses import dataclass, fields

import numpy as np
from tabulate import tabulate

from misc import check_positive, check_open_unit, format_float

logger = logging.getLogger(__name__)

STATS_HEADER = 'mean_q,peak_q,busy_fraction,duration_s,offered_utilization'
MEAN_BYTES_COLUMN = 'mean_bytes'
TIMELINE_HEADER = 'time_s,queue_len'


@dataclass(frozen=True)
class QueueStats:
    '''
    mean_q -> time-average number in system (packets; queue-units for fluid runs)
    peak_q -> largest number in system
    busy_fraction -> share of the run with the server busy
    duration -> length of the averaging window, seconds
    offered_utilization -> total service demand over capacity during the arrival span
                           (first to last arrival), not during the averaging window. It can
                           exceed 1 for short traces: two 1000 B packets 0.5 s apart at
                           1000 B/s give 4.0 while busy_fraction is 1.0. Fluid runs use the
                           on fraction times the peak rate.
    mean_bytes -> time-average bytes in system (packet runs only)
    '''
    mean_q: float
    peak_q: float
    busy_fraction: float
    duration: float
    offered_utilization: float
    mean_bytes: float | None = None

    def as_row(self, with_bytes=False):
        row = [self.mean_q, self.peak_q, self.busy_fraction, self.duration, self.offered_utilization]
        if with_bytes:
            row.append(self.mean_bytes)
        return row

    def show(self):
        headers = [f.name for f in fields(self)]
        print(tabulate([[getattr(self, h) for h in headers]], headers=headers, floatfmt='.6g') + '\n')


def _event_timeline(arrivals, departures):
    '''
    Merge arrivals (+1) and departures (-1) into one ordered event list.
    At equal times departures come first.
    '''
    times = np.concatenate((departures, arrivals))
    steps = np.concatenate((np.full(departures.size, -1, dtype=np.int64),
                            np.ones(arrivals.size, dtype=np.int64)))
    # secondary key puts -1 before +1 at ties
    order = np.lexsort((steps, times))
    times = times[order]
    levels = np.cumsum(steps[order])
    return times, levels


def departure_times(arrivals, service):
    '''
    FIFO departure instants: d_i = max(a_i, d_{i-1}) + s_i, unrolled as
    d_i = S_i + max_{j<=i}(a_j - S_{j-1}) with S the running service total.
    '''
    work = np.cumsum(service)
    backlog_start = arrivals - (work - service)
    return work + np.maximum.accumulate(backlog_start)


def simulate_packet_queue(trace, bandwidth, emit_timeline=False):
    '''
    Queue a trace at a fixed bandwidth.

    trace -> non-empty Trace (time ordered)
    bandwidth -> server rate, bytes/second
    emit_timeline -> if True also return the (time, level) list at every event

    The averaging window T runs from the first arrival to the last departure.
    offered_utilization is total bytes over (bandwidth * arrival span); single-packet
    traces use T instead.
    '''
    check_positive('bandwidth', bandwidth)
    trace.require_non_empty()

    arrivals = trace.times
    sizes = trace.sizes.astype(np.float64)
    service = sizes / bandwidth
    departures = departure_times(arrivals, service)

    start = float(arrivals[0])
    end = float(departures.max())
    T = end - start
    sojourn = departures - arrivals
    # integral of Q_t equals total time spent in the system
    area = float(sojourn.sum())
    mean_q = area / T
    mean_bytes = float(np.dot(sizes, sojourn)) / T

    times, levels = _event_timeline(arrivals, departures)
    widths = np.diff(times)
    busy = float(widths[levels[:-1] > 0].sum())
    peak = int(levels.max())

    span = trace.duration if trace.duration > 0 else T
    offered = trace.total_bytes / (bandwidth * span)

    stats = QueueStats(mean_q, peak, busy / T, T, offered, mean_bytes)
    logger.debug('queued %d packets at %.6g B/s: mean_q=%.6g peak=%d', len(trace), bandwidth, mean_q, peak)
    if emit_timeline:
        return stats, list(zip(times.tolist(), levels.tolist()))
    return stats


def _fluid_segments(fluid):
    '''
    Walk the fluid queue cycle by cycle.
    Yields (cycle_end_time, area_so_far, busy_so_far, level_at_cycle_end, peak_in_cycle, breakpoints).
    '''
    a = fluid.rate_on
    q = 0.0
    t = 0.0
    area = 0.0
    busy = 0.0
    for on, off in zip(fluid.on.tolist(), fluid.off.tolist()):
        points = []
        rise = (a - 1.0) * on
        area += q * on + rise * on / 2.0
        busy += on
        q += rise
        t += on
        peak = q
        points.append((t, q))
        if q <= off:
            area += q * q / 2.0
            busy += q
            if q > 0:
                points.append((t + q, 0.0))
            q = 0.0
        else:
            area += q * off - off * off / 2.0
            busy += off
            q -= off
        t += off
        if off > 0:
            points.append((t, q))
        yield t, area, busy, q, peak, points


def simulate_fluid_queue(fluid, emit_timeline=False):
    '''
    Exact mean of the fluid queue driven by fluid (a FluidProcess) at unit server rate.
    Duration is the sum of all on and off periods; a queue still present at the end is
    integrated only up to that point.
    '''
    area = busy = peak = 0.0
    end = 0.0
    timeline = [(0.0, 0.0)]
    for end, area, busy, _, cycle_peak, points in _fluid_segments(fluid):
        peak = max(peak, cycle_peak)
        if emit_timeline:
            timeline.extend(points)
    offered = fluid.rate_on * float(fluid.on.sum()) / end
    stats = QueueStats(area / end, peak, busy / end, end, offered)
    if emit_timeline:
        return stats, timeline
    return stats


def fluid_prefix_means(fluid):
    '''
    Time-average queue at the end of each cycle (running mean over cycles 0..i).
    '''
    return np.array([area / end for end, area, *_ in _fluid_segments(fluid)])


def fluid_cycle_end_levels(fluid):
    '''
    Queue level at the end of each off period.
    '''
    return np.array([q for _, _, _, q, _, _ in _fluid_segments(fluid)])


def calibrate_bandwidth(trace, target_utilization):
    '''
    Bandwidth (bytes/second) at which trace offers the target utilization.
    '''
    check_open_unit('target_utilization', target_utilization)
    trace.require_non_empty()
    if trace.duration <= 0:
        raise ValueError(f'Cannot calibrate on trace "{trace.label}" with zero duration.')
    return trace.total_bytes / (target_utilization * trace.duration)


def pollaczek_khinchine_mean(rho, service_cv2=0.0):
    '''
    Mean number in system for an M/G/1 queue: rho + rho^2 (1 + c^2) / (2 (1 - rho)).

    rho -> utilization in (0,1)
    service_cv2 -> squared coefficient of variation of the service time (0 for constant packet size).
    Infinite variance gives an infinite mean.
    '''
    check_open_unit('rho', rho)
    if service_cv2 < 0:
        raise ValueError(f'service_cv2 must be non-negative, got {service_cv2!r}')
    return rho + rho * rho * (1.0 + service_cv2) / (2.0 * (1.0 - rho))


def save_stats(stats, path, with_bytes=False):
    '''
    One header line and one row. with_bytes appends the mean_bytes column
    (left empty for fluid runs).
    '''
    header = STATS_HEADER + (',' + MEAN_BYTES_COLUMN if with_bytes else '')
    with open(path, 'w', encoding='utf-8') as f:
        f.write(header + '\n')
        f.write(','.join(format_float(v) for v in stats.as_row(with_bytes)) + '\n')


def save_timeline(timeline, path):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(TIMELINE_HEADER + '\n')
        for t, level in timeline:
            f.write(f'{t!r},{level!r}\n')

import numpy as np
import pytest

from queue_sim import (
    calibrate_bandwidth, departure_times, fluid_prefix_means, pollaczek_khinchine_mean, save_stats, save_timeline,
    simulate_fluid_queue, simulate_packet_queue,
)
from synth import (
    FluidProcess, OnOffParams, OnOffSource, PacketizationParams, PoissonSource, gen_onoff_fluid, packetize,
    reordered_fluid,
)
from trace_model import Trace


def riemann_mean(trace, bandwidth, step):
    '''
    Dense-grid approximation of the mean number in system (midpoint rule).
    '''
    arrivals = trace.times
    departures = departure_times(arrivals, trace.sizes / bandwidth)
    start, end = arrivals[0], departures.max()
    grid = np.arange(start + step / 2, end, step)
    in_system = np.searchsorted(arrivals, grid, side='right') - np.searchsorted(np.sort(departures), grid, side='right')
    return in_system.sum() * step / (end - start)


def test_two_packet_hand_example():
    stats, timeline = simulate_packet_queue(Trace([0, 0.5], [1000, 1000]), 1000, emit_timeline=True)
    assert stats.mean_q == pytest.approx(1.25, abs=1e-12)
    assert stats.peak_q == 2
    assert stats.busy_fraction == pytest.approx(1)
    assert stats.duration == pytest.approx(2)
    assert timeline == [(0.0, 1), (0.5, 2), (1.0, 1), (2.0, 0)]


def test_single_packet():
    stats = simulate_packet_queue(Trace([0], [500]), 1000)
    assert stats.mean_q == pytest.approx(1)
    assert stats.duration == pytest.approx(0.5)
    assert stats.peak_q == 1


def test_two_busy_periods():
    stats = simulate_packet_queue(Trace([0, 10], [1000, 1000]), 1000)
    assert stats.mean_q == pytest.approx(2 / 11, abs=1e-12)
    assert stats.busy_fraction == pytest.approx(2 / 11, abs=1e-12)
    assert stats.duration == pytest.approx(11)


def test_three_busy_periods():
    # busy periods [0,2), [5,6), [9,12)
    trace = Trace([0, 1, 5, 9, 9.5], [1000, 1000, 1000, 1000, 2000])
    stats = simulate_packet_queue(trace, 1000)
    # sojourn times 1, 1, 1, 1, 2.5
    assert stats.mean_q == pytest.approx(6.5 / 12, abs=1e-12)
    assert stats.busy_fraction == pytest.approx(6 / 12, abs=1e-12)
    assert stats.peak_q == 2


def test_departure_before_arrival_at_ties():
    # the first packet leaves at t=1 exactly when the second arrives
    stats, timeline = simulate_packet_queue(Trace([0, 1], [1000, 1000]), 1000, emit_timeline=True)
    assert stats.peak_q == 1
    assert timeline == [(0.0, 1), (1.0, 0), (1.0, 1), (2.0, 0)]
    assert stats.busy_fraction == pytest.approx(1)


def test_timeline_integrates_to_mean():
    rng = np.random.default_rng(5)
    trace = Trace(np.cumsum(rng.exponential(0.01, 300)), rng.integers(40, 1500, 300))
    stats, timeline = simulate_packet_queue(trace, 80_000, emit_timeline=True)
    times = np.array([t for t, _ in timeline])
    levels = np.array([q for _, q in timeline])
    area = np.sum(np.diff(times) * levels[:-1])
    assert area == pytest.approx(stats.mean_q * stats.duration, rel=1e-12)
    assert levels[-1] == 0
    assert np.sum(levels[1:] < levels[:-1]) == len(trace)


def test_matches_dense_grid():
    rng = np.random.default_rng(20)
    for _ in range(20):
        times = np.cumsum(rng.exponential(0.005, 100))
        times -= times[0]
        trace = Trace(times, rng.integers(40, 1500, 100))
        bandwidth = calibrate_bandwidth(trace, float(rng.uniform(0.3, 0.9)))
        exact = simulate_packet_queue(trace, bandwidth).mean_q
        assert riemann_mean(trace, bandwidth, 1e-6) == pytest.approx(exact, abs=1e-4)


def test_work_conservation():
    rng = np.random.default_rng(9)
    trace = Trace(np.cumsum(rng.exponential(0.001, 5000)), rng.integers(40, 1500, 5000))
    bandwidth = 700_000.0
    stats = simulate_packet_queue(trace, bandwidth)
    assert stats.busy_fraction * stats.duration * bandwidth == pytest.approx(trace.total_bytes, rel=1e-9)
    assert stats.peak_q >= stats.mean_q >= 0


def test_mean_bytes_for_constant_size():
    trace = PoissonSource(rate_pps=100, packet_size=250).generate(2000, seed=1)
    stats = simulate_packet_queue(trace, calibrate_bandwidth(trace, 0.5))
    assert stats.mean_bytes == pytest.approx(250 * stats.mean_q, rel=1e-12)


def test_mean_queue_falls_with_bandwidth():
    trace = OnOffSource(OnOffParams(alpha=1.5)).generate(20_000, seed=2)
    base = calibrate_bandwidth(trace, 0.9)
    means = [simulate_packet_queue(trace, base * f).mean_q for f in (1, 1.2, 1.5, 2, 3, 5, 10)]
    assert all(b <= a for a, b in zip(means, means[1:]))


@pytest.mark.parametrize('bandwidth', [0, -1.0, float('nan')])
def test_rejects_bad_bandwidth(bandwidth):
    with pytest.raises(ValueError):
        simulate_packet_queue(Trace([0], [1]), bandwidth)


def test_rejects_empty_trace():
    with pytest.raises(ValueError):
        simulate_packet_queue(Trace([], []), 1000)


def test_calibrate_bandwidth():
    trace = Trace([0.0, 100.0], [500_000, 500_000])
    assert calibrate_bandwidth(trace, 0.5) == pytest.approx(20_000)
    assert calibrate_bandwidth(trace, 1 - 1e-12) == pytest.approx(10_000)


def test_calibrated_utilization_round_trip():
    trace = OnOffSource().generate(5000, seed=0)
    stats = simulate_packet_queue(trace, calibrate_bandwidth(trace, 0.62))
    assert stats.offered_utilization == pytest.approx(0.62, abs=1e-12)


def test_calibrate_rejects():
    with pytest.raises(ValueError):
        calibrate_bandwidth(Trace([1.0], [100]), 0.5)
    with pytest.raises(ValueError):
        calibrate_bandwidth(Trace([0.0, 1.0], [100, 100]), 1.0)


def test_fluid_single_triangle():
    fluid = FluidProcess([2.0], [8.0], 3)
    stats, timeline = simulate_fluid_queue(fluid, emit_timeline=True)
    assert stats.mean_q == pytest.approx(1.2, rel=1e-12)
    assert stats.peak_q == pytest.approx(4)
    assert timeline == [(0.0, 0.0), (2.0, 4.0), (6.0, 0.0), (10.0, 0.0)]
    assert stats.busy_fraction == pytest.approx(stats.offered_utilization, rel=1e-12)


def test_fluid_triangle_formula():
    rng = np.random.default_rng(31)
    for _ in range(100):
        a = float(rng.uniform(1.01, 10))
        x = float(rng.uniform(0.01, 100))
        window = a * x * float(rng.uniform(1.0, 5.0))
        stats = simulate_fluid_queue(FluidProcess([x], [window - x], a))
        assert stats.mean_q == pytest.approx((a - 1) * a * x * x / (2 * window), rel=1e-9)


def test_fluid_reordered_example():
    assert simulate_fluid_queue(reordered_fluid([1, 2], 2, 0.5)).mean_q == pytest.approx(5 / 12, rel=1e-12)


def test_fluid_zero_off_merges_bursts():
    k = 5
    merged = simulate_fluid_queue(FluidProcess([1.0] * k, [0.0] * (k - 1) + [50.0], 2))
    single = simulate_fluid_queue(FluidProcess([float(k)], [50.0], 2))
    assert merged.mean_q == pytest.approx(single.mean_q, rel=1e-12)
    assert merged.peak_q == pytest.approx(single.peak_q)


def test_fluid_prefix_means_end_at_total():
    fluid = gen_onoff_fluid(OnOffParams(), 200, seed=6)
    prefix = fluid_prefix_means(fluid)
    assert prefix.size == 200
    assert prefix[-1] == pytest.approx(simulate_fluid_queue(fluid).mean_q, rel=1e-12)


def test_fluid_and_packet_queues_agree():
    params = OnOffParams(a=2, alpha=1.5, x_m=1.0, lambda_target=0.5)
    fluid = gen_onoff_fluid(params, 1000, seed=12)
    pp = PacketizationParams(packet_size=100, server_rate_ref=100_000)
    fluid_bytes = simulate_fluid_queue(fluid).mean_q * pp.server_rate_ref
    stats = simulate_packet_queue(packetize(fluid, pp), pp.server_rate_ref)
    assert stats.mean_q * pp.packet_size == pytest.approx(fluid_bytes, rel=0.1)


def test_pollaczek_khinchine():
    assert pollaczek_khinchine_mean(0.5) == pytest.approx(0.75)
    assert pollaczek_khinchine_mean(0.5, 1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        pollaczek_khinchine_mean(1.0)


def test_poisson_control_matches_md1():
    trace = PoissonSource(rate_pps=100, packet_size=1000).generate(200_000, seed=4)
    stats = simulate_packet_queue(trace, calibrate_bandwidth(trace, 0.5))
    assert stats.mean_q == pytest.approx(pollaczek_khinchine_mean(0.5), rel=0.05)


def _median_means(alpha, sizes, seeds):
    source = OnOffSource(OnOffParams(a=2, alpha=alpha, lambda_target=0.5), PacketizationParams())
    medians = []
    for n in sizes:
        means = []
        for seed in seeds:
            trace = source.generate(n, seed)
            means.append(simulate_packet_queue(trace, calibrate_bandwidth(trace, 0.5)).mean_q)
        medians.append(float(np.median(means)))
    return medians


@pytest.mark.slow
def test_heavy_tailed_mean_queue_keeps_growing():
    medians = _median_means(1.5, [10 ** 3, 10 ** 4, 10 ** 5, 10 ** 6], range(10))
    assert all(b > a for a, b in zip(medians, medians[1:]))


@pytest.mark.slow
def test_light_tailed_mean_queue_settles():
    small, big = _median_means(3.0, [10 ** 5, 10 ** 6], range(10))
    assert big == pytest.approx(small, rel=0.2)


def test_writers(tmp_path):
    stats, timeline = simulate_packet_queue(Trace([0, 0.5], [1000, 1000]), 1000, emit_timeline=True)
    save_stats(stats, str(tmp_path / 's.csv'))
    save_timeline(timeline, str(tmp_path / 't.csv'))
    assert (tmp_path / 's.csv').read_text().splitlines() == [
        'mean_q,peak_q,busy_fraction,duration_s,offered_utilization', '1.25,2.0,1.0,2.0,4.0']
    assert (tmp_path / 't.csv').read_text().splitlines()[:2] == ['time_s,queue_len', '0.0,1']


def test_stats_with_mean_bytes_column(tmp_path):
    stats = simulate_packet_queue(Trace([0, 0.5], [1000, 1000]), 1000)
    # arrival span is 0.5 s, so 2000 B over 500 B of capacity
    assert stats.offered_utilization == pytest.approx(4.0)
    assert stats.busy_fraction == pytest.approx(1.0)
    save_stats(stats, str(tmp_path / 's.csv'), with_bytes=True)
    assert (tmp_path / 's.csv').read_text().splitlines() == [
        'mean_q,peak_q,busy_fraction,duration_s,offered_utilization,mean_bytes', '1.25,2.0,1.0,2.0,4.0,1250.0']


def test_fluid_stats_leave_mean_bytes_empty(tmp_path):
    save_stats(simulate_fluid_queue(FluidProcess([2.0], [8.0], 3)), str(tmp_path / 'f.csv'), with_bytes=True)
    assert (tmp_path / 'f.csv').read_text().splitlines()[1].endswith(',')

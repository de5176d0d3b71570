'''
Command line entry point.

    python cli.py generate --alpha 1.5 --packets 100000 --seed 1 --out onoff.csv
    python cli.py simulate onoff.csv --utilization 0.62 --out stats.csv
    python cli.py shuffle onoff.csv --blocksize 1000 --seed 3 --out shuffled.csv
    python cli.py sweep-samples onoff.csv --sizes 1000 10000 100000 --out samples.csv
    python cli.py sweep-blocks onoff.csv --blocksizes 1 10 100 1000 --out blocks.csv
    python cli.py sweep-load onoff.csv --out load.csv
    python cli.py hurst onoff.csv --base-bin 0.01 --out hurst.csv
    python cli.py calibrate onoff.csv --utilization 0.5

Every file written gets a `<file>.meta` sidecar of key=value lines with the resolved options,
the seed and the program version. On failure, files written so far are removed and the exit
status is 1.
'''
from __future__ import annotations
import argparse
import logging
import os
import shlex
import sys
from dataclasses import dataclass, field

from misc import VERSION, remove_quietly, write_sidecar
import experiments
import queue_sim
import reorder
import synth
from trace_model import load_trace, save_trace

logger = logging.getLogger('cli')

SEED_ENV = 'QLAB_SEED'
SIMULATION_COMMANDS = ('simulate',)


@dataclass
class RunConfig:
    '''
    Resolved options of one invocation.

    subcommand -> name of the subcommand
    options -> every other resolved option (paths, grids, generator parameters ...)
    seed -> resolved seed (flag, else $QLAB_SEED, else 0)
    '''
    subcommand: str
    seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.subcommand in SIMULATION_COMMANDS:
            given = [k for k in ('bandwidth', 'utilization') if self.options.get(k) is not None]
            if len(given) != 1:
                raise ValueError('Exactly one of --bandwidth and --utilization must be given.')

    def sidecar(self, argv):
        entries = {f'opt.{k}': _format_option(v) for k, v in self.options.items() if v is not None}
        entries.update({'subcommand': self.subcommand, 'seed': self.seed, 'version': VERSION,
                        'argv': shlex.join(argv)})
        return entries


def _format_option(value):
    if isinstance(value, (list, tuple)):
        return ' '.join(str(v) for v in value)
    return value


def resolve_seed(flag_value, environ=os.environ):
    '''
    --seed wins over $QLAB_SEED, which wins over 0.
    '''
    if flag_value is not None:
        return flag_value
    env = environ.get(SEED_ENV)
    if env is None or env == '':
        return 0
    try:
        return int(env)
    except ValueError:
        raise ValueError(f'{SEED_ENV} must be an integer, got {env!r}') from None


class Outputs:
    '''
    Files written by one command. Removed again if the command fails.
    '''
    def __init__(self, config, argv):
        self.config = config
        self.argv = argv
        self.paths = []

    def claim(self, path):
        self.paths.append(path)
        self.paths.append(path + '.meta')
        return path

    def seal(self, path):
        write_sidecar(path + '.meta', self.config.sidecar(self.argv))

    def discard(self):
        remove_quietly(*self.paths)


#### onoff parameters shared by generate and sweep-samples ####

def _add_source_args(parser):
    group = parser.add_argument_group('generator')
    group.add_argument('--source', choices=['onoff', 'poisson'], default='onoff', help='traffic model. Def: onoff')
    group.add_argument('--a', type=float, default=2.0, help='on rate / server rate (> 1). Def: 2')
    group.add_argument('--alpha', type=float, default=None, help='Pareto tail exponent (> 1). Def: 1.5')
    group.add_argument('--hurst', type=float, default=None, help='target H; sets alpha = 3 - 2H')
    group.add_argument('--lambda', dest='lam', type=float, default=0.5, help='utilization of the unit server. Def: 0.5')
    group.add_argument('--x-m', type=float, default=synth.DEFAULT_X_M, help='Pareto scale, seconds')
    group.add_argument('--off-rule', choices=synth.OFF_RULES, default=synth.OFF_IID_EXPONENTIAL)
    group.add_argument('--packet-size', type=int, default=synth.DEFAULT_PACKET_SIZE, help='bytes')
    group.add_argument('--server-rate', type=float, default=synth.DEFAULT_SERVER_RATE_REF,
                       help='bytes/second of one unit of fluid rate')
    group.add_argument('--rate-pps', type=float, default=100.0, help='poisson source packets/second')


def _source_from_args(args):
    if args.source == 'poisson':
        return synth.PoissonSource(args.rate_pps, args.packet_size)
    if args.alpha is not None and args.hurst is not None:
        raise ValueError('Give at most one of --alpha and --hurst.')
    if args.hurst is not None:
        alpha = synth.alpha_for_hurst(args.hurst)
    else:
        alpha = 1.5 if args.alpha is None else args.alpha
    if not alpha > 1:
        raise ValueError(f'alpha must exceed 1 (the mean on period does not converge otherwise), got {alpha!r}')
    params = synth.OnOffParams(args.a, alpha, args.x_m, args.lam, args.off_rule)
    return synth.OnOffSource(params, synth.PacketizationParams(args.packet_size, args.server_rate))


#### commands ####

def cmd_generate(args, outputs):
    source = _source_from_args(args)
    if args.cycles is not None:
        if not isinstance(source, synth.OnOffSource):
            raise ValueError('--cycles only applies to the onoff source.')
        fluid = synth.gen_onoff_fluid(source.params, args.cycles, outputs.config.seed)
        trace = synth.packetize(fluid, source.packetization, label=f'onoff-seed{outputs.config.seed}')
        if args.fluid_out:
            synth.save_fluid(fluid, outputs.claim(args.fluid_out))
            outputs.seal(args.fluid_out)
    else:
        trace = source.generate(args.packets, outputs.config.seed)
    save_trace(trace, outputs.claim(args.out))
    outputs.seal(args.out)
    logger.info('wrote %d packets to %s', len(trace), args.out)


def cmd_simulate(args, outputs):
    trace = load_trace(args.trace)
    if args.bandwidth is not None:
        bandwidth = args.bandwidth
    else:
        bandwidth = queue_sim.calibrate_bandwidth(trace, args.utilization)
    outputs.config.options['resolved_bandwidth'] = repr(bandwidth)
    if args.timeline:
        stats, timeline = queue_sim.simulate_packet_queue(trace, bandwidth, emit_timeline=True)
        queue_sim.save_timeline(timeline, outputs.claim(args.timeline))
        outputs.seal(args.timeline)
    else:
        stats = queue_sim.simulate_packet_queue(trace, bandwidth)
    if args.out:
        queue_sim.save_stats(stats, outputs.claim(args.out), with_bytes=args.mean_bytes)
        outputs.seal(args.out)
    else:
        stats.show()


def cmd_shuffle(args, outputs):
    trace = load_trace(args.trace)
    trace.require_non_empty()
    plan = reorder.plan_block_shuffle(len(trace), args.blocksize, outputs.config.seed)
    save_trace(reorder.apply_plan(trace, plan), outputs.claim(args.out))
    outputs.seal(args.out)
    if args.plan_out:
        reorder.save_plan(plan, outputs.claim(args.plan_out))
        outputs.seal(args.plan_out)


def _finish_sweep(result, args, outputs):
    if args.out:
        experiments.save_sweep(result, outputs.claim(args.out))
        experiments.save_sweep_config(result, args.out + '.meta', **outputs.config.sidecar(outputs.argv))
    else:
        result.show()


def cmd_sweep_samples(args, outputs):
    if args.trace:
        source = load_trace(args.trace)
    else:
        source = _source_from_args(args)
    result = experiments.sweep_sample_size(source, args.sizes, args.reps, args.utilization,
                                           outputs.config.seed, args.jobs)
    _finish_sweep(result, args, outputs)


def cmd_sweep_blocks(args, outputs):
    trace = load_trace(args.trace)
    result = experiments.sweep_blocksize(trace, args.blocksizes, args.reps, args.utilization,
                                         outputs.config.seed, args.jobs)
    _finish_sweep(result, args, outputs)


def cmd_sweep_load(args, outputs):
    trace = load_trace(args.trace)
    _finish_sweep(experiments.sweep_utilization(trace, args.utilizations), args, outputs)


def cmd_hurst(args, outputs):
    trace = load_trace(args.trace)
    estimate = experiments.hurst_variance_time(trace, args.base_bin, args.levels)
    if args.out:
        experiments.save_hurst(estimate, outputs.claim(args.out))
        outputs.seal(args.out)
    else:
        estimate.show()


def cmd_calibrate(args, outputs):
    trace = load_trace(args.trace)
    bandwidth = queue_sim.calibrate_bandwidth(trace, args.utilization)
    if args.out:
        with open(outputs.claim(args.out), 'w', encoding='utf-8') as f:
            f.write('bandwidth_Bps,utilization\n')
            f.write(f'{bandwidth!r},{args.utilization!r}\n')
        outputs.seal(args.out)
    print(repr(bandwidth))


#### parser ####

def build_parser():
    parser = argparse.ArgumentParser(prog='qlab', description='Queueing laboratory for packet traces and on/off traffic.')
    parser.add_argument('--version', action='version', version=f'%(prog)s {VERSION}')
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    parser.add_argument('-q', '--quiet', action='store_true', help='warnings only')
    sub = parser.add_subparsers(dest='command', required=True)

    def seed_arg(p):
        p.add_argument('--seed', type=int, default=None, help=f'PRNG seed. Def: ${SEED_ENV} or 0')

    def jobs_arg(p):
        p.add_argument('--jobs', type=int, default=1, help='concurrent replications. Def: 1')

    p = sub.add_parser('generate', help='write a synthetic trace')
    _add_source_args(p)
    size = p.add_mutually_exclusive_group(required=True)
    size.add_argument('--packets', type=int, help='exact number of packets')
    size.add_argument('--cycles', type=int, help='number of on/off cycles (onoff only)')
    p.add_argument('--fluid-out', help='also write the on_s,off_s cycles (with --cycles)')
    p.add_argument('--out', required=True)
    seed_arg(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser('simulate', help='queue a trace')
    p.add_argument('trace')
    rate = p.add_mutually_exclusive_group(required=True)
    rate.add_argument('--bandwidth', type=float, help='bytes/second')
    rate.add_argument('--utilization', type=float, help='target utilization in (0,1)')
    p.add_argument('--timeline', help='write time_s,queue_len events here')
    p.add_argument('--out', help='stats CSV. Def: print a table')
    p.add_argument('--mean-bytes', action='store_true', help='add a mean_bytes column to the stats CSV')
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('shuffle', help='block-shuffle a trace')
    p.add_argument('trace')
    p.add_argument('--blocksize', '-B', type=int, required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--plan-out', help='write the block permutation here')
    seed_arg(p)
    p.set_defaults(func=cmd_shuffle)

    p = sub.add_parser('sweep-samples', help='mean queue against sample size')
    p.add_argument('trace', nargs='?', help='trace-csv; omit to use the generator options')
    _add_source_args(p)
    p.add_argument('--sizes', type=int, nargs='+', default=list(experiments.DEFAULT_SAMPLE_SIZES))
    p.add_argument('--reps', type=int, default=experiments.DEFAULT_N_REPS)
    p.add_argument('--utilization', type=float, default=0.5)
    p.add_argument('--out')
    seed_arg(p)
    jobs_arg(p)
    p.set_defaults(func=cmd_sweep_samples)

    p = sub.add_parser('sweep-blocks', help='mean queue against shuffle blocksize')
    p.add_argument('trace')
    p.add_argument('--blocksizes', type=int, nargs='+', default=list(experiments.DEFAULT_BLOCKSIZES))
    p.add_argument('--reps', type=int, default=experiments.DEFAULT_N_REPS)
    p.add_argument('--utilization', type=float, default=0.5)
    p.add_argument('--out')
    seed_arg(p)
    jobs_arg(p)
    p.set_defaults(func=cmd_sweep_blocks)

    p = sub.add_parser('sweep-load', help='mean queue of the whole trace against utilization')
    p.add_argument('trace')
    p.add_argument('--utilizations', type=float, nargs='+', default=list(experiments.DEFAULT_UTILIZATIONS))
    p.add_argument('--out')
    p.set_defaults(func=cmd_sweep_load)

    p = sub.add_parser('hurst', help='variance-time Hurst estimate')
    p.add_argument('trace')
    p.add_argument('--base-bin', type=float, required=True, help='seconds')
    p.add_argument('--levels', type=int, nargs='+', default=list(experiments.DEFAULT_HURST_LEVELS))
    p.add_argument('--out')
    p.set_defaults(func=cmd_hurst)

    p = sub.add_parser('calibrate', help='bandwidth giving a target utilization')
    p.add_argument('trace')
    p.add_argument('--utilization', type=float, required=True)
    p.add_argument('--out')
    p.set_defaults(func=cmd_calibrate)

    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s %(name)s %(levelname)s %(message)s', stream=sys.stderr)

    outputs = None
    try:
        seed = resolve_seed(getattr(args, 'seed', None))
        options = {k: v for k, v in vars(args).items() if k not in ('func', 'command', 'seed', 'verbose', 'quiet')}
        config = RunConfig(args.command, seed, options)
        outputs = Outputs(config, argv)
        args.func(args, outputs)
    except (ValueError, OSError) as e:
        if outputs is not None:
            outputs.discard()
        print(f'error: {e}', file=sys.stderr)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())

'''
Block shuffling: cut a trace into blocks of B packets and put the blocks in random order.
Structure inside a block (sizes and gaps) is kept, so no correlation survives beyond B packets.
'''
from __future__ import annotations
import logging
import math
from dataclasses import dataclass

import numpy as np

from misc import InsufficientDataError, check_positive, make_rng
from trace_model import Trace, bin_counts

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BlockShufflePlan:
    '''
    blocksize -> packets per block (the last block may be shorter)
    seed -> PRNG seed the permutation was drawn with
    n_blocks -> ceil(n_packets / blocksize)
    permutation -> permutation[k] is the original index of the block placed k-th
    '''
    blocksize: int
    seed: int
    n_blocks: int
    permutation: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.permutation, dtype=np.int64)
        if perm.size != self.n_blocks or not np.array_equal(np.sort(perm), np.arange(self.n_blocks)):
            raise ValueError(f'permutation is not a bijection on {self.n_blocks} blocks.')
        perm.flags.writeable = False
        object.__setattr__(self, 'permutation', perm)

    def packet_order(self, n_packets):
        '''
        Original packet indices in shuffled order.
        '''
        B = self.blocksize
        starts = self.permutation * B
        lengths = np.minimum(starts + B, n_packets) - starts
        offsets = np.cumsum(lengths) - lengths
        return np.repeat(starts, lengths) + (np.arange(n_packets) - np.repeat(offsets, lengths))


def plan_block_shuffle(n_packets, blocksize, seed):
    '''
    Draw the block permutation for a trace of n_packets.
    A single block is never permuted.
    '''
    if int(blocksize) != blocksize or blocksize < 1:
        raise ValueError(f'Blocksize must be an integer >= 1, got {blocksize!r}')
    if n_packets < 1:
        raise ValueError('Cannot shuffle an empty trace.')
    n_blocks = math.ceil(n_packets / blocksize)
    if n_blocks == 1:
        perm = np.zeros(1, dtype=np.int64)
    else:
        # Generator.permutation is a Fisher-Yates shuffle
        perm = make_rng(seed).permutation(n_blocks)
    return BlockShufflePlan(int(blocksize), seed, n_blocks, perm)


def apply_plan(trace, plan):
    '''
    Rebuild a trace from the planned block order.

    Every packet carries the gap to its predecessor. The packet landing first gets gap 0;
    the gap it carried moves to the old first packet, whose gap was the synthetic 0.
    This keeps the multiset of real gaps and the total duration.
    '''
    n = len(trace)
    label = f'{trace.label}|shuffle(B={plan.blocksize},seed={plan.seed})'
    if plan.n_blocks == 1:
        return trace.rebase(label)
    order = plan.packet_order(n)
    deltas = trace.deltas()[order]
    sizes = trace.sizes[order]
    old_first = int(np.flatnonzero(order == 0)[0])
    if old_first:
        deltas[old_first] = deltas[0]
        deltas[0] = 0.0
    return Trace(np.cumsum(deltas), sizes, label)


def block_shuffle(trace, blocksize, seed):
    '''
    Shuffle trace in blocks of blocksize packets with the given seed. Output starts at t = 0.
    '''
    trace.require_non_empty()
    plan = plan_block_shuffle(len(trace), blocksize, seed)
    logger.debug('shuffling %d packets in %d blocks of %d', len(trace), plan.n_blocks, plan.blocksize)
    return apply_plan(trace, plan)


def save_plan(plan, path):
    '''
    Provenance sidecar for a shuffle: one row per output position.
    '''
    with open(path, 'w', encoding='utf-8') as f:
        f.write('blocksize,seed,position,block\n')
        for position, block in enumerate(plan.permutation.tolist()):
            f.write(f'{plan.blocksize},{plan.seed},{position},{block}\n')


def autocovariance_check(trace, bin_s, max_lag):
    '''
    Sample autocovariance of per-bin packet counts for lags 0..max_lag (biased estimator, divisor n),
    so the lag-0 entry is the variance of the counts.

    The trace must span at least 10 * max_lag bins.
    '''
    check_positive('bin', bin_s)
    if int(max_lag) != max_lag or max_lag < 0:
        raise ValueError(f'max_lag must be a non-negative integer, got {max_lag!r}')
    trace.require_non_empty()
    if trace.duration < max(max_lag, 1) * bin_s * 10:
        raise InsufficientDataError(f'Trace spans {trace.duration!r} s; need {max(max_lag, 1) * bin_s * 10!r} s '
                                    f'for {max_lag} lags of {bin_s!r} s.')
    counts = bin_counts(trace, bin_s).astype(np.float64)
    x = counts - counts.mean()
    n = x.size
    return np.array([np.dot(x[:n - k], x[k:]) / n for k in range(int(max_lag) + 1)])


def autocovariance_stderr(acov, n_bins):
    '''
    Approximate standard error of a lag-k autocovariance under independence: variance / sqrt(n).
    '''
    return acov[0] / math.sqrt(n_bins)

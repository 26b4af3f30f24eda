"""Batch and overlap generation for the multi-batch and fault-tolerant settings.

Two multi-batch strategies are provided plus a simulated distributed mode:

* strategy 1: the dataset is shuffled once per epoch and consecutive batches
  are cut from the permutation so that each batch shares a forced overlap
  block with its neighbours (no extra gradient evaluations needed).
* strategy 2: every batch is an independent uniform draw; the overlap is
  subsampled from the batch and costs one extra overlap-gradient evaluation.
* fault mode: the dataset is sharded across B nodes; each node responds with
  probability 1-p, the batch is the union of responding shards, and the
  overlap is the union of shards responding in two consecutive iterations.

All draws come from a single named counter-based generator so a fixed seed
replays the exact plan stream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UsageError

_EMPTY = np.zeros(0, dtype=np.int64)


class SeededRng:
    """Deterministic random stream (Philox 4x64 counter-based generator).

    ``draws`` counts how many draw calls have been made; together with the
    seed it identifies the stream position for replay and bug reports.
    """

    algorithm = "philox4x64"

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.draws = 0
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def permutation(self, n: int) -> np.ndarray:
        self.draws += 1
        return self._gen.permutation(n).astype(np.int64)

    def choice(self, pool, size: int) -> np.ndarray:
        """Uniform draw of ``size`` elements without replacement."""
        self.draws += 1
        out = self._gen.choice(pool, size=size, replace=False)
        return np.ascontiguousarray(out, dtype=np.int64)

    def uniform(self, size=None):
        self.draws += 1
        return self._gen.random(size)

    def integers(self, high: int, size=None):
        self.draws += 1
        return self._gen.integers(0, high, size=size)


@dataclass(frozen=True)
class SamplePlan:
    """Index sets for one iteration.

    S is the batch; O_prev is the part shared with the previous batch (the
    set both curvature-pair gradients are evaluated on); O_next is the part
    reserved for the pair with the next batch, when known at draw time.
    """

    S: np.ndarray
    O_prev: np.ndarray
    O_next: np.ndarray
    mode: str
    responders: tuple = ()
    part_sizes: tuple = ()  # fault mode: shard slice lengths within S
    redraws: int = 0


def strategy_batch_sizes(n: int, r: float, o: float) -> tuple:
    """Validated (|S|, |O|) for the multi-batch strategies."""
    if not 0 < r <= 1:
        raise ConfigurationError(f"batch fraction r={r} outside (0, 1]")
    if not 0 < o < 1:
        raise ConfigurationError(f"overlap fraction o={o} outside (0, 1)")
    if o * r * n < 1:
        raise ConfigurationError(
            f"overlap empty: o*r*n = {o * r * n:.3g} < 1 (n={n}, r={r}, o={o})"
        )
    s_size = math.ceil(r * n)
    o_size = max(1, math.ceil(o * s_size))
    return s_size, o_size


def plan_strategy1_epoch(n: int, r: float, o: float, rng: SeededRng) -> list:
    """One epoch of forced-overlap batches cut from a fresh permutation.

    Batches advance through the permutation with stride |S| - |O|, so the
    tail block of each batch is exactly the head block of the next one. The
    final batch is truncated if needed so the epoch covers every index; the
    epoch ends without a planned overlap into the next (reshuffled) epoch.
    """
    s_size, o_size = strategy_batch_sizes(n, r, o)
    if 2 * o_size >= s_size:
        raise ConfigurationError(
            f"overlap too large for strategy 1: 2*{o_size} >= |S|={s_size}"
        )
    perm = rng.permutation(n)

    if s_size == n:
        # full-batch special case: every batch is the whole (re)shuffled
        # dataset, so any designated overlap block is shared with the next
        # batch; one full batch per epoch
        return [SamplePlan(S=perm, O_prev=_EMPTY, O_next=perm[-o_size:],
                           mode="strategy1")]

    stride = s_size - o_size
    starts = []
    a = 0
    while a + s_size <= n:
        starts.append(a)
        a += stride
    coverage = starts[-1] + s_size
    plans = []
    for i, a in enumerate(starts):
        S = perm[a:a + s_size]
        o_prev = S[:o_size] if i > 0 else _EMPTY
        last = (i == len(starts) - 1) and coverage == n
        o_next = _EMPTY if last else S[-o_size:]
        plans.append(SamplePlan(S=S, O_prev=o_prev, O_next=o_next,
                                mode="strategy1"))
    if coverage < n:
        # truncated final batch: reuses the pending overlap block and runs
        # to the end of the permutation so every index is used this epoch
        S = perm[coverage - o_size:n]
        plans.append(SamplePlan(S=S, O_prev=S[:o_size], O_next=_EMPTY,
                                mode="strategy1"))
    return plans


def plan_strategy2(n: int, r: float, o: float, rng: SeededRng) -> SamplePlan:
    """Independent uniform batch with a subsampled overlap block."""
    s_size, o_size = strategy_batch_sizes(n, r, o)
    S = rng.choice(n, s_size)
    O_next = rng.choice(S, o_size)
    return SamplePlan(S=S, O_prev=_EMPTY, O_next=O_next, mode="strategy2")


@dataclass(frozen=True)
class NodeLayout:
    """Balanced partition of the example indices across B nodes."""

    shards: tuple
    fail_prob: float

    def __post_init__(self):
        if not 0 <= self.fail_prob < 1:
            raise ConfigurationError(f"failure probability {self.fail_prob} outside [0, 1)")
        sizes = [s.size for s in self.shards]
        if max(sizes) - min(sizes) > 1:
            raise ConfigurationError("shard sizes differ by more than 1")
        total = np.concatenate(self.shards)
        n = total.size
        if np.unique(total).size != n:
            raise ConfigurationError("shards are not disjoint")

    @property
    def node_count(self) -> int:
        return len(self.shards)

    @property
    def n(self) -> int:
        return sum(s.size for s in self.shards)


def _split_balanced(order: np.ndarray, nodes: int) -> tuple:
    n = order.size
    base, extra = divmod(n, nodes)
    shards, pos = [], 0
    for i in range(nodes):
        size = base + (1 if i < extra else 0)
        shards.append(np.ascontiguousarray(order[pos:pos + size], dtype=np.int64))
        pos += size
    return tuple(shards)


def make_layout(n: int, nodes: int, fail_prob: float,
                rng: SeededRng | None = None) -> NodeLayout:
    """Shard {0..n-1} across ``nodes``; random assignment when rng is given."""
    if nodes < 1 or nodes > n:
        raise ConfigurationError(f"node count {nodes} outside [1, n={n}]")
    order = rng.permutation(n) if rng is not None else np.arange(n, dtype=np.int64)
    return NodeLayout(shards=_split_balanced(order, nodes), fail_prob=fail_prob)


def reshard(layout: NodeLayout, rng: SeededRng) -> NodeLayout:
    """Shuffle and redistribute the data across the same number of nodes."""
    order = rng.permutation(layout.n)
    return NodeLayout(shards=_split_balanced(order, layout.node_count),
                      fail_prob=layout.fail_prob)


def union_of_shards(layout: NodeLayout, node_ids) -> np.ndarray:
    ids = sorted(node_ids)
    if not ids:
        return _EMPTY
    return np.concatenate([layout.shards[j] for j in ids])


def plan_fault(layout: NodeLayout, rng: SeededRng,
               prev_responders=None) -> tuple:
    """Draw the responding node set and the resulting batch.

    Each node independently responds with probability 1 - p. An all-failed
    draw is redrawn (and counted). The overlap with the previous iteration
    is the union of shards whose nodes responded both times.
    """
    p = layout.fail_prob
    redraws = 0
    while True:
        responded = rng.uniform(layout.node_count) >= p
        if responded.any():
            break
        redraws += 1
    J = tuple(int(j) for j in np.nonzero(responded)[0])
    if prev_responders is None:
        o_prev = _EMPTY
    else:
        o_prev = union_of_shards(layout, set(prev_responders) & set(J))
    plan = SamplePlan(S=union_of_shards(layout, J), O_prev=o_prev,
                      O_next=_EMPTY, mode="fault", responders=J,
                      part_sizes=tuple(layout.shards[j].size for j in J),
                      redraws=redraws)
    return J, plan


# ----------------------------------------------------------------------
# stateful plan sources feeding the driver loop
# ----------------------------------------------------------------------
class Strategy1Source:
    """Streams strategy-1 plans, reshuffling after each pass over the data."""

    def __init__(self, n: int, r: float, o: float, rng: SeededRng):
        strategy_batch_sizes(n, r, o)  # validate eagerly
        self.n, self.r, self.o, self.rng = n, r, o, rng
        self._queue = []
        self._full_batch = math.ceil(r * n) == n
        self._pending_overlap = None

    def next_plan(self) -> SamplePlan:
        if not self._queue:
            self._queue = plan_strategy1_epoch(self.n, self.r, self.o, self.rng)
            if self._full_batch and self._pending_overlap is not None:
                # with S = whole dataset the previous overlap block is still
                # inside the new batch, so the pair chain continues across
                # the reshuffle; redraw O_next disjoint from it
                plan = self._queue[0]
                o_size = plan.O_next.size
                o_prev = self._pending_overlap
                outside = np.setdiff1d(plan.S, o_prev, assume_unique=True)
                o_next = self.rng.choice(outside, o_size)
                self._queue[0] = SamplePlan(S=plan.S, O_prev=o_prev,
                                            O_next=o_next, mode="strategy1")
        plan = self._queue.pop(0)
        self._pending_overlap = plan.O_next if plan.O_next.size else None
        return plan

    def epoch_boundary(self):
        pass


class Strategy2Source:
    """Streams independent uniform batches; stitches O_next into the next
    plan's O_prev so the driver sees a uniform interface."""

    def __init__(self, n: int, r: float, o: float, rng: SeededRng):
        strategy_batch_sizes(n, r, o)
        self.n, self.r, self.o, self.rng = n, r, o, rng
        self._prev_overlap = None

    def next_plan(self) -> SamplePlan:
        plan = plan_strategy2(self.n, self.r, self.o, self.rng)
        if self._prev_overlap is not None:
            plan = SamplePlan(S=plan.S, O_prev=self._prev_overlap,
                              O_next=plan.O_next, mode="strategy2")
        self._prev_overlap = plan.O_next
        return plan

    def epoch_boundary(self):
        pass


class FaultSource:
    """Streams fault-mode plans; optionally reshards at epoch boundaries."""

    def __init__(self, layout: NodeLayout, rng: SeededRng,
                 reshard_each_epoch: bool = False):
        self.layout = layout
        self.rng = rng
        self.reshard_each_epoch = reshard_each_epoch
        self._prev_responders = None

    def next_plan(self) -> SamplePlan:
        J, plan = plan_fault(self.layout, self.rng, self._prev_responders)
        self._prev_responders = J
        return plan

    def epoch_boundary(self):
        if self.reshard_each_epoch:
            self.layout = reshard(self.layout, self.rng)
            # shard identities changed; the next overlap is undefined
            self._prev_responders = None


def make_plan_source(mode: str, n: int, rng: SeededRng, *, r: float = 0.0,
                     o: float = 0.0, nodes: int = 0, fail_prob: float = 0.0,
                     reshard_each_epoch: bool = False):
    if mode == "strategy1":
        return Strategy1Source(n, r, o, rng)
    if mode == "strategy2":
        return Strategy2Source(n, r, o, rng)
    if mode == "fault":
        layout = make_layout(n, nodes, fail_prob, rng)
        return FaultSource(layout, rng, reshard_each_epoch)
    raise UsageError(f"unknown sampling mode {mode!r}")

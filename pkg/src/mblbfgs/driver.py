"""The multi-batch optimization loop: step schedules, iterate updates,
overlap-gradient bookkeeping, the four comparison methods, and the
curvature diagnostics.

Methods:

* ``robust_lbfgs``       -- curvature pairs from gradient differences on the
                            overlap of consecutive batches (same samples at
                            both iterates).
* ``inconsistent_lbfgs`` -- baseline whose pairs difference the batch
                            gradients themselves, computed on different
                            samples.
* ``multibatch_gd``      -- identity inverse Hessian (plain batch gradient
                            steps).
* ``serial_sgd``         -- one uniformly drawn sample per iteration.

Epoch accounting charges |S_k|/n per batch-gradient evaluation, plus
|O_k|/n in strategy 2 where the overlap gradient at the new iterate is an
extra evaluation. In strategy 1 and fault mode the overlap gradients are
recombinations of per-part sums that were already evaluated, so they are
free. Full-gradient trace evaluation is metrology and is never charged.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .engine import LbfgsMemory
from .errors import ConfigurationError, NumericError, UsageError
from .linalg import Vector, dot, norm
from .objectives import Objective
from .sampling import SamplePlan, SeededRng, make_plan_source

METHODS = ("robust_lbfgs", "inconsistent_lbfgs", "multibatch_gd", "serial_sgd")
MODES = ("strategy1", "strategy2", "fault")


@dataclass(frozen=True)
class StepSchedule:
    """Step-length schedule: constant alpha, diminishing beta/(k+1), or the
    horizon-scaled constant c/sqrt(tau)."""

    kind: str
    value: float
    tau: int | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "diminishing", "sqrt_horizon"):
            raise ConfigurationError(f"unknown schedule kind {self.kind!r}")
        if self.value <= 0:
            raise ConfigurationError("schedule parameter must be positive")
        if self.kind == "sqrt_horizon" and (self.tau is None or self.tau < 1):
            raise ConfigurationError("sqrt_horizon schedule needs tau >= 1")

    def alpha_at(self, k: int) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "diminishing":
            return self.value / (k + 1)
        return self.value / math.sqrt(self.tau)

    def label(self) -> str:
        if self.kind == "constant":
            return f"{self.value:g}"
        if self.kind == "diminishing":
            return f"dim{self.value:g}"
        return f"sqrt{self.value:g}-{self.tau}"


def constant(alpha: float) -> StepSchedule:
    return StepSchedule("constant", alpha)


def diminishing(beta: float) -> StepSchedule:
    return StepSchedule("diminishing", beta)


def sqrt_horizon(c: float, tau: int) -> StepSchedule:
    return StepSchedule("sqrt_horizon", c, tau)


def schedule_alpha(schedule: StepSchedule, k: int) -> float:
    """Step length at iteration k."""
    if k < 0:
        raise UsageError("iteration index must be >= 0")
    return schedule.alpha_at(k)


@dataclass
class RunConfig:
    """Everything that pins down one optimization run."""

    method: str = "robust_lbfgs"
    mode: str = "strategy1"
    batch_frac: float = 0.05
    overlap_frac: float = 0.2
    nodes: int = 16
    fail_prob: float = 0.0
    schedule: StepSchedule = field(default_factory=lambda: constant(0.1))
    memory: int = 10
    cautious_eps: float = 1e-4
    scaling: object = "bb"
    epochs: float = 10.0
    seed: int = 0
    reshard_each_epoch: bool = False
    trace_stride: int | None = None
    max_iterations: int | None = None
    grad_tol: float | None = None
    divergence_factor: float = 1e6
    w0: object = None

    def validate(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown sampling mode {self.mode!r}")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.mode == "fault" and not 0 <= self.fail_prob < 1:
            raise ConfigurationError("failure probability must be in [0, 1)")

    def effective_stride(self, n: int) -> int:
        if self.trace_stride is not None:
            return max(1, int(self.trace_stride))
        if self.method == "serial_sgd":
            return n
        frac = (1.0 - self.fail_prob) if self.mode == "fault" else self.batch_frac
        return max(1, math.ceil(1.0 / frac))


@dataclass
class TraceRecord:
    k: int
    epoch: float
    grad_norm: float
    subset_loss: float
    full_loss: float
    train_acc: float
    pair_accepted: int
    sample_size: int
    overlap_size: int
    redraws: int
    wallclock: float


@dataclass
class RunTrace:
    """Per-iteration records of one run plus its terminal state."""

    records: list
    aborted: str | None
    final_w: Vector
    final_memory: LbfgsMemory | None
    config: RunConfig

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)

    @property
    def final_record(self) -> TraceRecord:
        return self.records[-1]


# ----------------------------------------------------------------------
# standalone step and pair operations, also used directly by tests
# ----------------------------------------------------------------------
def take_step(w: Vector, memory: LbfgsMemory, g: Vector, alpha: float,
              identity_hessian: bool = False) -> Vector:
    """w + alpha * p with p from the two-loop recursion (or p = -g)."""
    p = -g if identity_hessian else memory.direction(g)
    w_next = w + alpha * p
    if not np.all(np.isfinite(w_next)):
        raise NumericError("step produced a non-finite iterate")
    return w_next


def form_pair(objective: Objective, w_prev: Vector, w_next: Vector,
              overlap) -> tuple:
    """Curvature pair from gradients on the same overlap set at both iterates."""
    overlap = np.asarray(overlap, dtype=np.int64)
    if overlap.size == 0:
        raise UsageError("cannot form a pair on an empty overlap")
    g_prev = objective.eval_subset(w_prev, overlap).gradient
    g_next = objective.eval_subset(w_next, overlap).gradient
    return w_next - w_prev, g_next - g_prev


# ----------------------------------------------------------------------
# per-part batch evaluation
# ----------------------------------------------------------------------
def _plan_parts(plan: SamplePlan):
    """Disjoint (key, indices) parts whose union is the batch."""
    if plan.mode == "strategy1":
        np_part = plan.S[plan.O_prev.size: plan.S.size - plan.O_next.size]
        yield "O_prev", plan.O_prev
        yield "N", np_part
        yield "O_next", plan.O_next
    elif plan.mode == "strategy2":
        yield "O_next", plan.O_next
        yield "rest", np.setdiff1d(plan.S, plan.O_next, assume_unique=True)
    else:  # fault: S is the concatenation of the responding nodes' shards
        pos = 0
        for j, size in zip(plan.responders, plan.part_sizes):
            yield ("node", j), plan.S[pos:pos + size]
            pos += size


class _BatchEval:
    """Gradient/loss sums per part of one batch at one iterate."""

    def __init__(self):
        self.parts = {}  # key -> (grad_sum, loss_sum, count)

    def combine(self, objective: Objective, w: Vector, keys=None) -> tuple:
        """Average gradient and loss over the listed parts (all by default),
        with the regularization term added once."""
        keys = list(self.parts) if keys is None else [k for k in keys if k in self.parts]
        count = sum(self.parts[k][2] for k in keys)
        grad = np.zeros_like(w)
        loss = 0.0
        for k in keys:
            gs, ls, _ = self.parts[k]
            grad += gs
            loss += ls
        grad = grad / count + objective.sigma * w
        loss = loss / count + 0.5 * objective.sigma * float(np.dot(w, w))
        return grad, loss


def _eval_parts(objective: Objective, w: Vector, plan: SamplePlan,
                ledger, tag) -> _BatchEval:
    be = _BatchEval()
    for key, idx in _plan_parts(plan):
        if idx.size == 0:
            continue
        gs, ls = objective.eval_sums(w, idx)
        be.parts[key] = (gs, ls, int(idx.size))
        if ledger is not None:
            ledger.append((tag, key, idx))
    return be


# ----------------------------------------------------------------------
# the driver loop
# ----------------------------------------------------------------------
def run(config: RunConfig, objective: Objective, eval_ledger=None,
        pair_log=None) -> RunTrace:
    """Execute one optimization run and return its trace.

    ``eval_ledger``, when a list, collects (iterate, part, indices) for every
    algorithmic gradient evaluation. ``pair_log`` collects
    (k, y's, s's, y'y, accepted) for every candidate curvature pair.
    """
    config.validate()
    if config.method == "serial_sgd":
        return _run_sgd(config, objective)

    n, d = objective.n, objective.d
    rng = SeededRng(config.seed)
    source = make_plan_source(
        config.mode, n, rng, r=config.batch_frac, o=config.overlap_frac,
        nodes=config.nodes, fail_prob=config.fail_prob,
        reshard_each_epoch=config.reshard_each_epoch,
    )
    memory = LbfgsMemory(config.memory, config.scaling, config.cautious_eps)
    stride = config.effective_stride(n)
    w = np.zeros(d) if config.w0 is None else np.asarray(config.w0, dtype=np.float64).copy()

    records: list[TraceRecord] = []
    aborted = None
    t0 = time.perf_counter()

    plan = source.next_plan()
    parts = _eval_parts(objective, w, plan, eval_ledger, 0)
    epoch = plan.S.size / n
    g_S, loss_S = parts.combine(objective, w)

    full = objective.eval_full(w)
    grad_norm = norm(full.gradient)
    full_loss, train_acc = full.loss, objective.accuracy(w)
    divergence_limit = config.divergence_factor * max(abs(full_loss), 1e-12)

    records.append(TraceRecord(
        k=0, epoch=epoch, grad_norm=grad_norm, subset_loss=loss_S,
        full_loss=full_loss, train_acc=train_acc, pair_accepted=0,
        sample_size=int(plan.S.size), overlap_size=int(plan.O_prev.size),
        redraws=plan.redraws, wallclock=0.0))

    if config.grad_tol is not None and grad_norm <= config.grad_tol:
        return RunTrace(records, None, w, memory, config)

    k = 0
    epochs_seen = 0
    use_memory = config.method in ("robust_lbfgs", "inconsistent_lbfgs")
    while epoch < config.epochs and (config.max_iterations is None
                                     or k < config.max_iterations):
        alpha = schedule_alpha(config.schedule, k)
        try:
            w_next = take_step(w, memory, g_S, alpha,
                               identity_hessian=config.method == "multibatch_gd")
        except NumericError as exc:
            aborted = f"numeric: {exc}"
            break

        if math.floor(epoch) > epochs_seen:
            epochs_seen = math.floor(epoch)
            source.epoch_boundary()
        plan_next = source.next_plan()
        try:
            parts_next = _eval_parts(objective, w_next, plan_next, eval_ledger, k + 1)
        except NumericError as exc:
            aborted = f"numeric: {exc}"
            break
        epoch += plan_next.S.size / n
        g_S_next, loss_S_next = parts_next.combine(objective, w_next)

        pair_accepted = 0
        overlap = plan_next.O_prev
        if use_memory:
            s = w_next - w
            y = None
            if not np.any(s):
                pass  # zero step: skip the pair entirely
            elif config.method == "inconsistent_lbfgs":
                # gradient difference across different samples
                y = g_S_next - g_S
            elif overlap.size:
                try:
                    g_over_prev, g_over_next = _overlap_gradients(
                        objective, w, w_next, plan, plan_next, parts,
                        parts_next, config.mode, eval_ledger, k)
                except NumericError as exc:
                    aborted = f"numeric: {exc}"
                    break
                if config.mode == "strategy2":
                    epoch += overlap.size / n  # the extra evaluation
                y = g_over_next - g_over_prev
            if y is not None:
                pair_accepted = int(memory.admit(s, y))
                if pair_log is not None:
                    pair_log.append((k, dot(y, s), dot(s, s), dot(y, y),
                                     bool(pair_accepted)))

        k += 1
        w, g_S, loss_S, plan, parts = w_next, g_S_next, loss_S_next, plan_next, parts_next

        # a blown-up batch loss forces a confirming full evaluation so
        # divergence aborts promptly instead of at the next stride
        if k % stride == 0 or loss_S > divergence_limit:
            try:
                full = objective.eval_full(w)
            except NumericError as exc:
                aborted = f"numeric: {exc}"
                break
            grad_norm = norm(full.gradient)
            full_loss, train_acc = full.loss, objective.accuracy(w)

        records.append(TraceRecord(
            k=k, epoch=epoch, grad_norm=grad_norm, subset_loss=loss_S,
            full_loss=full_loss, train_acc=train_acc,
            pair_accepted=pair_accepted, sample_size=int(plan.S.size),
            overlap_size=int(overlap.size), redraws=plan.redraws,
            wallclock=time.perf_counter() - t0))

        if full_loss > divergence_limit:
            aborted = "divergence"
            break
        if config.grad_tol is not None and grad_norm <= config.grad_tol:
            break

    return RunTrace(records, aborted, w, memory, config)


def _overlap_gradients(objective, w, w_next, plan, plan_next, parts,
                       parts_next, mode, ledger, k):
    """Overlap gradients at both iterates on the same index set O_k."""
    if mode == "strategy1":
        g_prev, _ = parts.combine(objective, w, keys=["O_next"])
        g_next, _ = parts_next.combine(objective, w_next, keys=["O_prev"])
    elif mode == "fault":
        shared = set(plan.responders) & set(plan_next.responders)
        keys = [("node", j) for j in sorted(shared)]
        g_prev, _ = parts.combine(objective, w, keys=keys)
        g_next, _ = parts_next.combine(objective, w_next, keys=keys)
    else:  # strategy 2: O_k is a part of S_k but needs a fresh evaluation
        overlap = plan_next.O_prev
        g_prev, _ = parts.combine(objective, w, keys=["O_next"])
        gs, _ = objective.eval_sums(w_next, overlap)
        if ledger is not None:
            ledger.append((k + 1, "O_extra", overlap))
        g_next = gs / overlap.size + objective.sigma * w_next
    return g_prev, g_next


def _run_sgd(config: RunConfig, objective: Objective) -> RunTrace:
    """Serial SGD baseline: one sample per iteration, no memory."""
    n, d = objective.n, objective.d
    rng = SeededRng(config.seed)
    stride = config.effective_stride(n)
    w = np.zeros(d) if config.w0 is None else np.asarray(config.w0, dtype=np.float64).copy()
    records: list[TraceRecord] = []
    aborted = None
    t0 = time.perf_counter()

    idx = np.array([rng.integers(n)], dtype=np.int64)
    sg = objective.eval_subset(w, idx)
    epoch = 1.0 / n
    full = objective.eval_full(w)
    grad_norm = norm(full.gradient)
    full_loss, train_acc = full.loss, objective.accuracy(w)
    divergence_limit = config.divergence_factor * max(abs(full_loss), 1e-12)
    records.append(TraceRecord(
        k=0, epoch=epoch, grad_norm=grad_norm, subset_loss=sg.loss,
        full_loss=full_loss, train_acc=train_acc, pair_accepted=0,
        sample_size=1, overlap_size=0, redraws=0, wallclock=0.0))

    k = 0
    while epoch < config.epochs and (config.max_iterations is None
                                     or k < config.max_iterations):
        alpha = schedule_alpha(config.schedule, k)
        w = w - alpha * sg.gradient
        if not np.all(np.isfinite(w)):
            aborted = "nonfinite-iterate"
            break
        idx = np.array([rng.integers(n)], dtype=np.int64)
        try:
            sg = objective.eval_subset(w, idx)
        except NumericError as exc:
            aborted = f"numeric: {exc}"
            break
        epoch += 1.0 / n
        k += 1
        if k % stride == 0:
            full = objective.eval_full(w)
            grad_norm = norm(full.gradient)
            full_loss, train_acc = full.loss, objective.accuracy(w)
        records.append(TraceRecord(
            k=k, epoch=epoch, grad_norm=grad_norm, subset_loss=sg.loss,
            full_loss=full_loss, train_acc=train_acc, pair_accepted=0,
            sample_size=1, overlap_size=0, redraws=0,
            wallclock=time.perf_counter() - t0))
        if full_loss > divergence_limit:
            aborted = "divergence"
            break
    return RunTrace(records, aborted, w, None, config)


# ----------------------------------------------------------------------
# curvature diagnostics
# ----------------------------------------------------------------------
@dataclass
class CurvatureDiagnostic:
    """One trial's agreement between the subsampled and true curvature
    vectors: their cosine plus quartiles of the componentwise ratio."""

    batch_size: int
    cosine: float
    ratio_median: float
    ratio_lower_q: float
    ratio_upper_q: float


def curvature_diagnostics(objective: Objective, w: Vector, batch_sizes,
                          trials: int, rng: SeededRng,
                          probe_step: float = 0.01) -> tuple:
    """Compare subsampled curvature vectors against the full-batch one.

    Takes a small gradient step from ``w``, computes the true gradient
    difference y_d between the two points, then for every batch size draws
    ``trials`` random subsets and computes the same difference y_s on each
    subset. Returns (diagnostics, discarded) where ``discarded`` counts
    zero-norm trials per batch size.
    """
    full0 = objective.eval_full(w)
    w2 = w - probe_step * full0.gradient
    if np.array_equal(w2, w):
        raise UsageError("probe step too small: iterates coincide")
    full1 = objective.eval_full(w2)
    y_d = full1.gradient - full0.gradient
    nd = norm(y_d)
    if nd == 0.0:
        raise UsageError("true curvature vector is zero at this point")
    mask = y_d != 0

    out, discarded = [], {}
    for b in batch_sizes:
        b = int(b)
        if not 1 <= b <= objective.n:
            raise UsageError(f"batch size {b} outside [1, n]")
        for _ in range(trials):
            idx = rng.choice(objective.n, b)
            g0 = objective.eval_subset(w, idx).gradient
            g1 = objective.eval_subset(w2, idx).gradient
            y_s = g1 - g0
            ns = norm(y_s)
            if ns == 0.0:
                discarded[b] = discarded.get(b, 0) + 1
                continue
            cosine = dot(y_s, y_d) / (ns * nd)
            ratios = y_s[mask] / y_d[mask]
            lo, med, hi = np.percentile(ratios, [25.0, 50.0, 75.0])
            out.append(CurvatureDiagnostic(b, cosine, float(med), float(lo),
                                           float(hi)))
    return out, discarded

"""Experiment grids: run every (method, config, seed) cell, write one CSV
trace per cell plus a manifest, deterministically."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .dataio import make_synthetic, parse_libsvm
from .driver import RunConfig, RunTrace, StepSchedule, run
from .errors import ConfigurationError
from .objectives import make_objective

CSV_HEADER = ("k,epoch,grad_norm,subset_loss,full_loss,train_acc,"
              "pair_accepted,sample_size,overlap_size,redraws")

MANIFEST_NAME = "experiment_manifest.txt"


def version_string() -> str:
    return f"mblbfgs-v{__version__}"


@dataclass
class ExperimentSpec:
    """A flat parameter sweep over methods, batch/overlap sizes, step
    lengths, failure probabilities and seeds."""

    dataset_path: str | None = None
    synthetic: tuple | None = None  # (n, d, nnz, margin), seeded by data_seed
    data_seed: int = 0
    objective: str = "logistic_l2"
    sigma: float | None = None
    mode: str = "strategy1"
    methods: list = field(default_factory=lambda: ["robust_lbfgs"])
    batch_fracs: list = field(default_factory=lambda: [0.05])
    overlap_fracs: list = field(default_factory=lambda: [0.2])
    schedules: list = field(default_factory=lambda: [StepSchedule("constant", 0.1)])
    fail_probs: list = field(default_factory=lambda: [0.0])
    seeds: list = field(default_factory=lambda: [0])
    nodes: int = 16
    memory: int = 10
    cautious_eps: float = 1e-4
    scaling: object = "bb"
    epochs: float = 10.0
    trace_stride: int | None = None
    reshard_each_epoch: bool = False
    out_dir: str = "runs"

    def validate(self):
        if self.dataset_path is None and self.synthetic is None:
            raise ConfigurationError("either a dataset path or synthetic parameters are required")
        for name in ("methods", "batch_fracs", "overlap_fracs", "schedules",
                     "fail_probs", "seeds"):
            if not getattr(self, name):
                raise ConfigurationError(f"grid list {name} is empty")

    def load_objective(self):
        if self.dataset_path is not None:
            dataset = parse_libsvm(self.dataset_path)
        else:
            n, d, nnz, margin = self.synthetic
            dataset = make_synthetic(int(n), int(d), int(nnz),
                                     seed=self.data_seed,
                                     separable_margin=float(margin))
        return make_objective(self.objective, dataset, self.sigma)

    def cells(self):
        """The full grid product, in a fixed order."""
        self.validate()
        probs = self.fail_probs if self.mode == "fault" else [0.0]
        for method in self.methods:
            for r in self.batch_fracs:
                for o in self.overlap_fracs:
                    for sched in self.schedules:
                        for p in probs:
                            for seed in self.seeds:
                                yield RunConfig(
                                    method=method, mode=self.mode,
                                    batch_frac=r, overlap_frac=o,
                                    nodes=self.nodes, fail_prob=p,
                                    schedule=sched, memory=self.memory,
                                    cautious_eps=self.cautious_eps,
                                    scaling=self.scaling, epochs=self.epochs,
                                    seed=seed,
                                    reshard_each_epoch=self.reshard_each_epoch,
                                    trace_stride=self.trace_stride,
                                )


def cell_filename(config: RunConfig) -> str:
    return (f"{config.method}_r{config.batch_frac:g}_o{config.overlap_frac:g}"
            f"_a{config.schedule.label()}_p{config.fail_prob:g}"
            f"_s{config.seed}.csv")


def trace_csv_lines(trace: RunTrace):
    yield CSV_HEADER
    for rec in trace.records:
        yield ",".join([
            str(rec.k),
            repr(float(rec.epoch)),
            repr(float(rec.grad_norm)),
            repr(float(rec.subset_loss)),
            repr(float(rec.full_loss)),
            repr(float(rec.train_acc)),
            str(int(rec.pair_accepted)),
            str(int(rec.sample_size)),
            str(int(rec.overlap_size)),
            str(int(rec.redraws)),
        ])


def write_trace_csv(trace: RunTrace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in trace_csv_lines(trace):
            fh.write(line + "\n")


@dataclass
class ExperimentResult:
    out_dir: Path
    manifest_path: Path
    csv_paths: list
    statuses: list  # (filename, status) per cell
    aborted_cells: int


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Run every grid cell, writing its CSV; cell aborts are recorded in the
    manifest and the remaining cells still run."""
    spec.validate()
    out_dir = Path(os.environ.get("MBLBFGS_OUT", spec.out_dir))
    out_dir.mkdir(parents=True, exist_ok=True)
    objective = spec.load_objective()

    csv_paths, statuses, aborted = [], [], 0
    for config in spec.cells():
        name = cell_filename(config)
        trace = run(config, objective)
        write_trace_csv(trace, out_dir / name)
        csv_paths.append(out_dir / name)
        status = "ok" if trace.aborted is None else f"aborted:{trace.aborted}"
        if trace.aborted is not None:
            aborted += 1
        statuses.append((name, status))

    manifest_path = out_dir / MANIFEST_NAME
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {version_string()}\n")
        fh.write("filename,method,mode,r,o,alpha,p,seed,status\n")
        for (name, status), config in zip(statuses, spec.cells()):
            fh.write(",".join([
                name, config.method, config.mode,
                f"{config.batch_frac:g}", f"{config.overlap_frac:g}",
                config.schedule.label(), f"{config.fail_prob:g}",
                str(config.seed), status,
            ]) + "\n")
    return ExperimentResult(out_dir, manifest_path, csv_paths, statuses, aborted)

"""Coordinator-driven training over sharded data and model.

One configuration is M sampling servers (word columns) against the data
rows; segments pair rows with columns along diagonals so no two concurrent
blocks share a row or a column. The coordinator owns the barriers: topic
totals are re-synchronized per segment (or once per iteration in the
relaxed mode), the prior is re-optimized once per iteration, and multiple
configurations reconcile their model copies through aggregation servers
every sync_period iterations.

The degenerate topology (C=1, M=1, deterministic mode) reproduces the
plain sequential sampler byte for byte; tests rely on that equivalence.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import rng as rngmod
from ..alphaopt import AlphaSufficientStats, optimize_alpha
from ..corpus import shuffle_and_partition
from ..counts import Hyperparameters, WordTopicCounts, rebuild_doc_counts
from ..predictor import FrozenModel
from ..sampler import SparseSampler
from . import messages
from .checkpoint import (
    CheckpointData,
    TopologyMismatchError,
    load_checkpoint,
    save_checkpoint,
)
from .config import topology_fingerprint
from .schedule import FreeServerScheduler, schedule_diagonals
from .transport import InProcessChannel, PipelinedSender
from .workers import AggregationServer, DataServer, SamplingServer

__all__ = [
    "WorkerFailure",
    "IterationReport",
    "Trainer",
    "SequentialTrainer",
    "partition_documents",
]


class WorkerFailure(RuntimeError):
    """Injected worker failure; training recovers from the last checkpoint."""


@dataclass
class IterationReport:
    iteration: int
    changed: int
    seconds: float
    phase_seconds: dict = field(default_factory=dict)
    recovered: bool = False


def partition_documents(documents, num_configs, seed):
    """Deal documents round-robin over a seeded permutation into C groups."""
    if num_configs == 1:
        return [list(documents)]
    gen = rngmod.derive(seed, rngmod.STREAM_SHUFFLE, 3)
    perm = gen.permutation(len(documents))
    groups = [[] for _ in range(num_configs)]
    for pos, idx in enumerate(perm):
        groups[pos % num_configs].append(documents[int(idx)])
    return groups


class Trainer:
    """Full cluster runtime driven in-process.

    mode="deterministic" processes blocks in a fixed order on one thread;
    mode="threads" runs each segment's conflict-free blocks concurrently.
    """

    def __init__(self, documents, vocab, config):
        self.config = config
        self.vocab = vocab
        topo = config.topology
        self.C = topo.num_configs
        self.M = topo.num_shards
        self.K = config.num_topics
        self.V = len(vocab)
        self.seed = config.seed
        self.documents = list(documents)
        self.total_tokens = sum(len(d.tokens) for d in self.documents)
        self.fingerprint = topology_fingerprint(
            config, self.V, len(self.documents), self.total_tokens, self.seed
        )
        self.hyper = Hyperparameters(
            np.full(self.K, config.alpha_init), config.beta
        )
        num_rows = self.M + 1 if config.schedule == "free" else self.M

        groups = partition_documents(self.documents, self.C, self.seed)
        self.grids = [
            shuffle_and_partition(group, vocab, self.M, self.seed, num_rows=num_rows)
            for group in groups
        ]
        # Plain list lookup: the per-token ownership test is the hot path.
        self.col_of_word = [int(c) for c in self.grids[0].col_of_word]
        self.data_servers = []
        self.sampling_servers = []
        for c, grid in enumerate(self.grids):
            row_servers = [DataServer(r, grid.docs_by_row[r]) for r in range(num_rows)]
            for ds in row_servers:
                ds.prepare_columns(self.col_of_word, self.M)
            self.data_servers.append(row_servers)
            servers = []
            for m in range(self.M):
                servers.append(
                    SamplingServer(
                        m,
                        self.col_of_word,
                        self.V,
                        Hyperparameters(self.hyper.alpha.copy(), self.hyper.beta),
                        rngmod.derive(self.seed, rngmod.STREAM_SAMPLER, c, m),
                    )
                )
            self.sampling_servers.append(servers)
        self.aggregation_servers = [
            AggregationServer(m, self.K) for m in range(self.M)
        ]
        self.psi = [[0] * self.K for _ in range(self.C)]
        self.iteration = 0
        self.last_checkpoint = None
        self.fault_plan = set()  # (iteration, config, segment) triples
        self._free_schedulers = None
        self._free_base = 0
        self._recovered = False
        self._init_state()

    # -- initialization ------------------------------------------------------

    def _init_state(self):
        for c, servers in enumerate(self.data_servers):
            gen = rngmod.derive(self.seed, rngmod.STREAM_INIT, c)
            for ds in servers:
                ds.init_assignments(gen, self.K)
        global_rows = [dict() for _ in range(self.M)]
        for c, servers in enumerate(self.data_servers):
            for ds in servers:
                for doc in ds.docs:
                    z = ds.z_new[doc.doc_id]
                    for w, k in zip(doc.tokens, z):
                        row = global_rows[self.col_of_word[w]].setdefault(w, {})
                        row[k] = row.get(k, 0) + 1
        psi = [0] * self.K
        for rows in global_rows:
            for row in rows.values():
                for k, count in row.items():
                    psi[k] += count
        for c in range(self.C):
            self.psi[c] = list(psi)
            for m in range(self.M):
                self.sampling_servers[c][m].load_shard(global_rows[m], psi)
        for m in range(self.M):
            self.aggregation_servers[m].set_base(global_rows[m])

    # -- iteration flow --------------------------------------------------------

    def run_iteration(self):
        """One full training iteration with checkpoint-based fault recovery."""
        while True:
            try:
                return self._iteration_body()
            except WorkerFailure:
                if self.last_checkpoint is None:
                    raise
                self.restore(self.last_checkpoint)
                self._recovered = True

    def _iteration_body(self):
        started = time.perf_counter()
        recovered = getattr(self, "_recovered", False)
        self._recovered = False
        it = self.iteration + 1
        phases = {"sample": 0.0, "psi_sync": 0.0, "alpha": 0.0, "aggregate": 0.0}
        changed_before = self._total_changed()
        for c in range(self.C):
            if self.config.schedule == "free":
                self._run_free_config(c, it, phases)
            else:
                self._run_diagonal_config(c, it, phases)
            if self.config.psi_sync == "iteration":
                t0 = time.perf_counter()
                self._sync_psi(c)
                phases["psi_sync"] += time.perf_counter() - t0
        t0 = time.perf_counter()
        if self.config.optimize_priors:
            self._optimize_alpha()
        phases["alpha"] += time.perf_counter() - t0
        if self.C > 1 and it % self.config.topology.sync_period == 0:
            t0 = time.perf_counter()
            self.aggregate_configurations()
            phases["aggregate"] += time.perf_counter() - t0
        self.iteration = it
        return IterationReport(
            iteration=it,
            changed=self._total_changed() - changed_before,
            seconds=time.perf_counter() - started,
            phase_seconds=phases,
            recovered=recovered,
        )

    def _run_diagonal_config(self, c, it, phases):
        for seg_index, segment in enumerate(schedule_diagonals(self.M)):
            if (it, c, seg_index) in self.fault_plan:
                self.fault_plan.discard((it, c, seg_index))
                raise WorkerFailure(
                    f"injected failure at iteration {it}, config {c}, segment {seg_index}"
                )
            t0 = time.perf_counter()
            if self.config.mode == "threads" and self.M > 1:
                with ThreadPoolExecutor(max_workers=self.M) as pool:
                    list(pool.map(lambda rm: self._process_block(c, *rm), segment))
            else:
                for r, m in segment:
                    self._process_block(c, r, m)
            phases["sample"] += time.perf_counter() - t0
            t0 = time.perf_counter()
            if self.config.psi_sync == "segment":
                self._sync_psi(c)
            for ds in self.data_servers[c]:
                ds.swap_buffers()
            phases["psi_sync"] += time.perf_counter() - t0

    def _run_free_config(self, c, it, phases):
        # One grant round: every block sampled exactly once per iteration,
        # grants always to a least-visited free row, idling when none.
        if (it, c, 0) in self.fault_plan:
            self.fault_plan.discard((it, c, 0))
            raise WorkerFailure(f"injected failure at iteration {it}, config {c}")
        if self._free_schedulers is None:
            self._free_schedulers = [
                FreeServerScheduler(self.M, num_rows=self.M + 1) for _ in range(self.C)
            ]
            self._free_base = self.iteration
        sched = self._free_schedulers[c]
        target = it - self._free_base
        t0 = time.perf_counter()
        active = True
        while active:
            active = False
            for m in range(self.M):
                if sched.column_done(m, target):
                    continue
                row = sched.acquire(m, target=target)
                if row is None:
                    continue
                self._process_block(c, row, m)
                sched.release(row, m)
                active = True
        phases["sample"] += time.perf_counter() - t0
        t0 = time.perf_counter()
        self._sync_psi(c)
        for ds in self.data_servers[c]:
            ds.swap_buffers()
        phases["psi_sync"] += time.perf_counter() - t0

    def _process_block(self, c, r, m):
        ds = self.data_servers[c][r]
        ss = self.sampling_servers[c][m]
        ss.begin_block()
        pipeline = self.config.topology.pipeline
        packages, index_maps = ds.build_packages(
            m, pipeline.package_size, block_id=r * self.M + m
        )
        if not packages:
            return
        sender = PipelinedSender(InProcessChannel(ss.handle_package), pipeline.slots)
        for frame, index_map in zip(sender.run(packages), index_maps):
            msg_type, length = messages.decode_header(frame)
            if msg_type != messages.MSG_PACKAGE_RESPONSE:
                raise messages.MessageError(f"unexpected reply type {msg_type}")
            ds.apply_response(index_map, frame[messages.HEADER_SIZE :])

    def _sync_psi(self, c):
        totals = list(self.psi[c])
        for ss in self.sampling_servers[c]:
            for k, d in enumerate(ss.psi_diff()):
                totals[k] += d
        frame = messages.encode_psi_sync(totals)
        msg_type, _ = messages.decode_header(frame)
        decoded = messages.decode_psi_sync(frame[messages.HEADER_SIZE :])
        for ss in self.sampling_servers[c]:
            ss.set_psi(decoded)
        self.psi[c] = [int(x) for x in decoded]

    def _optimize_alpha(self):
        stats = AlphaSufficientStats(self.K)
        for servers in self.data_servers:
            for ds in servers:
                stats.merge(ds.collect_alpha_stats(self.K))
        if stats.is_empty():
            return
        new_alpha = optimize_alpha(stats, self.hyper.alpha, self.config.alpha_opt_iters)
        self.hyper.alpha[:] = new_alpha
        frame = messages.encode_alpha_sync(new_alpha)
        decoded = messages.decode_alpha_sync(frame[messages.HEADER_SIZE :])
        for servers in self.sampling_servers:
            for ss in servers:
                ss.set_alpha(decoded)

    def aggregate_configurations(self):
        """Fold every configuration's model deltas into the shared base."""
        for m in range(self.M):
            agg = self.aggregation_servers[m]
            for c in range(self.C):
                frame = messages.encode_phi_delta(self.sampling_servers[c][m].phi_delta())
                agg.apply_delta_payload(frame[messages.HEADER_SIZE :])
        psi = [0] * self.K
        for agg in self.aggregation_servers:
            for k, s in enumerate(agg.column_sums()):
                psi[k] += s
        for c in range(self.C):
            for m in range(self.M):
                self.sampling_servers[c][m].set_model_rows(
                    self.aggregation_servers[m].rows, psi
                )
            self.psi[c] = list(psi)

    def _total_changed(self):
        return sum(ss.tokens_changed for servers in self.sampling_servers for ss in servers)

    # -- state access ----------------------------------------------------------

    def full_counts(self):
        """Whole-corpus word-topic counts recounted from the live labels."""
        counts = WordTopicCounts(self.V, self.K)
        for servers in self.data_servers:
            for ds in servers:
                for doc in ds.docs:
                    for w, k in zip(doc.tokens, ds.z_new[doc.doc_id]):
                        counts.increment(w, k)
        return counts

    def frozen_model(self):
        return FrozenModel.from_counts(self.full_counts(), self.hyper, self.V, self.vocab)

    def doc_topic_counts(self):
        for servers in self.data_servers:
            for ds in servers:
                for doc in ds.docs:
                    yield rebuild_doc_counts(ds.z_new[doc.doc_id], self.K)

    def verify_conservation(self):
        """Integer conservation across the whole cluster; raises on breakage."""
        for c in range(self.C):
            column = [0] * self.K
            for ss in self.sampling_servers[c]:
                for k, s in enumerate(ss.shard.column_sums()):
                    column[k] += s
            if column != list(self.psi[c]):
                raise AssertionError(f"config {c}: totals diverge from shard sums")
            if sum(self.psi[c]) != self.total_tokens:
                raise AssertionError(
                    f"config {c}: totals sum {sum(self.psi[c])} != {self.total_tokens}"
                )
        for servers in self.data_servers:
            for ds in servers:
                for doc in ds.docs:
                    if len(ds.z_new[doc.doc_id]) != len(doc.tokens):
                        raise AssertionError(f"doc {doc.doc_id}: label length mismatch")

    # -- checkpointing -----------------------------------------------------------

    def checkpoint_data(self):
        shard_rows = [
            [ss.shard.rows for ss in servers] for servers in self.sampling_servers
        ]
        global_rows = (
            [agg.rows for agg in self.aggregation_servers] if self.C > 1 else None
        )
        z_rows = []
        for servers in self.data_servers:
            z_rows.append(
                [
                    [(doc.doc_id, ds.z_new[doc.doc_id]) for doc in ds.docs]
                    for ds in servers
                ]
            )
        rng_states = [
            [rngmod.generator_state(ss.rng) for ss in servers]
            for servers in self.sampling_servers
        ]
        return CheckpointData(
            fingerprint=self.fingerprint,
            iteration=self.iteration,
            num_topics=self.K,
            num_words=self.V,
            num_configs=self.C,
            num_shards=self.M,
            alpha=self.hyper.alpha.copy(),
            beta=self.hyper.beta,
            shard_rows=shard_rows,
            global_rows=global_rows,
            psi=[list(p) for p in self.psi],
            z_rows=z_rows,
            rng_states=rng_states,
        )

    def save(self, path):
        save_checkpoint(self.checkpoint_data(), path)
        self.last_checkpoint = path

    def restore(self, source):
        """Rebuild in-memory state from a checkpoint file or CheckpointData."""
        data = load_checkpoint(source) if isinstance(source, str) else source
        if data.fingerprint != self.fingerprint:
            raise TopologyMismatchError(
                "checkpoint topology does not match this trainer's corpus/config"
            )
        self.iteration = int(data.iteration)
        self.hyper.alpha[:] = data.alpha
        for c in range(self.C):
            for ds, row_docs in zip(self.data_servers[c], data.z_rows[c]):
                stored = dict(row_docs)
                for doc in ds.docs:
                    if doc.doc_id not in stored:
                        raise TopologyMismatchError(
                            f"checkpoint lacks labels for document {doc.doc_id}"
                        )
                    ds.z_new[doc.doc_id] = [int(k) for k in stored[doc.doc_id]]
                ds.begin_segment()
            base = data.global_rows if data.global_rows is not None else data.shard_rows[c]
            for m in range(self.M):
                ss = self.sampling_servers[c][m]
                ss.rng = rngmod.restore_generator(data.rng_states[c][m])
                ss.hyper.alpha[:] = data.alpha
                ss.load_shard(data.shard_rows[c][m], data.psi[c], base_rows=base[m])
            self.psi[c] = [int(x) for x in data.psi[c]]
        if data.global_rows is not None:
            for m in range(self.M):
                self.aggregation_servers[m].set_base(data.global_rows[m])
        self._free_schedulers = None

    # -- driver -------------------------------------------------------------------

    def train(self, iterations, checkpoint_path=None, checkpoint_every=None, on_iteration=None):
        """Run ``iterations`` more iterations, checkpointing as configured."""
        target = self.iteration + iterations
        reports = []
        while self.iteration < target:
            report = self.run_iteration()
            reports.append(report)
            if (
                checkpoint_path
                and checkpoint_every
                and self.iteration % checkpoint_every == 0
            ):
                self.save(checkpoint_path)
            if on_iteration is not None:
                on_iteration(report)
        if checkpoint_path:
            self.save(checkpoint_path)
        return reports


class SequentialTrainer:
    """Plain single-sampler reference loop sharing only the Gibbs kernel.

    Iterates the same shuffled document order as the degenerate cluster
    (C=1, M=1) with the same derived streams, so the cluster runtime can be
    compared byte for byte against it.
    """

    def __init__(self, documents, vocab, config):
        self.config = config
        self.vocab = vocab
        self.K = config.num_topics
        self.V = len(vocab)
        self.seed = config.seed
        self.documents = list(documents)
        self.total_tokens = sum(len(d.tokens) for d in self.documents)
        self.fingerprint = topology_fingerprint(
            config, self.V, len(self.documents), self.total_tokens, self.seed
        )
        self.hyper = Hyperparameters(np.full(self.K, config.alpha_init), config.beta)
        grid = shuffle_and_partition(self.documents, vocab, 1, self.seed)
        self.ordered_docs = list(grid.docs_by_row[0])
        gen = rngmod.derive(self.seed, rngmod.STREAM_INIT, 0)
        self.z = {}
        for doc in self.ordered_docs:
            self.z[doc.doc_id] = [
                int(k) for k in gen.integers(0, self.K, size=len(doc.tokens))
            ]
        self.counts = WordTopicCounts.from_assignments(
            (d.tokens for d in self.ordered_docs),
            (self.z[d.doc_id] for d in self.ordered_docs),
            self.V,
            self.K,
        )
        self.rng = rngmod.derive(self.seed, rngmod.STREAM_SAMPLER, 0, 0)
        self.sampler = SparseSampler(self.counts, self.hyper, self.V, self.rng)
        self.iteration = 0

    def run_iteration(self):
        started = time.perf_counter()
        self.sampler.refresh_smoothing()
        changed = 0
        for doc in self.ordered_docs:
            changed += self.sampler.sweep_document(doc.tokens, self.z[doc.doc_id], self.rng)
        if self.config.optimize_priors:
            stats = AlphaSufficientStats(self.K)
            for doc in self.ordered_docs:
                stats.add_document(rebuild_doc_counts(self.z[doc.doc_id], self.K))
            if not stats.is_empty():
                new_alpha = optimize_alpha(
                    stats, self.hyper.alpha, self.config.alpha_opt_iters
                )
                self.hyper.alpha[:] = new_alpha
                frame = messages.encode_alpha_sync(new_alpha)
                self.sampler.set_alpha(
                    messages.decode_alpha_sync(frame[messages.HEADER_SIZE :])
                )
        self.iteration += 1
        return IterationReport(
            iteration=self.iteration,
            changed=changed,
            seconds=time.perf_counter() - started,
        )

    def frozen_model(self):
        return FrozenModel.from_counts(self.counts, self.hyper, self.V, self.vocab)

    def checkpoint_data(self):
        return CheckpointData(
            fingerprint=self.fingerprint,
            iteration=self.iteration,
            num_topics=self.K,
            num_words=self.V,
            num_configs=1,
            num_shards=1,
            alpha=self.hyper.alpha.copy(),
            beta=self.hyper.beta,
            shard_rows=[[self.counts.rows]],
            global_rows=None,
            psi=[[int(x) for x in self.counts.totals]],
            z_rows=[[[(doc.doc_id, self.z[doc.doc_id]) for doc in self.ordered_docs]]],
            rng_states=[[rngmod.generator_state(self.rng)]],
        )

    def save(self, path):
        save_checkpoint(self.checkpoint_data(), path)

    def train(self, iterations, on_iteration=None):
        reports = []
        for _ in range(iterations):
            report = self.run_iteration()
            reports.append(report)
            if on_iteration is not None:
                on_iteration(report)
        return reports

"""Two-stage architecture search: alternating weight and logit updates.

Step layout: a warmup prefix trains weights only, with the
architecture logits pinned at their uniform initialization. After
warmup, steps cycle in epochs: the leading (1 - arch_fraction) of each
epoch are weight steps on the weight shard of the corpus, the trailing
arch_fraction are architecture steps on a disjoint held-out shard.
Each phase updates only its own parameter set; the other side is
frozen out of the gradient graph entirely. The run stops early once
the sampled architecture has been stable over the trailing 75% of all
snapshots taken.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .archspec import ArchSpec, compact, format as format_spec
from .config import GumbelConfig, ModelConfig, SearchHyperparams, SearchSchedule
from .data import SegmentBatcher, split_corpus
from .errors import ConfigError, TrainingAbort
from .optim import grad_norm, make_optimizer
from .supernet import SuperNet, convergence_check, has_argmax_ties, sample_architecture
from .tensor import Tensor


@dataclass
class SearchResult:
    final_spec: ArchSpec
    converged: bool
    loss_curve: list[float]
    logits_history: list[list[list[float]]]  # snapshot -> (L, C) raw logits
    spec_history: list[ArchSpec]
    final_logits: list[list[float]]
    tied_logits: bool
    steps_run: int
    phase_hashes: list[dict] = field(default_factory=list)


def _hash_params(params: list[Tensor]) -> str:
    h = hashlib.sha256()
    for p in params:
        h.update(p.data.tobytes())
    return h.hexdigest()


class _Stream:
    """A corpus shard with its own batcher and memory lane."""

    def __init__(self, ids, batch_size: int, tgt_len: int, net: SuperNet):
        self.batcher = SegmentBatcher(ids, batch_size, tgt_len)
        self.memory = net.new_memory()

    def next(self):
        inp, tgt, wrapped = self.batcher.next_batch()
        if wrapped:
            self.memory.reset()
        return inp, tgt


class SearchState:
    """Everything a single run mutates, bundled for the step functions."""

    def __init__(self, net: SuperNet, model_config: ModelConfig,
                 weight_stream: _Stream, arch_stream: _Stream,
                 hyper: SearchHyperparams, gumbel: GumbelConfig,
                 rng: np.random.Generator):
        self.net = net
        self.weight_stream = weight_stream
        self.arch_stream = arch_stream
        self.rng = rng
        self.gumbel = gumbel
        d, v = model_config.d_model, model_config.vocab_size
        self.embedding = Tensor(rng.normal(0.0, 0.02, (v, d)), requires_grad=True)
        self.head_w = Tensor(rng.normal(0.0, 0.02, (d, v)), requires_grad=True)
        self.head_b = Tensor(np.zeros(v), requires_grad=True)
        # embedding and head belong to the weight phase, like block weights
        self.weight_params = net.block_parameters() + [
            self.embedding, self.head_w, self.head_b,
        ]
        self.weight_opt = make_optimizer(
            hyper.optimizer, self.weight_params,
            hyper.weight_lr, hyper.weight_weight_decay,
        )
        self.arch_opt = make_optimizer(
            hyper.optimizer, [net.arch_logits],
            hyper.arch_lr, hyper.arch_weight_decay,
        )
        self.tau = gumbel.tau_start

    def forward_loss(self, batch, stream: _Stream) -> Tensor:
        inp, tgt = batch
        x = T.embedding_lookup(self.embedding, inp)
        x = self.net.forward_mixed(x, stream.memory, self.tau, self.rng, train=True)
        logits = T.add(T.matmul(x, self.head_w), self.head_b)
        return T.cross_entropy(logits, tgt)


def step_weight(batch, state: SearchState) -> float:
    """One optimizer step on block/embedding/head weights. The
    architecture logits are not part of the graph, so their gradient
    is never even computed."""
    state.net.arch_logits.requires_grad = False
    try:
        loss = state.forward_loss(batch, state.weight_stream)
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingAbort(-1, state.weight_opt.lr, grad_norm(state.weight_params))
        state.weight_opt.zero_grad()
        loss.backward()
        state.weight_opt.step()
    finally:
        state.net.arch_logits.requires_grad = True
    return value


def step_arch(batch, state: SearchState) -> float:
    """One optimizer step on the architecture logits only."""
    for p in state.weight_params:
        p.requires_grad = False
    try:
        loss = state.forward_loss(batch, state.arch_stream)
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingAbort(-1, state.arch_opt.lr, grad_norm([state.net.arch_logits]))
        state.arch_opt.zero_grad()
        loss.backward()
        state.arch_opt.step()
    finally:
        for p in state.weight_params:
            p.requires_grad = True
    return value


def run_search(corpus_ids, model_config: ModelConfig,
               schedule: SearchSchedule, hyper: SearchHyperparams,
               seed: int, gumbel: GumbelConfig | None = None,
               record_phase_hashes: bool = False) -> SearchResult:
    """Execute the full two-stage search and sample the result.

    Deterministic: identical (corpus, configs, seed) give an identical
    SearchResult, loss curve included. All config validation happens
    before any compute.
    """
    model_config.validate()
    schedule.validate()
    hyper.validate()
    gumbel = (gumbel or GumbelConfig()).validate()
    ids = np.asarray(corpus_ids, dtype=np.int64)
    if ids.size == 0:
        raise ConfigError("empty corpus")
    need = math.ceil(hyper.batch_size * (model_config.tgt_len + 1)
                     / min(schedule.arch_fraction, 1 - schedule.arch_fraction))
    if ids.size < need:
        raise ConfigError(
            f"corpus of {ids.size} tokens is too small to shard for "
            f"batch_size={hyper.batch_size}, tgt_len={model_config.tgt_len} "
            f"(need >= {need})"
        )

    rng = np.random.default_rng(seed)
    net = SuperNet(model_config, rng)
    weight_ids, arch_ids = split_corpus(ids, schedule.arch_fraction, seed)
    weight_stream = _Stream(weight_ids, hyper.batch_size, model_config.tgt_len, net)
    arch_stream = _Stream(arch_ids, hyper.batch_size, model_config.tgt_len, net)
    state = SearchState(net, model_config, weight_stream, arch_stream, hyper, gumbel, rng)

    loss_curve: list[float] = []
    spec_history: list[ArchSpec] = []
    logits_history: list[list[list[float]]] = []
    hashes: list[dict] = []
    arch_step_count = 0
    stopped_early = False
    warm = schedule.warmup_steps
    weight_per_epoch = schedule.weight_steps_per_epoch()
    tuning_total = max(1, schedule.total_steps - warm)
    step = 0

    while step < schedule.total_steps:
        if step < warm:
            phase = "warmup"
            state.tau = gumbel.tau_at(0.0)
        else:
            in_epoch = (step - warm) % schedule.epoch_steps
            phase = "weight" if in_epoch < weight_per_epoch else "arch"
            state.tau = gumbel.tau_at((step - warm) / tuning_total)

        if record_phase_hashes:
            hashes.append({
                "step": step,
                "phase": phase,
                "weights": _hash_params(state.weight_params),
                "logits": _hash_params([net.arch_logits]),
            })

        try:
            if phase == "arch":
                loss = step_arch(state.arch_stream.next(), state)
            else:
                loss = step_weight(state.weight_stream.next(), state)
        except TrainingAbort as e:
            raise TrainingAbort(step, e.lr, e.grad_norm) from None
        loss_curve.append(loss)
        step += 1

        if phase == "arch":
            arch_step_count += 1
            if arch_step_count % schedule.snapshot_every == 0:
                spec_history.append(sample_architecture(net.arch_logits))
                logits_history.append(net.arch_logits.data.tolist())
                if (len(spec_history) >= schedule.min_snapshots_for_stop
                        and convergence_check(spec_history)):
                    stopped_early = True
                    break

    if record_phase_hashes:
        hashes.append({
            "step": step,
            "phase": "end",
            "weights": _hash_params(state.weight_params),
            "logits": _hash_params([net.arch_logits]),
        })

    converged = stopped_early or (bool(spec_history) and convergence_check(spec_history))
    return SearchResult(
        final_spec=sample_architecture(net.arch_logits),
        converged=converged,
        loss_curve=loss_curve,
        logits_history=logits_history,
        spec_history=spec_history,
        final_logits=net.arch_logits.data.tolist(),
        tied_logits=has_argmax_ties(net.arch_logits),
        steps_run=step,
        phase_hashes=hashes,
    )


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def report_json(result: SearchResult, seed: int) -> str:
    """Deterministic JSON search report (same result, same bytes)."""
    stripped = compact(result.final_spec)
    payload = {
        "schema": 1,
        "seed": seed,
        "final_arch": format_spec(stripped) if len(stripped) else "",
        "final_arch_with_identity": "".join(k.value for k in result.final_spec),
        "converged": result.converged,
        "unconverged_ties": result.tied_logits,
        "steps_run": result.steps_run,
        "loss_curve": result.loss_curve,
        "final_logits": result.final_logits,
        "logits_history": result.logits_history,
    }
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"


def probabilities_csv(result: SearchResult) -> str:
    """Per-snapshot, per-layer block probabilities (heat-map data)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["snapshot", "layer", "p_attention", "p_feed_forward", "p_identity"])
    for s, logits in enumerate(result.logits_history):
        probs = _softmax_rows(np.asarray(logits))
        for l in range(probs.shape[0]):
            writer.writerow([s, l] + [repr(float(x)) for x in probs[l]])
    return buf.getvalue()


def write_reports(result: SearchResult, out_dir: str, seed: int) -> tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "search_report.json")
    csv_path = os.path.join(out_dir, "arch_probs.csv")
    with open(report_path, "w", encoding="utf-8", newline="") as f:
        f.write(report_json(result, seed))
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        f.write(probabilities_csv(result))
    return report_path, csv_path

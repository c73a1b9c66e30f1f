"""Model and run configuration dataclasses."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ConfigError

# WikiText-103 word-level vocabulary size, used for cost-table defaults.
WIKITEXT103_VOCAB = 267_735


@dataclass
class ModelConfig:
    """Transformer dimensions and segment-recurrence lengths.

    Defaults mirror the base-model setting the block layouts are
    compared under: hidden 512, 8 heads of 64, inner 2048, 192-token
    training segments with 192 cached tokens, 400-token position clip.
    """

    d_model: int = 512
    n_head: int = 8
    d_head: int = 64
    d_inner: int = 2048
    tgt_len: int = 192
    mem_len: int = 192
    clamp_len: int = 400
    dropout: float = 0.1
    vocab_size: int = WIKITEXT103_VOCAB
    n_layers: int = 32

    def validate(self) -> "ModelConfig":
        for name in ("d_model", "n_head", "d_head", "d_inner", "tgt_len", "vocab_size", "n_layers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.mem_len < 0:
            raise ConfigError(f"mem_len must be >= 0, got {self.mem_len}")
        if self.clamp_len < 0:
            raise ConfigError(f"clamp_len must be >= 0, got {self.clamp_len}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        return self

    def with_(self, **kw) -> "ModelConfig":
        return replace(self, **kw).validate()


@dataclass
class GumbelConfig:
    """Temperature schedule for the architecture-mixing softmax.

    tau anneals exponentially from tau_start to tau_end across the
    architecture-tuning phase (the temperature is not pinned by the
    method itself, so it lives here as a tunable).
    """

    tau_start: float = 5.0
    tau_end: float = 0.5
    anneal: str = "exp"  # "exp" or "const"

    def validate(self) -> "GumbelConfig":
        if not (self.tau_start >= self.tau_end > 0):
            raise ConfigError(
                f"need tau_start >= tau_end > 0, got {self.tau_start}, {self.tau_end}"
            )
        if self.anneal not in ("exp", "const"):
            raise ConfigError(f"unknown anneal schedule {self.anneal!r}")
        return self

    def tau_at(self, progress: float) -> float:
        """Temperature at ``progress`` in [0, 1] through the tuning phase."""
        if self.anneal == "const":
            return self.tau_start
        p = min(max(progress, 0.0), 1.0)
        return self.tau_start * (self.tau_end / self.tau_start) ** p


@dataclass
class SearchSchedule:
    """Step budget and phase layout for the two-stage search.

    Post-warmup steps are organized in epochs of ``epoch_steps``: the
    first (1 - arch_fraction) of each epoch updates block weights, the
    trailing arch_fraction updates architecture logits. At full scale
    that is 10k warmup in a 40k budget with a 0.2 fraction; warmup
    defaults to 25% of total to mirror it.
    """

    total_steps: int = 4000
    warmup_steps: int | None = None
    epoch_steps: int = 100
    arch_fraction: float = 0.2
    snapshot_every: int = 1
    min_snapshots_for_stop: int = 20

    def validate(self) -> "SearchSchedule":
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if not 0.0 < self.arch_fraction < 1.0:
            raise ConfigError(
                f"arch_fraction must be in (0, 1), got {self.arch_fraction}"
            )
        if self.warmup_steps is None:
            self.warmup_steps = self.total_steps // 4
        if not 0 <= self.warmup_steps < self.total_steps:
            raise ConfigError(
                f"warmup_steps must be in [0, total_steps), got {self.warmup_steps}"
            )
        if self.epoch_steps < 2:
            raise ConfigError("epoch_steps must be >= 2")
        if self.snapshot_every < 1:
            raise ConfigError("snapshot_every must be >= 1")
        if self.arch_steps_per_epoch() < 1:
            raise ConfigError(
                "schedule yields zero architecture steps per epoch; raise "
                "epoch_steps or arch_fraction"
            )
        return self

    def arch_steps_per_epoch(self) -> int:
        return round(self.arch_fraction * self.epoch_steps)

    def weight_steps_per_epoch(self) -> int:
        return self.epoch_steps - self.arch_steps_per_epoch()


@dataclass
class SearchHyperparams:
    """Learning rates and decay for the two alternating phases."""

    batch_size: int = 128
    arch_lr: float = 1e-2
    arch_weight_decay: float = 5e-4
    weight_lr: float = 1e-2
    weight_weight_decay: float = 1e-4
    optimizer: str = "sgd"  # "sgd" or "adam"

    def validate(self) -> "SearchHyperparams":
        for name in ("batch_size",):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("arch_lr", "arch_weight_decay", "weight_lr", "weight_weight_decay"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        return self


@dataclass
class CostQuery:
    """Shapes a cost question is asked at (inference defaults)."""

    tgt_len: int = 64
    mem_len: int = 640
    batch_size: int = 1

    def validate(self) -> "CostQuery":
        if self.tgt_len < 1:
            raise ConfigError("tgt_len must be >= 1")
        if self.mem_len < 0:
            raise ConfigError("mem_len must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        return self


@dataclass
class EvalConfig:
    """Segment shapes used while evaluating a trained model."""

    tgt_len: int = 64
    mem_len: int = 640
    clamp_len: int = 400
    batch_size: int = 8

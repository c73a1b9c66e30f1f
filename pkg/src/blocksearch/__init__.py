"""Differentiable architecture search over transformer block layouts.

Per layer the search chooses among a causal self-attention block, a
position-wise feed-forward block, and identity. One supernet holding
all candidates is trained with alternating weight / architecture-logit
phases; the result is sampled as the most probable block per layer.
An analytic cost model reports parameters and FLOPs per architecture,
and a small trainer fits fixed layouts at desk scale.
"""

from .archspec import ArchSpec, compact, count_blocks, format, parse
from .blocks import BlockKind, MemoryState, update_memory
from .config import (
    CostQuery,
    EvalConfig,
    GumbelConfig,
    ModelConfig,
    SearchHyperparams,
    SearchSchedule,
)
from .lm import EvalReport, LanguageModel, evaluate, train_fixed
from .search import SearchResult, run_search
from .supernet import SuperNet, convergence_check, gumbel_softmax, sample_architecture
from .tensor import Tensor, grad_check

__version__ = "0.1.0"

__all__ = [
    "ArchSpec", "BlockKind", "CostQuery", "EvalConfig", "EvalReport",
    "GumbelConfig", "LanguageModel", "MemoryState", "ModelConfig",
    "SearchHyperparams", "SearchResult", "SearchSchedule", "SuperNet",
    "Tensor", "compact", "convergence_check", "count_blocks", "evaluate",
    "format", "grad_check", "gumbel_softmax", "parse", "run_search",
    "sample_architecture", "train_fixed", "update_memory",
]

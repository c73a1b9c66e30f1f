"""Kernel backend selection.

The hot inner-loop kernels (layer norm, softmax, cross entropy,
embedding scatter-add) exist twice: a Cython extension (``_fused``)
and a pure numpy fallback (``ref``). The compiled backend is used
when importable unless BLOCKSEARCH_PURE is set to a non-empty,
non-"0" value. ``benchmarks/bench_kernels.py`` compares the two.
"""

import os

from . import ref

if os.environ.get("BLOCKSEARCH_PURE", "0") not in ("", "0"):
    impl = ref
    BACKEND = "pure"
else:
    try:
        from . import _fused as impl

        BACKEND = "fused"
    except ImportError:
        impl = ref
        BACKEND = "pure"


def backend_name() -> str:
    """Name of the active kernel backend: "fused" or "pure"."""
    return BACKEND

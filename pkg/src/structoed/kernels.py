"""Backend selection for the log-determinant kernels.

The compiled extension is used when it was built; setting the environment
variable ``STRUCTOED_PURE_PYTHON=1`` before import forces the numpy
fallback. ``BACKEND`` names the active implementation.
"""
import os

if os.environ.get("STRUCTOED_PURE_PYTHON", "") not in ("", "0"):
    from ._kernels_py import block_combo_logdet, gram_subset_logdet, stack_logdet

    BACKEND = "python"
else:
    try:
        from ._kernels import block_combo_logdet, gram_subset_logdet, stack_logdet

        BACKEND = "compiled"
    except ImportError:
        from ._kernels_py import block_combo_logdet, gram_subset_logdet, stack_logdet

        BACKEND = "python"

__all__ = ["BACKEND", "block_combo_logdet", "gram_subset_logdet", "stack_logdet"]

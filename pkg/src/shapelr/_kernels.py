"""Select the compiled kernels when built, else the numpy fallback.

Set ``SHAPELR_PURE_PYTHON=1`` to force the fallback.
"""
import os

BACKEND = "python"
if not os.environ.get("SHAPELR_PURE_PYTHON"):
    try:
        from ._ckernels import (  # noqa: F401
            mixture_logpdf,
            mvkd_log10_lr,
            mvkd_log10_lr_batch,
            rotate_to_reference,
        )

        BACKEND = "cython"
    except ImportError:
        pass

if BACKEND == "python":
    from ._pykernels import (  # noqa: F401
        mixture_logpdf,
        mvkd_log10_lr,
        mvkd_log10_lr_batch,
        rotate_to_reference,
    )

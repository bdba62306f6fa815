"""Select the ADMM iteration kernel at import time.

The compiled extension is used when it was built; setting the environment
variable ``DDMPC_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _kernel_py

BACKEND = "python"
admm_block = _kernel_py.admm_block

if os.environ.get("DDMPC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernel
    except ImportError:
        pass
    else:
        admm_block = _kernel.admm_block
        BACKEND = "compiled"

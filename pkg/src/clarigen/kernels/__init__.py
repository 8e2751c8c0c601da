"""Hot-loop kernels with import-time backend selection.

The compiled Cython module is preferred when present; the numpy fallback is
always available. Set CLARIGEN_KERNELS=py to force the fallback or =cy to
require the compiled module (ImportError if it is missing). Per-backend
results are deterministic; across backends they agree to ~1e-12 relative
(libm vs numpy transcendentals), which the parity tests pin down.
"""

import os

from . import _gates_py

_choice = os.environ.get("CLARIGEN_KERNELS", "").lower()

if _choice == "py":
    _impl = _gates_py
    BACKEND = "python"
else:
    try:
        from . import _gates as _impl
        BACKEND = "compiled"
    except ImportError:
        if _choice == "cy":
            raise
        _impl = _gates_py
        BACKEND = "python"

lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward

__all__ = ["BACKEND", "lstm_forward", "lstm_backward"]

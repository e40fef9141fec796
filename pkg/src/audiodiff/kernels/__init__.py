"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

The compiled extension (built from _core.pyx) is preferred when it imports;
otherwise the numpy implementations take over.  Both backends round
identically, so results do not depend on which one is active.  Set
AUDIODIFF_KERNELS=python in the environment to force the fallback, e.g. for
benchmarking.
"""

import os

BACKEND = "python"

if os.environ.get("AUDIODIFF_KERNELS", "") != "python":
    try:
        from audiodiff.kernels._core import (ancestral_update, axpby,
                                             gaussian_eps, guided_combine)
        BACKEND = "compiled"
    except ImportError:
        pass

if BACKEND == "python":
    from audiodiff.kernels._fallback import (ancestral_update, axpby,
                                             gaussian_eps, guided_combine)

__all__ = ["BACKEND", "axpby", "guided_combine", "ancestral_update",
           "gaussian_eps"]

"""Hot numerical kernels with a compiled (Cython) and a pure-numpy backend.

The compiled extension is used when it was built; otherwise the numpy
fallback is selected at import. Both produce bitwise-identical results.
``use_backend`` switches explicitly (benchmarks and equivalence tests).
"""
from . import _reference

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

KERNEL_NAMES = ("kf_predict", "kf_update", "nearest", "som_epoch", "systematic_resample")

BACKENDS = {"python": _reference}
if _ckernels is not None:
    BACKENDS["compiled"] = _ckernels

backend = None


def use_backend(name):
    """Route the module-level kernel names to backend ``name``."""
    global backend
    mod = BACKENDS[name]
    g = globals()
    for k in KERNEL_NAMES:
        g[k] = getattr(mod, k)
    backend = name


def available_backends():
    return tuple(BACKENDS)


use_backend("compiled" if _ckernels is not None else "python")

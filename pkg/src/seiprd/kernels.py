"""Backend selection for the hot kernels.

The compiled Cython module is used when it imports; otherwise the pure-Python
fallback. Set ``SEIPRD_PURE_PYTHON=1`` to force the fallback.
"""
import importlib
import os

_BACKENDS = {"cython": "seiprd._ckernels", "python": "seiprd._pykernels"}


def load_backend(name: str):
    """Import one backend module by name ("cython" or "python")."""
    return importlib.import_module(_BACKENDS[name])


def _select():
    if not os.environ.get("SEIPRD_PURE_PYTHON"):
        try:
            return "cython", load_backend("cython")
        except ImportError:
            pass
    return "python", load_backend("python")


BACKEND, _impl = _select()
integrate = _impl.integrate
nb_logpmf_sum = _impl.nb_logpmf_sum
observation_loglik = _impl.observation_loglik
log_prior = _impl.log_prior

__all__ = ["BACKEND", "integrate", "nb_logpmf_sum", "observation_loglik", "log_prior", "load_backend"]

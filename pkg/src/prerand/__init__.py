"""Numerical tools for pre-Randers metrics and stationary spacetimes.

Submodules load lazily so that the command line entry point can apply the
PRERAND_THREADS cap to the BLAS environment before numpy is imported.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = ("fields", "metrics", "geodesic", "distance", "causality",
               "harris", "horizon", "magnetic", "scenario", "cli",
               "selftest", "errors")


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))

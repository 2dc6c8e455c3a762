"""Kernel dispatch: compiled extension when importable, numpy fallback otherwise.

Callers go through the module-level functions here so that the backend can be
switched at runtime (benchmarks and the cross-check tests do this).
"""

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

QP_OPTIMAL = _pykernels.QP_OPTIMAL
QP_INFEASIBLE = _pykernels.QP_INFEASIBLE
QP_MAX_ITER = _pykernels.QP_MAX_ITER
QP_NUMERICAL = _pykernels.QP_NUMERICAL

_impl = _ckernels if _ckernels is not None else _pykernels


def available_backends():
    return ["cython", "python"] if _ckernels is not None else ["python"]


def backend():
    return "cython" if _impl is _ckernels else "python"


def use_backend(name):
    """Select ``"cython"`` or ``"python"``; returns the previous backend name."""
    global _impl
    prev = backend()
    if name == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built")
        _impl = _ckernels
    elif name == "python":
        _impl = _pykernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    return prev


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def zonotope_support(D, G):
    return _impl.zonotope_support(_c(D), _c(G))


def max_violation(A, x, b):
    return _impl.max_violation(_c(A), _c(x), _c(b))


def qp_ineq(Hinv, x0, A, b, tol, max_iter):
    return _impl.qp_ineq(_c(Hinv), _c(x0), _c(A), _c(b), float(tol), int(max_iter))

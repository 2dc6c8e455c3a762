"""Stability certificates for networks of constrained LTI subsystems from local robust tubes."""

from . import ctrl, netmodel, qp, setcalc, tmpc, tubes
from ._kernels import available_backends, backend, use_backend

__version__ = "0.1.0"

__all__ = ["ctrl", "netmodel", "qp", "setcalc", "tmpc", "tubes", "available_backends", "backend", "use_backend"]

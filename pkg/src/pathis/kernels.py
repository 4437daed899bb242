"""Kernel backend selection.

The compiled extension is used when it imports; set ``PATHIS_BACKEND=numpy``
to force the pure-Python fallback.
"""
import os

from . import _fallback

_ext = None
if os.environ.get("PATHIS_BACKEND", "").lower() != "numpy":
    try:
        from . import _ext
    except ImportError:
        _ext = None

backend = _ext if _ext is not None else _fallback
BACKEND = backend.BACKEND

_threads = 1


def set_threads(n: int) -> None:
    global _threads
    _threads = max(1, int(n))


def get_threads() -> int:
    return _threads


def splat(x, sensors, px, py, inv_cdt, m_samples, impl=None):
    impl = impl or backend
    return impl.splat(x, sensors, px, py, inv_cdt, m_samples, threads=_threads)


def gather(z, sensors, px, py, inv_cdt, impl=None):
    impl = impl or backend
    return impl.gather(z, sensors, px, py, inv_cdt, threads=_threads)


def leapfrog(p_prev, p_cur, coef, taper, nsteps, rec_nodes, src_nodes=None, src_values=None, impl=None):
    impl = impl or backend
    kw = {"threads": _threads} if impl is not _fallback else {}
    return impl.leapfrog(p_prev, p_cur, coef, taper, nsteps, rec_nodes, src_nodes, src_values, **kw)


def laplacian(p, impl=None):
    return (impl or backend).laplacian(p)

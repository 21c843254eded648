"""Hot-loop kernels: agglomerative merge sequences and pruned-tree utilities.

Two interchangeable backends implement the same three functions with
identical arithmetic (same libm calls in the same order) and identical tie
rules, so their outputs match bit for bit:

* ``_ck`` -- compiled Cython extension (built by setup.py);
* ``pk`` -- pure-Python mirror, used when the extension is unavailable.

``BACKEND`` names the active implementation; ``get_backend`` fetches a
specific one (used by the equivalence tests and benchmarks).
"""

try:
    from . import _ck as _impl
    BACKEND = "cython"
except ImportError:          # extension not built; fall back to the mirror
    from . import pk as _impl
    BACKEND = "python"

from . import pk as _pk

MODE_MINMAX = _pk.MODE_MINMAX
MODE_POWERSUM = _pk.MODE_POWERSUM
MODE_MAXLINK = _pk.MODE_MAXLINK
MODE_MINLINK = _pk.MODE_MINLINK

merge_sequence = _impl.merge_sequence
hamming_prune_value = _impl.hamming_prune_value
utility_grid = _impl.utility_grid


def get_backend(name):
    """Return the named backend module ('cython' or 'python').

    Raises ImportError if the compiled extension was requested but not built.
    """
    if name == "cython":
        from . import _ck
        return _ck
    if name == "python":
        return _pk
    raise ValueError(f"unknown backend {name!r}")

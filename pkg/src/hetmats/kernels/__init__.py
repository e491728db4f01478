"""Backend dispatch for the replicate-statistic kernels.

Two interchangeable implementations of the hot bootstrap loops exist: a pure
numpy one and a numba-compiled one. The ``HETMATS_BACKEND`` environment
variable ("numpy" or "numba") selects one explicitly; when unset, numba is
used if it imports and numpy otherwise. :func:`set_backend` overrides the
choice at runtime (tests and the backend benchmark use it). Both backends
are deterministic; they agree to floating-point tolerance, not bitwise,
because summation orders differ.

Backend surface (all arrays float64, leading axis indexes replicates):
  moments(x)          (R, n, d) -> means (R, d), variances (R, d), ddof=1
  covariances(x)      (R, n, d) -> (R, d, d), ddof=1
  mats_quadform(m, g) (R, k), (R, k) -> (R,)  sum of m^2/g over the diagonal
                      pseudoinverse of the PSD pencil diag(g)
  pinv_quadform(A, v) (R, k, k), (R, k) -> (R,)  v' A^+ v for PSD pencils A
Spectral cutoffs follow the k * eps * max|eigenvalue| convention.
"""

from __future__ import annotations

import os
from types import ModuleType

_ENV_VAR = "HETMATS_BACKEND"
_BACKEND_NAMES = ("numpy", "numba")

_active: ModuleType | None = None


def _load(name: str) -> ModuleType:
    if name == "numpy":
        from hetmats.kernels import numpy_backend

        return numpy_backend
    if name == "numba":
        from hetmats.kernels import numba_backend

        return numba_backend
    msg = f"unknown kernel backend {name!r}; expected one of {_BACKEND_NAMES}"
    raise ValueError(msg)


def set_backend(name: str | None = None) -> str:
    """Select the kernel backend; ``None`` re-applies env/default resolution.

    Returns the name of the backend now active. Requesting "numba" raises
    ``ImportError`` when numba is unavailable; the automatic path falls back
    to numpy silently.
    """
    global _active
    if name is None:
        name = os.environ.get(_ENV_VAR, "").strip().lower() or None
    if name is None:
        try:
            _active = _load("numba")
        except ImportError:
            _active = _load("numpy")
    else:
        _active = _load(name)
    return _active.NAME


def active_backend() -> ModuleType:
    """The currently selected backend module, resolving lazily on first use."""
    if _active is None:
        set_backend()
    assert _active is not None
    return _active


def active_backend_name() -> str:
    return active_backend().NAME

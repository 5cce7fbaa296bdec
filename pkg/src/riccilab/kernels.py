"""Kernel backend selection.

The compiled extension is used when it imports; setting the environment
variable ``RICCILAB_PURE=1`` forces the numpy reference implementation.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("RICCILAB_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "compiled"

EVEN, DIRICHLET, PERIODIC = _kernels_py.EVEN, _kernels_py.DIRICHLET, _kernels_py.PERIODIC


def get(name: str, backend: str = None):
    """Look up a kernel, optionally forcing ``backend`` ('python' or 'compiled')."""
    if backend == "python":
        return getattr(_kernels_py, name)
    if backend == "compiled":
        from . import _kernels
        return getattr(_kernels, name)
    return getattr(_impl, name)


warped_fields = _impl.warped_fields
rk4_step = _impl.rk4_step
evolve = _impl.evolve
shoot_many = _impl.shoot_many
shoot_path = _impl.shoot_path

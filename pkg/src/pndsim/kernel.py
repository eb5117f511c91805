"""Gate-kernel selection.

The compiled Cython kernel is preferred; the pure-Python kernel is the
drop-in fallback when the extension was not built.  Both produce bit-identical
output for identical seeds (see ``tests/test_kernel.py``), so the choice only
affects speed.  ``python -m pndsim.bench`` compares the two.
"""

from __future__ import annotations

from . import _gatekernel_py

try:
    from . import _gatekernel as _compiled
except ImportError:  # extension not built
    _compiled = None

run_gates = _compiled.run_gates if _compiled is not None else _gatekernel_py.run_gates
run_gates_python = _gatekernel_py.run_gates


def kernel_name() -> str:
    return "compiled" if _compiled is not None else "python"


def compiled_available() -> bool:
    return _compiled is not None

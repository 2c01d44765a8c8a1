"""Backend selection for the data-parallel kernels.

"serial" walks items one at a time (reference implementation); "parallel"
evaluates whole batches at once. Both are required to produce bitwise
identical output: every kernel pair shares its single-precision operation
sequence and all compacted outputs are canonically ordered.
"""

from .errors import InvalidParameterError

SERIAL = "serial"
PARALLEL = "parallel"
BACKENDS = (SERIAL, PARALLEL)


def validate_backend(name):
    if name not in BACKENDS:
        raise InvalidParameterError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    return name

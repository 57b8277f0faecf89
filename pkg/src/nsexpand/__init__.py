"""Asymptotic expansion of decaying Galerkin Navier-Stokes trajectories on the 2 pi torus."""
import os as _os

# NSEXPAND_THREADS caps the BLAS/OpenMP pools; it must be read before numpy loads.
_threads = _os.environ.get("NSEXPAND_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

"""actionlab: action phases, least-action causality, and intermediate measurements.

A numerical laboratory for finite quantum systems: compute the geometric
action phase of intermediate contributions to a transition amplitude, extract
least-action intermediate values and disturbance-free resolution limits,
simulate intermediate measurements of arbitrary resolution, and measure where
classical causality emerges and where it fails.
"""

from .hilbert import (
    DEFAULT_CONSTANTS,
    DiagonalUnitary,
    LabeledBasis,
    PhysicalConstants,
    StateVector,
    apply_diagonal,
    eigh_hermitian,
    expand,
    frame_shift,
    hermitian_eigen,
    inner,
    jacobi_eigh,
    random_state,
    transition_probability,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_CONSTANTS",
    "DiagonalUnitary",
    "LabeledBasis",
    "PhysicalConstants",
    "StateVector",
    "apply_diagonal",
    "eigh_hermitian",
    "expand",
    "frame_shift",
    "hermitian_eigen",
    "inner",
    "jacobi_eigh",
    "random_state",
    "transition_probability",
    "__version__",
]

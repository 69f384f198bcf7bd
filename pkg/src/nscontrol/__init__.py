"""Finite-mode spectral laboratory for controlled incompressible flow on the 3-torus."""

__version__ = "0.1.0"

from .bilinear import AliasingError, Q_oracle, bilinear_B, bilinear_Q, q_closed_form
from .fields import (
    TrigField,
    from_text,
    l2_inner,
    random_solenoidal,
    sobolev_norm,
    stokes_apply,
    to_text,
    unit_cos_mode,
    unit_sin_mode,
)
from .wavevec import (
    InvalidWaveVector,
    PolarizationBasis,
    leray_project,
    polarization_basis,
    unit_polarization,
)

__all__ = [
    "AliasingError",
    "InvalidWaveVector",
    "PolarizationBasis",
    "Q_oracle",
    "TrigField",
    "__version__",
    "bilinear_B",
    "bilinear_Q",
    "from_text",
    "l2_inner",
    "leray_project",
    "polarization_basis",
    "q_closed_form",
    "random_solenoidal",
    "sobolev_norm",
    "stokes_apply",
    "to_text",
    "unit_cos_mode",
    "unit_sin_mode",
]

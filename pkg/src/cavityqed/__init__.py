"""Spontaneous photon emission and single-photon exchange in mirror cavities.

Two-level emitters sit at the foci of ideally conducting parabolic or
prolate-ellipsoidal cavities.  The package computes the coupled mode
spectrum (exactly and semiclassically), boundary-modified decay rates, the
full one-excitation exchange dynamics, and the energy density of the
emitted photon.
"""

from .geometry import (AtomSpec, ParabolicCavity, PhysicalConstants,
                       ProlateCavity)
from .kernel import (KernelMatrix, S_integral, gamma_free,
                     purcell_parabolic_semiclassical, purcell_pole)
from .modes import (Mode, ModeBasis, QuantizeSettings, quantize_exact,
                    quantize_wkb)

__version__ = "0.1.0"

__all__ = [
    "AtomSpec", "ParabolicCavity", "PhysicalConstants", "ProlateCavity",
    "KernelMatrix", "S_integral", "gamma_free",
    "purcell_parabolic_semiclassical", "purcell_pole",
    "Mode", "ModeBasis", "QuantizeSettings", "quantize_exact", "quantize_wkb",
    "__version__",
]

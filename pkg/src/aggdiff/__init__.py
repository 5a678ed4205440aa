"""aggdiff: a radial finite-volume laboratory for degenerate diffusion with nonlocal aggregation."""

from .core import (
    MassFunction,
    Params,
    RadialGrid,
    RadialProfile,
    Regime,
    classify_regime,
    dilate,
    mass_function,
    precedes,
    pressure,
    pressure_inverse,
)

__all__ = [
    "MassFunction",
    "Params",
    "RadialGrid",
    "RadialProfile",
    "Regime",
    "classify_regime",
    "dilate",
    "mass_function",
    "precedes",
    "pressure",
    "pressure_inverse",
]

__version__ = "0.1.0"

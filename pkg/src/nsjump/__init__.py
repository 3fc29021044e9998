"""Spectral Galerkin simulation of 2d incompressible flow on the torus,
driven by compensated pure-jump noise, plus Monte Carlo verification of the
martingale and moment identities the truncated system satisfies."""

__version__ = "0.1.0"

from .jumps import (AnnulusSet, LevyMeasureSpec, MarkedJumpTrain, derive_rng,
                    sample_train)
from .noise import NoiseCoefficient
from .reporting import EnsembleReport
from .sde import BlowUpError, CadlagPath, GalerkinConfig, integrate
from .spectral import SpaceScale, SpectralField

__all__ = [
    "AnnulusSet", "BlowUpError", "CadlagPath", "EnsembleReport",
    "GalerkinConfig", "LevyMeasureSpec", "MarkedJumpTrain", "NoiseCoefficient",
    "SpaceScale", "SpectralField", "derive_rng", "integrate", "sample_train",
    "__version__",
]

"""Seed-conditioned diffusion sampling of weather-forecast ensembles.

Submodules
----------
geo_grid      cubed-sphere mesh, lat-lon grids, inverse-distance regridding
climatology   day-of-year climatology and standardised anomalies
diffusion     noise schedule, perturbation kernel, reverse-SDE sampler
network       axial-attention score network
tasks         emulation / post-processing examples, training, generation
verification  ensemble verification metrics
spectra       zonal energy spectra
synthetic     synthetic Gaussian ensembles with known statistics
container     binary tensor container
config        key=value run configuration
cli           command-line interface
"""

from .errors import (
    ContainerCorruptError,
    ContainerFormatError,
    InsufficientDataError,
    NumericalDivergenceError,
    UndefinedCorrelationError,
)

__version__ = "0.1.0"

__all__ = [
    "ContainerCorruptError",
    "ContainerFormatError",
    "InsufficientDataError",
    "NumericalDivergenceError",
    "UndefinedCorrelationError",
]

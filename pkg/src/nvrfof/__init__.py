"""Simulation and analysis of NV-center ODMR driven through an RF-over-fiber link."""

from .errors import DegenerateFitError, InvalidInputError
from .fitting import FitConfig, FitResult, FittedLine, SweepResult, detect_peaks, fit_lorentzians, fit_spectrum
from .link import LinkParameters, LinkResult, evaluate_link, link_from_config
from .spectrum import DriveParameters, LineShape, Spectrum, synthesize_spectrum
from .spin import FieldProjection, FieldVector, NVParameters

__version__ = "0.1.0"

from .building import BuildingModel, building_problem
from .compressor import CompressorModel, compressor_problem, default_controller, pressure_ratio
from .example1 import example1_problem
from .saturation import fit_saturation, smooth_saturation

__all__ = [
    "BuildingModel",
    "CompressorModel",
    "building_problem",
    "compressor_problem",
    "default_controller",
    "example1_problem",
    "fit_saturation",
    "pressure_ratio",
    "smooth_saturation",
]

"""Time-harmonic elastic scattering by many small rigid bodies."""

from .capacitance import CapacitanceMatrix, acoustic_capacitance, elastic_capacitance
from .distribution import DensityFunction, InfeasibleDistribution, partition_domain, place_scatterers
from .effective import PotentialField, VoxelGrid, effective_density, ls_farfield, solve_lippmann_schwinger
from .foldy import ScattererConfiguration, foldy_farfield, precheck_invertibility, solve_foldy
from .medium import ElasticMedium, IncidentPlaneWave, kupradze_tensor, make_medium
from .mesh import SurfaceMesh, builtin_mesh

__version__ = "0.1.0"

__all__ = [
    "CapacitanceMatrix",
    "DensityFunction",
    "ElasticMedium",
    "IncidentPlaneWave",
    "InfeasibleDistribution",
    "PotentialField",
    "ScattererConfiguration",
    "SurfaceMesh",
    "VoxelGrid",
    "acoustic_capacitance",
    "builtin_mesh",
    "effective_density",
    "elastic_capacitance",
    "foldy_farfield",
    "kupradze_tensor",
    "ls_farfield",
    "make_medium",
    "partition_domain",
    "place_scatterers",
    "precheck_invertibility",
    "solve_foldy",
    "solve_lippmann_schwinger",
]

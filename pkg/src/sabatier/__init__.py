"""1D Sabatier microchannel reactor: simulation and adjoint-based optimization."""

from jax import config as _jax_config

_jax_config.update("jax_enable_x64", True)

from sabatier.species import SpeciesTable, load_species_table, default_species_path
from sabatier.kinetics import KineticParams, REFERENCE_KINETICS

__all__ = [
    "SpeciesTable",
    "load_species_table",
    "default_species_path",
    "KineticParams",
    "REFERENCE_KINETICS",
]

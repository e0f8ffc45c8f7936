"""Fourier-Besov tools for the rotating stratified Boussinesq system.

Submodules:

* ``spectral_core``: lattice, fields, transforms, dealiased products, I/O
* ``littlewood_paley``: dyadic blocks, Fourier-Besov and Chemin-Lerner norms
* ``semigroup``: the linear Stokes-Coriolis-stratification flow per mode
* ``mild_solver``: Duhamel operator and Picard iteration
* ``estimates``: viscosity scaling of the linear estimates
* ``illposedness``: norm inflation of the second iterate
"""

from .spectral_core import (ConfigurationError, FrequencyGrid, PhysicalParams, SpectralField,
                            Trajectory, UsageError, make_grid, random_field)
from .littlewood_paley import BesovParams, DyadicPartition, fb_norm, make_partition
from .semigroup import apply_semigroup, helmholtz_project, multiplier_matrices
from .mild_solver import SolverConfig, duhamel_bilinear, picard_solve
from .illposedness import CounterexampleConfig, inflation_experiment

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "UsageError", "FrequencyGrid", "PhysicalParams", "SpectralField", "Trajectory",
    "make_grid", "random_field", "BesovParams", "DyadicPartition", "fb_norm", "make_partition", "apply_semigroup",
    "helmholtz_project", "multiplier_matrices", "SolverConfig", "duhamel_bilinear", "picard_solve",
    "CounterexampleConfig", "inflation_experiment",
]

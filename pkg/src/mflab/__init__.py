"""Curie-Weiss model in a dynamical external field: exact laws, landscapes and deviation rates."""

from .dynsys import (FieldTrajectory, SystemDescriptor, constant_field, from_config, orbit,
                     torus_rotation, user_map)
from .gibbs import ModelParams, log_partition, magnetization_distribution, sample_configuration
from .landscape import (MinimumProfile, classify_minimum, critical_beta, eval_G, eval_Gn,
                        field_cumulant, find_and_classify_minima)
from .walk import LatticeDistribution, legendre_transform, walk_distribution, walk_mdp_rate

__all__ = [
    "FieldTrajectory", "SystemDescriptor", "constant_field", "from_config", "orbit", "torus_rotation",
    "user_map", "ModelParams", "log_partition", "magnetization_distribution", "sample_configuration",
    "MinimumProfile", "classify_minimum", "critical_beta", "eval_G", "eval_Gn", "field_cumulant",
    "find_and_classify_minima", "LatticeDistribution", "legendre_transform", "walk_distribution",
    "walk_mdp_rate",
]

__version__ = "0.1.0"

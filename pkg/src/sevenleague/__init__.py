"""Seven-League large time step Monte Carlo for scalar SDEs.

Conditional stochastic collocation points of the transition law are learned
offline by a small MLP and used online to sample each large time step
through a barycentric Lagrange map of a standard normal draw.
"""

from .collocation import CollocationGrid, empirical_collocation, gauss_hermite_grid, normal_cdf
from .models import ModelParams, SdeModel, ou_conditional_moments, ou_exact_collocation, ou_exact_sample, ou_model
from .runtime import PoolBackend, SequentialBackend, partition_paths
from .scheme import AnnPredictor, ExactOuPredictor, SchemeConfig, simulate_7l, simulate_cdc
from .simulate import PathSet, TrainingSet, euler_paths, generate_training_set, standard_normals

__all__ = [
    "CollocationGrid", "empirical_collocation", "gauss_hermite_grid", "normal_cdf",
    "ModelParams", "SdeModel", "ou_conditional_moments", "ou_exact_collocation", "ou_exact_sample", "ou_model",
    "PoolBackend", "SequentialBackend", "partition_paths",
    "AnnPredictor", "ExactOuPredictor", "SchemeConfig", "simulate_7l", "simulate_cdc",
    "PathSet", "TrainingSet", "euler_paths", "generate_training_set", "standard_normals",
]

__version__ = "0.1.0"

"""Multiscale inverse reinforcement learning for linearly-solvable stochastic control."""
from .config import ExperimentConfig
from .control import RhcConfig, expected_state, expm, rhc_control, run_closed_loop
from .discretize import (Environment, FractalRoomSpec, MarkovChain, StateSet,
                         build_fractal_environment, build_markov_chain, sample_states)
from .dynamics import (ContinuousDynamics, GaussianMoments, Linearization, linearize,
                       make_dynamics, propagate_moments, register_dynamics, simulate_sde,
                       single_integrator)
from .forward import (Demonstrations, ForwardSolution, make_demonstrations_exact,
                      make_demonstrations_sampled, solve_linear_bellman, stationary_distribution)
from .irl import (IrlProblem, IrlSolution, augment_and_solve, hierarchical_solve, newton_solve,
                  nll, recover_cost, recover_policy, rms_error)
from .kernels import BACKEND
from .pipeline import run_pipeline
from .wavelets import WaveletTree, build_tree, score_wavelets, unpack, unpack_wavelets

__version__ = "0.1.0"

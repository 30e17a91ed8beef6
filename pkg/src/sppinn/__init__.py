"""Structure-preserving physics-informed networks for stiff periodic 1-D PDEs.

Modules
-------
diffjet     reverse-mode tape and fourth-order Taylor jets
problems    PDE catalog, residuals and validation
model       periodic embedding, dense network, hard-constraint wrapper, checkpoints
sampling    Latin hypercube collocation and mini-batch plans
training    losses, Adam, L-BFGS and the training driver
refsolver   ETDRK4 Fourier pseudo-spectral reference solver
evaluation  error norms, reports, run records, plot-ready CSV
config      versioned JSON run configuration
cli         ``sppinn`` command-line interface
"""
from .diffjet import Jet4, Tape, grad_params
from .evaluation import ErrorReport, evaluate, relative_l2
from .model import SpModel, build_model, eval_constrained, load_checkpoint, save_checkpoint
from .problems import Domain, PdeProblem, catalog, get_problem
from .refsolver import GridSolution, SpectralConfig, etdrk4_solve, self_converge
from .sampling import BatchPlan, lhs_sample
from .training import ModelConfig, TrainingConfig, sp_loss, train

__version__ = "0.1.0"

"""Distribution-matching calibration for probabilistic regression.

Models predict a Gaussian per output; the training objective adds a penalty
on the divergence between the distribution of standardized residuals and the
unit normal, estimated through chi-square hyper-constraints.
"""

from .autodiff import BACKEND
from .calibrate import PredictiveFamily, TemperatureModel, fit_temperature, pit_canonicalize
from .errors import ConfigError, ContractError, DataFormatError, DomainError, FcalError, TrainingError
from .losses import LossSpec, combined_loss, fcal_loss, nll_loss, objective
from .metrics import EvalConfig, MetricsReport, ece, evaluate, mce
from .model import MLPRegressor, TrainConfig, fit, init, init_for_data, load_checkpoint, save_checkpoint
from .params import GaussianParams
from .synthdata import OracleModel, SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConfigError", "ContractError", "DataFormatError", "DomainError", "EvalConfig",
    "FcalError", "GaussianParams", "LossSpec", "MLPRegressor", "MetricsReport", "OracleModel",
    "PredictiveFamily", "SynthConfig", "TemperatureModel", "TrainConfig", "TrainingError",
    "combined_loss", "ece", "evaluate", "fcal_loss", "fit", "fit_temperature", "generate", "init",
    "init_for_data", "load_checkpoint", "mce", "nll_loss", "objective", "pit_canonicalize",
    "save_checkpoint",
]

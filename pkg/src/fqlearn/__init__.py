"""Factorized multi-agent Q-learning with IQL/MF-Q baselines and two test environments."""
from .agents import Learner, load_learner, make_learner
from .config import RunConfig, load as load_config, parse as parse_config
from .coset import CoSet, Transition
from .errors import (ConfigurationError, DegenerateInputError, FQLError, InputError, QueryError,
                     TrainingError)
from .evaluation import EvalReport, cross_play, evaluate_squeeze
from .fql import FactorizedQModel, GroupModel, best_response_action, mean_embedding
from .persistence import save_run
from .training import TrainResult, train

__all__ = [
    "CoSet", "ConfigurationError", "DegenerateInputError", "EvalReport", "FQLError",
    "FactorizedQModel", "GroupModel", "InputError", "Learner", "QueryError", "RunConfig",
    "TrainResult", "TrainingError", "Transition", "best_response_action", "cross_play",
    "evaluate_squeeze", "load_config", "load_learner", "make_learner", "mean_embedding",
    "parse_config", "save_run", "train",
]

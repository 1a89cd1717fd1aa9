"""Dual actor-critic: tabular LP oracles and the training loop."""

import json

from . import _core
from ._core import (
    DivergedError,
    InvalidArgument,
    InvalidStateError,
    NumericalError,
    TabularMdp,
    UnsupportedError,
    bellman_optimality_operator,
    dual_feasibility_residual,
    duality_gap,
    env_mdp,
    k_step_bellman,
    lambda_bellman,
    load_mdp,
    policy_evaluation,
    registered_envs,
    save_mdp,
    solve_lp_oracles,
    value_iteration,
)

__all__ = [
    "DivergedError", "InvalidArgument", "InvalidStateError", "NumericalError", "TabularMdp",
    "Trainer", "UnsupportedError", "bellman_optimality_operator", "default_config",
    "dual_feasibility_residual", "duality_gap", "env_mdp", "k_step_bellman", "lambda_bellman",
    "load_mdp", "normalize_config", "policy_evaluation", "registered_envs", "run_experiment",
    "save_mdp", "solve_lp_oracles", "value_iteration",
]


def _dump(config):
    return json.dumps(config or {})


def default_config():
    return json.loads(_core.default_config())


def normalize_config(config):
    """Validated config with defaults filled in. Unknown fields raise ValueError."""
    return json.loads(_core.normalize_config(_dump(config)))


class Trainer:
    """Stepwise training on a registered environment; each step returns the iteration record."""

    def __init__(self, env, config=None):
        self._impl = _core.Trainer(_dump(config), env)

    def step(self):
        return json.loads(self._impl.step())

    @property
    def iteration(self):
        return self._impl.iteration

    def save(self, path):
        self._impl.save(path)


def run_experiment(env, config=None, out_dir=None):
    return [json.loads(r) for r in _core.run_experiment(_dump(config), env, out_dir)]

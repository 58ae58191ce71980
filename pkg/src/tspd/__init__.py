"""Truck-and-drone routing solved with an attention policy trained by
actor-critic reinforcement learning, plus exact and heuristic references."""

from .environment import JointAction, State, TSPDEnv, Trajectory, env_for, rollout_actions
from .instances import Instance, InstanceSet, generate_instances, load_instance, load_instances
from .model import Model, ModelConfig
from .oracles import Plan, exact_optimum, greedy_nearest, random_rollout

__all__ = [
    "Instance", "InstanceSet", "JointAction", "Model", "ModelConfig", "Plan", "State",
    "TSPDEnv", "Trajectory", "env_for", "exact_optimum", "generate_instances",
    "greedy_nearest", "load_instance", "load_instances", "random_rollout", "rollout_actions",
]

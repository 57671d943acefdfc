"""Episodic environments for the insertion and detection agents."""

from .detection import (
    DetectionEnv,
    PrunedBasis,
    SsdConfig,
    cod_position_rewards,
    harvest_vectors,
    prune_states,
    reward_cod,
    reward_sad,
    reward_ssd,
    sad_position_rewards,
)
from .insertion import (
    ACTIVATION_REWARDS,
    InsertionEnv,
    TrojanRecord,
    harvest_trojans,
    reward_for_rare_count,
)

__all__ = [
    "ACTIVATION_REWARDS",
    "DetectionEnv",
    "InsertionEnv",
    "PrunedBasis",
    "SsdConfig",
    "TrojanRecord",
    "cod_position_rewards",
    "harvest_trojans",
    "harvest_vectors",
    "prune_states",
    "reward_cod",
    "reward_for_rare_count",
    "reward_sad",
    "reward_ssd",
    "sad_position_rewards",
]

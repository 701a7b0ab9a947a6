from .ppo import PpoConfig, TrainingDiverged, default_config
from .rollout import ModularActor, NetActor, ScriptedSeat, collect, to_batch
from .algos import (MetricsSink, train_baseline_agg, train_baseline_modular,
                    train_ego, train_fomaml, train_selfplay_partner)

__all__ = [
    "PpoConfig", "TrainingDiverged", "default_config", "collect", "to_batch",
    "ModularActor", "NetActor", "ScriptedSeat", "MetricsSink", "train_ego",
    "train_selfplay_partner", "train_baseline_agg", "train_baseline_modular",
    "train_fomaml",
]

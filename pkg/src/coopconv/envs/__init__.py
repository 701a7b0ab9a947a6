from .bandit import BanditEnv, BanditTask, make_arms_task, make_study_tasks, make_tweaked_task
from .blocks import ALL_GOALS, BlocksEnv, BlocksTask
from .hanabi import HanabiConfig, HanabiEnv

__all__ = [
    "BanditEnv", "BanditTask", "make_arms_task", "make_tweaked_task",
    "make_study_tasks", "BlocksEnv", "BlocksTask", "ALL_GOALS",
    "HanabiEnv", "HanabiConfig",
]

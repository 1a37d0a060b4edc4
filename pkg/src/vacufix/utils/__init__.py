"""Configuration and logging helpers."""

from vacufix.utils.config import PlannerConfig, worker_count
from vacufix.utils.logger import setup_logger

__all__ = ["PlannerConfig", "setup_logger", "worker_count"]

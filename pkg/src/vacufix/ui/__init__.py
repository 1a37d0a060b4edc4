"""Terminal reporting."""

from vacufix.ui.report import PlanSummary

__all__ = ["PlanSummary"]

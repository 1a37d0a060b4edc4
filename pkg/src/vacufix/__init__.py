"""
vacufix - support planning for vacuum balloon-hand fixtures.

Given a part mesh and its screw locations, vacufix finds where two or three
suction modules should hold the part so it stays put while screws are driven
out.
"""

__version__ = "0.1.0"
__author__ = "vacufix Contributors"

from vacufix.core.mesh import TriMesh, load_stl
from vacufix.core.plan import SupportPlanner
from vacufix.utils.config import PlannerConfig

__all__ = ["PlannerConfig", "SupportPlanner", "TriMesh", "load_stl", "__version__"]

"""Core geometry, filtering, planning and statics."""

from vacufix.core.candidates import CandidateFilter, FilterParams, Stage, run_pipeline
from vacufix.core.mesh import TriMesh, load_stl, mass_properties
from vacufix.core.statics import ScrewSpec, StaticsEngine, SuctionLimits

__all__ = [
    "CandidateFilter",
    "FilterParams",
    "ScrewSpec",
    "Stage",
    "StaticsEngine",
    "SuctionLimits",
    "TriMesh",
    "load_stl",
    "mass_properties",
    "run_pipeline",
]

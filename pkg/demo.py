"""
End-to-end demo script to showcase the complete workflow.

Builds a synthetic housing with a recessed underside, plans its supports for
three screws and prints the per-screw force table.
"""

from pathlib import Path
from tempfile import TemporaryDirectory

from vacufix.core import artifacts
from vacufix.core.mesh import save_stl
from vacufix.core.plan import SupportPlanner
from vacufix.core.primitives import column_solid
from vacufix.utils.config import PlannerConfig

SCREWS = [
    {"id": "S1", "position": [40.0, 20.0, 30.0]},
    {"id": "S2", "position": [200.0, 140.0, 30.0]},
    {"id": "S3", "position": [120.0, 80.0, 30.0]},
]


def create_demo_part(demo_dir: Path) -> Path:
    """
    Write a 240 × 160 × 30 mm housing whose middle third is recessed 6 mm.

    Args:
        demo_dir: Directory to write the STL to

    Returns:
        Path of the STL file
    """
    mesh = column_solid(
        [0.0, 80.0, 160.0, 240.0],
        [0.0, 160.0],
        bottoms=[[0.0], [6.0], [0.0]],
        tops=[[30.0], [30.0], [30.0]],
        name="housing",
    )
    path = save_stl(mesh, demo_dir / "housing.stl")
    print(f"✓ Wrote {mesh.n_triangles} triangles to {path.name}")
    return path


def main():
    """Run the demo."""
    print("=" * 70)
    print("VACUFIX - END-TO-END DEMO")
    print("=" * 70)
    print()

    with TemporaryDirectory() as temp_dir:
        demo_dir = Path(temp_dir)

        print("STEP 1: Creating the demo part")
        print("-" * 70)
        stl_path = create_demo_part(demo_dir)
        print()

        print("STEP 2: Filtering support candidates")
        print("-" * 70)
        config = PlannerConfig(
            settings={
                "mesh": {"path": str(stl_path), "mass": 0.8},
                "filter": {"grid_pitch": 4.0, "knn_k": 12},
                "screws": SCREWS,
                "output": {"directory": str(demo_dir / "out")},
            }
        )
        planner = SupportPlanner(config, show_progress=True)
        outcome = planner.plan(config.output_dir())
        for stage, count in outcome.report.stage_counts.items():
            print(f"  {stage:>8}: {count} point(s)")
        print()

        print("STEP 3: Ranking configurations")
        print("-" * 70)
        for label, counts in outcome.report.hull_counts.items():
            print(f"  {label}: {counts['com_inside']}/{counts['enumerated']} enclose the COM")
        if outcome.has_feasible:
            best = outcome.ranked.feasible[0]
            print(f"✓ Best configuration: {best.config.config_id}")
            for contact in best.config.positions:
                print(f"    contact at ({contact[0]:.1f}, {contact[1]:.1f}, {contact[2]:.1f}) mm")
        else:
            print("✗ No configuration stays within the suction limit")
        print()

        print("STEP 4: Force table")
        print("-" * 70)
        print(artifacts.force_table_text(outcome.force_table))

        print("STEP 5: Summary")
        print("-" * 70)
        print(f"✓ {len(outcome.report.artifacts)} artifact(s) written to {config.output_dir()}")
        print("  (the temporary directory is removed when the demo exits)")
        print()
        print("=" * 70)


if __name__ == "__main__":
    main()

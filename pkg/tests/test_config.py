"""
Tests for the planner configuration.
"""

import json

import pytest

from vacufix.core.candidates import Stage
from vacufix.core.errors import ConfigError
from vacufix.utils.config import THREADS_ENV, PlannerConfig, worker_count


@pytest.fixture
def write_config(tmp_path):
    """Write a JSON config next to an empty mesh file and return its path."""
    (tmp_path / "part.stl").write_bytes(b"solid part\nendsolid part\n")

    def _write(data):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return _write


class TestDefaults:
    """Built-in defaults."""

    def test_default_values(self):
        """Test the default filter, statics and sweep values."""
        config = PlannerConfig()

        params = config.filter_params()
        assert params.grid_pitch == 2.0
        assert params.suction_radius == 8.7
        assert params.coverage_tau == 0.9
        assert params.neighbor_source is Stage.PSUPPORT
        assert config.statics_settings().f_max == 5.7
        assert config.get("sweep.step") == 0.5
        assert config.get("planner.spacing_d") == 60.0
        assert config.screws() == []

    def test_get_missing_key_returns_default(self):
        """Test that unknown or null keys fall back to the default."""
        config = PlannerConfig()
        assert config.get("mesh.mass", 1.5) == 1.5
        assert config.get("nothing.here", "x") == "x"

    def test_defaults_not_shared(self):
        """Test that changing one instance leaves the class defaults untouched."""
        config = PlannerConfig()
        config.set("filter.theta_max", 45.0)

        assert PlannerConfig().get("filter.theta_max") == 60.0


class TestValidation:
    """Rejected settings name the offending field."""

    def test_unknown_key(self):
        """Test that an unknown key is rejected with its dotted name."""
        with pytest.raises(ConfigError) as exc_info:
            PlannerConfig(settings={"filter": {"bogus": 1}})
        assert exc_info.value.field == "filter.bogus"

    def test_unknown_section(self):
        """Test that an unknown top-level section is rejected."""
        with pytest.raises(ConfigError) as exc_info:
            PlannerConfig(settings={"extras": {}})
        assert exc_info.value.field == "extras"

    @pytest.mark.parametrize(
        "settings, field",
        [
            ({"filter": {"grid_pitch": 0}}, "filter.grid_pitch"),
            ({"filter": {"coverage_tau": 1.5}}, "filter.coverage_tau"),
            ({"filter": {"theta_max": 90}}, "filter.theta_max"),
            ({"filter": {"knn_k": "many"}}, "filter.knn_k"),
            ({"filter": {"neighbor_source": "P1"}}, "filter.neighbor_source"),
            ({"statics": {"f_max": -1}}, "statics.f_max"),
            ({"statics": {"gravity": 0}}, "statics.gravity"),
            ({"mesh": {"density": 0}}, "mesh.density"),
            ({"mesh": {"com": [1, 2]}}, "mesh.com"),
            ({"planner": {"arities": [4]}}, "planner.arities"),
            ({"planner": {"spacing_d": True}}, "planner.spacing_d"),
            ({"sweep": {"step": 0}}, "sweep.step"),
            ({"sweep": {"start": 20}}, "sweep.end"),
            ({"sweep": {"check_levels": [18, -1]}}, "sweep.check_levels"),
        ],
    )
    def test_invalid_values(self, settings, field):
        """Test that out-of-range values raise ConfigError naming the field."""
        with pytest.raises(ConfigError) as exc_info:
            PlannerConfig(settings=settings)
        assert exc_info.value.field == field
        assert field in str(exc_info.value)

    def test_set_unknown_key(self):
        """Test that set refuses keys that do not exist."""
        config = PlannerConfig()
        with pytest.raises(ConfigError) as exc_info:
            config.set("statics.bogus", 1)
        assert exc_info.value.field == "statics.bogus"

    def test_set_revalidates(self):
        """Test that set rejects a bad value."""
        config = PlannerConfig()
        with pytest.raises(ConfigError):
            config.set("filter.suction_radius", -2.0)


class TestFiles:
    """Loading from disk."""

    def test_load_and_resolve_mesh(self, write_config, tmp_path):
        """Test that a relative mesh path resolves against the config directory."""
        path = write_config({"mesh": {"path": "part.stl"}, "filter": {"theta_max": 45}})

        config = PlannerConfig(path)

        assert config.mesh_path() == tmp_path / "part.stl"
        assert config.filter_params().theta_max == 45
        assert config.output_dir() == tmp_path / "vacufix-out"

    def test_mesh_path_missing(self, write_config):
        """Test that a missing mesh file is a configuration error on mesh.path."""
        config = PlannerConfig(write_config({"mesh": {"path": "nope.stl"}}))
        with pytest.raises(ConfigError) as exc_info:
            config.mesh_path()
        assert exc_info.value.field == "mesh.path"

    def test_mesh_path_unset(self):
        """Test that no mesh path is a configuration error."""
        with pytest.raises(ConfigError):
            PlannerConfig().mesh_path()

    def test_invalid_json(self, tmp_path):
        """Test that malformed JSON is reported as ConfigError."""
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError, match="Invalid JSON"):
            PlannerConfig(path)

    def test_missing_file(self, tmp_path):
        """Test that a missing config file is reported as ConfigError."""
        with pytest.raises(ConfigError, match="not found"):
            PlannerConfig(tmp_path / "absent.json")

    def test_non_object(self, write_config):
        """Test that a JSON array at top level is rejected."""
        with pytest.raises(ConfigError):
            PlannerConfig(write_config([1, 2, 3]))

    def test_save_round_trip(self, write_config, tmp_path):
        """Test that saved settings load back to the same values."""
        config = PlannerConfig(write_config({"mesh": {"path": "part.stl"}}))
        config.set("sweep.end", 25.0)

        saved = config.save(tmp_path / "saved.json")

        assert PlannerConfig(saved).get("sweep.end") == 25.0


class TestScrews:
    """The screws list."""

    def test_parse(self):
        """Test ids, defaults and exclusion flags."""
        config = PlannerConfig(
            settings={
                "screws": [
                    {"id": "A", "position": [1, 2, 3], "press_force": 6},
                    {"position": [4, 5, 6], "exclude": True},
                ]
            }
        )

        screws = config.screws()

        assert [s.id for s in screws] == ["A", "S1"]
        assert screws[0].press_force == 6.0
        assert screws[0].axis.tolist() == [0.0, 0.0, -1.0]
        assert screws[1].exclude

    def test_duplicate_ids(self):
        """Test that duplicate screw ids are rejected."""
        with pytest.raises(ConfigError) as exc_info:
            PlannerConfig(settings={"screws": [{"id": "A", "position": [0, 0, 0]}] * 2})
        assert exc_info.value.field == "screws[1].id"

    @pytest.mark.parametrize(
        "entry, field",
        [
            ({"id": "A"}, "screws[0].position"),
            ({"id": "A", "position": [0, 0]}, "screws[0].position"),
            ({"id": "A", "position": [0, 0, 0], "torque": 3}, "screws[0]"),
            ({"id": "A", "position": [0, 0, 0], "press_force": "hard"}, "screws[0].press_force"),
        ],
    )
    def test_invalid_entries(self, entry, field):
        """Test that malformed screw entries name the screw."""
        with pytest.raises(ConfigError) as exc_info:
            PlannerConfig(settings={"screws": [entry]})
        assert exc_info.value.field == field


class TestConfigHash:
    """Provenance hash."""

    def test_stable(self, write_config):
        """Test that the same settings and mesh give the same hash."""
        path = write_config({"mesh": {"path": "part.stl"}})
        assert PlannerConfig(path).config_hash() == PlannerConfig(path).config_hash()

    def test_changes_with_settings(self, write_config):
        """Test that any setting change changes the hash."""
        config = PlannerConfig(write_config({"mesh": {"path": "part.stl"}}))
        before = config.config_hash()
        config.set("filter.theta_max", 50.0)
        assert config.config_hash() != before

    def test_changes_with_mesh(self, write_config, tmp_path):
        """Test that editing the mesh file changes the hash."""
        config = PlannerConfig(write_config({"mesh": {"path": "part.stl"}}))
        before = config.config_hash()
        (tmp_path / "part.stl").write_bytes(b"solid other\nendsolid other\n")
        assert config.config_hash() != before


class TestWorkerCount:
    """VACUFIX_THREADS."""

    def test_unset(self, monkeypatch):
        """Test that without the variable at least one worker is used."""
        monkeypatch.delenv(THREADS_ENV, raising=False)
        assert worker_count() >= 1

    def test_single_thread(self, monkeypatch):
        """Test that 1 forces a single worker."""
        monkeypatch.setenv(THREADS_ENV, "1")
        assert worker_count() == 1

    @pytest.mark.parametrize("raw", ["zero", "0", "-3"])
    def test_invalid(self, monkeypatch, raw):
        """Test that non-positive or non-integer values are rejected."""
        monkeypatch.setenv(THREADS_ENV, raw)
        with pytest.raises(ConfigError):
            worker_count()

"""Planner configuration: a JSON document merged over built-in defaults."""

import copy
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

from vacufix.core.candidates import FilterParams
from vacufix.core.errors import ConfigError
from vacufix.core.mesh import LoadOptions
from vacufix.core.statics import ScrewSpec, StaticsSettings, press_levels

logger = logging.getLogger(__name__)

THREADS_ENV = "VACUFIX_THREADS"
SCREW_KEYS = {"id", "position", "axis", "press_force", "exclude"}


class PlannerConfig:
    """Manages the settings of one planning run.

    Every key of ``DEFAULT_SETTINGS`` may be overridden; any other key is an
    error. Paths inside the file are relative to the file itself.
    """

    DEFAULT_SETTINGS: Dict[str, Any] = {
        "mesh": {
            "path": None,
            "density": 2.7e-6,  # kg/mm³ (aluminium)
            "mass": None,  # kg, overrides density × volume
            "com": None,  # mm, overrides the integrated centre of mass
            "merge_decimals": 9,
            "area_epsilon": 1e-9,
        },
        "filter": {
            "grid_pitch": 2.0,
            "knn_k": 50,
            "theta_max": 60.0,
            "ring_rays": 60,
            "suction_radius": 8.7,
            "coverage_tau": 0.9,
            "continuity_delta": 2.5,
            "ring_window": 5.0,
            "visibility_skip": 1e-3,
            "neighbor_source": "Psupport",
        },
        "planner": {
            "spacing_d": 60.0,
            "samples_per_circle": 16,
            "one_per_cell": True,
            "enforce_spacing": True,
            "collinear_deg": 1.0,
            "arities": [2, 3],
            "prefer_fewest_modules": False,
        },
        "statics": {
            "f_max": 5.7,
            "gravity": 9.81,
            "omit_press_moment": False,
            "vertical_normals": False,
            "moment_weight": 1000.0,
        },
        "sweep": {
            "start": 0.0,
            "end": 18.0,
            "step": 0.5,
            "table_press": 18.0,
            "check_levels": [18.0, 25.0],
        },
        "screws": [],
        "output": {"directory": "vacufix-out"},
    }

    def __init__(self, config_file: Optional[Path] = None, settings: Optional[Dict] = None):
        """
        Initialize configuration.

        Args:
            config_file: JSON file to load; None keeps the defaults
            settings: In-memory overrides applied on top of the file
        """
        self.config_file = Path(config_file) if config_file else None
        self.base_dir = self.config_file.parent if self.config_file else Path.cwd()
        self.settings: Dict[str, Any] = copy.deepcopy(self.DEFAULT_SETTINGS)
        if self.config_file:
            self.load()
        if settings:
            self.settings = _merge(self.settings, settings, "")
        self.validate()

    def load(self) -> None:
        """Load the configuration file over the defaults."""
        assert self.config_file is not None
        try:
            with open(self.config_file, "r", encoding="utf-8") as f:
                user = json.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"Config file not found: {self.config_file}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON in {self.config_file}: {e}") from e
        if not isinstance(user, dict):
            raise ConfigError(f"{self.config_file} must hold a JSON object")
        self.settings = _merge(copy.deepcopy(self.DEFAULT_SETTINGS), user, "")
        logger.debug(f"Loaded configuration from {self.config_file}")

    def save(self, path: Optional[Path] = None) -> Path:
        """Write the effective settings as JSON."""
        target = Path(path) if path else self.config_file
        if target is None:
            raise ConfigError("No path to save the configuration to")
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8") as f:
            json.dump(self.settings, f, indent=2, sort_keys=True)
        logger.debug(f"Saved configuration to {target}")
        return target

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get a configuration value.

        Args:
            key: Dotted key, e.g. ``filter.theta_max``
            default: Value returned when the key is absent or null

        Returns:
            Configuration value or default
        """
        value: Any = self.settings
        for k in key.split("."):
            if not isinstance(value, dict):
                return default
            value = value.get(k)
            if value is None:
                return default
        return value

    def set(self, key: str, value: Any) -> None:
        """
        Set a known configuration value and re-validate.

        Raises:
            ConfigError: If ``key`` is not a known setting
        """
        keys = key.split(".")
        target = self.settings
        for k in keys[:-1]:
            if not isinstance(target.get(k), dict):
                raise ConfigError("unknown setting", key)
            target = target[k]
        if keys[-1] not in target:
            raise ConfigError("unknown setting", key)
        target[keys[-1]] = value
        self.validate()

    def validate(self) -> None:
        """Check every value against its allowed range."""
        self.filter_params()
        self.statics_settings()
        self.load_options()

        mesh = self.settings["mesh"]
        if not _number(mesh["density"], "mesh.density") > 0:
            raise ConfigError(f"must be > 0, got {mesh['density']}", "mesh.density")
        if mesh["mass"] is not None and not _number(mesh["mass"], "mesh.mass") > 0:
            raise ConfigError(f"must be > 0, got {mesh['mass']}", "mesh.mass")
        if mesh["com"] is not None and (not isinstance(mesh["com"], list) or len(mesh["com"]) != 3):
            raise ConfigError("must be a list of 3 numbers", "mesh.com")

        planner = self.settings["planner"]
        if not _number(planner["spacing_d"], "planner.spacing_d") > 0:
            raise ConfigError(f"must be > 0, got {planner['spacing_d']}", "planner.spacing_d")
        if _number(planner["samples_per_circle"], "planner.samples_per_circle") < 2:
            raise ConfigError("must be >= 2", "planner.samples_per_circle")
        if not 0 <= _number(planner["collinear_deg"], "planner.collinear_deg") < 60:
            raise ConfigError("must be in [0, 60)", "planner.collinear_deg")
        arities = planner["arities"]
        if not isinstance(arities, list) or not arities or not set(arities) <= {2, 3}:
            raise ConfigError("must be a non-empty subset of [2, 3]", "planner.arities")

        sweep = self.settings["sweep"]
        press_levels(
            _number(sweep["start"], "sweep.start"),
            _number(sweep["end"], "sweep.end"),
            _number(sweep["step"], "sweep.step"),
        )
        if _number(sweep["table_press"], "sweep.table_press") < 0:
            raise ConfigError("must be >= 0", "sweep.table_press")
        if any(_number(level, "sweep.check_levels") < 0 for level in sweep["check_levels"]):
            raise ConfigError("levels must be >= 0", "sweep.check_levels")

        self.screws()

    def mesh_path(self) -> Path:
        """
        Mesh file, resolved against the config file's directory.

        Raises:
            ConfigError: If unset or missing
        """
        raw = self.settings["mesh"]["path"]
        if not raw:
            raise ConfigError("no mesh file configured", "mesh.path")
        path = Path(raw)
        if not path.is_absolute():
            path = self.base_dir / path
        if not path.exists():
            raise ConfigError(f"file not found: {path}", "mesh.path")
        return path

    def output_dir(self) -> Path:
        """Artifact directory, resolved against the config file's directory."""
        path = Path(self.settings["output"]["directory"])
        return path if path.is_absolute() else self.base_dir / path

    def load_options(self) -> LoadOptions:
        """STL loading options."""
        mesh = self.settings["mesh"]
        if not _number(mesh["area_epsilon"], "mesh.area_epsilon") >= 0:
            raise ConfigError("must be >= 0", "mesh.area_epsilon")
        return LoadOptions(
            area_epsilon=float(mesh["area_epsilon"]), merge_decimals=int(mesh["merge_decimals"])
        )

    def filter_params(self) -> FilterParams:
        """Typed view of the ``filter`` section."""
        f = self.settings["filter"]
        return FilterParams(
            grid_pitch=_number(f["grid_pitch"], "filter.grid_pitch"),
            knn_k=int(_number(f["knn_k"], "filter.knn_k")),
            theta_max=_number(f["theta_max"], "filter.theta_max"),
            ring_rays=int(_number(f["ring_rays"], "filter.ring_rays")),
            suction_radius=_number(f["suction_radius"], "filter.suction_radius"),
            coverage_tau=_number(f["coverage_tau"], "filter.coverage_tau"),
            continuity_delta=_number(f["continuity_delta"], "filter.continuity_delta"),
            ring_window=_number(f["ring_window"], "filter.ring_window"),
            visibility_skip=_number(f["visibility_skip"], "filter.visibility_skip"),
            neighbor_source=f["neighbor_source"],
        )

    def statics_settings(self) -> StaticsSettings:
        """Typed view of the ``statics`` section."""
        s = self.settings["statics"]
        return StaticsSettings(
            f_max=_number(s["f_max"], "statics.f_max"),
            gravity=_number(s["gravity"], "statics.gravity"),
            omit_press_moment=bool(s["omit_press_moment"]),
            vertical_normals=bool(s["vertical_normals"]),
            moment_weight=_number(s["moment_weight"], "statics.moment_weight"),
        )

    def screws(self) -> List[ScrewSpec]:
        """
        Configured screws in file order.

        Raises:
            ConfigError: On unknown keys, duplicate ids or bad values
        """
        raw = self.settings["screws"]
        if not isinstance(raw, list):
            raise ConfigError("must be a list", "screws")
        screws: List[ScrewSpec] = []
        seen = set()
        for k, entry in enumerate(raw):
            if not isinstance(entry, dict):
                raise ConfigError("each screw must be an object", f"screws[{k}]")
            unknown = set(entry) - SCREW_KEYS
            if unknown:
                raise ConfigError(f"unknown key(s) {sorted(unknown)}", f"screws[{k}]")
            if "position" not in entry:
                raise ConfigError("position is required", f"screws[{k}].position")
            screw_id = str(entry.get("id", f"S{k}"))
            if screw_id in seen:
                raise ConfigError(f"duplicate screw id {screw_id}", f"screws[{k}].id")
            seen.add(screw_id)
            position = entry["position"]
            if not isinstance(position, list) or len(position) != 3:
                raise ConfigError("must be a list of 3 numbers", f"screws[{k}].position")
            screws.append(
                ScrewSpec(
                    id=screw_id,
                    position=position,
                    axis=entry.get("axis", [0.0, 0.0, -1.0]),
                    press_force=_number(entry.get("press_force", 0.0), f"screws[{k}].press_force"),
                    exclude=bool(entry.get("exclude", False)),
                )
            )
        return screws

    def config_hash(self) -> str:
        """SHA-256 of the effective settings and the mesh file content."""
        digest = hashlib.sha256(
            json.dumps(self.settings, sort_keys=True, separators=(",", ":")).encode("utf-8")
        )
        try:
            digest.update(self.mesh_path().read_bytes())
        except ConfigError:
            pass
        return digest.hexdigest()


def worker_count() -> int:
    """Worker threads for independent solves (``VACUFIX_THREADS`` caps it)."""
    default = os.cpu_count() or 1
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError as e:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from e
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {value}")
    return min(value, default) if default else value


def _merge(base: Dict[str, Any], override: Dict[str, Any], prefix: str) -> Dict[str, Any]:
    for key, value in override.items():
        dotted = f"{prefix}{key}"
        if key not in base:
            raise ConfigError("unknown setting", dotted)
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError("must be an object", dotted)
            base[key] = _merge(base[key], value, f"{dotted}.")
        else:
            base[key] = value
    return base


def _number(value: Any, field: Optional[str] = None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"must be a number, got {value!r}", field)
    return float(value)

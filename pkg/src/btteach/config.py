"""Runtime configuration: tolerances, costs, clustering and planner knobs.

Values load from a TOML file at the workspace root; every field has a default
so an empty or missing file is fine.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

CONFIG_FILENAME = "btteach.toml"


@dataclass
class Tolerances:
    place_sphere_m: float = 0.05
    drop_radius_m: float = 0.10
    # vertical band for loosely-placed objects, relative to the recorded pose
    drop_band_low_m: float = -0.30
    drop_band_high_m: float = 0.05
    goal_group_m: float = 0.01


@dataclass
class Costs:
    pick: float = 2.0
    place: float = 3.0
    drop: float = 3.0
    set_gripper: float = 1.0

    def for_type(self, t: str) -> float:
        key = t if t != "setgripper" else "set_gripper"
        return float(getattr(self, key))


@dataclass
class Clustering:
    eps_m: float = 0.03
    min_pts: int = 2
    # context threshold = scale * n_demos / eps_m
    context_threshold_scale: float = 1.0
    default_frame: str = "base"
    context_detection: bool = True
    max_contexts: int = 2
    min_cluster_radius_m: float = 1e-4


@dataclass
class Goals:
    include_gripper: bool = False


@dataclass
class Planner:
    expansion_budget: int = 200
    tick_budget: int = 10_000
    action_duration_ticks: int = 1
    gripper_closed_scenarios: bool = True


@dataclass
class Executor:
    action_duration_ticks: int = 5
    success_stability_ticks: int = 10
    tick_budget: int = 10_000


@dataclass
class Demo:
    noise_sigma_m: float = 0.01


@dataclass
class Config:
    tolerances: Tolerances = field(default_factory=Tolerances)
    costs: Costs = field(default_factory=Costs)
    clustering: Clustering = field(default_factory=Clustering)
    goals: Goals = field(default_factory=Goals)
    planner: Planner = field(default_factory=Planner)
    executor: Executor = field(default_factory=Executor)
    demo: Demo = field(default_factory=Demo)


def _apply_section(obj, data: dict, path: str) -> None:
    from .errors import ParseError

    names = {f.name for f in dataclasses.fields(obj)}
    for key, value in data.items():
        if key not in names:
            raise ParseError(f"unknown config key {key!r}", path=f"{path}.{key}")
        setattr(obj, key, value)


def load_config(path: str | Path | None = None) -> Config:
    """Build a Config from a TOML file; missing file means defaults."""
    cfg = Config()
    if path is None:
        return cfg
    p = Path(path)
    if p.is_dir():
        p = p / CONFIG_FILENAME
    if not p.exists():
        return cfg
    with open(p, "rb") as fh:
        data = tomllib.load(fh)
    for section, sub in data.items():
        if not hasattr(cfg, section):
            from .errors import ParseError

            raise ParseError(f"unknown config section {section!r}", path=section)
        _apply_section(getattr(cfg, section), sub, section)
    return cfg


def config_to_dict(cfg: Config) -> dict:
    return dataclasses.asdict(cfg)

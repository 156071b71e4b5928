"""Experiment configuration files (JSON) with strict validation.

Schema::

    {
      "name": "optional label, defaults to the variant",
      "variant": "zapp" | "zapp-no-interaction" | "discrete-baseline",
      "scenes": 30,                # number of episodes
      "seed": 0,                   # episode i uses scene seed seed + i
      "planner": {...},            # any PlannerConfig field
      "simulator": {..., "forces": {...}}  # SimConfig fields, ForceParams under "forces"
    }

Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

from .planner import VARIANTS, PlannerConfig
from .predictor import ForceParams
from .simulator import SimConfig


class ConfigError(ValueError):
    pass


def _coerce(path: str, value, default, annotation: str):
    if "None" in annotation and value is None:
        return None
    if isinstance(default, bool) or annotation == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int) and annotation == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or len(value) != len(default):
            raise ConfigError(f"{path}: expected a list of {len(default)} numbers")
        return tuple(_coerce(f"{path}[{i}]", v, d, "float") for i, (v, d) in enumerate(zip(value, default)))
    if "float" in annotation:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported value {value!r}")


def _build(cls, data, path: str, nested: dict | None = None):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    nested = nested or {}
    base = cls()
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    kw = {}
    for key, value in data.items():
        f = known[key]
        if key in nested:
            kw[key] = _build(nested[key], value, f"{path}.{key}")
        else:
            kw[key] = _coerce(f"{path}.{key}", value, getattr(base, key), str(f.type))
    return replace(base, **kw)


@dataclass(frozen=True)
class ExperimentConfig:
    variant: str = "zapp"
    scenes: int = 30
    seed: int = 0
    name: str = ""
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    simulator: SimConfig = field(default_factory=SimConfig)

    @property
    def label(self) -> str:
        return self.name or self.variant

    @property
    def seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.scenes)]

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: expected a JSON object at top level")
        allowed = {"variant", "scenes", "seed", "name", "planner", "simulator"}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ConfigError(f"config: unknown key(s) {', '.join(unknown)}")
        variant = data.get("variant", "zapp")
        if variant not in VARIANTS:
            raise ConfigError(f"config.variant: {variant!r} is not one of {', '.join(VARIANTS)}")
        scenes = _coerce("config.scenes", data.get("scenes", 30), 30, "int")
        if scenes < 1:
            raise ConfigError("config.scenes: must be at least 1")
        seed = _coerce("config.seed", data.get("seed", 0), 0, "int")
        if seed < 0:
            raise ConfigError("config.seed: must be non-negative")
        name = _coerce("config.name", data.get("name", ""), "", "str")
        planner = _build(PlannerConfig, data.get("planner", {}), "config.planner")
        # Variant flags apply unless the planner block overrides them.
        variant_cfg = PlannerConfig.for_variant(variant)
        flags = {k: getattr(variant_cfg, k) for k in ("continuous", "interaction")
                 if k not in data.get("planner", {})}
        planner = replace(planner, **flags)
        simulator = _build(SimConfig, data.get("simulator", {}), "config.simulator", {"forces": ForceParams})
        _check_ranges(planner, simulator)
        return cls(variant, scenes, seed, name, planner, simulator)

    def to_dict(self) -> dict:
        d = {"variant": self.variant, "scenes": self.scenes, "seed": self.seed}
        if self.name:
            d["name"] = self.name
        d["planner"] = asdict(self.planner)
        sim = asdict(self.simulator)
        sim["spawn_x"] = list(sim["spawn_x"])
        d["simulator"] = sim
        return d


def _check_ranges(p: PlannerConfig, s: SimConfig) -> None:
    checks = [
        (p.dt > 0, "planner.dt must be positive"),
        (p.horizon >= 2, "planner.horizon must be at least 2"),
        (1 <= p.replan_steps <= p.horizon, "planner.replan_steps must be within 1..horizon"),
        (0 <= p.consensus_steps < p.horizon, "planner.consensus_steps must be within 0..horizon-1"),
        (p.n_modes >= 1, "planner.n_modes must be at least 1"),
        (p.n_agents >= 0, "planner.n_agents must be non-negative"),
        (p.alpha > 0, "planner.alpha must be positive"),
        (p.margin >= 0, "planner.margin must be non-negative"),
        (1 <= p.max_outer <= 10, "planner.max_outer must be within 1..10"),
        (0 < s.dt_sim <= 0.02, "simulator.dt_sim must be within (0, 0.02]"),
        (s.n_agents >= 0, "simulator.n_agents must be non-negative"),
        (s.timeout > 0, "simulator.timeout must be positive"),
        (s.hallway_width > 2 * s.agent_half_size, "simulator.hallway_width too small"),
    ]
    sub = p.dt / s.dt_sim
    checks.append((abs(sub - round(sub)) < 1e-9, "planner.dt must be a multiple of simulator.dt_sim"))
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return ExperimentConfig.from_dict(data)

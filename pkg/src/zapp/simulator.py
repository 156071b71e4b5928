"""Hallway benchmark: social-force agents, fine-step ground truth, crash audit."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from collections import deque
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .planner import PlannerConfig, PlannerError, PlanResult, audit_plan, mpc_step
from .predictor import (
    ForceParams,
    PredictionError,
    PredictorConfig,
    SocialForcePredictor,
    StateHistory,
    Walls,
    surrogate_dynamics_step,
)
from .zonotope import Zonotope, to_hrep

log = logging.getLogger(__name__)


class SceneError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n_agents: int = 10
    hallway_width: float = 8.0
    hallway_start: float = -6.0
    hallway_length: float = 48.0
    wall_thickness: float = 0.5
    goal_distance: float = 28.0
    spawn_x: tuple[float, float] = (5.0, 36.0)
    min_clearance: float = 2.0
    ego_clearance: float = 5.0
    max_initial_speed: float = 2.0
    min_initial_speed: float = 0.5
    westward_fraction: float = 0.7
    heading_spread: float = 0.5  # rad
    agent_half_size: float = 0.5
    dt_sim: float = 0.02
    timeout: float = 60.0
    history_steps: int = 8
    noise: bool = True
    audit_plans: bool = False
    forces: ForceParams = field(default_factory=ForceParams)


@dataclass(frozen=True, eq=False)
class Scene:
    seed: int
    obstacles: tuple[Zonotope, ...]
    initial: np.ndarray  # (n+1, 4), ego first
    preferred_velocity: np.ndarray  # (n+1, 2)
    lateral_signs: np.ndarray  # (n+1,), hidden passing side of each agent
    goal: np.ndarray  # (2,)

    @property
    def start(self) -> np.ndarray:
        return self.initial[0, :2]

    def to_dict(self) -> dict:
        return {
            "type": "scene",
            "seed": self.seed,
            "obstacles": [
                {"center": z.center.tolist(), "generators": z.generators.tolist()} for z in self.obstacles
            ],
            "initial": self.initial.tolist(),
            "preferred_velocity": self.preferred_velocity.tolist(),
            "lateral_signs": self.lateral_signs.tolist(),
            "goal": self.goal.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        return cls(
            int(d["seed"]),
            tuple(Zonotope(o["center"], o["generators"]) for o in d["obstacles"]),
            np.asarray(d["initial"], float),
            np.asarray(d["preferred_velocity"], float),
            np.asarray(d["lateral_signs"], float),
            np.asarray(d["goal"], float),
        )


def hallway_walls(cfg: SimConfig) -> tuple[Zonotope, Zonotope]:
    half_len = cfg.hallway_length / 2.0
    cx = cfg.hallway_start + half_len
    cy = cfg.hallway_width / 2.0 + cfg.wall_thickness / 2.0
    gens = np.diag([half_len, cfg.wall_thickness / 2.0])
    return Zonotope([cx, cy], gens), Zonotope([cx, -cy], gens)


def generate_scene(seed: int, cfg: SimConfig = SimConfig()) -> Scene:
    """Hallway with ``cfg.n_agents`` agents placed by rejection sampling."""
    rng = np.random.default_rng(seed)
    walls = hallway_walls(cfg)
    ego = np.array([0.0, 0.0, 0.0, 0.0])
    half_y = cfg.hallway_width / 2.0 - 2.0 * cfg.agent_half_size
    pos: list[np.ndarray] = []
    tries = 0
    while len(pos) < cfg.n_agents:
        tries += 1
        if tries > 10_000:
            raise SceneError(f"could not place {cfg.n_agents} agents after 10000 samples")
        p = np.array([rng.uniform(*cfg.spawn_x), rng.uniform(-half_y, half_y)])
        if np.linalg.norm(p - ego[:2]) < cfg.ego_clearance:
            continue
        if any(np.linalg.norm(p - q) < cfg.min_clearance for q in pos):
            continue
        pos.append(p)
    n = cfg.n_agents
    west = rng.uniform(size=n) < cfg.westward_fraction
    heading = np.where(west, np.pi, 0.0) + rng.uniform(-cfg.heading_spread, cfg.heading_spread, n)
    speed = rng.uniform(cfg.min_initial_speed, cfg.max_initial_speed, n)
    vel = speed[:, None] * np.stack([np.cos(heading), np.sin(heading)], axis=1)
    signs = rng.choice([-1.0, 1.0], size=n)
    initial = np.vstack([ego, np.hstack([np.array(pos).reshape(n, 2), vel])])
    pref = np.vstack([np.zeros(2), vel])
    goal = ego[:2] + np.array([cfg.goal_distance, 0.0])
    return Scene(int(seed), walls, initial, pref, np.concatenate([[0.0], signs]), goal)


def step_world(
    state: np.ndarray,
    ego_control,
    dt_sim: float,
    scene: Scene,
    cfg: SimConfig = SimConfig(),
    rng: np.random.Generator | None = None,
    walls: Walls | None = None,
) -> np.ndarray:
    """Advance every agent by one fine step; the ego holds ``ego_control``."""
    if dt_sim > 0.02 + 1e-12:
        raise ValueError(f"audit step {dt_sim} s is coarser than 0.02 s")
    walls = walls if walls is not None else Walls.from_zonotopes(scene.obstacles)
    noise = None
    if rng is not None and cfg.noise:
        noise = rng.normal(0.0, np.sqrt(cfg.forces.noise_intensity * dt_sim), size=(state.shape[0], 2))
        noise[0] = 0.0
    return surrogate_dynamics_step(
        state, ego_control, dt_sim, cfg.forces, walls, scene.preferred_velocity,
        scene.lateral_signs, noise,
    )


def audit_collision(state: np.ndarray, scene: Scene, half_size: float = 0.5, wall_hreps=None):
    """Return ``("agent", i)`` or ``("wall", j)`` if the ego point is inside, else ``None``."""
    ego = state[0, :2]
    box = to_hrep(Zonotope([0.0, 0.0], half_size * np.eye(2)))
    for i in range(1, state.shape[0]):
        if np.max(box.A @ (ego - state[i, :2]) - box.b) <= 0.0:
            return ("agent", i)
    hreps = wall_hreps if wall_hreps is not None else [to_hrep(z) for z in scene.obstacles]
    for j, h in enumerate(hreps):
        if np.max(h.A @ ego - h.b) <= 0.0:
            return ("wall", j)
    return None


@dataclass(eq=False)
class SolveRecord:
    time: float
    solve_time: float
    feasible: bool
    fallback: bool
    iterations: int
    newton_steps: int
    cost: float
    applied: np.ndarray
    consensus_ok: bool
    ego_plans: np.ndarray
    audit_margin: float | None = None


@dataclass(eq=False)
class EpisodeLog:
    seed: int
    variant: str
    times: np.ndarray
    states: np.ndarray  # (T, n+1, 4)
    controls: np.ndarray  # (T, 2)
    solves: list[SolveRecord]
    outcome: str  # "goal" | "crash" | "timeout"
    outcome_time: float
    start_x: float
    crash_with: tuple | None = None
    note: str = ""

    @property
    def distance(self) -> float:
        return float(self.states[-1, 0, 0] - self.start_x)

    @property
    def avg_speed(self) -> float:
        return self.distance / self.outcome_time if self.outcome_time > 0 else 0.0

    @property
    def solve_times(self) -> np.ndarray:
        return np.array([s.solve_time for s in self.solves])

    def fingerprint(self) -> str:
        """Hash of everything except wall-clock solve times."""
        h = hashlib.sha256()
        h.update(f"{self.seed}|{self.variant}|{self.outcome}|{self.outcome_time!r}".encode())
        for arr in (self.times, self.states, self.controls):
            h.update(np.ascontiguousarray(arr).tobytes())
        for s in self.solves:
            h.update(np.ascontiguousarray(s.applied).tobytes())
            h.update(f"{s.feasible}{s.iterations}{s.newton_steps}{s.cost!r}".encode())
        return h.hexdigest()

    def to_jsonl(self, scene: Scene | None = None) -> str:
        lines = []
        if scene is not None:
            lines.append(scene.to_dict())
        for t, x, u in zip(self.times, self.states, self.controls):
            lines.append({"type": "step", "t": float(t), "states": x.tolist(), "control": u.tolist()})
        for s in self.solves:
            lines.append({
                "type": "solve", "t": s.time, "solve_time": s.solve_time, "feasible": s.feasible,
                "fallback": s.fallback, "iterations": s.iterations, "newton_steps": s.newton_steps,
                "cost": s.cost, "applied": s.applied.tolist(), "consensus_ok": s.consensus_ok,
                "ego_plans": s.ego_plans.tolist(), "audit_margin": s.audit_margin,
            })
        lines.append({
            "type": "outcome", "seed": self.seed, "variant": self.variant, "outcome": self.outcome,
            "t": self.outcome_time, "start_x": self.start_x, "distance": self.distance,
            "crash_with": list(self.crash_with) if self.crash_with else None, "note": self.note,
        })
        return "\n".join(json.dumps(line) for line in lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeLog":
        steps, solves, out = [], [], None
        for line in text.splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            if d["type"] == "step":
                steps.append(d)
            elif d["type"] == "solve":
                solves.append(SolveRecord(
                    d["t"], d["solve_time"], d["feasible"], d["fallback"], d["iterations"],
                    d["newton_steps"], d["cost"], np.asarray(d["applied"]), d["consensus_ok"],
                    np.asarray(d["ego_plans"]), d["audit_margin"],
                ))
            elif d["type"] == "outcome":
                out = d
        if out is None:
            raise ValueError("log has no outcome line")
        return cls(
            out["seed"], out["variant"],
            np.array([s["t"] for s in steps]),
            np.array([s["states"] for s in steps]),
            np.array([s["control"] for s in steps]),
            solves, out["outcome"], out["t"], out["start_x"],
            tuple(out["crash_with"]) if out["crash_with"] else None, out.get("note", ""),
        )


def _initial_history(x0: np.ndarray, steps: int, dt: float) -> deque:
    """Constant-velocity backward extrapolation to fill the history buffer."""
    hist = deque(maxlen=steps + 1)
    for j in range(steps, 0, -1):
        x = x0.copy()
        x[:, :2] -= j * dt * x0[:, 2:]
        hist.append(x)
    hist.append(x0.copy())
    return hist


def run_episode(
    scene: Scene,
    planner: PlannerConfig = PlannerConfig(),
    cfg: SimConfig = SimConfig(),
    variant: str = "zapp",
) -> EpisodeLog:
    """Closed-loop MPC at ``planner.replan_steps * planner.dt`` over fine simulation steps."""
    sub = int(round(planner.dt / cfg.dt_sim))
    if abs(sub * cfg.dt_sim - planner.dt) > 1e-12:
        raise ValueError("planner step must be a multiple of the simulation step")
    rng = np.random.default_rng([scene.seed, 7919])
    walls = Walls.from_zonotopes(scene.obstacles)
    wall_hreps = [to_hrep(z) for z in scene.obstacles]
    predictor = SocialForcePredictor(walls, cfg.forces, PredictorConfig(substeps=sub))
    state = scene.initial.copy()
    hist = _initial_history(state, cfg.history_steps, planner.dt)
    start_x = float(state[0, 0])
    n_steps = int(round(cfg.timeout / cfg.dt_sim))
    times = [0.0]
    states = [state.copy()]
    controls = [np.zeros(2)]
    solves: list[SolveRecord] = []
    outcome, crash_with, note = "timeout", None, ""
    prev: PlanResult | None = None
    step = 0
    kc = planner.consensus_steps
    while step < n_steps and outcome == "timeout":
        t_now = step * cfg.dt_sim
        history = StateHistory(np.array(hist), planner.dt, scene.preferred_velocity)
        try:
            plan = mpc_step(history, scene.goal, scene.obstacles, predictor, planner, prev)
        except (PlannerError, PredictionError) as exc:
            outcome, crash_with, note = "crash", ("planner",), str(exc)
            break
        audit = None
        if cfg.audit_plans and plan.feasible:
            audit = audit_plan(plan)
        shared = plan.controls[:, : min(kc + 1, planner.horizon)]
        solves.append(SolveRecord(
            t_now, plan.solve_time, plan.feasible, plan.fallback, plan.iterations,
            plan.newton_steps, plan.cost, plan.applied.copy(),
            bool(np.all(shared == shared[:1])), plan.ego_plans, audit,
        ))
        prev = plan
        for k in range(planner.replan_steps):
            u = plan.applied[k]
            for _ in range(sub):
                try:
                    state = step_world(state, u, cfg.dt_sim, scene, cfg, rng, walls)
                except PredictionError as exc:
                    outcome, crash_with, note = "crash", ("coincident",), str(exc)
                    break
                step += 1
                times.append(step * cfg.dt_sim)
                states.append(state.copy())
                controls.append(np.clip(u, -planner.u_max, planner.u_max))
                hit = audit_collision(state, scene, cfg.agent_half_size, wall_hreps)
                if hit is not None:
                    outcome, crash_with = "crash", hit
                    break
                if state[0, 0] - start_x >= cfg.goal_distance:
                    outcome = "goal"
                    break
                if step >= n_steps:
                    break
            if outcome != "timeout" or step >= n_steps:
                break
            hist.append(state.copy())
    return EpisodeLog(
        scene.seed, variant, np.array(times), np.array(states), np.array(controls), solves,
        outcome, times[-1], start_x, crash_with, note,
    )

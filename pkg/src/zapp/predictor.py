"""Multimodal trajectory prediction with an analytic social-force surrogate.

The surrogate plays the role of a learned discrete-time predictor: given a
state history and a planned ego control sequence it returns, per mode, mean
and covariance trajectories for every agent together with the Jacobian of the
means with respect to the ego controls.

Agent 0 is always the ego. States are ``(px, py, vx, vy)``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Protocol, Sequence

import numpy as np

from .zonotope import Zonotope, to_hrep

STATE_DIM = 4
CTRL_DIM = 2


class PredictionError(ValueError):
    pass


@dataclass(frozen=True)
class ForceParams:
    """Gains and limits of the interaction model (SI units)."""

    agent_gain: float = 2.0  # m^3/s^2, non-ego pairs
    ego_gain: float = 0.4  # m^3/s^2, ego pushing on others
    obstacle_gain: float = 1.0  # 1/s
    lateral_gain: float = 1.0  # m/s^2, passing-side bias near the ego
    lateral_radius: float = 3.0  # m
    relax_time: float = 2.0  # s, pull back to preferred velocity
    v_max: float = 4.0
    a_max: float = 3.0
    min_wall_distance: float = 0.1
    noise_intensity: float = 0.02  # m^2/s^3, velocity random walk


@dataclass(frozen=True, eq=False)
class Walls:
    """Static obstacles kept as stacked H-representations for force evaluation."""

    A: np.ndarray  # (n_obs, n_rows, 2)
    b: np.ndarray  # (n_obs, n_rows)

    @classmethod
    def from_zonotopes(cls, obstacles: Sequence[Zonotope]) -> "Walls":
        if not obstacles:
            return cls(np.zeros((0, 1, 2)), np.zeros((0, 1)))
        hs = [to_hrep(z) for z in obstacles]
        rows = max(h.A.shape[0] for h in hs)
        A = np.zeros((len(hs), rows, 2))
        b = np.full((len(hs), rows), np.inf)
        for i, h in enumerate(hs):
            A[i, : h.A.shape[0]] = h.A
            b[i, : h.A.shape[0]] = h.b
        return cls(A, b)

    def __len__(self):
        return self.A.shape[0]


@dataclass(frozen=True, eq=False)
class StateHistory:
    """Uniformly sampled joint states, oldest first, shape (h + 1, n_agents, 4)."""

    states: np.ndarray
    dt: float
    preferred_velocity: np.ndarray | None = None  # (n_agents, 2)

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        if s.ndim != 3 or s.shape[0] == 0 or s.shape[2] != STATE_DIM:
            raise PredictionError(f"history must have shape (h+1, n, 4), got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise PredictionError("history contains non-finite states")
        object.__setattr__(self, "states", s)
        if self.preferred_velocity is None:
            object.__setattr__(self, "preferred_velocity", np.zeros((s.shape[1], 2)))
        else:
            object.__setattr__(self, "preferred_velocity", np.asarray(self.preferred_velocity, float))

    @property
    def length(self) -> int:
        return self.states.shape[0] - 1

    @property
    def n_agents(self) -> int:
        return self.states.shape[1]

    @property
    def current(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True, eq=False)
class ModePrediction:
    mode: int
    gamma: float
    means: np.ndarray  # (kf+1, n_agents, 4)
    covariances: np.ndarray  # (kf+1, n_agents, 4, 4)
    jacobians: np.ndarray  # (kf+1, n_agents, 4, 2*kf)
    lateral_signs: np.ndarray = field(default=None)  # (n_agents,)

    @property
    def horizon(self) -> int:
        return self.means.shape[0] - 1

    @property
    def n_agents(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> dict:
        return {
            "mode": int(self.mode),
            "gamma": float(self.gamma),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "jacobians": self.jacobians.tolist(),
            "lateral_signs": None if self.lateral_signs is None else self.lateral_signs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModePrediction":
        means = np.asarray(d["means"], dtype=float)
        covs = np.asarray(d["covariances"], dtype=float)
        jac = np.asarray(d["jacobians"], dtype=float)
        kf1, n = means.shape[:2]
        if means.shape != (kf1, n, STATE_DIM) or covs.shape != (kf1, n, STATE_DIM, STATE_DIM):
            raise PredictionError("prediction arrays have inconsistent shapes")
        if jac.shape != (kf1, n, STATE_DIM, CTRL_DIM * (kf1 - 1)):
            raise PredictionError(f"jacobian shape {jac.shape} does not match horizon {kf1 - 1}")
        signs = d.get("lateral_signs")
        return cls(
            int(d["mode"]),
            float(d["gamma"]),
            means,
            covs,
            jac,
            None if signs is None else np.asarray(signs, dtype=float),
        )


class Predictor(Protocol):
    """Anything that maps (history, ego controls) to mode predictions.

    Implementations must return modes sorted by descending probability with
    ego-first agent ordering; ``jacobians[k, i]`` is the derivative of the mean
    state of agent ``i`` at step ``k`` with respect to the flattened ego control
    sequence ``(u0x, u0y, u1x, ...)``.
    """

    def predict(
        self, history: StateHistory, nominal_controls: np.ndarray, horizon: int, n_modes: int
    ) -> list[ModePrediction]: ...


def dump_predictions(predictions: Sequence[ModePrediction]) -> str:
    """One JSON object per line."""
    return "\n".join(json.dumps(p.to_dict()) for p in predictions) + "\n"


def load_predictions(text: str) -> list[ModePrediction]:
    return [ModePrediction.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


class ReplayPredictor:
    """Serves precomputed predictions, e.g. produced by an external process."""

    def __init__(self, predictions: Sequence[ModePrediction]):
        self._predictions = sorted(predictions, key=lambda p: -p.gamma)

    def predict(self, history, nominal_controls, horizon, n_modes):
        out = [p for p in self._predictions if p.horizon == horizon][:n_modes]
        if not out:
            raise PredictionError(f"no stored prediction with horizon {horizon}")
        return out


# -- interaction forces -------------------------------------------------------


def accelerations(
    p: np.ndarray,
    v: np.ndarray,
    ego_control: np.ndarray,
    params: ForceParams,
    walls: Walls,
    preferred_velocity: np.ndarray,
    lateral_signs: np.ndarray,
    jacobian: bool = False,
):
    """Unclamped accelerations of all agents.

    Returns ``a`` of shape (n, 2) and, with ``jacobian=True``, also the blocks
    ``da/dp`` and ``da/dv`` of shape (n, 2, n, 2). The ego acceleration is
    ``ego_control``.
    """
    n = p.shape[0]
    a = np.zeros((n, 2))
    a[0] = ego_control
    if jacobian:
        Ap = np.zeros((n, 2, n, 2))
        Av = np.zeros((n, 2, n, 2))
    if n == 1:
        return (a, Ap, Av) if jacobian else a

    # Pairwise inverse-square repulsion; row i feels column j.
    r = p[:, None, :] - p[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", r, r)
    np.fill_diagonal(d2, np.inf)
    if np.min(d2) < 1e-12:
        i, j = np.unravel_index(np.argmin(d2), d2.shape)
        raise PredictionError(f"agents {i} and {j} are coincident")
    K = np.full((n, n), params.agent_gain)
    K[:, 0] = params.ego_gain
    K[0, :] = 0.0
    np.fill_diagonal(K, 0.0)
    d = np.sqrt(d2)
    inv3 = K / (d2 * d)
    a += np.einsum("ij,ijk->ik", inv3, r)

    others = slice(1, n)
    a[others] += (preferred_velocity[others] - v[others]) / params.relax_time

    r0 = p[others] - p[0]
    e = np.exp(-np.sum(r0 * r0, axis=1) / params.lateral_radius**2)
    lat = lateral_signs[others] * params.lateral_gain * e
    a[others, 1] += lat

    if len(walls):
        vals = np.einsum("wrk,ik->iwr", walls.A, p[others]) - walls.b[None]
        act = np.argmax(vals, axis=2)  # (m, n_obs)
        dist = np.take_along_axis(vals, act[..., None], axis=2)[..., 0]
        normal = walls.A[np.arange(len(walls))[None, :], act]  # (m, n_obs, 2)
        distc = np.maximum(dist, params.min_wall_distance)
        speed = np.linalg.norm(v[others], axis=1)
        coef = params.obstacle_gain * speed[:, None] / distc
        a[others] += np.einsum("iw,iwk->ik", coef, normal)

    if not jacobian:
        return a

    # d(K r / |r|^3)/dr = K (I/|r|^3 - 3 r r^T/|r|^5)
    inv5 = K / (d2 * d2 * d)
    D = inv3[:, :, None, None] * np.eye(2) - 3.0 * inv5[:, :, None, None] * np.einsum(
        "ijk,ijl->ijkl", r, r
    )
    idx = np.arange(n)
    Ap[idx, :, idx, :] += D.sum(axis=1)
    Ap -= np.transpose(D, (0, 2, 1, 3))

    oi = np.arange(1, n)
    Av[oi, :, oi, :] -= np.eye(2) / params.relax_time

    # lateral bias: y-row gets lat * (-2 r0 / R^2)
    dlat = (-2.0 / params.lateral_radius**2) * lat[:, None] * r0
    Ap[oi, 1, oi, :] += dlat
    Ap[oi, 1, 0, :] -= dlat

    if len(walls):
        live = dist > params.min_wall_distance
        nn = np.einsum("iwk,iwl->iwkl", normal, normal)
        dp = -(params.obstacle_gain * speed[:, None] * live / distc**2)[..., None, None] * nn
        Ap[oi, :, oi, :] += dp.sum(axis=1)
        safe = np.where(speed > 1e-12, speed, 1.0)
        vhat = np.where(speed[:, None] > 1e-12, v[others] / safe[:, None], 0.0)
        dv = np.einsum("iw,iwk,il->ikl", params.obstacle_gain / distc, normal, vhat)
        Av[oi, :, oi, :] += dv
    return a, Ap, Av


def surrogate_dynamics_step(
    states: np.ndarray,
    ego_control: np.ndarray,
    dt: float,
    params: ForceParams = ForceParams(),
    walls: Walls | None = None,
    preferred_velocity: np.ndarray | None = None,
    lateral_signs: np.ndarray | None = None,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """One semi-implicit Euler step with acceleration and velocity clamps.

    ``noise`` is an optional velocity increment over the step; it enters as
    an acceleration so both clamps still hold.
    """
    states = np.asarray(states, dtype=float)
    n = states.shape[0]
    walls = walls if walls is not None else Walls.from_zonotopes([])
    pv = np.zeros((n, 2)) if preferred_velocity is None else preferred_velocity
    ls = np.zeros(n) if lateral_signs is None else lateral_signs
    p, v = states[:, :2], states[:, 2:]
    a = accelerations(p, v, np.asarray(ego_control, float), params, walls, pv, ls)
    if noise is not None:
        a = a + noise / dt
    a = np.clip(a, -params.a_max, params.a_max)
    v_new = v + a * dt
    v_new = np.clip(v_new, -params.v_max, params.v_max)
    p_new = p + v_new * dt
    return np.hstack([p_new, v_new])


@dataclass(frozen=True)
class PredictorConfig:
    substeps: int = 5
    near_radius: float = 10.0  # m
    near_agents: int = 3
    interaction_weight: float = 0.1


def rollout(
    x0: np.ndarray,
    controls: np.ndarray,
    dt: float,
    substeps: int,
    params: ForceParams,
    walls: Walls,
    preferred_velocity: np.ndarray,
    lateral_signs: np.ndarray,
    jacobian: bool = True,
):
    """Roll the surrogate forward under zero-order-hold ego controls.

    Returns means (kf+1, n, 4) and, if requested, Jacobians (kf+1, n, 4, 2 kf).
    """
    controls = np.asarray(controls, dtype=float).reshape(-1, CTRL_DIM)
    kf = controls.shape[0]
    n = x0.shape[0]
    h = dt / substeps
    nu = CTRL_DIM * kf
    means = np.zeros((kf + 1, n, STATE_DIM))
    means[0] = x0
    p = x0[:, :2].copy()
    v = x0[:, 2:].copy()
    if jacobian:
        jac = np.zeros((kf + 1, n, STATE_DIM, nu))
        Sp = np.zeros((n, 2, nu))
        Sv = np.zeros((n, 2, nu))
    for k in range(kf):
        u = controls[k]
        for _ in range(substeps):
            out = accelerations(p, v, u, params, walls, preferred_velocity, lateral_signs, jacobian)
            if jacobian:
                a, Ap, Av = out
                da = np.einsum("iajb,jbu->iau", Ap, Sp) + np.einsum("iajb,jbu->iau", Av, Sv)
                da[0, 0, 2 * k] += 1.0
                da[0, 1, 2 * k + 1] += 1.0
                ma = np.abs(a) < params.a_max
                da *= ma[..., None]
            else:
                a = out
            a = np.clip(a, -params.a_max, params.a_max)
            v_raw = v + a * h
            v = np.clip(v_raw, -params.v_max, params.v_max)
            p = p + v * h
            if jacobian:
                mv = np.abs(v_raw) < params.v_max
                Sv = (Sv + h * da) * mv[..., None]
                Sp = Sp + h * Sv
        means[k + 1, :, :2] = p
        means[k + 1, :, 2:] = v
        if jacobian:
            jac[k + 1, :, :2] = Sp
            jac[k + 1, :, 2:] = Sv
    return (means, jac) if jacobian else means


@lru_cache(maxsize=64)
def _noise_covariances(kf: int, dt: float, substeps: int, q: float) -> np.ndarray:
    h = dt / substeps
    F = np.eye(4)
    F[:2, 2:] = h * np.eye(2)
    B = np.vstack([h * np.eye(2), np.eye(2)])
    Q = q * h * B @ B.T
    out = np.zeros((kf + 1, 4, 4))
    S = np.zeros((4, 4))
    for k in range(kf):
        for _ in range(substeps):
            S = F @ S @ F.T + Q
        out[k + 1] = S
    out.setflags(write=False)
    return out


def process_noise_covariances(kf: int, dt: float, substeps: int, q: float) -> np.ndarray:
    """Covariance of a force-free double integrator driven by velocity noise.

    The velocity variance grows by ``q * h`` per substep of length ``h`` and is
    mapped through the semi-implicit integrator.
    """
    return _noise_covariances(int(kf), float(dt), int(substeps), float(q)).copy()


class SocialForcePredictor:
    """Analytic surrogate predictor.

    Modes differ in the passing side (sign of the lateral bias) taken by the
    agents closest to the ego. Mode probabilities combine the likelihood of
    each sign under the observed history with an interaction cost of the mode
    rollout.
    """

    def __init__(
        self,
        walls: Walls | Sequence[Zonotope] = (),
        params: ForceParams = ForceParams(),
        config: PredictorConfig = PredictorConfig(),
    ):
        self.walls = walls if isinstance(walls, Walls) else Walls.from_zonotopes(list(walls))
        self.params = params
        self.config = config

    # Lateral-sign evidence from the history: log-likelihood of s = +1 minus s = -1.
    def _sign_evidence(self, history: StateHistory) -> np.ndarray:
        S = history.states
        n = history.n_agents
        out = np.zeros(n)
        if S.shape[0] < 2 or n < 2:
            return out
        dt = history.dt
        prm = self.params
        var = max(prm.noise_intensity / dt, 1e-9)
        zero = np.zeros(n)
        for k in range(S.shape[0] - 1):
            x = S[k]
            a_model = accelerations(
                x[:, :2], x[:, 2:], np.zeros(2), prm, self.walls, history.preferred_velocity, zero
            )
            a_obs = (S[k + 1, :, 2:] - x[:, 2:]) / dt
            r0 = x[1:, :2] - x[0, :2]
            phi = prm.lateral_gain * np.exp(-np.sum(r0 * r0, axis=1) / prm.lateral_radius**2)
            resid = a_obs[1:, 1] - a_model[1:, 1]
            out[1:] += 2.0 * resid * phi / var
        return out

    def near_agents(self, state: np.ndarray) -> np.ndarray:
        d = np.linalg.norm(state[1:, :2] - state[0, :2], axis=1)
        order = np.argsort(d, kind="stable")
        order = order[d[order] <= self.config.near_radius][: self.config.near_agents]
        return order + 1

    def mode_enumerate(self, history: StateHistory, controls: np.ndarray, dt: float | None = None):
        """Candidate passing-side assignments with probabilities summing to one.

        Returns a list of ``(lateral_signs, gamma)`` sorted by descending gamma.
        """
        dt = history.dt if dt is None else dt
        x0 = history.current
        n = history.n_agents
        evidence = self._sign_evidence(history)
        base = np.tanh(0.5 * evidence)  # posterior mean sign for the far agents
        base[0] = 0.0
        near = self.near_agents(x0)
        if near.size == 0:
            return [(base, 1.0)]
        cands = []
        logw = []
        for combo in itertools.product((1.0, -1.0), repeat=near.size):
            signs = base.copy()
            signs[near] = combo
            means = rollout(
                x0, controls, dt, self.config.substeps, self.params, self.walls,
                history.preferred_velocity, signs, jacobian=False,
            )
            gap = np.linalg.norm(means[1:, near, :2] - means[1:, :1, :2], axis=2)
            cost = self.config.interaction_weight * dt * np.sum(1.0 / np.maximum(gap, 0.5) ** 2)
            ll = 0.5 * np.sum(np.asarray(combo) * evidence[near])
            cands.append(signs)
            logw.append(ll - cost)
        logw = np.asarray(logw)
        w = np.exp(logw - logw.max())
        gamma = w / w.sum()
        order = np.argsort(-gamma, kind="stable")
        return [(cands[i], float(gamma[i])) for i in order]

    def predict(
        self, history: StateHistory, nominal_controls: np.ndarray, horizon: int, n_modes: int = 2
    ) -> list[ModePrediction]:
        if horizon < 1:
            raise PredictionError("horizon must be at least one step")
        controls = np.asarray(nominal_controls, dtype=float).reshape(-1, CTRL_DIM)
        if controls.shape[0] < horizon:
            raise PredictionError(f"need {horizon} controls, got {controls.shape[0]}")
        controls = controls[:horizon]
        modes = self.mode_enumerate(history, controls)[: max(1, n_modes)]
        x0 = history.current
        cov1 = process_noise_covariances(
            horizon, history.dt, self.config.substeps, self.params.noise_intensity
        )
        covs = np.broadcast_to(cov1[:, None], (horizon + 1, history.n_agents, 4, 4)).copy()
        out = []
        for y, (signs, gamma) in enumerate(modes):
            means, jac = rollout(
                x0, controls, history.dt, self.config.substeps, self.params, self.walls,
                history.preferred_velocity, signs, jacobian=True,
            )
            out.append(ModePrediction(y, gamma, means, covs, jac, signs))
        return out

"""Contingency MPC over control perturbations.

One decision vector holds a control-perturbation block shared by every mode
up to the consensus step, followed by one block per mode for the remaining
steps. Means are Taylor-expanded around a single predictor evaluation at the
nominal controls, collision constraints come from zonotope reachable sets,
and the program is solved with a log-barrier method using damped Newton
steps.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .constraints import PAD, ConstraintBatch, ConstraintRecord, dynamic_constraint, static_constraint
from .predictor import CTRL_DIM, ModePrediction, Predictor, StateHistory
from .reachset import continuous_reach, discrete_reach, position_set
from .zonotope import EPS_GEN, Zonotope, confidence_scale, jacobi_eigh, minkowski_sum

log = logging.getLogger(__name__)

VARIANTS = ("zapp", "zapp-no-interaction", "discrete-baseline")


class PlannerError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    dt: float = 0.1
    horizon: int = 16
    replan_steps: int = 5
    consensus_steps: int = 5
    n_modes: int = 2
    n_agents: int = 3
    alpha: float = 1.0
    margin: float = 0.05
    w_terminal: float = 1.0
    w_control: float = 0.1
    u_max: float = 3.0
    du_max: float = 3.0
    v_max: float = 4.0
    cruise_speed: float = 3.8
    nominal_gain: float = 2.0
    nominal_accel: float = 2.5
    agent_half_size: float = 0.5
    continuous: bool = True
    interaction: bool = True
    smoothing: float | None = None
    warmstart: bool = True
    max_outer: int = 10
    max_inner: int = 10
    mu0: float = 1.0
    mu0_warm: float = 1e-3
    warm_tolerance: float = 0.25
    mu_factor: float = 0.1
    elastic_penalty: float = 1e4
    gap_tol: float = 1e-7

    @classmethod
    def for_variant(cls, variant: str, **kw) -> "PlannerConfig":
        if variant not in VARIANTS:
            raise ValueError(f"unknown planner variant {variant!r}; expected one of {VARIANTS}")
        if variant == "zapp-no-interaction":
            kw.setdefault("interaction", False)
        elif variant == "discrete-baseline":
            kw.setdefault("continuous", False)
        return cls(**kw)


# -- decision vector ----------------------------------------------------------


@dataclass(frozen=True)
class DecisionLayout:
    """Packing of per-mode perturbation sequences into one vector.

    Steps ``0..kc`` live in a shared block, so consensus holds by construction.
    """

    horizon: int
    consensus_steps: int
    n_modes: int

    @property
    def n_shared(self) -> int:
        return min(self.consensus_steps + 1, self.horizon)

    @property
    def n_private(self) -> int:
        return self.horizon - self.n_shared

    @property
    def size(self) -> int:
        return CTRL_DIM * (self.n_shared + self.n_modes * self.n_private)

    def selector(self, mode: int) -> np.ndarray:
        """Matrix mapping the decision vector to mode ``mode``'s flattened sequence."""
        S = np.zeros((CTRL_DIM * self.horizon, self.size))
        ns = CTRL_DIM * self.n_shared
        S[:ns, :ns] = np.eye(ns)
        npv = CTRL_DIM * self.n_private
        off = ns + mode * npv
        S[ns:, off : off + npv] = np.eye(npv)
        return S

    def mode_sequence(self, z, mode: int) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        ns = CTRL_DIM * self.n_shared
        npv = CTRL_DIM * self.n_private
        off = ns + mode * npv
        return np.concatenate([z[:ns], z[off : off + npv]]).reshape(self.horizon, CTRL_DIM)

    def pack(self, sequences: Sequence[np.ndarray]) -> np.ndarray:
        """Inverse of :meth:`mode_sequence`; the shared part comes from the first sequence."""
        seqs = [np.asarray(s, dtype=float).reshape(self.horizon, CTRL_DIM) for s in sequences]
        parts = [seqs[0][: self.n_shared].ravel()]
        for y in range(self.n_modes):
            src = seqs[y] if y < len(seqs) else seqs[0]
            parts.append(src[self.n_shared :].ravel())
        return np.concatenate(parts)


def shift_sequence(seq: np.ndarray, steps: int = 1) -> np.ndarray:
    """Drop the first ``steps`` entries and repeat the last one."""
    seq = np.asarray(seq, dtype=float)
    if steps <= 0 or len(seq) == 0:
        return seq.copy()
    steps = min(steps, len(seq))
    tail = np.repeat(seq[-1:], steps, axis=0)
    return np.concatenate([seq[steps:], tail], axis=0)


# -- nominal controls and expansions -------------------------------------------


def nominal_controls(ego_state, goal, config: PlannerConfig = PlannerConfig(), substeps: int = 5):
    """Open-loop accelerations steering the ego straight at the goal.

    A velocity-tracking law toward ``cruise_speed`` along the goal direction
    (slowing inside the braking radius) is rolled out on the obstacle-free
    double integrator. Returns shape (horizon, 2).
    """
    x = np.array(ego_state, dtype=float)
    goal = np.asarray(goal, dtype=float)[:2]
    h = config.dt / substeps
    out = np.zeros((config.horizon, CTRL_DIM))
    brake_radius = config.cruise_speed**2 / (2.0 * config.nominal_accel)
    for k in range(config.horizon):
        to_goal = goal - x[:2]
        dist = float(np.linalg.norm(to_goal))
        if dist < 1e-9:
            v_des = np.zeros(2)
        else:
            v_des = config.cruise_speed * min(1.0, dist / brake_radius) * to_goal / dist
        a = np.clip(config.nominal_gain * (v_des - x[2:]), -config.nominal_accel, config.nominal_accel)
        out[k] = a
        for _ in range(substeps):
            x[2:] = x[2:] + a * h
            x[:2] = x[:2] + x[2:] * h
    return out


def taylor_expand_means(pred: ModePrediction, delta_u) -> np.ndarray:
    """First-order expansion of the mean trajectories around the nominal controls."""
    du = np.asarray(delta_u, dtype=float).reshape(-1)
    return pred.means + pred.jacobians @ du


# -- problem assembly ----------------------------------------------------------


@dataclass(eq=False)
class PlanningProblem:
    layout: DecisionLayout
    predictions: list[ModePrediction]
    weights: np.ndarray  # renormalized mode probabilities
    nominal: np.ndarray  # (kf, 2)
    goal: np.ndarray
    config: PlannerConfig
    batch: ConstraintBatch
    lin_A: np.ndarray  # soft linear constraints lin_A z <= lin_b
    lin_b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    hessian: np.ndarray
    linear: np.ndarray
    constant: float
    agent_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    obstacles: tuple = ()

    @property
    def nz(self) -> int:
        return self.layout.size

    @property
    def records(self) -> list[ConstraintRecord]:
        return self.batch.records

    def cost(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.hessian @ z + self.linear @ z + self.constant)

    def cost_gradient(self, z) -> np.ndarray:
        return self.hessian @ np.asarray(z, dtype=float) + self.linear

    def soft_constraints(self, z, grads: bool = True):
        """Collision margins ``g - margin`` followed by linear slacks, all required ``>= 0``."""
        if grads:
            g, J = self.batch.values_and_grads(z)
        else:
            g = self.batch.values(z)
        lin = self.lin_b - self.lin_A @ z
        vals = np.concatenate([g - self.batch.margin, lin])
        if not grads:
            return vals
        return vals, np.vstack([J, -self.lin_A])


def cost(delta_u: Sequence[np.ndarray], predictions: Sequence[ModePrediction], nominal, goal,
         config: PlannerConfig = PlannerConfig()) -> float:
    """Probability-weighted terminal goal distance plus control effort.

    ``delta_u[y]`` is mode ``y``'s perturbation sequence (kf, 2). The weights
    are the mode probabilities as given (not renormalized).
    """
    total = 0.0
    goal = np.asarray(goal, dtype=float)[:2]
    for du, pred in zip(delta_u, predictions):
        mu = taylor_expand_means(pred, du)
        term = mu[-1, 0, :2] - goal
        u = np.asarray(nominal) + np.asarray(du).reshape(-1, CTRL_DIM)
        total += pred.gamma * (config.w_terminal * term @ term + config.w_control * np.sum(u * u))
    return float(total)


def _position_generators(Sigma, scale) -> np.ndarray:
    w, V = jacobi_eigh(Sigma)
    G = scale * V * np.sqrt(np.clip(w, 0.0, None))
    G = G[:2]
    keep = np.linalg.norm(G, axis=0) >= EPS_GEN
    return G[:, keep]


def build_problem(
    predictions: Sequence[ModePrediction],
    nominal: np.ndarray,
    goal,
    obstacles: Sequence[Zonotope],
    config: PlannerConfig = PlannerConfig(),
    agent_ids: Sequence[int] | None = None,
) -> PlanningProblem:
    preds = list(predictions)
    kf = config.horizon
    layout = DecisionLayout(kf, config.consensus_steps, len(preds))
    nz = layout.size
    goal = np.asarray(goal, dtype=float)[:2]
    gam = np.array([p.gamma for p in preds], dtype=float)
    weights = gam / gam.sum() if gam.sum() > 0 else np.full(len(preds), 1.0 / len(preds))
    if agent_ids is None:
        agent_ids = np.arange(1, preds[0].n_agents)
    agent_ids = np.asarray(agent_ids, dtype=int)

    scale = confidence_scale(config.alpha, preds[0].means.shape[2])
    foot = config.agent_half_size * np.eye(2)

    H = np.zeros((nz, nz))
    lin = np.zeros(nz)
    const = 0.0
    lin_rows, lin_rhs = [], []
    records: list[ConstraintRecord] = []
    gen_cache: dict = {}

    def conf_gens(pred, k, i):
        key = (id(pred.covariances), k, i)
        if key not in gen_cache:
            gen_cache[key] = _position_generators(pred.covariances[k, i], scale)
        return gen_cache[key]

    for y, pred in enumerate(preds):
        S = layout.selector(y)
        w = weights[y]
        JS = pred.jacobians @ S  # (kf+1, n, 4, nz)
        if not config.interaction:
            JS = JS.copy()
            JS[:, 1:] = 0.0
        # Cost: terminal ego position and control effort.
        Jt = JS[kf, 0, :2]
        r0 = pred.means[kf, 0, :2] - goal
        H += w * 2.0 * (config.w_terminal * Jt.T @ Jt + config.w_control * S.T @ S)
        lin += w * 2.0 * (config.w_terminal * Jt.T @ r0 + config.w_control * S.T @ nominal.ravel())
        const += w * (config.w_terminal * r0 @ r0 + config.w_control * np.sum(nominal**2))
        # Ego speed limits on every predicted step.
        for k in range(1, kf + 1):
            Jv = JS[k, 0, 2:]
            v0 = pred.means[k, 0, 2:]
            lin_rows += [*Jv, *(-Jv)]
            lin_rhs += [*(config.v_max - v0), *(config.v_max + v0)]

        mu = pred.means
        if config.continuous:
            for k in range(kf):
                for piece, (ka, kb) in (("a", (k, k + 1)), ("b", (k + 1, k))):
                    # center = 3/4 mu(ka) + 1/4 mu(kb); swept generator = 1/4 (mu(k+1) - mu(k))
                    ego_c = 0.75 * mu[ka, 0, :2] + 0.25 * mu[kb, 0, :2]
                    ego_cj = 0.75 * JS[ka, 0, :2] + 0.25 * JS[kb, 0, :2]
                    ego_s = 0.25 * (mu[k + 1, 0, :2] - mu[k, 0, :2])
                    ego_sj = 0.25 * (JS[k + 1, 0, :2] - JS[k, 0, :2])
                    ego_g = conf_gens(pred, ka, 0)
                    ne = ego_g.shape[1] + 1
                    for i in agent_ids:
                        ag_c = 0.75 * mu[ka, i, :2] + 0.25 * mu[kb, i, :2]
                        ag_cj = 0.75 * JS[ka, i, :2] + 0.25 * JS[kb, i, :2]
                        ag_s = 0.25 * (mu[k + 1, i, :2] - mu[k, i, :2])
                        ag_sj = 0.25 * (JS[k + 1, i, :2] - JS[k, i, :2])
                        ag_g = conf_gens(pred, ka, i)
                        G = np.hstack([ego_g, ego_s[:, None], ag_g, ag_s[:, None], foot, PAD * np.eye(2)])
                        GJ = np.zeros((2, G.shape[1], nz))
                        GJ[:, ne - 1] = ego_sj
                        GJ[:, ne + ag_g.shape[1]] = ag_sj
                        records.append(ConstraintRecord(
                            "dynamic", y, k, int(i), piece, ego_c, ag_c, G, config.margin,
                            ego_cj, ag_cj, GJ, ne,
                        ))
                    for j, obs in enumerate(obstacles):
                        G = np.hstack([ego_g, ego_s[:, None], obs.generators, PAD * np.eye(2)])
                        GJ = np.zeros((2, G.shape[1], nz))
                        GJ[:, ne - 1] = ego_sj
                        records.append(ConstraintRecord(
                            "static", y, k, j, piece, ego_c, obs.center[:2].copy(), G, config.margin,
                            ego_cj, None, GJ, ne,
                        ))
        else:
            for k in range(1, kf + 1):
                ego_g = conf_gens(pred, k, 0)
                ne = ego_g.shape[1]
                for i in agent_ids:
                    G = np.hstack([ego_g, conf_gens(pred, k, i), foot, PAD * np.eye(2)])
                    records.append(ConstraintRecord(
                        "dynamic", y, k, int(i), "d", mu[k, 0, :2], mu[k, i, :2], G, config.margin,
                        JS[k, 0, :2], JS[k, i, :2], None, ne,
                    ))
                for j, obs in enumerate(obstacles):
                    G = np.hstack([ego_g, obs.generators, PAD * np.eye(2)])
                    records.append(ConstraintRecord(
                        "static", y, k, j, "d", mu[k, 0, :2], obs.center[:2].copy(), G, config.margin,
                        JS[k, 0, :2], None, None, ne,
                    ))

    batch = ConstraintBatch(records, nz, config.smoothing)
    u_nom = np.tile(np.asarray(nominal, dtype=float), (1, 1))
    lo_seq = np.maximum(-config.du_max, -config.u_max - u_nom)
    hi_seq = np.minimum(config.du_max, config.u_max - u_nom)
    lower = layout.pack([lo_seq] * len(preds))
    upper = layout.pack([hi_seq] * len(preds))
    return PlanningProblem(
        layout, preds, weights, np.asarray(nominal, dtype=float), goal, config, batch,
        np.array(lin_rows).reshape(-1, nz), np.array(lin_rhs, dtype=float), lower, upper,
        H, lin, float(const), agent_ids, tuple(obstacles),
    )


# -- solver --------------------------------------------------------------------


@dataclass(eq=False)
class PlanResult:
    decision: np.ndarray
    delta_u: np.ndarray  # (n_modes, kf, 2)
    controls: np.ndarray  # (n_modes, kf, 2), nominal + perturbation, clamped
    applied: np.ndarray  # (replan_steps, 2)
    cost: float
    residuals: np.ndarray  # soft constraint values at the returned decision
    feasible: bool
    iterations: int
    newton_steps: int
    solve_time: float
    fallback: bool = False
    merit_trace: list = field(default_factory=list)
    gammas: np.ndarray | None = None
    ego_plans: np.ndarray | None = None  # (n_modes, kf+1, 2) Taylor-expanded ego positions
    n_constraints: int = 0
    problem: "PlanningProblem | None" = field(default=None, repr=False)

    @property
    def min_margin(self) -> float:
        return float(self.residuals.min()) if self.residuals.size else np.inf


@dataclass
class _Iterate:
    z: np.ndarray
    t: float | None


def _check_finite(problem: PlanningProblem, vals, grads):
    bad = ~np.isfinite(vals) | ~np.all(np.isfinite(grads), axis=1)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        if i < len(problem.records):
            r = problem.records[i]
            where = f"{r.kind} record mode={r.mode} interval={r.interval} counterpart={r.counterpart} piece={r.piece}"
        else:
            where = f"linear constraint {i - len(problem.records)}"
        raise PlannerError(f"non-finite constraint value or gradient in {where}")


def pick_start(problem: PlanningProblem, candidates: Sequence[np.ndarray]) -> np.ndarray:
    """Choose the initial decision vector among candidates.

    Strictly feasible candidates win by lowest cost; otherwise the one with
    the largest worst-case constraint value is taken.
    """
    best, best_key = None, None
    for z in candidates:
        z = np.clip(np.asarray(z, dtype=float), problem.lower, problem.upper)
        c = problem.soft_constraints(z, grads=False)
        worst = float(c.min()) if c.size else np.inf
        key = (0, problem.cost(z)) if worst > 0.0 else (1, -worst)
        if best_key is None or key < best_key:
            best, best_key = z, key
    return best


def start_candidates(problem: PlanningProblem, ego_state, previous: PlanResult | None = None):
    """Warm start plus a few maneuver primitives (zero, brake, brake-and-swerve)."""
    cfg = problem.config
    lay = problem.layout
    out = [np.zeros(lay.size)]
    if previous is not None and cfg.warmstart:
        out.insert(0, warmstart_shift(previous, lay, cfg.replan_steps))
    brake = braking_controls(ego_state, cfg)
    for lateral in (0.0, 1.5, -1.5):
        seq = brake + np.array([0.0, lateral])
        out.append(lay.pack([seq - problem.nominal] * lay.n_modes))
    return out


def solve(problem: PlanningProblem, z0=None, warm: bool = False) -> PlanResult:
    """Log-barrier interior-point solve with damped Newton inner steps.

    Infeasible starts are handled by an elastic variable ``t`` relaxing every
    soft constraint to ``c(z) + t > 0``; once ``t`` turns negative the iterate
    is strictly feasible and the elastic variable is dropped. Returns the
    lowest-cost strictly feasible iterate, or an infeasible result carrying the
    last iterate when none was found.

    ``warm`` marks ``z0`` as a shifted previous optimum; the barrier then
    starts at ``mu0_warm`` instead of ``mu0`` so the iterate is not pushed
    back toward the analytic center.
    """
    cfg = problem.config
    t_start = time.perf_counter()
    nz = problem.nz
    lo, hi = problem.lower, problem.upper
    width = hi - lo
    z = np.zeros(nz) if z0 is None else np.array(z0, dtype=float)
    z = np.clip(z, lo + 1e-3 * width, hi - 1e-3 * width)

    c0 = problem.soft_constraints(z, grads=False)
    elastic = bool(c0.size and c0.min() <= 0.0)
    t = float(1.0 - c0.min()) if elastic else None
    mu = cfg.mu0_warm if warm else cfg.mu0
    M = cfg.elastic_penalty
    trace: list = []
    best = None
    newton_steps = 0
    outer_done = 0

    def merit(zv, tv, mu):
        c = problem.soft_constraints(zv, grads=False)
        if tv is not None:
            c = c + tv
        bl = zv - lo
        bh = hi - zv
        if c.size and c.min() <= 0 or bl.min() <= 0 or bh.min() <= 0:
            return np.inf
        val = problem.cost(zv) - mu * (np.log(c).sum() + np.log(bl).sum() + np.log(bh).sum())
        if tv is not None:
            val += M * tv
        return val

    n_con = len(c0) + 2 * nz
    for outer in range(cfg.max_outer):
        outer_done = outer + 1
        for _ in range(cfg.max_inner):
            c, Jc = problem.soft_constraints(z)
            _check_finite(problem, c, Jc)
            if elastic:
                c = c + t
            bl, bh = z - lo, hi - z
            g = problem.cost_gradient(z) - mu * (Jc.T @ (1.0 / c)) - mu * (1.0 / bl - 1.0 / bh)
            wts = mu / c**2
            Hz = problem.hessian + (Jc.T * wts) @ Jc + np.diag(mu / bl**2 + mu / bh**2)
            if elastic:
                gt = M - mu * np.sum(1.0 / c)
                hzt = Jc.T @ wts
                htt = np.sum(wts)
                Hfull = np.zeros((nz + 1, nz + 1))
                Hfull[:nz, :nz] = Hz
                Hfull[:nz, nz] = hzt
                Hfull[nz, :nz] = hzt
                Hfull[nz, nz] = htt
                gfull = np.append(g, gt)
            else:
                Hfull, gfull = Hz, g
            Hfull = Hfull + 1e-10 * np.eye(len(gfull)) * max(1.0, np.abs(np.diag(Hfull)).max())
            try:
                step = -np.linalg.solve(Hfull, gfull)
            except np.linalg.LinAlgError:
                step = -gfull
            dec = -gfull @ step
            if not np.isfinite(dec) or dec < 0:
                step = -gfull
                dec = gfull @ gfull
            if 0.5 * dec < 1e-10 * max(1.0, abs(problem.cost(z))):
                break
            f0 = merit(z, t, mu)
            alpha = 1.0
            accepted = False
            for _ls in range(40):
                zn = z + alpha * step[:nz]
                tn = t + alpha * step[nz] if elastic else None
                fn = merit(zn, tn, mu)
                if fn <= f0 - 1e-4 * alpha * dec:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                break
            z = zn
            newton_steps += 1
            trace.append((outer, float(fn)))
            if elastic:
                t = tn
                if t < 0.0:
                    elastic = False
                    t = None
                    break
        if not elastic:
            f = problem.cost(z)
            if best is None or f < best[1]:
                best = (z.copy(), f)
        if not elastic and n_con * mu < cfg.gap_tol * max(1.0, abs(problem.cost(z))):
            break
        if not elastic:
            mu *= cfg.mu_factor
        else:
            mu = max(mu * cfg.mu_factor, 1e-6)

    feasible = best is not None
    z_out = best[0] if feasible else z
    elapsed = time.perf_counter() - t_start
    return _result(problem, z_out, feasible, outer_done, newton_steps, elapsed, trace)


def _result(problem, z, feasible, iterations, newton_steps, elapsed, trace, fallback=False):
    cfg = problem.config
    lay = problem.layout
    du = np.stack([lay.mode_sequence(z, y) for y in range(lay.n_modes)])
    controls = np.clip(problem.nominal[None] + du, -cfg.u_max, cfg.u_max)
    plans = np.stack([
        taylor_expand_means(p, lay.mode_sequence(z, y))[:, 0, :2]
        for y, p in enumerate(problem.predictions)
    ])
    residuals = problem.soft_constraints(z, grads=False)
    return PlanResult(
        z, du, controls, controls[0, : cfg.replan_steps].copy(), problem.cost(z), residuals,
        feasible, iterations, newton_steps, elapsed, fallback, trace,
        problem.weights.copy(), plans, len(problem.records), problem,
    )


def audit_plan(plan: PlanResult) -> float:
    """Smallest ``g - margin`` over all collision checks, rebuilt from scratch.

    Reach sets are recomputed from the Taylor-expanded means of each mode
    plan and every check goes through ``to_hrep``; nothing is shared with the
    vectorized evaluation used inside the solver.
    """
    problem = plan.problem
    if problem is None:
        raise PlannerError("plan carries no problem to audit")
    cfg = problem.config
    foot = Zonotope(np.zeros(2), cfg.agent_half_size * np.eye(2))
    obstacles = problem.obstacles
    worst = np.inf
    for y, pred in enumerate(problem.predictions):
        du = problem.layout.mode_sequence(plan.decision, y)
        mu = taylor_expand_means(pred, du)
        if not cfg.interaction:
            mu[:, 1:] = pred.means[:, 1:]
        dr = discrete_reach(pred, cfg.alpha, means=mu)
        if cfg.continuous:
            cr = continuous_reach(dr)
            checks = [(k, piece, cr.pieces[k]) for k in range(cr.n_intervals) for piece in (0, 1)]
            sets = [(k, [p[piece] for p in pcs]) for k, piece, pcs in checks]
        else:
            sets = [(k, list(dr.sets[k])) for k in range(1, dr.n_steps)]
        for k, per_agent in sets:
            ego = position_set(per_agent[0])
            for i in problem.agent_ids:
                other = minkowski_sum(position_set(per_agent[i]), foot)
                rec = dynamic_constraint(ego, other, y, k, int(i), margin=cfg.margin)
                worst = min(worst, rec.value - rec.margin)
            for j, obs in enumerate(obstacles):
                rec = static_constraint(ego, obs, y, k, j, margin=cfg.margin)
                worst = min(worst, rec.value - rec.margin)
    return float(worst)


def braking_controls(ego_state, config: PlannerConfig = PlannerConfig()) -> np.ndarray:
    """Decelerate toward standstill at the acceleration limit."""
    v = np.array(ego_state[2:], dtype=float)
    out = np.zeros((config.horizon, CTRL_DIM))
    for k in range(config.horizon):
        a = np.clip(-v / config.dt, -config.u_max, config.u_max)
        out[k] = a
        v = v + a * config.dt
    return out


def warmstart_shift(previous: PlanResult | None, layout: DecisionLayout, steps: int = 1) -> np.ndarray:
    """Shift each mode's perturbation sequence, duplicating its last entry.

    Shared steps are taken from the first mode. Returns zeros without a
    previous plan.
    """
    if previous is None:
        return np.zeros(layout.size)
    seqs = [shift_sequence(s, steps) for s in previous.delta_u]
    if len(seqs[0]) != layout.horizon:
        return np.zeros(layout.size)
    return layout.pack(seqs)


def closest_agents(state: np.ndarray, count: int, prediction: ModePrediction | None = None) -> np.ndarray:
    """Indices of the ``count`` agents nearest the ego.

    With a prediction, agents are ranked by their smallest predicted distance
    to the ego over the horizon, so fast oncoming agents are not missed.
    """
    if prediction is None:
        d = np.linalg.norm(state[1:, :2] - state[0, :2], axis=1)
    else:
        mu = prediction.means
        d = np.linalg.norm(mu[:, 1:, :2] - mu[:, :1, :2], axis=2).min(axis=0)
    return np.argsort(d, kind="stable")[:count] + 1


def mpc_step(
    history: StateHistory,
    goal,
    obstacles: Sequence[Zonotope],
    predictor: Predictor,
    config: PlannerConfig = PlannerConfig(),
    previous: PlanResult | None = None,
) -> PlanResult:
    """Plan once from the latest history sample.

    The predictor is evaluated a single time at the nominal controls; the
    first ``replan_steps`` controls of the result are meant to be applied.
    """
    if history.length < 0:
        raise PlannerError("empty history")
    t0 = time.perf_counter()
    x0 = history.current
    u_nom = nominal_controls(x0[0], goal, config)
    preds = predictor.predict(history, u_nom, config.horizon, config.n_modes)
    ids = closest_agents(x0, config.n_agents, preds[0]) if x0.shape[0] > 1 else np.zeros(0, int)
    problem = build_problem(preds, u_nom, goal, obstacles, config, ids)
    candidates = start_candidates(problem, x0[0], previous)
    warm = previous is not None and config.warmstart
    if warm:
        # keep the shifted plan unless the world moved far from it
        z0 = np.clip(candidates[0], problem.lower, problem.upper)
        c = problem.soft_constraints(z0, grads=False)
        warm = bool(c.size == 0 or c.min() > -config.warm_tolerance)
    if not warm:
        z0 = pick_start(problem, candidates)
    res = solve(problem, z0, warm=warm)
    if not res.feasible:
        brake = braking_controls(x0[0], config)
        res = replace(
            res,
            controls=np.broadcast_to(brake, res.controls.shape).copy(),
            applied=brake[: config.replan_steps].copy(),
            fallback=True,
        )
    res.solve_time = time.perf_counter() - t0
    return res

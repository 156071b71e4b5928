"""Reference checks that do not reuse the code they verify.

These back the self-test command and the test suite: a rasterized overlap
oracle built on Qhull, an exact LP overlap test, sampling containment,
finite-difference gradients and a Monte-Carlo coverage estimate for the
two-piece interval sets.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from .constraints import ConstraintBatch
from .planner import PlannerConfig, build_problem, cost, nominal_controls
from .predictor import PredictorConfig, SocialForcePredictor, StateHistory, Walls, process_noise_covariances
from .reachset import interval_pieces
from .zonotope import Zonotope, are_disjoint, confidence_zonotope, to_hrep


def random_zonotope(rng: np.random.Generator, max_generators: int = 6, box: float = 5.0,
                    length=(0.2, 2.0)) -> Zonotope:
    ng = int(rng.integers(2, max_generators + 1))
    ang = rng.uniform(0.0, np.pi, ng)
    lens = rng.uniform(*length, ng)
    G = np.stack([np.cos(ang), np.sin(ang)]) * lens
    return Zonotope(rng.uniform(-box, box, 2), G)


def sample_zonotope(z: Zonotope, n: int, rng: np.random.Generator, boundary: bool = False) -> np.ndarray:
    beta = rng.uniform(-1.0, 1.0, (n, z.n_generators))
    if boundary:
        j = rng.integers(0, z.n_generators, n)
        beta[np.arange(n), j] = rng.choice([-1.0, 1.0], n)
    return z.center + beta @ z.generators.T


def overlap_scale(z1: Zonotope, z2: Zonotope) -> float:
    """Smallest ``s`` such that the two zonotopes, scaled by ``s`` about their centers, touch.

    The sets intersect iff the result is at most 1. Solved as a linear program.
    """
    G = np.hstack([z1.generators, -z2.generators])
    m = G.shape[1]
    # variables: beta (m), s; minimize s subject to G beta = c2 - c1, -s <= beta <= s
    c = np.zeros(m + 1)
    c[-1] = 1.0
    A_eq = np.hstack([G, np.zeros((2, 1))])
    b_eq = z2.center - z1.center
    A_ub = np.vstack([np.hstack([np.eye(m), -np.ones((m, 1))]), np.hstack([-np.eye(m), -np.ones((m, 1))])])
    b_ub = np.zeros(2 * m)
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=[(None, None)] * m + [(0, None)], method="highs")
    if res.status != 0:
        return np.inf
    return float(res.x[-1])


def _hull(z: Zonotope) -> ConvexHull:
    ng = z.n_generators
    corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * ng)).reshape(ng, -1).T
    return ConvexHull(z.center + corners @ z.generators.T)


def grid_overlap(z1: Zonotope, z2: Zonotope, resolution: float = 0.01) -> bool:
    """Rasterize both sets at ``resolution`` and report whether any cell is shared."""
    h1, h2 = _hull(z1), _hull(z2)
    lo = np.maximum(h1.points.min(axis=0), h2.points.min(axis=0))
    hi = np.minimum(h1.points.max(axis=0), h2.points.max(axis=0))
    if np.any(lo > hi):
        return False
    xs = np.arange(lo[0], hi[0] + resolution, resolution)
    ys = np.arange(lo[1], hi[1] + resolution, resolution)
    tol = 1e-12
    for chunk in np.array_split(ys, max(1, len(ys) // 200)):
        P = np.stack(np.meshgrid(xs, chunk), axis=-1).reshape(-1, 2)
        in1 = np.all(P @ h1.equations[:, :2].T + h1.equations[:, 2] <= tol, axis=1)
        if not in1.any():
            continue
        Q = P[in1]
        if np.any(np.all(Q @ h2.equations[:, :2].T + h2.equations[:, 2] <= tol, axis=1)):
            return True
    return False


def random_pair(rng: np.random.Generator, ambiguity: float = 0.05):
    """Random zonotope pair whose overlap verdict is not borderline at grid resolution."""
    while True:
        z1, z2 = random_zonotope(rng), random_zonotope(rng)
        s = overlap_scale(z1, z2)
        if abs(s - 1.0) >= ambiguity:
            return z1, z2


FD_ATOL = 1e-6


def fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def relative_error(a, b, floor: float = 1e-12) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


# -- problems for gradient checks -----------------------------------------------


def random_problem(rng: np.random.Generator, config: PlannerConfig | None = None, n_agents: int = 3):
    """Small planning problem around a random ego/agent configuration."""
    config = config or PlannerConfig(horizon=8, consensus_steps=2, replan_steps=2)
    walls = (
        Zonotope([10.0, 4.25], np.diag([20.0, 0.25])),
        Zonotope([10.0, -4.25], np.diag([20.0, 0.25])),
    )
    ego = np.array([0.0, rng.uniform(-1.5, 1.5), rng.uniform(1.0, 3.5), rng.uniform(-0.5, 0.5)])
    agents = []
    while len(agents) < n_agents:
        p = np.array([rng.uniform(3.0, 12.0), rng.uniform(-3.0, 3.0)])
        if all(np.linalg.norm(p - q[:2]) > 1.5 for q in agents):
            agents.append(np.concatenate([p, [rng.uniform(-2.0, 0.5), rng.uniform(-0.5, 0.5)]]))
    x0 = np.vstack([ego] + agents)
    hist = np.stack([x0 - np.hstack([x0[:, 2:] * config.dt * j, np.zeros((len(x0), 2))]) for j in (2, 1, 0)])
    pref = np.vstack([np.zeros(2), x0[1:, 2:]])
    history = StateHistory(hist, config.dt, pref)
    predictor = SocialForcePredictor(Walls.from_zonotopes(walls), config=PredictorConfig(substeps=5))
    goal = np.array([28.0, 0.0])
    u_nom = nominal_controls(x0[0], goal, config)
    preds = predictor.predict(history, u_nom, config.horizon, config.n_modes)
    problem = build_problem(preds, u_nom, goal, walls, config)
    z = rng.uniform(-0.5, 0.5, problem.nz)
    return problem, np.clip(z, problem.lower, problem.upper)


@dataclass
class GradientReport:
    constraint_max_rel: float
    cost_max_rel: float
    checked_records: int
    skipped_records: int


def check_problem_gradients(problem, z, h: float = 1e-6, tie_tol: float = 1e-6,
                            grad_fn: Callable | None = None) -> GradientReport:
    """Compare analytic gradients with central differences at ``z``.

    Records whose two best rows are within ``tie_tol`` (or whose best row is
    within ``tie_tol`` of a kink of its offset) anywhere on the difference
    stencil are skipped, since the max is not differentiable there.
    """
    batch: ConstraintBatch = problem.batch
    vals, J = batch.values_and_grads(z) if grad_fn is None else grad_fn(batch, z)
    R, nz = len(batch), problem.nz
    fd = np.zeros((R, nz))
    smooth = batch.tie_gaps(z) > tie_tol
    for i in range(nz):
        e = np.zeros(nz)
        e[i] = h
        smooth &= (batch.tie_gaps(z + e) > tie_tol) & (batch.tie_gaps(z - e) > tie_tol)
        fd[:, i] = (batch.values(z + e) - batch.values(z - e)) / (2.0 * h)
    worst = 0.0
    for r in np.flatnonzero(smooth):
        # An exactly zero gradient only sees stencil round-off; compare it absolutely.
        if max(np.linalg.norm(J[r]), np.linalg.norm(fd[r])) < FD_ATOL:
            continue
        worst = max(worst, relative_error(J[r], fd[r]))
    checked, skipped = int(smooth.sum()), int(R - smooth.sum())
    # Cost: independent evaluation route with the raw mode probabilities.
    lay = problem.layout
    gsum = float(sum(p.gamma for p in problem.predictions))

    def f(zz):
        return cost([lay.mode_sequence(zz, y) for y in range(lay.n_modes)], problem.predictions,
                    problem.nominal, problem.goal, problem.config)

    fd_c = fd_gradient(f, z, h=1e-5)
    cost_err = relative_error(gsum * problem.cost_gradient(z), fd_c)
    return GradientReport(worst, cost_err, checked, skipped)


# -- continuous-time coverage ---------------------------------------------------


def coverage_instance(rng: np.random.Generator, alpha: float = 1.0, dt: float = 0.1):
    """Confidence sets at two consecutive steps of a noisy double integrator."""
    covs = process_noise_covariances(16, dt, 5, 0.02)
    k = int(rng.integers(1, 16))
    mu0 = np.concatenate([rng.uniform(-5, 5, 2), rng.uniform(-4, 4, 2)])
    mu1 = mu0.copy()
    mu1[:2] += dt * mu0[2:] + rng.normal(0, 0.02, 2)
    mu1[2:] += rng.normal(0, 0.1, 2)
    z0 = confidence_zonotope(mu0, covs[k], alpha)
    z1 = confidence_zonotope(mu1, covs[k + 1], alpha)
    return z0, z1


def coverage_rate(z0: Zonotope, z1: Zonotope, rng: np.random.Generator, n: int = 10_000) -> float:
    """Share of interpolated states ``(1-s) x0 + s x1`` inside either interval piece."""
    a, b = interval_pieces(z0, z1)
    ha, hb = to_hrep(_pos(a)), to_hrep(_pos(b))
    x0 = sample_zonotope(z0, n, rng)[:, :2]
    x1 = sample_zonotope(z1, n, rng)[:, :2]
    s = rng.uniform(0.0, 1.0, (n, 1))
    x = (1.0 - s) * x0 + s * x1
    ina = np.max(x @ ha.A.T - ha.b, axis=1) <= 1e-9
    inb = np.max(x @ hb.A.T - hb.b, axis=1) <= 1e-9
    return float(np.mean(ina | inb))


def _pos(z: Zonotope) -> Zonotope:
    G = z.generators[:2]
    keep = np.linalg.norm(G, axis=0) >= 1e-9
    return Zonotope(z.center[:2], G[:, keep])


# -- self-test -------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def run_selftest(seed: int = 0, scale: float = 1.0, grad_fn: Callable | None = None) -> list[CheckResult]:
    """Oracle suites at reduced size (``scale`` multiplies the instance counts)."""
    rng = np.random.default_rng(seed)
    out = []

    def timed(name, fn):
        t0 = time.perf_counter()
        ok, detail = fn()
        out.append(CheckResult(name, ok, detail, time.perf_counter() - t0))

    def grid():
        n = max(1, int(30 * scale))
        bad = 0
        for _ in range(n):
            z1, z2 = random_pair(rng)
            bad += are_disjoint(z1, z2) == grid_overlap(z1, z2)
        return bad == 0, f"{bad} disagreements on {n} pairs"

    def hrep():
        n = max(1, int(30 * scale))
        fails = 0
        for _ in range(n):
            z = random_zonotope(rng)
            h = to_hrep(z)
            pts = sample_zonotope(z, 1000, rng)
            fails += int(np.any(np.max(pts @ h.A.T - h.b, axis=1) > 1e-9))
            # push each facet's support point 1% outward
            for i in range(h.A.shape[0]):
                p = z.center + z.generators @ np.sign(h.A[i] @ z.generators)
                depth = h.b[i] - h.A[i] @ z.center
                q = p + 0.01 * max(depth, 1e-6) * h.A[i]
                fails += int(np.max(h.A @ q - h.b) <= 0)
        return fails == 0, f"{fails} failures on {n} zonotopes"

    def grads():
        n = max(1, int(5 * scale))
        worst_c = worst_g = 0.0
        for _ in range(n):
            prob, z = random_problem(rng)
            rep = check_problem_gradients(prob, z, grad_fn=grad_fn)
            worst_c = max(worst_c, rep.constraint_max_rel)
            worst_g = max(worst_g, rep.cost_max_rel)
        return worst_c < 1e-4 and worst_g < 1e-6, f"constraint {worst_c:.2e}, cost {worst_g:.2e} max rel. error"

    def coverage():
        n = max(1, int(5 * scale))
        rates = [coverage_rate(*coverage_instance(rng), rng, 10_000) for _ in range(n)]
        return min(rates) >= 0.99, f"min coverage {min(rates):.4f} over {n} instances"

    timed("grid collision oracle", grid)
    timed("H-representation sampling", hrep)
    timed("finite-difference gradients", grads)
    timed("continuous-time coverage", coverage)
    return out

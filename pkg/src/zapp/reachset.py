"""Discrete- and continuous-time zonotope reachable sets from mode predictions."""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .predictor import ModePrediction
from .zonotope import (
    Zonotope,
    cartesian_product,
    confidence_scale,
    confidence_zonotope,
    normalize_generators,
)

POS = np.array([0, 1])


class ReachSetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteReachSet:
    """``sets[k][i]`` is the confidence zonotope of agent ``i`` at step ``k``."""

    mode: int
    sets: tuple[tuple[Zonotope, ...], ...]

    @property
    def n_steps(self) -> int:
        return len(self.sets)

    @property
    def n_agents(self) -> int:
        return len(self.sets[0]) if self.sets else 0

    def joint(self, k: int) -> Zonotope:
        return joint_reach(self.sets[k])


@dataclass(frozen=True, eq=False)
class ContinuousReachSet:
    """``pieces[k][i] = (first half, second half)`` of interval ``[k, k+1]``."""

    mode: int
    pieces: tuple[tuple[tuple[Zonotope, Zonotope], ...], ...]

    @property
    def n_intervals(self) -> int:
        return len(self.pieces)


def discrete_reach(
    pred: ModePrediction, alpha: float = 1.0, means: np.ndarray | None = None
) -> DiscreteReachSet:
    """Confidence zonotopes per agent and step.

    ``means`` overrides the prediction's means (e.g. Taylor-expanded ones)
    while keeping its covariances.
    """
    mu = pred.means if means is None else means
    scale = confidence_scale(alpha, mu.shape[2])
    sets = tuple(
        tuple(
            confidence_zonotope(mu[k, i], pred.covariances[k, i], alpha, scale=scale)
            for i in range(mu.shape[1])
        )
        for k in range(mu.shape[0])
    )
    return DiscreteReachSet(pred.mode, sets)


def line_segment_zonotope(mu_k, mu_k1) -> Zonotope:
    mu_k = np.asarray(mu_k, dtype=float)
    mu_k1 = np.asarray(mu_k1, dtype=float)
    return Zonotope(0.5 * (mu_k + mu_k1), (0.5 * (mu_k1 - mu_k)).reshape(-1, 1))


def interval_pieces(z_k: Zonotope, z_k1: Zonotope) -> tuple[Zonotope, Zonotope]:
    """Extend each endpoint set halfway toward the other along the mean segment.

    With ``d = c1 - c0`` the first piece is ``Z(k) + Z(d/4, d/4)``, sweeping
    ``Z(k)`` from its center to the midpoint; the second mirrors it for ``k+1``.
    """
    c0, c1 = z_k.center, z_k1.center
    seg = line_segment_zonotope(c0, c1)
    quarter = 0.5 * (seg.generators[:, 0])
    first = Zonotope(c0 + 0.5 * (seg.center - c0), np.hstack([z_k.generators, quarter[:, None]]))
    second = Zonotope(c1 + 0.5 * (seg.center - c1), np.hstack([z_k1.generators, quarter[:, None]]))
    return first, second


def continuous_reach(dr: DiscreteReachSet) -> ContinuousReachSet:
    if dr.n_steps < 2:
        raise ReachSetError(f"continuous extension needs at least 2 steps, got {dr.n_steps}")
    pieces = tuple(
        tuple(interval_pieces(dr.sets[k][i], dr.sets[k + 1][i]) for i in range(dr.n_agents))
        for k in range(dr.n_steps - 1)
    )
    return ContinuousReachSet(dr.mode, pieces)


def joint_reach(per_agent) -> Zonotope:
    """Cartesian product in the given agent order (ego first)."""
    per_agent = list(per_agent)
    if not per_agent:
        raise ReachSetError("no agent sets to combine")
    return reduce(cartesian_product, per_agent)


def joint_continuous(cr: ContinuousReachSet, k: int, piece: int) -> Zonotope:
    if not 0 <= k < cr.n_intervals:
        raise ReachSetError(f"interval {k} outside 0..{cr.n_intervals - 1}")
    return joint_reach(p[piece] for p in cr.pieces[k])


def position_set(z: Zonotope) -> Zonotope:
    """Planar occupancy with degenerate generators removed."""
    return normalize_generators(Zonotope(z.center[POS], z.generators[POS]))

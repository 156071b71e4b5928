"""Subdifferentiable collision-avoidance constraints.

Each record encodes ``g = max(A p_e - b)`` where ``(A, b)`` is the
H-representation of the collision zonotope built around the counterpart's
center from the ego and counterpart generators. Feasibility means
``g >= margin``.

Records carry affine sensitivities of the ego center, the counterpart center
and every generator column with respect to the decision vector ``z``, so the
value and a subgradient can be evaluated at any ``z`` without rebuilding the
reachable sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .zonotope import EPS_GEN, HPolytope, Zonotope, normalize_generators, project, to_hrep

DEFAULT_MARGIN = 0.05
# Tiny axis generators appended to every collision zonotope so its
# H-representation is always full dimensional.
PAD = 1e-8

_ROT_T = np.array([[0.0, 1.0], [-1.0, 0.0]])


def _pos(z: Zonotope) -> Zonotope:
    return z if z.dim == 2 else project(z, [0, 1])


@dataclass(frozen=True, eq=False)
class ConstraintRecord:
    kind: str  # "dynamic" | "static"
    mode: int
    interval: int
    counterpart: int
    piece: str  # "a", "b", or "d" for a discrete-time step
    ego_center: np.ndarray  # (2,)
    counter_center: np.ndarray  # (2,)
    generators: np.ndarray  # (2, nG)
    margin: float = DEFAULT_MARGIN
    ego_center_jac: np.ndarray | None = None  # (2, nz)
    counter_center_jac: np.ndarray | None = None  # (2, nz)
    generator_jac: np.ndarray | None = None  # (2, nG, nz)
    n_ego_generators: int = field(default=0)

    @property
    def collision_zonotope(self) -> Zonotope:
        return Zonotope(self.counter_center, self.generators)

    @property
    def hpoly(self) -> HPolytope:
        return to_hrep(normalize_generators(self.collision_zonotope))

    @property
    def value(self) -> float:
        return float(np.max(self.hpoly.A @ self.ego_center - self.hpoly.b))

    @property
    def feasible(self) -> bool:
        return self.value >= self.margin


def _record(kind, ego_piece, other, mode, interval, counterpart, piece, margin, **jacs):
    e = _pos(ego_piece)
    o = _pos(other)
    G = np.hstack([e.generators, o.generators, PAD * np.eye(2)])
    return ConstraintRecord(
        kind, mode, interval, counterpart, piece, e.center.copy(), o.center.copy(), G, margin,
        n_ego_generators=e.n_generators, **jacs,
    )


def dynamic_constraint(
    ego_piece: Zonotope,
    agent_piece: Zonotope,
    mode: int = 0,
    interval: int = 0,
    counterpart: int = 1,
    piece: str = "a",
    margin: float = DEFAULT_MARGIN,
) -> ConstraintRecord:
    """Collision record between an ego set and an agent set (positions used)."""
    return _record("dynamic", ego_piece, agent_piece, mode, interval, counterpart, piece, margin)


def static_constraint(
    ego_piece: Zonotope,
    obstacle: Zonotope,
    mode: int = 0,
    interval: int = 0,
    counterpart: int = 0,
    piece: str = "a",
    margin: float = DEFAULT_MARGIN,
) -> ConstraintRecord:
    return _record("static", ego_piece, obstacle, mode, interval, counterpart, piece, margin)


class ConstraintBatch:
    """Vectorized evaluation of many records sharing one decision vector.

    ``smoothing`` replaces the hard max by a log-sum-exp with that temperature.
    """

    def __init__(self, records: Sequence[ConstraintRecord], nz: int, smoothing: float | None = None):
        self.records = list(records)
        self.nz = nz
        self.smoothing = smoothing
        R = len(self.records)
        nG = max((r.generators.shape[1] for r in self.records), default=1)
        self.G0 = np.zeros((R, 2, nG))
        self.d0 = np.zeros((R, 2))
        self.DJ = np.zeros((R, 2, nz))
        GJ = np.zeros((R, 2, nG, nz))
        self.margin = np.zeros(R)
        for i, r in enumerate(self.records):
            g = r.generators.shape[1]
            self.G0[i, :, :g] = r.generators
            self.d0[i] = r.ego_center - r.counter_center
            if r.ego_center_jac is not None:
                self.DJ[i] += r.ego_center_jac
            if r.counter_center_jac is not None:
                self.DJ[i] -= r.counter_center_jac
            if r.generator_jac is not None:
                GJ[i, :, :g] = r.generator_jac
            self.margin[i] = r.margin
        self.var_cols = np.flatnonzero(np.any(GJ != 0.0, axis=(0, 1, 3)))
        self.GJ = np.ascontiguousarray(GJ[:, :, self.var_cols])

    def __len__(self):
        return len(self.records)

    def _geometry(self, z):
        G = self.G0.copy()
        if self.var_cols.size:
            G[:, :, self.var_cols] += self.GJ @ z
        d = self.d0 + self.DJ @ z
        ell = np.sqrt(G[:, 0] ** 2 + G[:, 1] ** 2)
        valid = ell >= EPS_GEN
        safe = np.where(valid, ell, 1.0)
        N = np.stack([-G[:, 1], G[:, 0]], axis=1) / safe[:, None, :]  # (R, 2, nG)
        proj = np.einsum("rkg,rkh->rgh", N, G)
        nd = np.einsum("rkg,rk->rg", N, d)
        spread = np.abs(proj).sum(axis=2)
        h = np.concatenate([nd - spread, -nd - spread], axis=1)
        h[:, : G.shape[2]][~valid] = -np.inf
        h[:, G.shape[2] :][~valid] = -np.inf
        return G, d, ell, N, proj, h

    def values(self, z) -> np.ndarray:
        h = self._geometry(np.asarray(z, dtype=float))[5]
        if self.smoothing:
            return _lse(h, self.smoothing)
        return h.max(axis=1)

    def _row_grads(self, z, G, d, ell, N, proj, rows):
        """Gradient of the given H-row per record, shape (R, nz)."""
        R, _, nG = G.shape
        ar = np.arange(R)
        gi = rows % nG
        s = np.where(rows < nG, 1.0, -1.0)
        n = N[ar, :, gi]  # (R, 2)
        sg = np.sign(proj[ar, gi])  # (R, nG)
        # n is orthogonal to its own generator; drop the round-off sign.
        sg[ar, gi] = 0.0
        grad = np.einsum("rk,rkz->rz", s[:, None] * n, self.DJ)
        if self.var_cols.size:
            dG = -sg[:, None, :] * n[:, :, None]  # (R, 2, nG)
            w = s[:, None] * d - np.einsum("rh,rkh->rk", sg, G)
            w_perp = w - np.sum(n * w, axis=1, keepdims=True) * n
            rot = (w_perp @ _ROT_T.T) / ell[ar, gi][:, None]
            dG[ar, :, gi] = rot
            grad += np.einsum("rkh,rkhz->rz", dG[:, :, self.var_cols], self.GJ)
        return grad

    def values_and_grads(self, z) -> tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=float)
        G, d, ell, N, proj, h = self._geometry(z)
        if not self.smoothing:
            rows = np.argmax(h, axis=1)
            return h[np.arange(len(h)), rows], self._row_grads(z, G, d, ell, N, proj, rows)
        vals = _lse(h, self.smoothing)
        wts = np.exp(self.smoothing * (h - vals[:, None]))
        grad = np.zeros((len(h), self.nz))
        for j in range(h.shape[1]):
            live = wts[:, j] > 1e-14
            if np.any(live):
                rows = np.full(len(h), j)
                grad += wts[:, j, None] * np.where(
                    live[:, None], self._row_grads(z, G, d, ell, N, proj, rows), 0.0
                )
        return vals, grad

    def tie_gaps(self, z) -> np.ndarray:
        """Gap between the active row and the best row with a different normal."""
        G, d, ell, N, proj, h = self._geometry(np.asarray(z, dtype=float))
        R, _, nG = G.shape
        A = np.concatenate([N, -N], axis=2)  # (R, 2, 2nG)
        top = np.argmax(h, axis=1)
        a_top = A[np.arange(R), :, top]
        same = np.sum(np.abs(A - a_top[:, :, None]), axis=1) < 1e-9
        other = np.where(same, -np.inf, h)
        return h[np.arange(R), top] - other.max(axis=1)


def _lse(h, t):
    m = h.max(axis=1)
    return m + np.log(np.sum(np.exp(t * (h - m[:, None])), axis=1)) / t


def constraint_value(rec: ConstraintRecord, z=None, smoothing: float | None = None) -> float:
    nz = _nz(rec)
    z = np.zeros(nz) if z is None else z
    return float(ConstraintBatch([rec], nz, smoothing).values(z)[0])


def constraint_gradient(rec: ConstraintRecord, z=None, smoothing: float | None = None) -> np.ndarray:
    """Subgradient of the record value with respect to the decision vector.

    Ties between rows are broken toward the lowest row index.
    """
    nz = _nz(rec)
    z = np.zeros(nz) if z is None else z
    return ConstraintBatch([rec], nz, smoothing).values_and_grads(z)[1][0]


def _nz(rec: ConstraintRecord) -> int:
    for j in (rec.ego_center_jac, rec.counter_center_jac):
        if j is not None:
            return j.shape[-1]
    if rec.generator_jac is not None:
        return rec.generator_jac.shape[-1]
    return 0

"""Explicit solution of multiparametric QPs by facet-stepping region enumeration.

The problem is::

    min_z 1/2 z'Hz + (F xi + f0)'z   s.t.   G z <= b + E xi,   xi in box

For a fixed active set ``A`` the KKT system gives the multipliers and the
optimizer as affine functions of ``xi``. The critical region is where the
inactive rows stay feasible and the active multipliers stay nonnegative.
Regions are discovered breadth-first: each facet of a known region is
crossed by a small step, the QP is solved there and the new active set
yields the neighbor.
"""
from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import _backend
from . import qp as qpmod

log = logging.getLogger(__name__)

STRICT_MULTIPLIER = 1e-9
FACET_RADIUS = 1e-9
STEP_SIZES = (1e-6, 1e-5, 1e-4)
DEFAULT_MAX_REGIONS = 5000
LOCATE_TOL = 1e-9
SCHEMA = "parampc-pwa/1"


@dataclass(frozen=True)
class CriticalRegion:
    """Polyhedron ``{xi : region_a xi <= region_b}`` with law ``z = gain xi + offset``."""

    active_set: tuple
    gain: np.ndarray
    offset: np.ndarray
    region_a: np.ndarray
    region_b: np.ndarray
    center: np.ndarray
    radius: float
    boundary: np.ndarray = None  # True for rows coming from the parameter box

    def evaluate(self, xi) -> np.ndarray:
        return self.gain @ np.asarray(xi, dtype=float) + self.offset

    def contains(self, xi, tol: float = LOCATE_TOL) -> bool:
        return bool(np.all(self.region_a @ np.asarray(xi, dtype=float) <= self.region_b + tol))

    def to_dict(self) -> dict:
        return {
            "active_set": [int(i) for i in self.active_set],
            "gain": self.gain.tolist(),
            "offset": self.offset.tolist(),
            "region_a": self.region_a.tolist(),
            "region_b": self.region_b.tolist(),
            "chebyshev_center": self.center.tolist(),
            "chebyshev_radius": float(self.radius),
            "boundary": [bool(v) for v in self.boundary],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CriticalRegion":
        a = np.asarray(doc["region_a"], dtype=float)
        nz = len(doc["offset"])
        return cls(
            active_set=tuple(doc["active_set"]),
            gain=np.asarray(doc["gain"], dtype=float).reshape(nz, -1),
            offset=np.asarray(doc["offset"], dtype=float),
            region_a=a.reshape(-1, np.asarray(doc["chebyshev_center"]).size),
            region_b=np.asarray(doc["region_b"], dtype=float),
            center=np.asarray(doc["chebyshev_center"], dtype=float),
            radius=float(doc["chebyshev_radius"]),
            boundary=np.asarray(doc.get("boundary", [False] * len(doc["region_b"])), dtype=bool),
        )


@dataclass(frozen=True)
class MpQp:
    """Problem data of a multiparametric QP over a bounded parameter box."""

    h: np.ndarray
    f_map: np.ndarray
    f_off: np.ndarray
    g: np.ndarray
    b: np.ndarray
    e_mat: np.ndarray
    box: np.ndarray

    @classmethod
    def build(cls, h, f_map, g, b, e_mat, param_box, f_off=None) -> "MpQp":
        h = np.asarray(h, dtype=float)
        nz = h.shape[0]
        f_map = np.asarray(f_map, dtype=float).reshape(nz, -1)
        nxi = f_map.shape[1]
        box = np.asarray(param_box, dtype=float).reshape(-1, 2)
        if box.shape[0] != nxi:
            raise ValueError(f"parameter box has {box.shape[0]} rows, expected {nxi}")
        if not np.all(np.isfinite(box)) or np.any(box[:, 0] > box[:, 1]):
            raise ValueError("parameter box must be bounded with lower <= upper")
        g = np.zeros((0, nz)) if g is None else np.asarray(g, dtype=float).reshape(-1, nz)
        b = np.zeros(0) if b is None else np.asarray(b, dtype=float).reshape(-1)
        e_mat = (np.zeros((len(b), nxi)) if e_mat is None
                 else np.asarray(e_mat, dtype=float).reshape(len(b), nxi))
        f_off = np.zeros(nz) if f_off is None else np.asarray(f_off, dtype=float).reshape(nz)
        return cls(0.5 * (h + h.T), f_map, f_off, g, b, e_mat, box)

    @property
    def n_xi(self) -> int:
        return self.f_map.shape[1]

    def qp_at(self, xi) -> qpmod.DenseQp:
        xi = np.asarray(xi, dtype=float)
        return qpmod.DenseQp(self.h, self.f_map @ xi + self.f_off, self.g, self.b + self.e_mat @ xi)

    def objective(self, z, xi) -> float:
        return float(0.5 * z @ self.h @ z + (self.f_map @ xi + self.f_off) @ z)


@dataclass
class Adjacency:
    """Region ``first`` reaches region ``second`` across one of its facets."""

    first: int
    second: int
    normal: np.ndarray
    point: np.ndarray
    radius: float


@dataclass
class PwaLaw:
    regions: list
    parameter_box: np.ndarray
    problem: MpQp = None
    adjacency: list = field(default_factory=list)
    partial: bool = False
    skipped: int = 0
    unexplored_volume_estimate: float = float("nan")
    _packed: tuple = field(default=None, repr=False)

    def __len__(self):
        return len(self.regions)

    def packed(self):
        """Row-stacked region data for the point-location kernel."""
        if self._packed is None or self._packed[2].size != len(self.regions) + 1:
            nxi = self.parameter_box.shape[0]
            a = (np.vstack([r.region_a for r in self.regions]) if self.regions
                 else np.zeros((0, nxi)))
            b = (np.concatenate([r.region_b for r in self.regions]) if self.regions
                 else np.zeros(0))
            starts = np.zeros(len(self.regions) + 1, dtype=np.intp)
            starts[1:] = np.cumsum([len(r.region_b) for r in self.regions])
            self._packed = (np.ascontiguousarray(a), np.ascontiguousarray(b), starts)
        return self._packed

    def to_json(self) -> str:
        doc = {
            "schema": SCHEMA,
            "parameter_box": self.parameter_box.tolist(),
            "partial": self.partial,
            "skipped": self.skipped,
            "unexplored_volume_estimate": (None if np.isnan(self.unexplored_volume_estimate)
                                           else self.unexplored_volume_estimate),
            "regions": [r.to_dict() for r in self.regions],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "PwaLaw":
        doc = json.loads(text)
        if doc.get("schema") != SCHEMA:
            raise ValueError(f"not a {SCHEMA} document")
        est = doc.get("unexplored_volume_estimate")
        return cls(
            regions=[CriticalRegion.from_dict(r) for r in doc["regions"]],
            parameter_box=np.asarray(doc["parameter_box"], dtype=float),
            partial=bool(doc.get("partial", False)),
            skipped=int(doc.get("skipped", 0)),
            unexplored_volume_estimate=float("nan") if est is None else float(est),
        )


# ---------------------------------------------------------------- polyhedra

def _box_rows(box):
    d = box.shape[0]
    eye = np.eye(d)
    return np.vstack([eye, -eye]), np.concatenate([box[:, 1], -box[:, 0]])


def _normalize(a, b, scale, rel=1e-9):
    """Unit-norm rows; rows that vanish relative to ``scale`` are dropped.

    ``scale[i]`` is the magnitude of the terms that were combined into row
    ``i``; cancellation below ``rel * scale`` is rounding, not geometry.
    Returns ``None`` when a vanished row has a clearly negative right-hand side.
    """
    norms = np.linalg.norm(a, axis=1)
    keep = norms > rel * scale
    if np.any(~keep & (b < -rel * scale)):
        return None
    return a[keep] / norms[keep, None], b[keep] / norms[keep], keep


def _dedupe(a, b, boundary, tol=1e-10):
    """Merge parallel rows, keeping the tightest right-hand side.

    On ties a box row wins, so that interval bounding later cannot drop a
    problem row whose only justification was the merged box row.
    """
    out_a, out_b, out_m = [], [], []
    seen = {}
    for i in range(len(b)):
        key = tuple(np.round(a[i], 10))
        j = seen.get(key)
        if j is None:
            seen[key] = len(out_b)
            out_a.append(a[i])
            out_b.append(b[i])
            out_m.append(bool(boundary[i]))
        elif b[i] < out_b[j] - tol:
            out_b[j] = b[i]
            out_m[j] = bool(boundary[i])
        elif b[i] <= out_b[j] + tol:
            out_b[j] = min(out_b[j], b[i])
            out_m[j] = out_m[j] or bool(boundary[i])
    return np.array(out_a), np.array(out_b), np.array(out_m, dtype=bool)


_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def chebyshev_ball(a, b, eq_a=None, eq_b=None):
    """Largest ball ``{x : |x - c| <= r}`` inside ``a x <= b`` (rows unit norm)."""
    d = a.shape[1]
    cost = np.zeros(d + 1)
    cost[-1] = -1.0
    a_ub = np.hstack([a, np.ones((a.shape[0], 1))])
    kw = {}
    if eq_a is not None:
        kw = dict(A_eq=np.hstack([eq_a, np.zeros((eq_a.shape[0], 1))]), b_eq=eq_b)
    res = linprog(cost, A_ub=a_ub, b_ub=b, bounds=[(None, None)] * d + [(0, None)],
                  method="highs", options=_LP_OPTIONS, **kw)
    if res.status != 0:
        return None, 0.0
    return res.x[:d], float(res.x[-1])


def _row_support(a, b, row, mask):
    """``max a[row] x`` over the rows selected by ``mask``; ``inf`` if unbounded."""
    res = linprog(-a[row], A_ub=a[mask], b_ub=b[mask], bounds=[(None, None)] * a.shape[1],
                  method="highs", options=_LP_OPTIONS)
    if res.status == 3:
        return np.inf
    if res.status != 0:
        return np.inf
    return -float(res.fun)


def _reduce(a, b, boundary, box, tol=1e-9):
    """Drop redundant rows, then attach a facet ball to each remaining row.

    Rows implied by the box are dropped by interval bounding; the rest are
    tested one at a time with a support LP against the rows still kept.
    Returns ``(a, b, boundary, facets)`` with ``facets[i] = (center, radius)``.
    """
    lo, hi = box[:, 0], box[:, 1]
    reach = np.where(a > 0, a * hi, a * lo).sum(axis=1)
    keep = boundary | (reach > b + tol)
    # problem rows first so that box rows are tested against them
    order = sorted(np.flatnonzero(keep), key=lambda i: (boundary[i], i))
    for i in order:
        keep[i] = False
        if _row_support(a, b, i, keep) > b[i] + tol:
            keep[i] = True
    a, b, boundary = a[keep], b[keep], boundary[keep]
    facets = []
    for i in range(len(b)):
        others = np.arange(len(b)) != i
        facets.append(chebyshev_ball(a[others], b[others], a[i:i + 1], b[i:i + 1]))
    # rows whose facet ball is degenerate stay in the description but are not stepped
    return a, b, boundary, facets


# ---------------------------------------------------------------- enumeration

class _Enumerator:
    def __init__(self, prob: MpQp, max_regions: int):
        self.prob = prob
        self.max_regions = max_regions
        lower, h_used = qpmod.factor_hessian(prob.h)
        self.h = h_used
        self.j = qpmod.inverse_factor(lower)
        self.h_inv = self.j @ self.j.T
        self.box_a, self.box_b = _box_rows(prob.box)

    def solve(self, xi):
        p = self.prob
        return qpmod.solve_factored(self.j, p.f_map @ xi + p.f_off, p.g, p.b + p.e_mat @ xi)

    def region(self, strict):
        """Critical region for a strict active set, or a reason string."""
        p = self.prob
        act = np.array(strict, dtype=int)
        nxi = p.n_xi
        if act.size:
            ga = p.g[act]
            if np.linalg.matrix_rank(ga) < act.size:
                return "rank-deficient active set"
            m = ga @ self.h_inv @ ga.T
            # lam = l_map xi + l_off
            rhs_map = p.e_mat[act] + ga @ self.h_inv @ p.f_map
            rhs_off = p.b[act] + ga @ self.h_inv @ p.f_off
            l_map = -np.linalg.solve(m, rhs_map)
            l_off = -np.linalg.solve(m, rhs_off)
            gain = -self.h_inv @ (p.f_map + ga.T @ l_map)
            offset = -self.h_inv @ (p.f_off + ga.T @ l_off)
        else:
            l_map = np.zeros((0, nxi))
            l_off = np.zeros(0)
            gain = -self.h_inv @ p.f_map
            offset = -self.h_inv @ p.f_off
        inactive = np.setdiff1d(np.arange(p.g.shape[0]), act)
        a_rows = [p.g[inactive] @ gain - p.e_mat[inactive], -l_map, self.box_a]
        b_rows = [p.b[inactive] - p.g[inactive] @ offset, l_off, self.box_b]
        bnd = np.concatenate([np.zeros(len(inactive) + len(l_off), dtype=bool),
                              np.ones(len(self.box_b), dtype=bool)])
        gi = p.g[inactive]
        primal_scale = (np.abs(gi) @ np.abs(gain)).sum(axis=1) + np.abs(p.e_mat[inactive]).sum(axis=1)
        dual_scale = np.full(len(l_off), max(np.abs(l_map).max(initial=0.0), 1e-300))
        scale = np.concatenate([primal_scale, dual_scale, np.ones(len(self.box_b))])
        norm = _normalize(np.vstack(a_rows), np.concatenate(b_rows), np.maximum(scale, 1e-300))
        if norm is None:
            return "empty region"
        a, b, keep = norm
        a, b, bnd = _dedupe(a, b, bnd[keep])
        center, radius = chebyshev_ball(a, b)
        if center is None or radius <= FACET_RADIUS:
            return "lower-dimensional region"
        a, b, bnd, facets = _reduce(a, b, bnd, p.box)
        reg = CriticalRegion(tuple(int(i) for i in act), gain, offset, a, b, center, radius, bnd)
        return reg, facets

    def strict_set(self, sol):
        lam = sol.multipliers
        return tuple(i for i in sol.active_set if lam[i] > STRICT_MULTIPLIER)

    def candidates(self, sol):
        """Strict active set first, then the solver's full working set.

        Rows with tiny multipliers can still be needed to pin variables the
        cost barely sees; dropping them then yields a flat region.
        """
        strict = self.strict_set(sol)
        full = tuple(sol.active_set)
        return (strict,) if full == strict else (strict, full)


def _seed_point(enum: _Enumerator, rng_seed: int = 0):
    box = enum.prob.box
    center = box.mean(axis=1)
    sol = enum.solve(center)
    if sol.ok:
        return center, sol
    rng = np.random.default_rng(rng_seed)
    for _ in range(200):
        xi = rng.uniform(box[:, 0], box[:, 1])
        sol = enum.solve(xi)
        if sol.ok:
            return xi, sol
    return None, None


def enumerate_regions(h, f_map, g, b, e_mat, param_box, f_off=None,
                      max_regions: int = DEFAULT_MAX_REGIONS, seed: int = 0) -> PwaLaw:
    """Critical regions of the mpQP over ``param_box``.

    Parameters
    ----------
    h : (nz, nz) positive definite Hessian.
    f_map, f_off : linear term ``f(xi) = f_map xi + f_off``.
    g, b, e_mat : constraints ``g z <= b + e_mat xi``.
    param_box : (n_xi, 2) bounds of the explored parameter set.
    max_regions : stop with ``partial=True`` once this many regions exist.
    seed : RNG seed for the fallback seed point when the box center is infeasible.

    Returns
    -------
    PwaLaw
        Regions in discovery order, with facet adjacency recorded.
    """
    prob = MpQp.build(h, f_map, g, b, e_mat, param_box, f_off)
    enum = _Enumerator(prob, max_regions)
    law = PwaLaw([], prob.box, prob)
    visited = {}
    queue = deque()

    def add(sol, xi):
        """Index of the region for ``sol`` at ``xi`` (new or known), or None."""
        for cand in enum.candidates(sol):
            if cand in visited:
                known = visited[cand]
                if known >= 0 and law.regions[known].contains(xi, 1e-7):
                    return known
                continue
            out = enum.region(cand)
            if isinstance(out, str):
                log.info("skipping active set %s: %s", cand, out)
                law.skipped += 1
                visited[cand] = -1
                continue
            if len(law.regions) >= max_regions:
                law.partial = True
                return None
            reg, facets = out
            visited[cand] = len(law.regions)
            law.regions.append(reg)
            queue.append((visited[cand], facets))
            return visited[cand]
        return None

    xi0, sol0 = _seed_point(enum, seed)
    if xi0 is None:
        log.warning("mpQP infeasible at every probed parameter")
        return law
    add(sol0, xi0)

    while queue:
        idx, facets = queue.popleft()
        reg = law.regions[idx]
        for row, (fc, fr) in enumerate(facets):
            if reg.boundary[row] or fc is None or fr <= FACET_RADIUS:
                continue
            normal = reg.region_a[row]
            for eps in STEP_SIZES:
                if eps >= fr and eps != STEP_SIZES[0]:
                    break
                xi = fc + eps * normal
                a_all, b_all, starts = law.packed()
                hit = _backend.locate(a_all, b_all, starts, xi, 0.0)
                if hit >= 0:
                    if hit != idx:
                        law.adjacency.append(Adjacency(idx, hit, normal, fc, fr))
                    break
                sol = enum.solve(xi)
                if not sol.ok:
                    break
                found = add(sol, xi)
                if law.partial:
                    break
                if found is not None and found != idx:
                    law.adjacency.append(Adjacency(idx, found, normal, fc, fr))
                    break
            if law.partial:
                queue.clear()
                break
    if law.partial:
        log.warning("region cap %d reached; law is partial", max_regions)
    law._packed = None
    return law


# ---------------------------------------------------------------- evaluation

@dataclass(frozen=True)
class Location:
    region: int
    z: np.ndarray

    @property
    def found(self) -> bool:
        return self.region >= 0


def point_locate(law: PwaLaw, xi) -> Location:
    """First region containing ``xi`` and its affine evaluation; ``region=-1`` on a miss."""
    xi = np.asarray(xi, dtype=float)
    a, b, starts = law.packed()
    idx = _backend.locate(a, b, starts, xi, LOCATE_TOL)
    if idx < 0:
        return Location(-1, None)
    return Location(idx, law.regions[idx].evaluate(xi))


def point_locate_many(law: PwaLaw, xis) -> np.ndarray:
    a, b, starts = law.packed()
    return np.asarray(_backend.locate_many(a, b, starts, np.asarray(xis, dtype=float), LOCATE_TOL))


@dataclass(frozen=True)
class CoverageReport:
    hit_fraction: float
    infeasible_fraction: float
    miss_fraction: float
    samples: int

    def as_dict(self) -> dict:
        return {"hit_fraction": self.hit_fraction, "infeasible_fraction": self.infeasible_fraction,
                "miss_fraction": self.miss_fraction, "samples": self.samples}


def coverage_report(law: PwaLaw, samples: int = 1000, seed: int = 42) -> CoverageReport:
    """Monte Carlo classification of uniform box samples into hit / infeasible / miss.

    Misses are feasible parameters outside every region. The miss volume
    is stored on ``law.unexplored_volume_estimate``.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    box = law.parameter_box
    rng = np.random.default_rng(seed)
    xs = rng.uniform(box[:, 0], box[:, 1], size=(samples, box.shape[0]))
    idx = point_locate_many(law, xs) if law.regions else np.full(samples, -1)
    hit = int(np.sum(idx >= 0))
    infeasible = 0
    misses = np.flatnonzero(idx < 0)
    if misses.size:
        if law.problem is None:
            raise ValueError("law has no problem data to classify misses")
        lower, _ = qpmod.factor_hessian(law.problem.h)
        j = qpmod.inverse_factor(lower)
        p = law.problem
        for i in misses:
            sol = qpmod.solve_factored(j, p.f_map @ xs[i] + p.f_off, p.g, p.b + p.e_mat @ xs[i])
            if sol.status is qpmod.QpStatus.INFEASIBLE:
                infeasible += 1
    miss = samples - hit - infeasible
    volume = float(np.prod(box[:, 1] - box[:, 0]))
    law.unexplored_volume_estimate = volume * miss / samples
    return CoverageReport(hit / samples, infeasible / samples, miss / samples, samples)

"""Exact solver for the joint rider/motorcycle assignment program.

Variables are binary: ``t_r[i]`` selects rider hypothesis ``i`` (a
track/detection pair), ``t_m[j]`` selects motorcycle hypothesis ``j`` and
``e[i, j]`` links them. The program maximizes::

    l1 * sum(t_r * s_r) + l2 * sum(t_m * s_m) + l3 * sum(e * a)

subject to at most one selected hypothesis per track and per detection
(within each class), ``e[i, j] <= t_r[i]``, ``e[i, j] <= t_m[j]``,
``sum_j e[i, j] <= 1`` and ``e[i, j] = 0`` where the link is infeasible.

For a fixed motorcycle selection the best links are chosen per rider
independently, so the rider side collapses to a linear assignment whose
weights carry the best available link bonus. The solver branches on the
motorcycle hypotheses (best-first) and bounds every node by two relaxed
linear assignments: motorcycles over the still-open hypotheses, riders with
the link bonus taken over every motorcycle hypothesis not yet excluded.
Independent connected components are solved separately.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

_EPS = 1e-12


class CapacityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class JointProblem:
    s_r: np.ndarray                 # (nr,)
    s_m: np.ndarray                 # (nm,)
    a: np.ndarray                   # (nr, nm)
    feasible: np.ndarray            # (nr, nm) bool
    r_index: tuple[tuple[int, int], ...]  # (track, detection) per rider hypothesis
    m_index: tuple[tuple[int, int], ...]
    lam: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        nr, nm = len(self.s_r), len(self.s_m)
        if len(self.r_index) != nr or len(self.m_index) != nm:
            raise ValueError("index maps do not match score vectors")
        if np.shape(self.a) != (nr, nm) or np.shape(self.feasible) != (nr, nm):
            raise ValueError("association matrix has the wrong shape")
        if len(set(self.r_index)) != nr or len(set(self.m_index)) != nm:
            raise ValueError("duplicate (track, detection) hypothesis")
        if not np.isfinite(self.s_r).all() or not np.isfinite(self.s_m).all():
            raise ValueError("non-finite hypothesis score")
        if not np.isfinite(np.asarray(self.a)[np.asarray(self.feasible, bool)]).all():
            raise ValueError("non-finite association score on a feasible entry")

    @property
    def n_r(self) -> int:
        return len(self.s_r)

    @property
    def n_m(self) -> int:
        return len(self.s_m)


@dataclass(frozen=True, eq=False)
class JointSolution:
    t_r: np.ndarray
    t_m: np.ndarray
    e: np.ndarray
    objective: float


def make_problem(s_r, s_m, a, feasible=None, r_index=None, m_index=None,
                 lam=(1.0, 1.0, 1.0)) -> JointProblem:
    s_r = np.asarray(s_r, dtype=float).reshape(-1)
    s_m = np.asarray(s_m, dtype=float).reshape(-1)
    a = np.asarray(a, dtype=float).reshape(len(s_r), len(s_m))
    if feasible is None:
        feasible = np.isfinite(a)
    feasible = np.asarray(feasible, dtype=bool).reshape(a.shape)
    if r_index is None:
        r_index = tuple((i, i) for i in range(len(s_r)))
    if m_index is None:
        m_index = tuple((j, j) for j in range(len(s_m)))
    return JointProblem(s_r, s_m, a, feasible, tuple(map(tuple, r_index)),
                        tuple(map(tuple, m_index)), tuple(float(v) for v in lam))


def objective_value(p: JointProblem, t_r, t_m, e) -> float:
    l1, l2, l3 = p.lam
    a = np.where(p.feasible, p.a, 0.0)
    return float(l1 * np.dot(t_r, p.s_r) + l2 * np.dot(t_m, p.s_m) + l3 * np.sum(e * a))


def constraint_violations(p: JointProblem, sol: JointSolution) -> list[str]:
    """Names of violated constraint families (empty when the solution is feasible)."""
    bad = []
    for name, index, t in (("rider", p.r_index, sol.t_r), ("motorcycle", p.m_index, sol.t_m)):
        tracks: dict = {}
        dets: dict = {}
        for (ti, di), v in zip(index, t):
            if v:
                tracks[ti] = tracks.get(ti, 0) + 1
                dets[di] = dets.get(di, 0) + 1
        if any(c > 1 for c in tracks.values()) or any(c > 1 for c in dets.values()):
            bad.append(f"{name} one-to-one")
    e = sol.e.astype(bool)
    if e.size and ((e & ~sol.t_r.astype(bool)[:, None]).any()
                   or (e & ~sol.t_m.astype(bool)[None, :]).any()):
        bad.append("link implies both hypotheses")
    if e.size and (e.sum(axis=1) > 1).any():
        bad.append("one motorcycle per rider")
    if e.size and (e & ~p.feasible).any():
        bad.append("infeasible link")
    return bad


def _max_matching(index, weights, allowed) -> tuple[float, list[int]]:
    """Max-weight (not necessarily perfect) matching over the allowed hypotheses.

    Returns the total weight and the chosen hypothesis indices; hypotheses with
    non-positive weight are never chosen.
    """
    hyp = [h for h in allowed if weights[h] > _EPS]
    if not hyp:
        return 0.0, []
    rows = sorted({index[h][0] for h in hyp})
    cols = sorted({index[h][1] for h in hyp})
    ri = {t: k for k, t in enumerate(rows)}
    ci = {d: k for k, d in enumerate(cols)}
    W = np.zeros((len(rows), len(cols)))
    H = np.full((len(rows), len(cols)), -1, dtype=int)
    for h in hyp:
        r, c = ri[index[h][0]], ci[index[h][1]]
        W[r, c] = weights[h]
        H[r, c] = h
    rr, cc = linear_sum_assignment(W, maximize=True)
    chosen = sorted(int(H[r, c]) for r, c in zip(rr, cc) if H[r, c] >= 0 and W[r, c] > _EPS)
    return float(sum(weights[h] for h in chosen)), chosen


class _Component:
    def __init__(self, p: JointProblem, riders: list[int], motos: list[int]):
        l1, l2, l3 = p.lam
        self.riders = riders
        self.motos = motos
        self.r_index = [p.r_index[i] for i in riders]
        self.m_index = [p.m_index[j] for j in motos]
        self.wr = l1 * p.s_r[riders]
        self.wm = l2 * p.s_m[motos]
        link = np.where(p.feasible, l3 * np.where(p.feasible, p.a, 0.0), -np.inf)
        self.link = link[np.ix_(riders, motos)] if riders and motos else np.zeros((len(riders), len(motos)))
        self.conflicts = []
        for j, (tj, dj) in enumerate(self.m_index):
            self.conflicts.append(frozenset(
                k for k, (tk, dk) in enumerate(self.m_index) if k != j and (tk == tj or dk == dj)))

    def rider_side(self, open_motos) -> tuple[float, list[int], np.ndarray]:
        nr = len(self.riders)
        if open_motos:
            cols = sorted(open_motos)
            sub = self.link[:, cols]
            best = np.max(sub, axis=1)
            bonus = np.maximum(best, 0.0)
        else:
            bonus = np.zeros(nr)
        total, chosen = _max_matching(self.r_index, self.wr + bonus, range(nr))
        return total, chosen, bonus

    def moto_bound(self, open_motos) -> tuple[float, list[int]]:
        return _max_matching(self.m_index, self.wm, open_motos)

    def value(self, chosen_motos) -> float:
        return float(sum(self.wm[j] for j in chosen_motos)) + self.rider_side(chosen_motos)[0]

    def solve(self) -> list[int]:
        nm = len(self.motos)
        all_open = frozenset(range(nm))
        best_val, best_set = self.value(()), ()
        counter = 0
        heap = []

        def push(fixed, open_):
            nonlocal counter, best_val, best_set
            fixed_val = float(sum(self.wm[j] for j in fixed))
            mb, mchoice = self.moto_bound(open_)
            rb = self.rider_side(fixed | open_)[0]
            ub = fixed_val + mb + rb
            # the relaxed motorcycle matching is itself feasible: use it as incumbent
            cand = tuple(sorted(fixed | set(mchoice)))
            cv = self.value(cand)
            if cv > best_val + _EPS:
                best_val, best_set = cv, cand
            if ub > best_val + _EPS and open_:
                heapq.heappush(heap, (-ub, counter, fixed, open_))
                counter += 1

        push(frozenset(), all_open)
        while heap:
            neg_ub, _, fixed, open_ = heapq.heappop(heap)
            if -neg_ub <= best_val + _EPS:
                break
            j = min(open_)
            push(fixed | {j}, open_ - {j} - self.conflicts[j])
            push(fixed, open_ - {j})
        return list(best_set)


def _components(p: JointProblem) -> list[tuple[list[int], list[int]]]:
    n = p.n_r + p.n_m
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def join(x, y):
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[max(rx, ry)] = min(rx, ry)

    for offset, index in ((0, p.r_index), (p.n_r, p.m_index)):
        by_track: dict = {}
        by_det: dict = {}
        for h, (t, d) in enumerate(index):
            if t in by_track:
                join(offset + h, by_track[t])
            else:
                by_track[t] = offset + h
            if d in by_det:
                join(offset + h, by_det[d])
            else:
                by_det[d] = offset + h
    if p.n_r and p.n_m:
        # a link can only matter where its weighted score is positive
        useful = p.feasible & (p.lam[2] * np.where(p.feasible, p.a, 0.0) > _EPS)
        for i, j in zip(*np.nonzero(useful)):
            join(int(i), p.n_r + int(j))

    groups: dict[int, tuple[list[int], list[int]]] = {}
    for x in range(n):
        g = groups.setdefault(find(x), ([], []))
        if x < p.n_r:
            g[0].append(x)
        else:
            g[1].append(x - p.n_r)
    return [groups[k] for k in sorted(groups)]


def solve_joint(p: JointProblem, cap: int = 64) -> JointSolution:
    if p.n_r > cap or p.n_m > cap:
        raise CapacityError(f"{p.n_r} rider / {p.n_m} motorcycle hypotheses exceed cap {cap}")
    t_r = np.zeros(p.n_r, dtype=np.int8)
    t_m = np.zeros(p.n_m, dtype=np.int8)
    e = np.zeros((p.n_r, p.n_m), dtype=np.int8)
    for riders, motos in _components(p):
        comp = _Component(p, riders, motos)
        chosen_m = comp.solve()
        _, chosen_r, _ = comp.rider_side(chosen_m)
        for j in chosen_m:
            t_m[motos[j]] = 1
        for i in chosen_r:
            t_r[riders[i]] = 1
            if chosen_m:
                cols = sorted(chosen_m)
                vals = comp.link[i, cols]
                k = int(np.argmax(vals))
                if vals[k] > _EPS:
                    e[riders[i], motos[cols[k]]] = 1
    return JointSolution(t_r, t_m, e, objective_value(p, t_r, t_m, e))

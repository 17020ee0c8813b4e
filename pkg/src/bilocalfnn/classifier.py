"""Locality robustness of bilocal behaviors.

A classical source is represented by unpacking the outcomes of the party it
feeds: Alice's pair ``(a1, a2)`` (index ``2*a1 + a2``) and/or Carol's pair
``(c1, c2)``.  Three models are tested against a behavior mixed with local
noise of weight ``1 - t``:

``full``   both sources classical: ``Q(a1, a2, b, c1, c2)`` with the Alice and
           Carol pairs independent;
``left``   only the Alice source classical: per-``z`` tables
           ``Q_z(a1, a2, b, c)`` with ``Q_z(a1, a2, c) = Q(a1, a2) Q_z(c)``;
``right``  the mirror image of ``left``.

Two engines decide feasibility.  ``"seesaw"`` alternates between the unpacked
factor and the conditional response, each half-step a linear program that
minimizes the L1 matching residual.  ``"pinned"`` uses that matching fixes the
single-setting marginals of each unpacked factor, so a factor over two bits has
one free coupling parameter; the left/right problems then become a single LP
and the full problem a one-dimensional scan of LPs.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog, minimize_scalar

from .exceptions import InputError, SolverError
from .simulation import OPTIMAL_SEPARABLE, AngleSet, Behavior, werner_feedback_table

logger = logging.getLogger(__name__)

VARIANTS = ("full", "left", "right")
LABELS = ("Classical", "MNN", "FNN", "LeftLocalOnly", "RightLocalOnly")
FEASIBILITY_EPS = 1e-6
MARGIN = 5e-3

# +1 on (0,0) and (1,1), -1 on the mixed pairs: direction of the free coupling
_COUPLING = np.array([1.0, -1.0, -1.0, 1.0])
_PAIRS = list(itertools.product((0, 1), repeat=2))


def _as_table(P) -> np.ndarray:
    return P.table if isinstance(P, Behavior) else np.asarray(P, dtype=float)


def noisy_target(P, t: float) -> np.ndarray:
    """Behavior after local noise of weight ``1 - t`` on each source, as ``[x, z, a, b, c]``."""
    t = float(t)
    if not (0.0 <= t <= 1.0):
        raise InputError(f"noise parameter t must lie in [0, 1], got {t!r}")
    table = _as_table(P)
    pa = table.sum(axis=(3, 4)).mean(axis=1)  # [x, a]
    pc = table.sum(axis=(2, 3)).mean(axis=0)  # [z, c]
    mixed = pa[:, None, :, None, None] + pc[None, :, None, None, :]
    return t * t * table + 0.25 * t * (1 - t) * mixed + 0.125 * (1 - t) ** 2


def _mirror(table: np.ndarray) -> np.ndarray:
    return table.transpose(1, 0, 4, 3, 2)


@dataclass(frozen=True)
class UnpackedDistribution:
    """Witness of a (semi)local model.

    ``full``: ``table[a1, a2, b, c1, c2]``; ``left``: ``table[z, a1, a2, b, c]``;
    ``right``: ``table[x, a, b, c1, c2]``.
    """

    variant: str
    table: np.ndarray

    def marginalize(self) -> np.ndarray:
        """The ``[x, z, a, b, c]`` table this model reproduces."""
        q = self.table
        out = np.zeros((2, 2, 2, 2, 2))
        if self.variant == "full":
            for a1, a2, b, c1, c2 in itertools.product((0, 1), repeat=5):
                av, cv = (a1, a2), (c1, c2)
                for x, z in itertools.product((0, 1), repeat=2):
                    out[x, z, av[x], b, cv[z]] += q[a1, a2, b, c1, c2]
        elif self.variant == "left":
            for z, a1, a2, b, c in itertools.product((0, 1), repeat=5):
                av = (a1, a2)
                for x in (0, 1):
                    out[x, z, av[x], b, c] += q[z, a1, a2, b, c]
        else:
            for x, a, b, c1, c2 in itertools.product((0, 1), repeat=5):
                cv = (c1, c2)
                for z in (0, 1):
                    out[x, z, a, b, cv[z]] += q[x, a, b, c1, c2]
        return out

    def independence_error(self) -> float:
        q = self.table
        if self.variant == "full":
            joint = q.sum(axis=2).reshape(4, 4)
            return float(np.max(np.abs(joint - np.outer(joint.sum(1), joint.sum(0)))))
        if self.variant == "left":
            errs = []
            for z in (0, 1):
                joint = q[z].sum(axis=2).reshape(4, 2)
                errs.append(np.max(np.abs(joint - np.outer(joint.sum(1), joint.sum(0)))))
            return float(max(errs))
        errs = []
        for x in (0, 1):
            joint = q[x].sum(axis=1).reshape(2, 4)
            errs.append(np.max(np.abs(joint - np.outer(joint.sum(1), joint.sum(0)))))
        return float(max(errs))


@dataclass
class FeasibilityResult:
    feasible: bool
    residual: float
    witness: UnpackedDistribution | None
    method: str
    iterations: int = 0
    factor: np.ndarray | None = None  # Alice-side factor, reusable as a warm start


def _solve_l1(A_eq: np.ndarray, b_eq: np.ndarray, n_match: int, bounds, n_vars: int):
    """min sum |A_eq[:n_match] v - b_eq[:n_match]| subject to the remaining rows
    holding exactly and ``bounds`` on ``v``."""
    m = A_eq.shape[0]
    slack = np.zeros((m, 2 * n_match))
    slack[:n_match, :n_match] = np.eye(n_match)
    slack[:n_match, n_match:] = -np.eye(n_match)
    A = np.hstack([A_eq, slack])
    c = np.concatenate([np.zeros(n_vars), np.ones(2 * n_match)])
    res = linprog(c, A_eq=A, b_eq=b_eq, bounds=list(bounds) + [(0, None)] * (2 * n_match),
                  method="highs")
    if res.status != 0:
        raise SolverError(f"linear program failed: {res.message}")
    return res.x[:n_vars], float(res.fun)


# ---------------------------------------------------------------------------
# see-saw engine

@dataclass(frozen=True)
class _Structure:
    incidence: np.ndarray  # [32 equations, 4 alice pairs, 8 responses]
    groups: np.ndarray  # [8 responses] -> index of the shared marginal r
    n_shared: int
    shared_blocks: tuple  # index sets of r that each sum to one
    ns_pairs: tuple  # (k, k') response pairs whose sums over c must agree


def _full_structure() -> _Structure:
    inc = np.zeros((32, 4, 8))
    for x, z, a, b, c in itertools.product((0, 1), repeat=5):
        e = x * 16 + z * 8 + a * 4 + b * 2 + c
        for i, av in enumerate(_PAIRS):
            if av[x] != a:
                continue
            for l, cv in enumerate(_PAIRS):
                if cv[z] == c:
                    inc[e, i, b * 4 + l] = 1
    groups = np.array([k % 4 for k in range(8)])  # response k = (b, c-pair)
    return _Structure(inc, groups, 4, (tuple(range(4)),), ())


def _left_structure(ns_central: bool) -> _Structure:
    inc = np.zeros((32, 4, 8))
    for x, z, a, b, c in itertools.product((0, 1), repeat=5):
        e = x * 16 + z * 8 + a * 4 + b * 2 + c
        for i, av in enumerate(_PAIRS):
            if av[x] == a:
                inc[e, i, z * 4 + b * 2 + c] = 1
    # response k = (z, b, c); shared marginal index (z, c)
    groups = np.array([(k // 4) * 2 + (k % 2) for k in range(8)])
    ns = ()
    if ns_central:
        ns = tuple(((0 * 4 + b * 2 + 0, 0 * 4 + b * 2 + 1), (1 * 4 + b * 2 + 0, 1 * 4 + b * 2 + 1))
                   for b in (0, 1))
    return _Structure(inc, groups, 4, ((0, 1), (2, 3)), ns)


def _independence_rows(st: _Structure, n_w: int, offset_r: int, n_total: int):
    """Rows for sum_b w[i, k] = r[group(k)] per alice pair i, plus normalization
    of the shared marginal and no-signaling of the central outcome."""
    rows, rhs = [], []
    for i in range(4):
        for g in range(st.n_shared):
            row = np.zeros(n_total)
            for k in range(8):
                if st.groups[k] == g:
                    row[i * 8 + k] = 1
            row[offset_r + g] = -1
            rows.append(row)
            rhs.append(0.0)
    for block in st.shared_blocks:
        row = np.zeros(n_total)
        row[[offset_r + g for g in block]] = 1
        rows.append(row)
        rhs.append(1.0)
    for i in range(4):
        for first, second in st.ns_pairs:
            row = np.zeros(n_total)
            row[[i * 8 + k for k in first]] = 1
            row[[i * 8 + k for k in second]] -= 1
            rows.append(row)
            rhs.append(0.0)
    return rows, rhs


def _w_step(st: _Structure, q: np.ndarray, target: np.ndarray):
    n_w = 32
    n = n_w + st.n_shared
    A_match = np.zeros((32, n))
    A_match[:, :n_w] = (st.incidence * q[None, :, None]).reshape(32, 32)
    rows, rhs = _independence_rows(st, n_w, n_w, n)
    A = np.vstack([A_match] + rows)
    b = np.concatenate([target, rhs])
    v, res = _solve_l1(A, b, 32, [(0, None)] * n, n)
    return v[:n_w].reshape(4, 8), res


def _q_step(st: _Structure, w: np.ndarray, target: np.ndarray):
    A_match = np.einsum("eik,ik->ei", st.incidence, w)
    A = np.vstack([A_match, np.ones((1, 4))])
    b = np.concatenate([target, [1.0]])
    v, res = _solve_l1(A, b, 32, [(0, None)] * 4, 4)
    return v, res


def _factor_seeds(target: np.ndarray, rng: np.random.Generator, n_random: int,
                  n_coupling: int = 9) -> list[np.ndarray]:
    """Deterministic Alice factors, the product of the target marginals, a sweep
    of marginal-consistent couplings, then random points of the simplex."""
    pa = target.sum(axis=(3, 4)).mean(axis=1)  # [x, a]
    seeds = [np.eye(4)[i] for i in range(4)]
    base = np.array([0.0, pa[0, 0], pa[1, 0], 1 - pa[0, 0] - pa[1, 0]])
    lo = max(0.0, pa[0, 0] + pa[1, 0] - 1)
    hi = min(pa[0, 0], pa[1, 0])
    for s in [pa[0, 0] * pa[1, 0], *np.linspace(lo, hi, n_coupling)]:
        seeds.append(np.clip(base + _COUPLING * s, 0, None))
    seeds.extend(rng.dirichlet(np.ones(4)) for _ in range(n_random))
    return [s / s.sum() for s in seeds]


def _seesaw_unpack(st_variant: str, w: np.ndarray, q: np.ndarray) -> np.ndarray:
    joint = q[:, None] * w  # [pair, k]
    if st_variant == "full":
        out = np.zeros((2, 2, 2, 2, 2))
        for i, (a1, a2) in enumerate(_PAIRS):
            for k in range(8):
                b, l = divmod(k, 4)
                c1, c2 = _PAIRS[l]
                out[a1, a2, b, c1, c2] = joint[i, k]
        return out
    out = np.zeros((2, 2, 2, 2, 2))
    for i, (a1, a2) in enumerate(_PAIRS):
        for k in range(8):
            z, rest = divmod(k, 4)
            b, c = divmod(rest, 2)
            out[z, a1, a2, b, c] = joint[i, k]
    return out


def _seesaw(target: np.ndarray, structure: _Structure, variant_kind: str, eps: float,
            max_rounds: int, seeds: Sequence[np.ndarray]):
    best = (np.inf, None, None, 0)
    total_iter = 0
    for q0 in seeds:
        q = np.asarray(q0, dtype=float)
        prev = np.inf
        for it in range(max_rounds):
            w, res = _w_step(structure, q, target)
            total_iter += 1
            if res < eps:
                break
            q, res = _q_step(structure, w, target)
            total_iter += 1
            if res < eps or prev - res < 1e-10:
                break
            prev = res
        if res < best[0]:
            best = (res, w, q, total_iter)
        if best[0] < eps:
            break
    res, w, q, _ = best
    return res, _seesaw_unpack(variant_kind, w, q), q, total_iter


def seesaw_feasibility(P, t: float, variant: str, *, eps: float = FEASIBILITY_EPS,
                       seed: int = 0, n_random: int = 6, max_rounds: int = 60,
                       ns_central: bool = True, warm_start: np.ndarray | None = None
                       ) -> FeasibilityResult:
    """Alternating-LP feasibility test of one locality model."""
    _check_variant(variant)
    table = noisy_target(P, t)
    if variant == "right":
        table = _mirror(table)
    target = table.reshape(32)
    st = _full_structure() if variant == "full" else _left_structure(ns_central)
    rng = np.random.default_rng(seed)
    seeds = _factor_seeds(table, rng, n_random)
    if warm_start is not None:
        seeds.insert(0, np.asarray(warm_start, dtype=float))
    res, unpacked, q, iters = _seesaw(target, st, "full" if variant == "full" else "left",
                                      eps, max_rounds, seeds)
    if variant == "right":
        unpacked = unpacked.transpose(0, 4, 3, 1, 2)  # mirrored [x, c1, c2, b, a] -> [x, a, b, c1, c2]
    return FeasibilityResult(res < eps, res, UnpackedDistribution(variant, unpacked),
                             "seesaw", iters, q)


# ---------------------------------------------------------------------------
# pinned-marginal engine

def _pair_family(m1: float, m2: float):
    """Distributions over two bits with P(first=0)=m1, P(second=0)=m2:
    ``base + s * _COUPLING`` for ``s`` in ``[lo, hi]``."""
    base = np.array([0.0, m1, m2, 1 - m1 - m2])
    return base, max(0.0, m1 + m2 - 1), min(m1, m2)


def _match_rows_full() -> np.ndarray:
    rows = np.zeros((32, 32))
    for x, z, a, b, c in itertools.product((0, 1), repeat=5):
        e = x * 16 + z * 8 + a * 4 + b * 2 + c
        for ao, co in itertools.product((0, 1), repeat=2):
            a1, a2 = (a, ao) if x == 0 else (ao, a)
            c1, c2 = (c, co) if z == 0 else (co, c)
            rows[e, a1 * 16 + a2 * 8 + b * 4 + c1 * 2 + c2] = 1
    return rows


def _match_rows_left() -> np.ndarray:
    rows = np.zeros((32, 32))
    for x, z, a, b, c in itertools.product((0, 1), repeat=5):
        e = x * 16 + z * 8 + a * 4 + b * 2 + c
        for ao in (0, 1):
            a1, a2 = (a, ao) if x == 0 else (ao, a)
            rows[e, z * 16 + a1 * 8 + a2 * 4 + b * 2 + c] = 1
    return rows


_MATCH_FULL = _match_rows_full()
_MATCH_LEFT = _match_rows_left()


def _pinned_left(table: np.ndarray, ns_central: bool):
    """Single LP over ``Q_z(a1, a2, b, c)`` and the Alice coupling ``s``."""
    pa = table.sum(axis=(3, 4)).mean(axis=1)
    pc = table.sum(axis=(2, 3)).mean(axis=0)
    base, lo, hi = _pair_family(pa[0, 0], pa[1, 0])
    n = 33
    A = [np.hstack([_MATCH_LEFT, np.zeros((32, 1))])]
    b = [table.reshape(32)]
    for z, a1, a2, c in itertools.product((0, 1), repeat=4):
        i = 2 * a1 + a2
        row = np.zeros(n)
        for bb in (0, 1):
            row[z * 16 + a1 * 8 + a2 * 4 + bb * 2 + c] = 1
        row[32] = -_COUPLING[i] * pc[z, c]
        A.append(row[None])
        b.append([base[i] * pc[z, c]])
    if ns_central:
        for a1, a2, bb in itertools.product((0, 1), repeat=3):
            row = np.zeros(n)
            for c in (0, 1):
                row[0 * 16 + a1 * 8 + a2 * 4 + bb * 2 + c] += 1
                row[1 * 16 + a1 * 8 + a2 * 4 + bb * 2 + c] -= 1
            A.append(row[None])
            b.append([0.0])
    bounds = [(0, None)] * 32 + [(lo, hi)]
    v, res = _solve_l1(np.vstack(A), np.concatenate(b), 32, bounds, n)
    return res, v[:32].reshape(2, 2, 2, 2, 2), base + _COUPLING * v[32]


def _pinned_full_at(table: np.ndarray, s: float):
    """LP over ``Q(a1, a2, b, c1, c2)`` and the Carol coupling for a fixed Alice coupling."""
    pa = table.sum(axis=(3, 4)).mean(axis=1)
    pc = table.sum(axis=(2, 3)).mean(axis=0)
    qa_base, _, _ = _pair_family(pa[0, 0], pa[1, 0])
    qc_base, lo_c, hi_c = _pair_family(pc[0, 0], pc[1, 0])
    qa = np.clip(qa_base + _COUPLING * s, 0.0, None)
    n = 33
    A = [np.hstack([_MATCH_FULL, np.zeros((32, 1))])]
    b = [table.reshape(32)]
    for i, l in itertools.product(range(4), repeat=2):
        a1, a2 = _PAIRS[i]
        c1, c2 = _PAIRS[l]
        row = np.zeros(n)
        for bb in (0, 1):
            row[a1 * 16 + a2 * 8 + bb * 4 + c1 * 2 + c2] = 1
        row[32] = -qa[i] * _COUPLING[l]
        A.append(row[None])
        b.append([qa[i] * qc_base[l]])
    bounds = [(0, None)] * 32 + [(lo_c, hi_c)]
    v, res = _solve_l1(np.vstack(A), np.concatenate(b), 32, bounds, n)
    return res, v[:32].reshape(2, 2, 2, 2, 2), qa


def _pinned_full(table: np.ndarray, eps: float, grid: int):
    pa = table.sum(axis=(3, 4)).mean(axis=1)
    _, lo, hi = _pair_family(pa[0, 0], pa[1, 0])
    if hi - lo < 1e-12:
        return _pinned_full_at(table, lo)
    ss = np.linspace(lo, hi, grid)
    vals = []
    best = None
    for s in ss:
        out = _pinned_full_at(table, s)
        vals.append(out[0])
        if best is None or out[0] < best[0]:
            best = out
        if out[0] < eps:
            return out
    # polish around the best local minima of the scan
    vals = np.array(vals)
    order = np.argsort(vals)[:3]
    step = ss[1] - ss[0]
    for k in order:
        a, b_ = max(lo, ss[k] - step), min(hi, ss[k] + step)
        r = minimize_scalar(lambda s: _pinned_full_at(table, s)[0], bounds=(a, b_),
                            method="bounded", options={"xatol": 1e-9})
        out = _pinned_full_at(table, r.x)
        if out[0] < best[0]:
            best = out
        if best[0] < eps:
            break
    return best


def pinned_feasibility(P, t: float, variant: str, *, eps: float = FEASIBILITY_EPS,
                       ns_central: bool = True, grid: int = 41) -> FeasibilityResult:
    """Feasibility with the unpacked factors' marginals fixed by the target."""
    _check_variant(variant)
    table = noisy_target(P, t)
    if variant == "full":
        res, q, fa = _pinned_full(table, eps, grid)
        return FeasibilityResult(res < eps, res, UnpackedDistribution("full", q), "pinned", 0, fa)
    if variant == "right":
        table = _mirror(table)
    res, q, fa = _pinned_left(table, ns_central)
    if variant == "right":
        q = q.transpose(0, 4, 3, 1, 2)
    return FeasibilityResult(res < eps, res, UnpackedDistribution(variant, q), "pinned", 1, fa)


def _check_variant(variant: str) -> None:
    if variant not in VARIANTS:
        raise InputError(f"variant must be one of {VARIANTS}, got {variant!r}")


def feasibility(P, t: float, variant: str, *, method: str = "seesaw",
                eps: float = FEASIBILITY_EPS, **kwargs) -> FeasibilityResult:
    """Decide whether ``variant``'s model reproduces ``P`` mixed with noise ``1 - t``."""
    if method == "seesaw":
        return seesaw_feasibility(P, t, variant, eps=eps, **kwargs)
    if method == "pinned":
        return pinned_feasibility(P, t, variant, eps=eps, **kwargs)
    raise InputError(f"unknown feasibility method {method!r}")


# ---------------------------------------------------------------------------
# robustness and classification

@dataclass(frozen=True)
class Robustness:
    """Bisection bracket: ``t`` is certified feasible, ``upper`` infeasible (or 1)."""

    t: float
    upper: float
    residual: float


def robustness_bracket(P, variant: str, *, tol: float = 1e-3, method: str = "pinned",
                       eps: float = FEASIBILITY_EPS, **kwargs) -> Robustness:
    _check_variant(variant)
    first = feasibility(P, 1.0, variant, method=method, eps=eps, **kwargs)
    if first.feasible:
        return Robustness(1.0, 1.0, first.residual)
    lo, hi = 0.0, 1.0
    residual = 0.0
    warm = first.factor
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if method == "seesaw":
            kwargs["warm_start"] = warm
        r = feasibility(P, mid, variant, method=method, eps=eps, **kwargs)
        if r.feasible:
            lo, residual = mid, r.residual
        else:
            hi = mid
        warm = r.factor
    return Robustness(lo, hi, residual)


def robustness(P, variant: str, **kwargs) -> float:
    """Largest ``t`` (within the bisection tolerance) at which the model is feasible."""
    return robustness_bracket(P, variant, **kwargs).t


@dataclass
class RobustnessResult:
    t_full: float
    t_left: float
    t_right: float
    label: str
    residuals: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"t_full": self.t_full, "t_left": self.t_left, "t_right": self.t_right,
                "label": self.label, "residuals": dict(self.residuals)}


def label_from(t_full: float, t_left: float, t_right: float, delta: float = MARGIN) -> str:
    cut = 1.0 - delta
    if t_full >= cut:
        return "Classical"
    left, right = t_left >= cut, t_right >= cut
    if left and right:
        return "MNN"
    if left:
        return "LeftLocalOnly"
    if right:
        return "RightLocalOnly"
    return "FNN"


def classify(P, *, delta: float = MARGIN, tol: float = 1e-3, method: str = "pinned",
             **kwargs) -> RobustnessResult:
    """Robustness under the three models and the resulting nonclassicality label."""
    br = {v: robustness_bracket(P, v, tol=tol, method=method, **kwargs) for v in VARIANTS}
    return RobustnessResult(
        br["full"].t, br["left"].t, br["right"].t,
        label_from(br["full"].t, br["left"].t, br["right"].t, delta),
        {v: br[v].residual for v in VARIANTS},
    )


@dataclass(frozen=True)
class RegionPoint:
    p: float
    alpha: float
    result: RobustnessResult

    def row(self) -> tuple:
        r = self.result
        return (self.p, self.alpha, r.t_full, r.t_left, r.t_right, r.label)


def _region_job(args):
    p, alpha, alpha0, nu, angles, kwargs = args
    eta = 1.0 - nu
    table = werner_feedback_table(angles, eta, eta, p, alpha0, alpha)
    return RegionPoint(p, alpha, classify(Behavior(table), **kwargs))


def region_map(p_grid: Iterable[float], alpha_grid: Iterable[float], *, alpha0: float = 1.0,
               nu: float = 0.0, angles: AngleSet = OPTIMAL_SEPARABLE, workers: int = 1,
               **kwargs) -> list[RegionPoint]:
    """Classify the noisy feedback strategy on a ``p`` x ``alpha1`` grid.

    Rows come back ordered by ``(p, alpha)`` grid index whatever ``workers`` is.
    """
    p_grid = [float(v) for v in p_grid]
    alpha_grid = [float(v) for v in alpha_grid]
    for v in p_grid + alpha_grid + [alpha0, nu]:
        if not (0.0 <= v <= 1.0):
            raise InputError(f"grid values must lie in [0, 1], got {v!r}")
    ang = angles.as_array()
    jobs = [(p, a, alpha0, nu, ang, kwargs) for p in p_grid for a in alpha_grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_region_job, jobs))
    return [_region_job(j) for j in jobs]

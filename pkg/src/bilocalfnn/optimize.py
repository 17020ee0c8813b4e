"""Maximization of the simultaneous witness violation.

Every restart draws from its own stream ``default_rng([seed, index])`` and is
polished independently, so a run with more restarts evaluates a superset of the
candidates of a shorter run and its best value can only go up.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize, minimize_scalar

from .exceptions import InputError
from .qstate import Povm, werner
from .simulation import (
    OPTIMAL_SEPARABLE,
    AngleSet,
    CentralConfig,
    Strategy,
    explicit_central_table,
    werner_feedback_table,
)
from .witness import fnn_table

logger = logging.getLogger(__name__)

OBJECTIVES = ("min_of_pair", "fixed_weights")
SWEEP_MODES = ("separable_fixed_angles", "separable_reopt", "entangled")


@dataclass(frozen=True)
class OptimizationConfig:
    objective: str = "min_of_pair"
    restarts: int = 64
    seed: int = 0
    max_iterations: int = 4000
    convergence_tol: float = 1e-10
    simplex_scale: float = 0.3
    weights: tuple[float, float] = (0.5, 0.5)
    polish_rounds: int = 2
    workers: int = 1

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise InputError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if int(self.restarts) < 1:
            raise InputError("restarts must be at least 1")
        if not self.convergence_tol > 0:
            raise InputError("convergence_tol must be positive")
        if self.max_iterations < 1:
            raise InputError("max_iterations must be at least 1")

    def score(self, fnn1: float, fnn2: float) -> float:
        if self.objective == "min_of_pair":
            return min(fnn1, fnn2)
        w1, w2 = self.weights
        return w1 * fnn1 + w2 * fnn2


@dataclass
class OptimizationResult:
    best_value: float
    best_angles: AngleSet | None
    trace: list[float]
    evaluations: int
    nu: float = 0.0
    fnn: tuple[float, float] = (0.0, 0.0)
    best_povm: np.ndarray | None = None  # central element for outcome 0 (entangled mode)
    best_outer: np.ndarray | None = None  # (a1, a2, c1, c2) in the entangled mode
    best_restart: int = 0
    rounds: list[list[float]] = field(default_factory=list)  # see-saw objective per restart


def _check_nu(nu: float) -> float:
    nu = float(nu)
    if not (0.0 <= nu <= 1.0):
        raise InputError(f"nu must lie in [0, 1], got {nu!r}")
    return nu


def _nelder_mead(fun: Callable, x0: np.ndarray, cfg: OptimizationConfig, scale: float):
    """Maximize ``fun`` by restarted Nelder-Mead; returns (x, value, evaluations)."""
    x = np.asarray(x0, dtype=float)
    n = x.size
    evals = 0
    best = fun(x)
    for _ in range(1 + cfg.polish_rounds):
        simplex = np.vstack([x] + [x + scale * np.eye(n)[i] for i in range(n)])
        res = minimize(lambda v: -fun(v), x, method="Nelder-Mead",
                       options=dict(maxiter=cfg.max_iterations, xatol=1e-9,
                                    fatol=cfg.convergence_tol, adaptive=True,
                                    initial_simplex=simplex))
        evals += res.nfev
        gain = -res.fun - best
        if gain > 0:
            x, best = res.x, -res.fun
        if gain < cfg.convergence_tol:
            break
        scale *= 0.5
    return x, best, evals


# ---------------------------------------------------------------------------
# separable (feedback) strategies

def separable_value(angles, nu: float, cfg: OptimizationConfig | None = None) -> float:
    """Objective of the feedback strategy with ``p = 1/2`` and no central noise."""
    cfg = cfg or OptimizationConfig()
    ang = angles.as_array() if isinstance(angles, AngleSet) else np.asarray(angles, float)
    eta = 1.0 - nu
    return cfg.score(*fnn_table(werner_feedback_table(ang, eta, eta)))


def _separable_restart(args):
    nu, cfg, start = args
    fun = lambda v: separable_value(v, nu, cfg)  # noqa: E731
    x, val, evals = _nelder_mead(fun, start, cfg, cfg.simplex_scale)
    return np.mod(x, np.pi), val, evals


def _separable_starts(cfg: OptimizationConfig, warm: Sequence[np.ndarray]) -> list[np.ndarray]:
    starts = [np.asarray(w, dtype=float) for w in warm]
    starts += [np.random.default_rng([cfg.seed, k]).uniform(0.0, np.pi, 10)
               for k in range(cfg.restarts)]
    return starts


def _run(jobs, worker, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(worker, jobs))
    return [worker(j) for j in jobs]


def optimize_separable(nu: float = 0.0, cfg: OptimizationConfig | None = None, *,
                       warm_starts: Sequence = ()) -> OptimizationResult:
    """Multi-start search over the ten projector angles with Werner sources."""
    nu = _check_nu(nu)
    cfg = cfg or OptimizationConfig()
    warm = [w.as_array() if isinstance(w, AngleSet) else w for w in warm_starts]
    jobs = [(nu, cfg, s) for s in _separable_starts(cfg, warm)]
    out = _run(jobs, _separable_restart, cfg.workers)
    trace = [float(v) for _, v, _ in out]
    k = int(np.argmax(trace))  # first index wins ties
    x = out[k][0]
    eta = 1.0 - nu
    fnn = fnn_table(werner_feedback_table(x, eta, eta))
    return OptimizationResult(
        best_value=cfg.score(*fnn), best_angles=AngleSet.from_array(x), trace=trace,
        evaluations=int(sum(e for _, _, e in out)), nu=nu, fnn=fnn, best_restart=k,
    )


def noise_threshold(cfg: OptimizationConfig | None = None, *, lower: float = 0.0,
                    upper: float = 0.125, width: float = 1e-4) -> tuple[float, float]:
    """Bracket ``(lo, hi)`` of the critical white-noise level where the optimized
    objective stops exceeding 1; each probe is warm-started from the previous optimum."""
    cfg = cfg or OptimizationConfig(restarts=4)
    best = optimize_separable(lower, cfg, warm_starts=[OPTIMAL_SEPARABLE])
    if best.best_value <= 1.0:
        raise InputError(f"no violation at the lower end nu={lower}")
    warm = [best.best_angles]
    lo, hi = lower, upper
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        r = optimize_separable(mid, cfg, warm_starts=warm)
        logger.info("threshold probe nu=%.6f value=%.9f", mid, r.best_value)
        if r.best_value > 1.0:
            lo = mid
            warm = [r.best_angles] + warm[:1]
        else:
            hi = mid
            warm = warm + [r.best_angles]
            warm = warm[:2]
    return lo, hi


# ---------------------------------------------------------------------------
# entangled central measurement

_TRIU = np.triu_indices(4, 1)


def central_element(params: np.ndarray) -> np.ndarray:
    """``U diag(d) U^dagger`` with ``U = exp(iH)``; ``params`` holds 16 entries of the
    Hermitian generator ``H`` followed by 4 eigenvalues (clipped into [0, 1])."""
    params = np.asarray(params, dtype=float)
    h = np.zeros((4, 4), dtype=complex)
    h[np.diag_indices(4)] = params[:4]
    h[_TRIU] = params[4:10] + 1j * params[10:16]
    h = h + np.triu(h, 1).conj().T
    u = expm(1j * h)
    d = np.clip(params[16:20], 0.0, 1.0)
    return (u * d) @ u.conj().T


def entangled_value(outer: np.ndarray, central: np.ndarray, nu: float,
                    cfg: OptimizationConfig | None = None) -> float:
    """Objective for outer angles ``(a1, a2, c1, c2)`` and central element ``central``."""
    cfg = cfg or OptimizationConfig()
    rho = werner(nu).matrix
    return cfg.score(*fnn_table(explicit_central_table(outer, rho, rho, central)))


def _hermitian_basis() -> list[np.ndarray]:
    basis = []
    for i in range(4):
        e = np.zeros((4, 4), dtype=complex)
        e[i, i] = 1
        basis.append(e)
    for i, j in zip(*_TRIU):
        e = np.zeros((4, 4), dtype=complex)
        e[i, j] = e[j, i] = 1 / np.sqrt(2)
        basis.append(e)
        f = np.zeros((4, 4), dtype=complex)
        f[i, j], f[j, i] = 1j / np.sqrt(2), -1j / np.sqrt(2)
        basis.append(f)
    return basis


_BASIS = _hermitian_basis()


def witness_affine_map(outer: np.ndarray, rho1: np.ndarray, rho2: np.ndarray):
    """``(f0, K)`` with ``FNN_i(P) = f0[i] + Tr(P K[i])`` for a central element ``P``.

    Outer marginals do not depend on the central measurement, so both witnesses
    are affine in ``P``; the map is read off on an orthonormal Hermitian basis.
    """
    zero = np.asarray(fnn_table(explicit_central_table(outer, rho1, rho2, np.zeros((4, 4)))))
    K = np.zeros((2, 4, 4), dtype=complex)
    for e in _BASIS:
        coeff = np.asarray(fnn_table(explicit_central_table(outer, rho1, rho2, e))) - zero
        K += coeff[:, None, None] * e
    return zero, K


def _positive_projector(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    v = v[:, w > 0]
    return v @ v.conj().T


def best_central_element(outer: np.ndarray, rho1: np.ndarray, rho2: np.ndarray,
                         cfg: OptimizationConfig) -> tuple[np.ndarray, float]:
    """Exact maximizer of the objective over ``0 <= P <= I`` for fixed outer angles.

    Weighted objectives reduce to the positive part of one operator.  For the
    minimum of the pair, the dual ``min_l max_P [l FNN_1 + (1 - l) FNN_2]`` is a
    convex scan over ``l``; the primal is recovered by mixing the positive
    projectors on either side of the optimal ``l`` so the two witnesses balance.
    """
    f0, K = witness_affine_map(outer, rho1, rho2)

    def values(P):
        return f0 + np.einsum("ij,kji->k", P, K).real

    if cfg.objective == "fixed_weights":
        w1, w2 = cfg.weights
        P = _positive_projector(w1 * K[0] + w2 * K[1])
        return P, cfg.score(*values(P))

    def dual(lam):
        m = lam * K[0] + (1 - lam) * K[1]
        return lam * f0[0] + (1 - lam) * f0[1] + np.clip(np.linalg.eigvalsh(m), 0, None).sum()

    lam = minimize_scalar(dual, bounds=(0.0, 1.0), method="bounded",
                          options={"xatol": 1e-12}).x
    cands = [_positive_projector((lam + d) * K[0] + (1 - lam - d) * K[1])
             for d in (0.0, 1e-7, -1e-7, 1e-5, -1e-5)]
    best_P, best_v = cands[0], min(values(cands[0]))
    for A in cands:
        for B in cands:
            va, vb = values(A), values(B)
            den = (va[0] - va[1]) - (vb[0] - vb[1])
            mus = [0.0, 1.0] + ([-(vb[0] - vb[1]) / den] if abs(den) > 1e-15 else [])
            for mu in mus:
                if 0.0 <= mu <= 1.0:
                    P = mu * A + (1 - mu) * B
                    v = min(values(P))
                    if v > best_v:
                        best_P, best_v = P, v
    return best_P, float(best_v)


def _entangled_restart(args):
    nu, cfg, k, max_rounds = args
    rng = np.random.default_rng([cfg.seed, k])
    rho = werner(nu).matrix
    outer = rng.uniform(0.0, np.pi, 4)
    central = central_element(np.concatenate([rng.normal(size=16), rng.uniform(0.0, 1.0, 4)]))

    def value(o, c):
        return cfg.score(*fnn_table(explicit_central_table(o, rho, rho, c)))

    current = value(outer, central)
    rounds = [current]
    evals = 1
    for _ in range(max_rounds):
        P, v = best_central_element(outer, rho, rho, cfg)
        evals += 1 + len(_BASIS)
        if v >= current:
            central, current = P, v
        o, v, e = _nelder_mead(lambda o: value(o, central), outer, cfg, cfg.simplex_scale)
        evals += e
        if v >= current:
            outer, current = o, v
        gain = current - rounds[-1]
        rounds.append(current)
        if gain < cfg.convergence_tol:
            break
    return outer, central, current, evals, rounds


def optimize_entangled(nu: float = 0.0, cfg: OptimizationConfig | None = None, *,
                       max_rounds: int = 200) -> OptimizationResult:
    """See-saw between the four outer angles (Nelder-Mead) and a general binary
    central POVM (exact step); the initial POVM is a random point of the chart
    :func:`central_element`."""
    nu = _check_nu(nu)
    cfg = cfg or OptimizationConfig(restarts=8)
    jobs = [(nu, cfg, k, max_rounds) for k in range(cfg.restarts)]
    out = _run(jobs, _entangled_restart, cfg.workers)
    trace = [float(r[2]) for r in out]
    k = int(np.argmax(trace))
    outer, central = out[k][0], out[k][1]
    rho = werner(nu).matrix
    fnn = fnn_table(explicit_central_table(outer, rho, rho, central))
    return OptimizationResult(
        best_value=cfg.score(*fnn), best_angles=None, trace=trace,
        evaluations=int(sum(r[3] for r in out)), nu=nu, fnn=fnn,
        best_povm=central, best_outer=np.asarray(outer),
        best_restart=k, rounds=[list(r[4]) for r in out],
    )


def entangled_strategy(result: OptimizationResult, nu: float = 0.0) -> Strategy:
    """Strategy with the optimized outer angles and central element on Werner sources.

    The central angles of the returned :class:`AngleSet` are unused and set to 0.
    """
    if result.best_povm is None or result.best_outer is None:
        raise InputError("result does not come from the entangled optimizer")
    o = result.best_outer
    angles = AngleSet(o[0], o[1], 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, o[2], o[3])
    p0 = 0.5 * (result.best_povm + result.best_povm.conj().T)
    rho = werner(_check_nu(nu))
    return Strategy(rho, rho, angles, CentralConfig.explicit(Povm((p0, np.eye(4) - p0), (0, 1))))


# ---------------------------------------------------------------------------
# curves

@dataclass(frozen=True)
class SweepRow:
    nu: float
    fnn1: float
    fnn2: float
    mode: str
    seed: int


def sweep_fnn(nu_grid: Iterable[float], mode: str = "separable_reopt",
              cfg: OptimizationConfig | None = None, *,
              angles: AngleSet = OPTIMAL_SEPARABLE) -> list[SweepRow]:
    """Witness values along a white-noise grid.

    ``separable_fixed_angles`` keeps ``angles`` throughout; ``separable_reopt``
    re-optimizes at each point with the previous optimum as a warm start.
    """
    if mode not in SWEEP_MODES:
        raise InputError(f"mode must be one of {SWEEP_MODES}, got {mode!r}")
    grid = [_check_nu(v) for v in nu_grid]
    cfg = cfg or OptimizationConfig(restarts=4)
    rows = []
    warm = [angles]
    for nu in grid:
        if mode == "separable_fixed_angles":
            eta = 1.0 - nu
            f1, f2 = fnn_table(werner_feedback_table(angles.as_array(), eta, eta))
        elif mode == "separable_reopt":
            r = optimize_separable(nu, cfg, warm_starts=warm)
            warm = [r.best_angles, angles]
            f1, f2 = r.fnn
        else:
            f1, f2 = optimize_entangled(nu, cfg).fnn
        rows.append(SweepRow(nu, float(f1), float(f2), mode, cfg.seed))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["nu", "fnn1", "fnn2", "mode", "seed"])
    for r in rows:
        w.writerow([repr(r.nu), repr(r.fnn1), repr(r.fnn2), r.mode, r.seed])
    return buf.getvalue()


def with_restarts(cfg: OptimizationConfig, restarts: int) -> OptimizationConfig:
    return replace(cfg, restarts=restarts)

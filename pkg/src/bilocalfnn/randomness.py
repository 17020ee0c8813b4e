"""Explicit eavesdropper attacks on the randomness of the outer outcomes.

Each source is purified into an ancilla held by the adversary (``E0`` for the
left source, ``E1`` for the right one).  Two adversaries are modelled:

``SE``  a single adversary holding ``E0 E1`` jointly and a classical copy of the
        central outcome ``b``; its measurement may depend on ``b``.
``DE``  two adversaries measuring ``E0`` and ``E1`` separately.

Every measurement evaluated here is a valid attack, so the reported guessing
probabilities are lower bounds on the optimum and the min-entropies upper bounds.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize

from .exceptions import InputError
from .optimize import OptimizationConfig
from .qstate import I2, Povm, outcome_projector, purification_vector, tensor, werner
from .simulation import EavesdropperTable, Strategy

logger = logging.getLogger(__name__)

SCENARIOS = ("SE", "DE")
TARGETS = ("AC", "ABC")
WERNER_TOL = 1e-9


def _werner_noise(rho: np.ndarray) -> float:
    """``nu`` such that ``rho = werner(nu)``; raises when ``rho`` is not a Werner state."""
    overlap = float(np.real(np.trace(rho @ werner(0.0).matrix)))
    nu = 4.0 * (1.0 - overlap) / 3.0
    if not (-WERNER_TOL <= nu <= 1 + WERNER_TOL) or np.max(np.abs(werner(min(max(nu, 0), 1)).matrix - rho)) > 1e-8:
        raise InputError("attack models support Werner sources only")
    return min(max(nu, 0.0), 1.0)


@dataclass(frozen=True, eq=False)
class AttackModel:
    """Honest strategy plus the purified state on ``(A, B0, B1, C) (x) (E0, E1)``.

    ``amplitudes[h, e]`` is the joint pure state with honest index ``h`` (16
    values, order ``A, B0, B1, C``) and adversary index ``e`` (16 values, order
    ``E0, E1``).
    """

    scenario: str
    honest: Strategy
    amplitudes: np.ndarray
    source_amplitudes: tuple  # per-source [honest pair, ancilla] matrices
    nu: tuple

    @property
    def state_vector(self) -> np.ndarray:
        """Pure state in register order ``A, B0, E0, B1, C, E1``."""
        m1, m2 = self.source_amplitudes
        return np.kron(m1.reshape(-1), m2.reshape(-1))

    def reduced_honest(self) -> np.ndarray:
        a = self.amplitudes
        return a @ a.conj().T

    def reduced_adversary(self) -> np.ndarray:
        a = self.amplitudes
        return (a.T @ a.conj())


def build_attack_model(strategy: Strategy, scenario: str) -> AttackModel:
    if scenario not in SCENARIOS:
        raise InputError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
    nus = (_werner_noise(strategy.rho1.matrix), _werner_noise(strategy.rho2.matrix))
    m1 = purification_vector(strategy.rho1).reshape(4, 4)  # [(a, b0), e0]
    m2 = purification_vector(strategy.rho2).reshape(4, 4)  # [(b1, c), e1]
    return AttackModel(scenario, strategy, np.kron(m1, m2), (m1, m2), nus)


def _honest_operators(strategy: Strategy) -> np.ndarray:
    """``ops[x, z, a, b, c]``: ``A_{a|x} (x) Pi_b (x) C_{c|z}`` on ``A B0 B1 C``."""
    ang = strategy.angles
    pi = strategy.central_povm()
    ops = np.empty((2, 2, 2, 2, 2, 16, 16), dtype=complex)
    for x, z, a, b, c in itertools.product((0, 1), repeat=5):
        pa = outcome_projector(ang.alice(x), a)
        pc = outcome_projector(ang.carol(z), c)
        ops[x, z, a, b, c] = tensor(pa, pi.elements[b], pc)
    return ops


def conditional_states(model: AttackModel, x: int, z: int) -> np.ndarray:
    """Unnormalized adversary states ``sigma[a, b, c]`` on ``E0 E1`` for settings ``(x, z)``.

    ``Tr sigma[a, b, c] = p(a, b, c | x, z)``.
    """
    _check_settings(x, z)
    ops = _honest_operators(model.honest)[x, z]
    psi = model.amplitudes
    # sigma = Psi^T O^T Psi^*
    return np.einsum("he,abcgh,gf->abcef", psi, ops, psi.conj())


def _check_settings(x: int, z: int) -> None:
    if x not in (0, 1) or z not in (0, 1):
        raise InputError(f"settings must be 0 or 1, got x={x!r}, z={z!r}")


def _povm_stack(povm) -> np.ndarray:
    elements = povm.elements if isinstance(povm, Povm) else povm
    return np.asarray([np.asarray(e, dtype=complex) for e in elements])


def joint_table(model: AttackModel, povms: Sequence | None = None) -> EavesdropperTable:
    """``p(a, b, c, g | x, z)`` for the adversary measurement ``povms``.

    DE: ``povms = (E, F)`` on ``E0`` and ``E1``; the table ends in ``[e, f]``.
    SE: ``povms = (G,)`` on ``E0 E1``, or ``(G_0, G_1)`` selected by the copy of ``b``;
    the table ends in ``[g]``.  ``None`` means a trivial one-outcome measurement.
    """
    if povms is None:
        povms = (Povm((np.eye(4),)), Povm((np.eye(4),))) if model.scenario == "DE" \
            else (Povm((np.eye(16),)),)
    stacks = [_povm_stack(p) for p in povms]
    sigma = np.stack([np.stack([conditional_states(model, x, z) for z in (0, 1)])
                      for x in (0, 1)])  # [x, z, a, b, c, 16, 16]
    if model.scenario == "DE":
        if len(stacks) != 2 or any(s.shape[1:] != (4, 4) for s in stacks):
            raise InputError("DE attacks need two measurements on 4-dimensional ancillas")
        E, F = stacks
        ops = np.einsum("eij,fkl->efikjl", E, F).reshape(len(E), len(F), 16, 16)
        table = np.einsum("xzabcij,efji->xzabcef", sigma, ops).real
        return EavesdropperTable(table)
    if len(stacks) not in (1, 2) or any(s.shape[1:] != (16, 16) for s in stacks):
        raise InputError("SE attacks need one or two measurements on the 16-dimensional ancilla")
    if len(stacks) == 1:
        stacks = stacks * 2
    if len(stacks[0]) != len(stacks[1]):
        raise InputError("b-conditioned SE measurements need equal outcome counts")
    table = np.stack([np.einsum("xzacij,gji->xzacg", sigma[:, :, :, b], stacks[b]).real
                      for b in (0, 1)], axis=3)
    return EavesdropperTable(table)


# ---------------------------------------------------------------------------
# guessing probabilities

def _one_hot_maps(n: int) -> np.ndarray:
    """All maps from ``n`` outcomes to a bit, as ``[map, bit, outcome]`` indicators."""
    maps = np.array(list(itertools.product((0, 1), repeat=n)))
    return (maps[:, None, :] == np.arange(2)[None, :, None]).astype(float)


_MAPS = {n: _one_hot_maps(n) for n in (1, 2, 3, 4)}


def _de_best_assignment(p: np.ndarray, target: str) -> float:
    """``p[a, b, c, e, f]``; best guess maps ``a(e)``, ``c(f)`` and, for ``ABC``, ``b(e, f)``."""
    ne, nf = p.shape[3], p.shape[4]
    ma = _MAPS.get(ne, None)
    mc = _MAPS.get(nf, None)
    if ma is None or mc is None:
        raise InputError("DE guess assignment supports at most four outcomes per adversary")
    if target == "AC":
        vals = np.einsum("mae,ncf,acef->mn", ma, mc, p.sum(axis=1))
    else:
        vals = np.einsum("mae,ncf,abcef->mnbef", ma, mc, p).max(axis=2).sum(axis=(2, 3))
    return float(vals.max())


def guessing_probability(model: AttackModel, target: str, x: int, z: int,
                         povms: Sequence, *, assignment: str = "greedy") -> float:
    """Probability that the adversary guesses the target outcomes for settings ``(x, z)``.

    ``assignment="label"`` reads the guess off the outcome label as in the
    defining sums (DE: ``e = a``, ``f = c``; SE: ``g = (a, c)`` or ``(a, b, c)``
    with ``b`` taken from the classical copy).  ``"greedy"`` post-processes each
    outcome into its best guess, which can only increase the value.
    """
    if target not in TARGETS:
        raise InputError(f"target must be one of {TARGETS}, got {target!r}")
    _check_settings(x, z)
    p = joint_table(model, povms).table[x, z]
    if model.scenario == "DE":
        if assignment == "label":
            if target != "AC" or p.shape[3] != 2 or p.shape[4] != 2:
                raise InputError("label assignment in DE needs target AC and two outcomes each")
            return float(sum(p[a, :, c, a, c].sum() for a in (0, 1) for c in (0, 1)))
        return _de_best_assignment(p, target)
    # SE: b is known exactly, so the AC and ABC games coincide
    if assignment == "label":
        if p.shape[3] < 4:
            raise InputError("label assignment needs four outcomes labelled (a, c)")
        return float(sum(p[a, b, c, 2 * a + c] for a, b, c in itertools.product((0, 1), repeat=3)))
    return float(p.max(axis=(0, 2)).sum())


def blind_guess(model: AttackModel, target: str, x: int, z: int) -> float:
    """Best guess from the honest statistics alone (plus ``b`` for ``SE``)."""
    _check_settings(x, z)
    t = joint_table(model).table[x, z].reshape(2, 2, 2)
    if model.scenario == "SE":
        return float(t.max(axis=(0, 2)).sum())
    if target == "AC":
        return float(t.sum(axis=1).max())
    return float(t.max())


# ---------------------------------------------------------------------------
# parameterized attacks

def _unitary(params: np.ndarray, dim: int) -> np.ndarray:
    h = np.zeros((dim, dim), dtype=complex)
    iu = np.triu_indices(dim, 1)
    n = len(iu[0])
    h[np.diag_indices(dim)] = params[:dim]
    h[iu] = params[dim:dim + n] + 1j * params[dim + n:dim + 2 * n]
    h = h + np.triu(h, 1).conj().T
    return expm(1j * h)


def basis_povm(u: np.ndarray) -> Povm:
    """Rank-one projective measurement onto the columns of ``u``."""
    return Povm(tuple(np.outer(u[:, k], u[:, k].conj()) for k in range(u.shape[1])))


def _source_cq(model: AttackModel, side: int, setting: int) -> np.ndarray:
    """States of one ancilla conditioned on the adjacent outer outcome, ``[o, 4, 4]``."""
    m = model.source_amplitudes[side]  # [honest pair, ancilla]
    ang = model.honest.angles
    out = []
    for o in (0, 1):
        if side == 0:
            proj = np.kron(outcome_projector(ang.alice(setting), o), I2)
        else:
            proj = np.kron(I2, outcome_projector(ang.carol(setting), o))
        out.append(m.T @ proj.T @ m.conj())
    return np.asarray(out)


def helstrom_basis(model: AttackModel, side: int, setting: int) -> np.ndarray:
    """Eigenbasis of ``sigma_0 - sigma_1`` on one ancilla: optimal for guessing
    the adjacent outer outcome from that ancilla alone."""
    s = _source_cq(model, side, setting)
    _, v = np.linalg.eigh(s[0] - s[1])
    return v[:, ::-1]


def helstrom_value(model: AttackModel, side: int, setting: int) -> float:
    s = _source_cq(model, side, setting)
    return float(0.5 * (1.0 + np.abs(np.linalg.eigvalsh(s[0] - s[1])).sum()))


def aligned_basis(model: AttackModel, side: int, setting: int) -> np.ndarray:
    """Basis steering the ancilla onto the honest projector: eigenvectors of
    ``(V^dagger O V)^T`` with ``V`` the purification's Schmidt vectors."""
    rho = (model.honest.rho1 if side == 0 else model.honest.rho2).matrix
    w, v = np.linalg.eigh(rho)
    v = v[:, np.argsort(w)[::-1]]
    ang = model.honest.angles
    if side == 0:
        op = np.kron(outcome_projector(ang.alice(setting), 0), I2)
    else:
        op = np.kron(I2, outcome_projector(ang.carol(setting), 0))
    _, basis = np.linalg.eigh((v.conj().T @ op @ v).T)
    return basis


@dataclass
class AttackResult:
    scenario: str
    target: str
    x: int
    z: int
    pg_lower_bound: float
    hmin_upper_bound: float
    trace: list = field(default_factory=list)
    measurements: tuple = ()

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "target": self.target, "x": self.x, "z": self.z,
                "pg_lb": self.pg_lower_bound, "hmin_ub": self.hmin_upper_bound}


def _clip_probability(pg: float) -> float:
    # rounding can push a perfect guess a few ulps above 1
    return min(float(pg), 1.0)


def _min_entropy(pg: float) -> float:
    return -math.log2(pg)


def _de_objective(target, sigma):
    def value(params, u0):
        ue = u0[0] @ _unitary(params[:16], 4)
        uf = u0[1] @ _unitary(params[16:], 4)
        ops = np.einsum("ie,je,kf,lf->efikjl", ue, ue.conj(), uf, uf.conj()).reshape(4, 4, 16, 16)
        p = np.einsum("abcij,efji->abcef", sigma, ops).real
        return _de_best_assignment(p, target), (ue, uf)
    return value


def _se_objective(sigma_b):
    def value(params, u0):
        u = u0 @ _unitary(params, 16)
        # diag(U^dagger sigma U) for each (a, c): best guess per basis vector
        diag = np.einsum("ik,acij,jk->ack", u.conj(), sigma_b, u).real
        return float(diag.reshape(4, 16).max(axis=0).sum()), u
    return value


def _polish(value, u0, n_params: int, cfg: OptimizationConfig):
    """Powell search over a unitary rotation of the seed; never returns less than the seed."""
    best_v, best_u = value(np.zeros(n_params), u0)
    res = minimize(lambda v: -value(v, u0)[0], np.zeros(n_params), method="Powell",
                   options=dict(maxiter=cfg.max_iterations, xtol=1e-6, ftol=cfg.convergence_tol))
    v, u = value(res.x, u0)
    if v > best_v:
        best_v, best_u = v, u
    return best_v, best_u


def _best_seed(value, seeds, n_params: int):
    """First seed with the largest value (ties go to the earlier seed)."""
    best = (-1.0, None)
    values = []
    for u0 in seeds:
        v, u = value(np.zeros(n_params), u0)
        values.append(v)
        if v > best[0]:
            best = (v, u)
    return best, values


def optimize_attack(model: AttackModel, target: str, x: int, z: int,
                    cfg: OptimizationConfig | None = None, *,
                    warm_start: Sequence | None = None) -> AttackResult:
    """Derivative-free search over rank-one adversary bases with greedy guesses.

    Seeds are the per-source Helstrom bases, bases aligned with the honest
    projectors, the computational basis and ``cfg.restarts`` random bases; the
    best seed is then polished.  The DE optimum, as a product basis, seeds the
    SE search, so the SE value never falls below the DE value.
    ``warm_start`` is a previous result's ``measurements``.
    """
    if target not in TARGETS:
        raise InputError(f"target must be one of {TARGETS}, got {target!r}")
    _check_settings(x, z)
    cfg = cfg or OptimizationConfig(restarts=2, max_iterations=2)
    sigma = conditional_states(model, x, z)  # [a, b, c, 16, 16]
    de_seeds = [
        (helstrom_basis(model, 0, x), helstrom_basis(model, 1, z)),
        (aligned_basis(model, 0, x), aligned_basis(model, 1, z)),
        (np.eye(4), np.eye(4)),
    ]
    for k in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, k])
        de_seeds.append(tuple(_unitary(rng.normal(size=16), 4) for _ in range(2)))
    if warm_start is not None and model.scenario == "DE":
        de_seeds.insert(0, tuple(_basis_of(m) for m in warm_start))

    # with the copy of b, guessing (a, b, c) is the same game as guessing (a, c),
    # so SE always starts from the DE attack on AC
    de_target = "AC" if model.scenario == "SE" else target
    de_value = _de_objective(de_target, sigma)
    (seed_v, seed_u), trace = _best_seed(de_value, de_seeds, 32)
    de_best, (ue, uf) = _polish(de_value, seed_u, 32, cfg)
    de_best = _clip_probability(de_best)
    trace.append(de_best)
    if model.scenario == "DE":
        measurements = (basis_povm(ue), basis_povm(uf))
        return AttackResult("DE", target, x, z, de_best, _min_entropy(de_best), trace, measurements)

    # SE: one basis per value of the copied b
    total = 0.0
    bases = []
    for b in (0, 1):
        se_value = _se_objective(sigma[:, b])
        seeds = [np.kron(ue, uf)] + [np.kron(e, f) for e, f in de_seeds]
        if warm_start is not None:
            seeds.insert(0, _basis_of(warm_start[b]))
        (_, u0), values = _best_seed(se_value, seeds, 256)
        v, u = _polish(se_value, u0, 256, cfg)
        trace.extend(values)
        total += v
        bases.append(u)
    trace.append(total)
    pg = _clip_probability(max(total, de_best))
    measurements = (basis_povm(bases[0]), basis_povm(bases[1]))
    return AttackResult("SE", target, x, z, pg, _min_entropy(pg), trace, measurements)


def _basis_of(povm: Povm) -> np.ndarray:
    """Columns spanning a rank-one projective measurement."""
    cols = []
    for e in povm.elements:
        w, v = np.linalg.eigh(e)
        cols.append(v[:, -1])
    return np.column_stack(cols)


def best_settings_attack(model: AttackModel, target: str,
                         cfg: OptimizationConfig | None = None) -> AttackResult:
    """Attack on the setting pair that leaves the most randomness (smallest found P_g)."""
    results = [optimize_attack(model, target, x, z, cfg) for x in (0, 1) for z in (0, 1)]
    return min(results, key=lambda r: r.pg_lower_bound)


@dataclass(frozen=True)
class EntropyRow:
    nu: float
    scenario: str
    target: str
    pg_lb: float
    hmin_ub: float
    x: int
    z: int
    seed: int


def entropy_sweep(family: Callable[[float], Strategy], nu_grid: Iterable[float],
                  scenario: str, target: str, cfg: OptimizationConfig | None = None
                  ) -> list[EntropyRow]:
    """Attack bounds along a noise grid for the strategy family ``family(nu)``."""
    cfg = cfg or OptimizationConfig(restarts=2, max_iterations=3)
    rows = []
    for nu in nu_grid:
        nu = float(nu)
        if not (0.0 <= nu <= 1.0):
            raise InputError(f"nu must lie in [0, 1], got {nu!r}")
        r = best_settings_attack(build_attack_model(family(nu), scenario), target, cfg)
        rows.append(EntropyRow(nu, scenario, target, r.pg_lower_bound, r.hmin_upper_bound,
                               r.x, r.z, cfg.seed))
    return rows


def entropy_csv(rows: Sequence[EntropyRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["nu", "scenario", "target", "pg_lb", "hmin_ub", "x", "z", "seed"])
    for r in rows:
        w.writerow([repr(r.nu), r.scenario, r.target, repr(r.pg_lb), repr(r.hmin_ub),
                    r.x, r.z, r.seed])
    return buf.getvalue()

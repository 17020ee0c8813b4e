"""Correlators and the two full-network-nonlocality witnesses of the bilocal network."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError
from .qstate import outcome_projector, tensor
from .simulation import Behavior, Strategy, behavior

_SIGN = np.array([1.0, -1.0])
_S2 = np.outer(_SIGN, _SIGN)
_S3 = np.einsum("a,b,c->abc", _SIGN, _SIGN, _SIGN)


@dataclass(frozen=True)
class CorrelatorSet:
    """``tri[x, z] = <A_x B C_z>``, ``ab[x]``, ``bc[z]``, ``a[x]``, ``c[z]`` and ``b``."""

    tri: np.ndarray
    ab: np.ndarray
    bc: np.ndarray
    a: np.ndarray
    c: np.ndarray
    b: float


def correlators(beh: Behavior) -> CorrelatorSet:
    t = beh.table
    s = _SIGN
    tri = np.einsum("xzabc,a,b,c->xz", t, s, s, s)
    # two- and one-party terms from marginals; average over the unused
    # setting so that tiny signaling noise does not bias the result
    ab = np.einsum("xzabc,a,b->x", t, s, s) / 2
    bc = np.einsum("xzabc,b,c->z", t, s, s) / 2
    a = np.einsum("xzabc,a->x", t, s) / 2
    c = np.einsum("xzabc,c->z", t, s) / 2
    b = float(np.einsum("xzabc,b->", t, s) / 4)
    return CorrelatorSet(tri, ab, bc, a, c, b)


@dataclass(frozen=True)
class WitnessResult:
    fnn1: float
    fnn2: float

    @property
    def margin1(self) -> float:
        return self.fnn1 - 1.0

    @property
    def margin2(self) -> float:
        return self.fnn2 - 1.0

    @property
    def violated(self) -> tuple[bool, bool]:
        return (self.fnn1 > 1.0, self.fnn2 > 1.0)

    @property
    def simultaneous(self) -> bool:
        return all(self.violated)

    @property
    def objective(self) -> float:
        return min(self.fnn1, self.fnn2)

    def to_dict(self) -> dict:
        return {
            "fnn1": self.fnn1,
            "fnn2": self.fnn2,
            "margin1": self.margin1,
            "margin2": self.margin2,
            "violated": list(self.violated),
        }


def fnn_from_correlators(cs: CorrelatorSet) -> WitnessResult:
    # index 0 is setting 1, index 1 is setting 2
    fnn1 = -cs.tri[0, 1] - cs.ab[1] + cs.c[1] * (cs.ab[0] + cs.tri[1, 1] + cs.c[1])
    fnn2 = -cs.tri[0, 1] + cs.bc[0] + cs.a[0] * (cs.bc[1] - cs.tri[0, 0] + cs.a[0])
    return WitnessResult(float(fnn1), float(fnn2))


def fnn_values(beh: Behavior) -> WitnessResult:
    return fnn_from_correlators(correlators(beh))


def fnn_table(table: np.ndarray) -> tuple[float, float]:
    """Both witness values straight from a ``[x, z, a, b, c]`` array (hot path)."""
    tri = (table * _S3).sum(axis=(2, 3, 4))
    ab = (table.sum(axis=4) * _S2).sum(axis=(1, 2, 3)) / 2
    bc = (table.sum(axis=2) * _S2).sum(axis=(0, 2, 3)) / 2
    marg_a = table.sum(axis=(1, 3, 4))  # [x, a]
    marg_c = table.sum(axis=(0, 2, 3))  # [z, c]
    a = (marg_a[:, 0] - marg_a[:, 1]) / 2
    c = (marg_c[:, 0] - marg_c[:, 1]) / 2
    f1 = -tri[0, 1] - ab[1] + c[1] * (ab[0] + tri[1, 1] + c[1])
    f2 = -tri[0, 1] + bc[0] + a[0] * (bc[1] - tri[0, 0] + a[0])
    return float(f1), float(f2)


@dataclass(frozen=True)
class FactorizationReport:
    direction: str
    max_deviation: float
    # B0->B1: p(a, b0 | x) as [x, a, b0] and p(b1, c | b0, z) as [b0, z, b1, c]
    # B1->B0: p(a, b0 | b1, x) as [b1, x, a, b0] and p(b1, c | z) as [z, b1, c]
    left_table: np.ndarray
    right_table: np.ndarray

    def holds(self, tol: float = 1e-9) -> bool:
        return self.max_deviation <= tol


def check_oneway_factorization(strategy: Strategy) -> FactorizationReport:
    """Rebuild the behavior of a one-way feedforward strategy from its two
    factor tables and report the worst deviation from the direct behavior.

    ``p = 1`` means ``B0`` is measured first and steers ``B1``; ``p = 0`` is the
    mirrored direction.  The noise coefficients must both be 1.
    """
    cfg = strategy.central
    if cfg.mode != "feedback" or cfg.p not in (0.0, 1.0):
        raise InputError("factorization check needs a feedback strategy with p in {0, 1}")
    if cfg.alpha0 != 1.0 or cfg.alpha1 != 1.0:
        raise InputError("factorization check needs alpha0 = alpha1 = 1")
    ang = strategy.angles
    rho1, rho2 = strategy.rho1.matrix, strategy.rho2.matrix
    direct = behavior(strategy).table

    def pair(rho, op_left, op_right):
        return float(np.trace(rho @ tensor(op_left, op_right)).real)

    recon = np.zeros((2, 2, 2, 2, 2))
    if cfg.p == 1.0:
        # p(a, b0 | x) from rho1, p(b1, c | b0, z) from rho2
        left = np.array([[[pair(rho1, outcome_projector(ang.alice(x), a),
                                outcome_projector(ang.b0_free, b0))
                           for b0 in (0, 1)] for a in (0, 1)] for x in (0, 1)])
        cond = (ang.b1_given_b0_0, ang.b1_given_b0_1)
        right = np.array([[[[pair(rho2, outcome_projector(cond[b0], b1),
                                  outcome_projector(ang.carol(z), c))
                             for c in (0, 1)] for b1 in (0, 1)] for z in (0, 1)] for b0 in (0, 1)])
        for x, z, a, b0, b1, c in itertools.product((0, 1), repeat=6):
            recon[x, z, a, b0 ^ b1, c] += left[x, a, b0] * right[b0, z, b1, c]
        direction = "B0->B1"
    else:
        # p(b1, c | z) from rho2, p(a, b0 | b1, x) from rho1
        right = np.array([[[pair(rho2, outcome_projector(ang.b1_free, b1),
                                 outcome_projector(ang.carol(z), c))
                            for c in (0, 1)] for b1 in (0, 1)] for z in (0, 1)])
        cond = (ang.b0_given_b1_0, ang.b0_given_b1_1)
        left = np.array([[[[pair(rho1, outcome_projector(ang.alice(x), a),
                                 outcome_projector(cond[b1], b0))
                            for b0 in (0, 1)] for a in (0, 1)] for x in (0, 1)] for b1 in (0, 1)])
        for x, z, a, b0, b1, c in itertools.product((0, 1), repeat=6):
            recon[x, z, a, b0 ^ b1, c] += left[b1, x, a, b0] * right[z, b1, c]
        direction = "B1->B0"
    dev = float(np.max(np.abs(recon - direct)))
    return FactorizationReport(direction, dev, left, right)


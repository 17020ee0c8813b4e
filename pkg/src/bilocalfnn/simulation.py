"""Quantum strategies in the bilocal network and the behaviors they produce.

Source ``rho1`` links Alice to the central register ``B0``; ``rho2`` links
``B1`` to Carol.  The joint register order is ``(A, B0, B1, C)``.  Behavior
tables are stored as arrays indexed ``[x, z, a, b, c]`` with settings
``x, z`` and outcomes ``a, b, c`` all in ``{0, 1}`` (setting index 0 is the
first setting, written ``x=1`` in the usual notation).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .exceptions import InputError
from .qstate import (
    DEFAULT_TOL,
    I4,
    Povm,
    QuantumState,
    outcome_projector,
    tensor,
    validate_povm,
    werner,
)

NEG_CLIP = 1e-12


@dataclass(frozen=True)
class AngleSet:
    """The ten projector angles (radians) of the feedback strategy."""

    a1: float
    a2: float
    b0_free: float
    b1_given_b0_0: float
    b1_given_b0_1: float
    b1_free: float
    b0_given_b1_0: float
    b0_given_b1_1: float
    c1: float
    c2: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            try:
                v = float(v)
            except (TypeError, ValueError):
                raise InputError(f"angle {f.name} is not a number: {v!r}") from None
            if not math.isfinite(v):
                raise InputError(f"angle {f.name} must be finite, got {v!r}")
            object.__setattr__(self, f.name, v)

    @classmethod
    def names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in self.names()])

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "AngleSet":
        values = list(values)
        if len(values) != 10:
            raise InputError(f"an angle set has exactly 10 angles, got {len(values)}")
        return cls(*values)

    def alice(self, x: int) -> float:
        return (self.a1, self.a2)[x]

    def carol(self, z: int) -> float:
        return (self.c1, self.c2)[z]


def pi_fraction(text: str | float | int) -> float:
    """Parse an angle written as a multiple of pi (``"41/103"``, ``"-78/183"``,
    ``"1/4"``) or, with an ``"rad"`` suffix or as a bare number, in radians."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)
    if not isinstance(text, str):
        raise InputError(f"cannot parse angle {text!r}")
    s = text.strip().lower().replace(" ", "")
    if s.endswith("rad"):
        try:
            return float(s[:-3])
        except ValueError:
            raise InputError(f"cannot parse angle {text!r}") from None
    s = s.replace("*pi", "").replace("pi", "")
    try:
        return float(Fraction(s)) * math.pi
    except (ValueError, ZeroDivisionError):
        raise InputError(f"cannot parse angle {text!r}") from None


# Reference angle set for the optimal separable strategy,
# stored as multiples of pi.
TABLE_ONE_PI = {
    "a1": "-78/183",
    "a2": "14/17",
    "b0_free": "0",
    "b1_given_b0_0": "2/27",
    "b1_given_b0_1": "23/71",
    "b1_free": "41/103",
    "b0_given_b1_0": "19/129",
    "b0_given_b1_1": "9/122",
    "c1": "1/4",
    "c2": "35/108",
}

TABLE_ONE = AngleSet(**{k: pi_fraction(v) for k, v in TABLE_ONE_PI.items()})

# A numerically optimal angle set for the conventions of this module
# (min(FNN1, FNN2) = sqrt(5)/2 on two singlets, p = 1/2).
OPTIMAL_SEPARABLE = AngleSet(
    2.3439145656,
    1.5584644226,
    0.7731182114,
    2.7586080252,
    3.2222556577,
    2.9904318779,
    1.0049419912,
    0.5412943587,
    0.6342892977,
    2.9904318467,
)


@dataclass(frozen=True)
class CentralConfig:
    """Central-node measurement: feedback wiring (``p``, ``alpha0``, ``alpha1``)
    or an explicit binary POVM on ``B0 (x) B1``."""

    mode: str = "feedback"
    p: float = 0.5
    alpha0: float = 1.0
    alpha1: float = 1.0
    povm: Povm | None = None

    def __post_init__(self):
        if self.mode not in ("feedback", "explicit"):
            raise InputError(f"central mode must be 'feedback' or 'explicit', got {self.mode!r}")
        if self.mode == "feedback":
            for name in ("p", "alpha0", "alpha1"):
                v = float(getattr(self, name))
                if not (0.0 <= v <= 1.0):
                    raise InputError(f"{name} must lie in [0, 1], got {v!r}")
                object.__setattr__(self, name, v)
        else:
            if self.povm is None:
                raise InputError("explicit central mode needs a POVM")
            if self.povm.dim != 4 or len(self.povm) != 2:
                raise InputError("explicit central POVM must have 2 elements on dimension 4")

    @classmethod
    def explicit(cls, povm: Povm) -> "CentralConfig":
        return cls(mode="explicit", povm=povm)


@dataclass(frozen=True, eq=False)
class Strategy:
    rho1: QuantumState
    rho2: QuantumState
    angles: AngleSet
    central: CentralConfig = field(default_factory=CentralConfig)

    def __post_init__(self):
        for name in ("rho1", "rho2"):
            rho = getattr(self, name)
            if not isinstance(rho, QuantumState):
                rho = QuantumState(rho)
                object.__setattr__(self, name, rho)
            if rho.dim != 4:
                raise InputError(f"{name} must be a two-qubit state, got dimension {rho.dim}")

    @classmethod
    def werner_feedback(
        cls,
        angles: AngleSet,
        nu: float = 0.0,
        p: float = 0.5,
        alpha0: float = 1.0,
        alpha1: float = 1.0,
    ) -> "Strategy":
        rho = werner(nu)
        return cls(rho, rho, angles, CentralConfig("feedback", p, alpha0, alpha1))

    def with_sources(self, rho1: QuantumState, rho2: QuantumState) -> "Strategy":
        return replace(self, rho1=rho1, rho2=rho2)

    def central_povm(self) -> Povm:
        if self.central.mode == "explicit":
            return self.central.povm
        return feedback_povm_coarse(self.angles, self.central)


def _check_probability(name: str, v: float) -> float:
    v = float(v)
    if not (0.0 <= v <= 1.0):
        raise InputError(f"{name} must lie in [0, 1], got {v!r}")
    return v


def feedback_povm_fine(angles: AngleSet, p: float = 0.5) -> Povm:
    """Four-outcome feedback measurement on ``B0 (x) B1``, labelled ``(b0, b1)``.

    With weight ``p`` the ``B0`` outcome selects the ``B1`` projector, with
    weight ``1 - p`` the ``B1`` outcome selects the ``B0`` projector.
    """
    p = _check_probability("p", p)
    b1_cond = (angles.b1_given_b0_0, angles.b1_given_b0_1)
    b0_cond = (angles.b0_given_b1_0, angles.b0_given_b1_1)
    elements, labels = [], []
    for b0, b1 in itertools.product((0, 1), repeat=2):
        forward = tensor(
            outcome_projector(angles.b0_free, b0), outcome_projector(b1_cond[b0], b1)
        )
        backward = tensor(
            outcome_projector(b0_cond[b1], b0), outcome_projector(angles.b1_free, b1)
        )
        elements.append(p * forward + (1 - p) * backward)
        labels.append((b0, b1))
    return Povm(tuple(elements), tuple(labels))


def coarse_grain(fine: Povm) -> Povm:
    """Binary POVM with ``b = b0 xor b1``."""
    out = [np.zeros((fine.dim, fine.dim), dtype=complex) for _ in range(2)]
    for (b0, b1), e in zip(fine.labels, fine.elements):
        out[b0 ^ b1] = out[b0 ^ b1] + e
    return Povm(tuple(out), (0, 1))


def feedback_povm_coarse(angles: AngleSet, cfg: CentralConfig) -> Povm:
    """Noisy binary feedback POVM.

    Each fine element is ``(alpha0 + alpha1)/2 * M(b0, b1) + (1 - alpha_b)/2 * I``
    with ``b = b0 xor b1``; the coarse pair sums to ``s * I`` with
    ``s = 2 - (alpha0 + alpha1)/2`` and is divided by ``s``.
    """
    if cfg.mode != "feedback":
        raise InputError("feedback_povm_coarse needs a feedback-mode configuration")
    alpha = (cfg.alpha0, cfg.alpha1)
    fine = feedback_povm_fine(angles, cfg.p)
    out = [np.zeros((4, 4), dtype=complex) for _ in range(2)]
    for (b0, b1), m in zip(fine.labels, fine.elements):
        b = b0 ^ b1
        out[b] = out[b] + 0.5 * (alpha[0] + alpha[1]) * m + 0.5 * (1 - alpha[b]) * I4
    scale = 2 - 0.5 * (alpha[0] + alpha[1])
    return Povm((out[0] / scale, out[1] / scale), (0, 1))


@dataclass(frozen=True, eq=False)
class Behavior:
    """Conditional distribution ``p(a, b, c | x, z)`` stored as ``table[x, z, a, b, c]``."""

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.shape != (2, 2, 2, 2, 2):
            raise InputError(f"behavior table must have shape (2,2,2,2,2), got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise InputError("behavior table has non-finite entries")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    def __call__(self, a: int, b: int, c: int, x: int, z: int) -> float:
        return float(self.table[x, z, a, b, c])

    def normalization_error(self) -> float:
        return float(np.max(np.abs(self.table.sum(axis=(2, 3, 4)) - 1)))

    def signaling_error(self) -> float:
        bc = self.table.sum(axis=2)  # [x, z, b, c]
        ab = self.table.sum(axis=4)  # [x, z, a, b]
        return float(max(np.max(np.abs(bc[0] - bc[1])), np.max(np.abs(ab[:, 0] - ab[:, 1]))))

    def check(self, tol: float = DEFAULT_TOL) -> None:
        """Raise :class:`InputError` unless positivity, normalization and
        no-signaling hold within ``tol``."""
        lo = float(self.table.min())
        if lo < -tol:
            raise InputError(f"behavior has negative entry {lo:.3g}")
        err = self.normalization_error()
        if err > tol:
            raise InputError(f"behavior slices are not normalized (deviation {err:.3g})")
        err = self.signaling_error()
        if err > tol:
            raise InputError(f"behavior violates no-signaling (deviation {err:.3g})")

    def alice_marginal(self) -> np.ndarray:
        """``p(a|x)`` as ``[x, a]`` (averaged over ``z``)."""
        return self.table.sum(axis=(3, 4)).mean(axis=1)

    def carol_marginal(self) -> np.ndarray:
        """``p(c|z)`` as ``[z, c]`` (averaged over ``x``)."""
        return self.table.sum(axis=(2, 3)).mean(axis=0)

    def mirrored(self) -> "Behavior":
        """Swap the roles of Alice and Carol (and of the two sources)."""
        return Behavior(self.table.transpose(1, 0, 4, 3, 2))

    @classmethod
    def uniform(cls) -> "Behavior":
        return cls(np.full((2, 2, 2, 2, 2), 1 / 8))

    def to_dict(self) -> dict:
        return {
            "outcomes": [2, 2, 2],
            "settings": [2, 2],
            "table": self.table.tolist(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: Mapping) -> "Behavior":
        if list(data.get("outcomes", [])) != [2, 2, 2] or list(data.get("settings", [])) != [2, 2]:
            raise InputError("behavior JSON must declare outcomes [2,2,2] and settings [2,2]")
        try:
            table = np.array(data["table"], dtype=float)
        except (KeyError, ValueError, TypeError) as exc:
            raise InputError(f"behavior JSON has an unreadable table: {exc}") from None
        return cls(table)

    @classmethod
    def from_json(cls, text: str) -> "Behavior":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"invalid behavior JSON at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(data)


def _outer_ops(theta: float) -> tuple[np.ndarray, np.ndarray]:
    return outcome_projector(theta, 0), outcome_projector(theta, 1)


def behavior(strategy: Strategy) -> Behavior:
    """Exact behavior ``Tr[(rho1 (x) rho2)(A_a|x (x) Pi_b (x) C_c|z)]``."""
    pi_b = strategy.central_povm()
    if pi_b.dim != 4:
        raise InputError("central POVM must act on the two central qubits")
    rho = tensor(strategy.rho1.matrix, strategy.rho2.matrix)
    table = np.zeros((2, 2, 2, 2, 2))
    for x, z in itertools.product((0, 1), repeat=2):
        A = _outer_ops(strategy.angles.alice(x))
        C = _outer_ops(strategy.angles.carol(z))
        for a, b, c in itertools.product((0, 1), repeat=3):
            op = tensor(A[a], pi_b.elements[b], C[c])
            table[x, z, a, b, c] = np.einsum("ij,ji->", rho, op).real
    table[(table < 0) & (table > -NEG_CLIP)] = 0.0
    return Behavior(table)


def _pair_table(theta_outer: np.ndarray, theta_center: np.ndarray, eta: float) -> np.ndarray:
    """``p(o, k | outer setting, center angle)`` for a Werner pair of visibility ``eta``
    measured with real projectors, indexed ``[setting, o, angle, k]``."""
    d = theta_outer[:, None] - theta_center[None, :]
    corr = eta * np.cos(2 * d)  # [setting, angle]
    sign = np.array([1.0, -1.0])
    return 0.25 * (1 - np.einsum("sj,o,k->sojk", corr, sign, sign))


def werner_feedback_table(
    angles: np.ndarray,
    eta1: float = 1.0,
    eta2: float = 1.0,
    p: float = 0.5,
    alpha0: float = 1.0,
    alpha1: float = 1.0,
) -> np.ndarray:
    """Closed-form behavior table of the feedback strategy on Werner sources.

    ``angles`` follows the :class:`AngleSet` field order and ``eta = 1 - nu`` is
    the singlet weight of each source.  Agrees with :func:`behavior` for
    Werner inputs; used in optimization loops where the generic trace
    evaluation would dominate the run time.
    """
    ang = np.asarray(angles, dtype=float)
    # B0 angles: free, given b1=0, given b1=1 ; B1 angles: free, given b0=0, given b0=1
    left = _pair_table(ang[[0, 1]], ang[[2, 6, 7]], eta1)  # [x, a, j, b0]
    right = _pair_table(ang[[8, 9]], ang[[5, 3, 4]], eta2)  # [z, c, j, b1]
    # forward: B0 free, B1 steered by b0; backward: B1 free, B0 steered by b1
    fwd = left[:, None, :, 0, :, None, None] * right[:, :, 1:, :].transpose(0, 2, 3, 1)[None, :, None]
    bwd = left[:, None, :, 1:, :].transpose(0, 1, 2, 4, 3)[..., None] * right[:, :, 0, :].transpose(0, 2, 1)[None, :, None, None]
    fine = p * fwd + (1 - p) * bwd  # [x, z, a, b0, b1, c]
    table = np.empty((2, 2, 2, 2, 2))
    table[:, :, :, 0, :] = fine[:, :, :, 0, 0, :] + fine[:, :, :, 1, 1, :]
    table[:, :, :, 1, :] = fine[:, :, :, 0, 1, :] + fine[:, :, :, 1, 0, :]
    if alpha0 != 1.0 or alpha1 != 1.0:
        mean = 0.5 * (alpha0 + alpha1)
        ac = table.sum(axis=3)  # p(a, c | x, z)
        noisy = np.empty_like(table)
        for b, alpha in enumerate((alpha0, alpha1)):
            noisy[:, :, :, b, :] = mean * table[:, :, :, b, :] + (1 - alpha) * ac
        table = noisy / (2 - mean)
    return table


def explicit_central_table(
    outer: np.ndarray, rho1: np.ndarray, rho2: np.ndarray, pi0: np.ndarray
) -> np.ndarray:
    """Behavior table for an explicit binary central POVM ``{pi0, I - pi0}``.

    ``outer`` holds the angles ``(a1, a2, c1, c2)``; the sources are arbitrary
    two-qubit density matrices.
    """
    outer = np.asarray(outer, dtype=float)
    sign = np.array([1.0, -1.0])
    cos, sin = np.cos(2 * outer), np.sin(2 * outer)
    # P_o(theta) = (I + s_o (cos 2t Z + sin 2t X)) / 2
    Z = np.diag([1.0, -1.0])
    X = np.array([[0.0, 1.0], [1.0, 0.0]])
    proj = 0.5 * (np.eye(2)[None, None] + sign[None, :, None, None]
                  * (cos[:, None, None, None] * Z + sin[:, None, None, None] * X))  # [k, o, 2, 2]
    r1 = np.asarray(rho1).reshape(2, 2, 2, 2)  # [a, b0, a', b0']
    r2 = np.asarray(rho2).reshape(2, 2, 2, 2)  # [b1, c, b1', c']
    # Tr_A[rho1 (P_a (x) I)] on B0 and Tr_C[rho2 (I (x) P_c)] on B1
    s0 = np.einsum("xaji,ikjl->xakl", proj[:2], r1)
    s1 = np.einsum("zclk,ikjl->zcij", proj[2:], r2)
    st = np.einsum("xakl,zcij->xzackilj", s0, s1).reshape(2, 2, 2, 2, 4, 4)
    p0 = np.einsum("xzacrs,sr->xzac", st, pi0).real
    tot = np.einsum("xzacrr->xzac", st).real
    table = np.empty((2, 2, 2, 2, 2))
    table[:, :, :, 0, :] = p0
    table[:, :, :, 1, :] = tot - p0
    return table


@dataclass(frozen=True)
class EavesdropperTable:
    """Joint table ``p(a, b, c, g | x, z)`` with eavesdropper outcome(s) ``g``.

    ``table`` has shape ``(2, 2, 2, 2, 2, *outcome_shape)`` indexed
    ``[x, z, a, b, c, ...]``.
    """

    table: np.ndarray

    def honest_marginal(self) -> Behavior:
        extra = tuple(range(5, self.table.ndim))
        return Behavior(self.table.sum(axis=extra))


def behavior_with_eavesdroppers(model, povms: Sequence[Povm] | None = None) -> EavesdropperTable:
    """Joint table including eavesdropper outcomes for an attack model.

    See :func:`bilocalfnn.randomness.joint_table` for the accepted measurement
    structures; this is a thin re-export that keeps the simulation entry point
    in one module.
    """
    from .randomness import joint_table

    return joint_table(model, povms)


def validate_strategy_povms(strategy: Strategy, tol: float = DEFAULT_TOL) -> None:
    report = validate_povm(strategy.central_povm(), tol)
    if not report.ok:
        raise InputError(f"central POVM is invalid: {report}")

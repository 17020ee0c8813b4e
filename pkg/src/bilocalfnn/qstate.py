"""Dense complex linear algebra for qubit networks.

Operators are plain ``numpy`` arrays.  Multi-register operators follow the
big-endian convention of :func:`numpy.kron`: the left factor is the most
significant index.  Network registers are ordered ``(A, B0, B1, C)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .exceptions import InputError

DEFAULT_TOL = 1e-9
MAX_DIM = 64

I2 = np.eye(2, dtype=complex)
I4 = np.eye(4, dtype=complex)


def allclose(a, b, atol: float = 1e-10) -> bool:
    a = np.asarray(a)
    b = np.asarray(b)
    return a.shape == b.shape and bool(np.all(np.abs(a - b) <= atol))


def hermiticity_error(mat: np.ndarray) -> float:
    mat = np.asarray(mat)
    return float(np.max(np.abs(mat - mat.conj().T))) if mat.size else 0.0


def min_eigenvalue(mat: np.ndarray) -> float:
    """Smallest eigenvalue of the Hermitian part of ``mat``."""
    mat = np.asarray(mat)
    herm = 0.5 * (mat + mat.conj().T)
    return float(np.linalg.eigvalsh(herm)[0])


def projector(theta: float) -> np.ndarray:
    """Projector onto ``cos(theta)|0> + sin(theta)|1>`` (x-z plane of the Bloch sphere)."""
    theta = float(theta)
    if not math.isfinite(theta):
        raise InputError(f"projector angle must be finite, got {theta!r}")
    v = np.array([math.cos(theta), math.sin(theta)], dtype=complex)
    return np.outer(v, v.conj())


def outcome_projector(theta: float, outcome: int) -> np.ndarray:
    """Binary projective measurement element: outcome 0 is ``projector(theta)``,
    outcome 1 its complement."""
    proj = projector(theta)
    if outcome == 0:
        return proj
    if outcome == 1:
        return I2 - proj
    raise InputError(f"binary outcome must be 0 or 1, got {outcome!r}")


def tensor(*mats: np.ndarray) -> np.ndarray:
    if not mats:
        raise InputError("tensor() needs at least one factor")
    return reduce(np.kron, (np.asarray(m) for m in mats))


def partial_trace(mat: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every subsystem of ``mat`` whose index is not in ``keep``."""
    dims = [int(d) for d in dims]
    n = len(dims)
    keep = sorted(int(k) for k in keep)
    mat = np.asarray(mat).reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep]
    # trace the highest index first so the remaining axis numbers stay valid
    for cnt, i in enumerate(sorted(traced, reverse=True)):
        m = n - cnt
        mat = np.trace(mat, axis1=i, axis2=i + m)
    d = int(np.prod([dims[k] for k in keep])) if keep else 1
    return mat.reshape(d, d)


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Density operator with validated Hermiticity, unit trace and positivity."""

    matrix: np.ndarray
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise InputError(f"density operator must be square, got shape {mat.shape}")
        if mat.shape[0] > MAX_DIM:
            raise InputError(f"dimension {mat.shape[0]} exceeds {MAX_DIM}")
        if not np.all(np.isfinite(mat)):
            raise InputError("density operator has non-finite entries")
        herr = hermiticity_error(mat)
        if herr > self.tol:
            raise InputError(f"density operator is not Hermitian (deviation {herr:.3g})")
        tr = np.trace(mat)
        if abs(tr - 1) > self.tol:
            raise InputError(f"density operator trace is {tr.real:.12g}, expected 1")
        lam = min_eigenvalue(mat)
        if lam < -self.tol:
            raise InputError(f"density operator is not positive (eigenvalue {lam:.3g})")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def is_close(self, other: "QuantumState | np.ndarray", atol: float = 1e-10) -> bool:
        other = other.matrix if isinstance(other, QuantumState) else other
        return allclose(self.matrix, other, atol)


def singlet_vector() -> np.ndarray:
    return np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)


def singlet() -> QuantumState:
    """``(|01> - |10>)/sqrt(2)`` as a density operator."""
    v = singlet_vector()
    return QuantumState(np.outer(v, v.conj()))


def werner(nu: float) -> QuantumState:
    """Isotropic Werner state ``(1 - nu)|psi-><psi-| + nu * I/4``."""
    nu = float(nu)
    if not (0.0 <= nu <= 1.0):
        raise InputError(f"Werner noise must lie in [0, 1], got {nu!r}")
    return QuantumState((1 - nu) * singlet().matrix + nu * I4 / 4)


@dataclass(frozen=True, eq=False)
class Povm:
    """Outcome-labelled measurement on a ``dim``-dimensional space.

    Construction does not validate; call :func:`validate_povm` for a report.
    """

    elements: tuple
    labels: tuple = ()

    def __post_init__(self):
        elements = tuple(np.array(e, dtype=complex) for e in self.elements)
        if not elements:
            raise InputError("a POVM needs at least one element")
        shape = elements[0].shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise InputError(f"POVM elements must be square matrices, got shape {shape}")
        if any(e.shape != shape for e in elements):
            raise InputError("POVM elements have inconsistent shapes")
        for e in elements:
            e.setflags(write=False)
        labels = tuple(self.labels) if self.labels else tuple(range(len(elements)))
        if len(labels) != len(elements):
            raise InputError("number of labels does not match number of elements")
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def __len__(self):
        return len(self.elements)

    def __getitem__(self, label):
        return self.elements[self.labels.index(label)]


@dataclass(frozen=True)
class PovmReport:
    hermiticity: float
    min_eigenvalue: float
    completeness: float
    tol: float = DEFAULT_TOL

    @property
    def ok(self) -> bool:
        return (
            self.hermiticity <= self.tol
            and self.min_eigenvalue >= -self.tol
            and self.completeness <= self.tol
        )


def validate_povm(povm: Povm, tol: float = DEFAULT_TOL) -> PovmReport:
    """Report Hermiticity, positivity and completeness deviations of ``povm``."""
    herm = max(hermiticity_error(e) for e in povm.elements)
    lam = min(min_eigenvalue(e) for e in povm.elements)
    total = sum(povm.elements)
    comp = float(np.max(np.abs(total - np.eye(povm.dim))))
    return PovmReport(herm, lam, comp, tol)


def purification_vector(rho: QuantumState | np.ndarray) -> np.ndarray:
    """Spectral purification ``sum_k sqrt(l_k) |v_k>|k>`` on system (x) ancilla.

    Eigenvalues are taken in decreasing order, so a pure input maps to
    ``|v> (x) |0>``.
    """
    mat = rho.matrix if isinstance(rho, QuantumState) else np.asarray(rho, dtype=complex)
    lam = min_eigenvalue(mat)
    if lam < -DEFAULT_TOL:
        raise InputError(f"cannot purify a non-positive operator (eigenvalue {lam:.3g})")
    w, v = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    order = np.argsort(w)[::-1]
    w = np.clip(w[order], 0.0, None)
    v = v[:, order]
    d = mat.shape[0]
    psi = np.zeros(d * d, dtype=complex)
    for k in range(d):
        if w[k] > 0:
            psi += math.sqrt(w[k]) * np.kron(v[:, k], np.eye(d)[k])
    return psi / np.linalg.norm(psi)


def purify(rho: QuantumState | np.ndarray) -> QuantumState:
    psi = purification_vector(rho)
    return QuantumState(np.outer(psi, psi.conj()))


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> QuantumState:
    """Random density operator from the Ginibre ensemble."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return QuantumState(rho / np.trace(rho).real)

"""Finite probability distributions and the entropy measures built on them.

All logarithms are base 2, so every entropy is reported in bits.  Inputs are
validated at construction and rejected when they are not normalized; nothing
is silently renormalized.

The module also carries a tiny Born-rule evaluator for finite-dimensional
operators (dimension at most 8).  It exists to compute joint distributions of
measurement outcome and classical side information for small worked examples,
such as different decompositions of one POVM into projective measurements.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from truerand.errors import DomainError

NORM_TOL = 1e-12
MAX_OPERATOR_DIM = 8


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FiniteDistribution:
    """Probability vector over an ordered, finite alphabet.

    ``tol`` widens the normalization check; model code uses it to admit a
    documented amount of truncated mass (e.g. a cut-off Poisson tail).
    """

    labels: tuple
    probs: np.ndarray
    tol: float = field(default=NORM_TOL, repr=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        probs = _frozen(self.probs)
        if probs.ndim != 1 or len(labels) != probs.shape[0]:
            raise DomainError("labels and probs must have the same length")
        if len(set(labels)) != len(labels):
            raise DomainError("labels must be unique")
        if probs.size and (not np.all(np.isfinite(probs)) or probs.min() < 0):
            raise DomainError("probabilities must be finite and non-negative")
        if probs.size and abs(probs.sum() - 1.0) > self.tol:
            raise DomainError(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_mapping(cls, mapping: dict, tol: float = NORM_TOL) -> FiniteDistribution:
        return cls(tuple(mapping), np.fromiter(mapping.values(), float), tol)

    @classmethod
    def uniform(cls, labels: Sequence[Hashable]) -> FiniteDistribution:
        labels = tuple(labels)
        return cls(labels, np.full(len(labels), 1.0 / len(labels)))

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, label) -> float:
        return float(self.probs[self.labels.index(label)])

    def as_dict(self) -> dict:
        return dict(zip(self.labels, self.probs.tolist()))


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Joint distribution of an outcome X and side information C.

    ``probs[i, j]`` is P(x_labels[i], c_labels[j]).
    """

    x_labels: tuple
    c_labels: tuple
    probs: np.ndarray
    tol: float = field(default=NORM_TOL, repr=False)

    def __post_init__(self):
        x_labels, c_labels = tuple(self.x_labels), tuple(self.c_labels)
        probs = _frozen(self.probs)
        if probs.shape != (len(x_labels), len(c_labels)):
            raise DomainError(
                f"probs has shape {probs.shape}, expected "
                f"({len(x_labels)}, {len(c_labels)})"
            )
        if len(set(x_labels)) != len(x_labels) or len(set(c_labels)) != len(c_labels):
            raise DomainError("labels must be unique")
        if probs.size and (not np.all(np.isfinite(probs)) or probs.min() < 0):
            raise DomainError("probabilities must be finite and non-negative")
        if probs.size and abs(probs.sum() - 1.0) > self.tol:
            raise DomainError(f"joint probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "x_labels", x_labels)
        object.__setattr__(self, "c_labels", c_labels)
        object.__setattr__(self, "probs", probs)

    def marginal_x(self) -> FiniteDistribution:
        return FiniteDistribution(self.x_labels, self.probs.sum(axis=1), self.tol)

    def marginal_c(self) -> FiniteDistribution:
        return FiniteDistribution(self.c_labels, self.probs.sum(axis=0), self.tol)

    def merge_side_info(self, groups: Sequence[Sequence[Hashable]]) -> JointDistribution:
        """Coarse-grain C by summing the columns of each group into one symbol.

        Every c label must appear in exactly one group; the new labels are the
        groups as tuples.
        """
        index = {c: j for j, c in enumerate(self.c_labels)}
        seen = [c for g in groups for c in g]
        if sorted(map(index.__getitem__, seen)) != list(range(len(self.c_labels))):
            raise DomainError("groups must partition the side-information labels")
        cols = [self.probs[:, [index[c] for c in g]].sum(axis=1) for g in groups]
        return JointDistribution(
            self.x_labels, tuple(tuple(g) for g in groups), np.stack(cols, axis=1), self.tol
        )


def _check_nonempty(probs: np.ndarray) -> None:
    if probs.size == 0:
        raise DomainError("distribution is empty")


def min_entropy(dist: FiniteDistribution) -> float:
    """-log2 of the largest probability."""
    _check_nonempty(dist.probs)
    return max(0.0, -float(np.log2(dist.probs.max())))


def guessing_probability(joint: JointDistribution) -> float:
    """Optimal probability of guessing X when C is known.

    Equals sum_c max_x P(x, c); columns with zero weight contribute nothing.
    """
    _check_nonempty(joint.probs)
    return float(joint.probs.max(axis=0).sum())


def cond_min_entropy(joint: JointDistribution) -> float:
    """-log2 of the optimal guessing probability of X given C."""
    return max(0.0, -float(np.log2(guessing_probability(joint))))


def _plogp(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = -p[nz] * np.log2(p[nz])
    return out


def shannon_entropy(dist: FiniteDistribution) -> float:
    _check_nonempty(dist.probs)
    return float(_plogp(dist.probs).sum())


def cond_shannon(joint: JointDistribution) -> float:
    """H(X|C) = H(XC) - H(C)."""
    _check_nonempty(joint.probs)
    h = float(_plogp(joint.probs).sum() - _plogp(joint.probs.sum(axis=0)).sum())
    return max(0.0, h)


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"binary entropy needs p in [0, 1], got {p}")
    return float(_plogp(np.array([p, 1.0 - p])).sum())


def l1_distance(p: FiniteDistribution, q: FiniteDistribution) -> float:
    """Trace distance 1/2 * sum_x |p(x) - q(x)| between two distributions."""
    if p.labels != q.labels:
        raise DomainError("distributions are defined over different alphabets")
    return 0.5 * float(np.abs(p.probs - q.probs).sum())


# --- small-dimension Born rule ---------------------------------------------


@dataclass(frozen=True, eq=False)
class SmallOperator:
    """Complex square matrix of dimension at most 8."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError("operator must be a square matrix")
        if not 1 <= m.shape[0] <= MAX_OPERATOR_DIM:
            raise DomainError(f"operator dimension must be in 1..{MAX_OPERATOR_DIM}")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def projector(cls, vector: Sequence[complex]) -> SmallOperator:
        v = np.asarray(vector, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    def kron(self, other: SmallOperator) -> SmallOperator:
        return SmallOperator(np.kron(self.entries, other.entries))


def _is_hermitian(m: np.ndarray) -> bool:
    return bool(np.allclose(m, m.conj().T, rtol=0, atol=NORM_TOL))


def _is_psd(m: np.ndarray) -> bool:
    return _is_hermitian(m) and float(np.linalg.eigvalsh(m).min()) >= -NORM_TOL


def _check_state(state: SmallOperator) -> None:
    m = state.entries
    if not _is_hermitian(m):
        raise DomainError("state is not Hermitian")
    if not _is_psd(m):
        raise DomainError("state is not positive semidefinite")
    if abs(np.trace(m) - 1) > NORM_TOL:
        raise DomainError(f"state trace is {np.trace(m).real!r}, not 1")


def born_joint(
    state: SmallOperator,
    noise_ops: Sequence[SmallOperator],
    projectors: Sequence[SmallOperator],
    x_labels: Sequence[Hashable] | None = None,
    c_labels: Sequence[Hashable] | None = None,
) -> JointDistribution:
    """Joint distribution P(x, c) = tr(Pi^x E^c rho E^c†).

    ``noise_ops`` is a generalized measurement (sum of E†E is the identity)
    whose outcome is the side information; ``projectors`` is the device
    measurement.
    """
    _check_state(state)
    dim = state.dim
    ident = np.eye(dim)
    for op in (*noise_ops, *projectors):
        if op.dim != dim:
            raise DomainError("all operators must share the state's dimension")
    completeness = sum(e.entries.conj().T @ e.entries for e in noise_ops)
    if not noise_ops or not np.allclose(completeness, ident, rtol=0, atol=NORM_TOL):
        raise DomainError("noise operators violate sum_c E_c† E_c = id")
    for p in projectors:
        if not _is_psd(p.entries):
            raise DomainError("measurement operator is not positive semidefinite")
    total = sum(p.entries for p in projectors)
    if not projectors or not np.allclose(total, ident, rtol=0, atol=NORM_TOL):
        raise DomainError("measurement operators do not sum to the identity")

    rho = state.entries
    probs = np.empty((len(projectors), len(noise_ops)))
    for j, e in enumerate(noise_ops):
        post = e.entries @ rho @ e.entries.conj().T
        for i, p in enumerate(projectors):
            probs[i, j] = np.trace(p.entries @ post).real
    probs[np.abs(probs) < NORM_TOL * NORM_TOL] = 0.0
    probs = np.clip(probs, 0.0, None)
    return JointDistribution(
        tuple(x_labels) if x_labels is not None else tuple(range(len(projectors))),
        tuple(c_labels) if c_labels is not None else tuple(range(len(noise_ops))),
        probs,
    )


def decomposition_joint(
    psi: Sequence[complex],
    decomposition: Sequence[Sequence[SmallOperator]],
    weights: Sequence[float],
) -> JointDistribution:
    """Outcome/side-information table for a POVM realized as a random choice
    of projective measurements.

    Measurement ``z`` (outcome operators ``decomposition[z]``) is applied with
    probability ``weights[z]`` and the choice ``z`` is the side information.
    The choice is encoded on an ancilla prepared in ``sum_z w_z |z><z|``; the
    device measures ``sum_z P^z_x ⊗ |z><z|`` and the side information is read
    out by ``id ⊗ |z><z|``.
    """
    weights = np.asarray(weights, dtype=float)
    k = len(decomposition)
    if k != len(weights) or abs(weights.sum() - 1) > NORM_TOL or weights.min() < 0:
        raise DomainError("weights must be a probability vector, one per measurement")
    n_out = len(decomposition[0])
    if any(len(d) != n_out for d in decomposition):
        raise DomainError("every measurement in the decomposition needs the same outcomes")
    system = SmallOperator.projector(psi)
    ancilla = SmallOperator(np.diag(weights))
    flags = [SmallOperator(np.diag(np.eye(k)[z])) for z in range(k)]
    sys_id = SmallOperator(np.eye(system.dim))
    projectors = [
        SmallOperator(sum(decomposition[z][x].kron(flags[z]).entries for z in range(k)))
        for x in range(n_out)
    ]
    noise = [sys_id.kron(flags[z]) for z in range(k)]
    return born_joint(system.kron(ancilla), noise, projectors, c_labels=range(1, k + 1))

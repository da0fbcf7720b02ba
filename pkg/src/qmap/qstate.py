"""Dense linear algebra over labeled multipartite quantum systems.

States, unitaries, partial traces, entropic quantities and trace norms.
All values are immutable after construction and every operation is a pure
function, so everything here is safe to share across threads.

Entropies are in bits throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-10
TRACE_TOL = 1e-10
UNITARY_TOL = 1e-10
EIG_ZERO_TOL = 1e-12


class LabelError(ValueError):
    """Unknown, duplicate or overlapping subsystem labels."""


class DimensionError(ValueError):
    """Operator dimensions incompatible with the layout."""


class StateValidationError(ValueError):
    """Matrix fails the density-matrix (or unitary) invariants."""


@dataclass(frozen=True)
class SystemLayout:
    """Ordered, labeled tensor factorization of a Hilbert space."""

    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        factors = tuple((str(lab), int(d)) for lab, d in self.factors)
        object.__setattr__(self, "factors", factors)
        labels = [lab for lab, _ in factors]
        if len(set(labels)) != len(labels):
            raise LabelError(f"duplicate labels in layout: {labels}")
        if any(d < 1 for _, d in factors):
            raise DimensionError("all factor dimensions must be >= 1")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=object))

    def dim_of(self, labels: Iterable[str]) -> int:
        wanted = set(labels)
        self._check_known(wanted)
        return int(np.prod([d for lab, d in self.factors if lab in wanted], dtype=object))

    def index(self, label: str) -> int:
        for i, (lab, _) in enumerate(self.factors):
            if lab == label:
                return i
        raise LabelError(f"unknown label {label!r}; layout has {self.labels}")

    def _check_known(self, labels: Iterable[str]) -> None:
        unknown = set(labels) - set(self.labels)
        if unknown:
            raise LabelError(f"unknown labels {sorted(unknown)}; layout has {self.labels}")

    def power(self, n: int) -> "SystemLayout":
        """Layout of the n-copy space, copy-major: (A,B)^2 -> A_1 B_1 A_2 B_2."""
        if n < 1:
            raise ValueError("n must be >= 1")
        return SystemLayout(tuple(
            (f"{lab}_{i}", d) for i in range(1, n + 1) for lab, d in self.factors
        ))

    @staticmethod
    def copy_labels(label: str, n: int) -> tuple[str, ...]:
        """Labels of the n copies of a single factor, matching `power`."""
        return tuple(f"{label}_{i}" for i in range(1, n + 1))


def _as_square_complex(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    return m


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian PSD matrix bound to a layout.

    Normalized states have unit trace; `subnormalized=True` permits any
    trace in [0, 1] (used by the gentle-measurement machinery).
    """

    matrix: np.ndarray
    layout: SystemLayout
    subnormalized: bool = False

    def __post_init__(self):
        m = _as_square_complex(self.matrix)
        if m.shape[0] != self.layout.dim:
            raise DimensionError(
                f"matrix dim {m.shape[0]} != layout dim {self.layout.dim}")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise StateValidationError("matrix is not Hermitian within tolerance")
        min_eig = float(np.min(np.linalg.eigvalsh((m + m.conj().T) / 2)))
        if min_eig < -PSD_TOL:
            raise StateValidationError(f"matrix is not PSD: min eigenvalue {min_eig}")
        tr = float(np.real(np.trace(m)))
        if self.subnormalized:
            if not (-TRACE_TOL <= tr <= 1 + TRACE_TOL):
                raise StateValidationError(f"subnormalized trace {tr} outside [0, 1]")
        elif abs(tr - 1) > TRACE_TOL:
            raise StateValidationError(f"trace {tr} is not 1 within tolerance")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.layout.dim


@dataclass(frozen=True)
class UnitaryMatrix:
    """Unitary bound to a layout (U^dag U = I within tolerance)."""

    matrix: np.ndarray
    layout: SystemLayout

    def __post_init__(self):
        m = _as_square_complex(self.matrix)
        if m.shape[0] != self.layout.dim:
            raise DimensionError(
                f"matrix dim {m.shape[0]} != layout dim {self.layout.dim}")
        dev = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))
        if dev > UNITARY_TOL:
            raise StateValidationError(f"not unitary: max |U^dag U - I| = {dev}")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


def maximally_mixed(layout: SystemLayout) -> DensityMatrix:
    d = layout.dim
    return DensityMatrix(np.eye(d) / d, layout)


def tensor(a: DensityMatrix, b: DensityMatrix) -> DensityMatrix:
    """Kronecker product with concatenated layouts."""
    overlap = set(a.layout.labels) & set(b.layout.labels)
    if overlap:
        raise LabelError(f"label collision in tensor product: {sorted(overlap)}")
    layout = SystemLayout(a.layout.factors + b.layout.factors)
    return DensityMatrix(np.kron(a.matrix, b.matrix), layout,
                         subnormalized=a.subnormalized or b.subnormalized)


def tensor_power(s: DensityMatrix, n: int) -> DensityMatrix:
    """n-fold tensor product of a state, with copy-indexed labels."""
    if n < 1:
        raise ValueError("n must be >= 1")
    m = s.matrix
    for _ in range(n - 1):
        m = np.kron(m, s.matrix)
    return DensityMatrix(m, s.layout.power(n), subnormalized=s.subnormalized)


def _basis_permutation(layout: SystemLayout, new_order: Sequence[str]) -> np.ndarray:
    """Flat index of each basis state of the reordered layout in the original one."""
    if sorted(new_order) != sorted(layout.labels):
        raise LabelError(f"{new_order} is not a permutation of {layout.labels}")
    dims = np.array(layout.dims)
    k = len(dims)
    positions = [layout.index(lab) for lab in new_order]
    grid = np.indices([int(dims[p]) for p in positions]).reshape(k, -1)
    strides = np.ones(k, dtype=np.int64)
    for i in range(k - 2, -1, -1):
        strides[i] = strides[i + 1] * dims[i + 1]
    orig = np.zeros(grid.shape[1], dtype=np.int64)
    for axis, p in enumerate(positions):
        orig += grid[axis] * strides[p]
    return orig


def permute_factors(s: DensityMatrix, new_order: Sequence[str]) -> DensityMatrix:
    """Same state on the layout with factors reordered as `new_order`."""
    idx = _basis_permutation(s.layout, new_order)
    layout = SystemLayout(tuple(
        (lab, s.layout.dims[s.layout.index(lab)]) for lab in new_order))
    return DensityMatrix(s.matrix[np.ix_(idx, idx)], layout,
                         subnormalized=s.subnormalized)


def embed_operator(op, op_labels: Sequence[str], layout: SystemLayout) -> np.ndarray:
    """Extend an operator on the `op_labels` factors by identity on the rest.

    `op` acts on the tensor product of the named factors in the given order;
    the result acts on the full layout in its own factor order.
    """
    op = _as_square_complex(op)
    layout._check_known(op_labels)
    if len(set(op_labels)) != len(op_labels):
        raise LabelError(f"repeated labels {list(op_labels)}")
    d_sel = layout.dim_of(op_labels)
    if op.shape[0] != d_sel:
        raise DimensionError(f"operator dim {op.shape[0]} != selected dim {d_sel}")
    rest = [lab for lab in layout.labels if lab not in set(op_labels)]
    d_rest = layout.dim_of(rest)
    big = np.kron(op, np.eye(d_rest))
    idx = _basis_permutation(layout, list(op_labels) + rest)
    full = np.empty((layout.dim, layout.dim), dtype=complex)
    full[np.ix_(idx, idx)] = big
    return full


def apply_unitary(s: DensityMatrix, u, on: Sequence[str]) -> DensityMatrix:
    """Conjugate the state by a unitary acting on the `on` factors.

    `u` may be a UnitaryMatrix or a bare matrix; `on` fixes the factor order
    the unitary is written in.
    """
    um = u.matrix if isinstance(u, UnitaryMatrix) else _as_square_complex(u)
    full = embed_operator(um, on, s.layout)
    return DensityMatrix(full @ s.matrix @ full.conj().T, s.layout,
                         subnormalized=s.subnormalized)


def partial_trace(s: DensityMatrix, keep: Iterable[str]) -> DensityMatrix:
    """Reduced state on the kept factors, original factor order preserved."""
    keep = set(keep)
    s.layout._check_known(keep)
    factors = s.layout.factors
    dims = s.layout.dims
    k = len(dims)
    t = s.matrix.reshape(dims + dims)
    # trace out dropped axes back-to-front so axis numbers stay valid
    remaining = list(range(k))
    for i in range(k - 1, -1, -1):
        if factors[i][0] not in keep:
            pos = remaining.index(i)
            t = np.trace(t, axis1=pos, axis2=pos + len(remaining))
            remaining.pop(pos)
    kept_factors = tuple(f for f in factors if f[0] in keep)
    d = int(np.prod([d for _, d in kept_factors], dtype=object)) if kept_factors else 1
    layout = SystemLayout(kept_factors) if kept_factors else SystemLayout(
        (("_trivial", 1),))
    return DensityMatrix(t.reshape(d, d), layout, subnormalized=s.subnormalized)


def _clipped_eigenvalues(s: DensityMatrix) -> np.ndarray:
    m = (s.matrix + s.matrix.conj().T) / 2
    eig = np.linalg.eigvalsh(m)
    if np.min(eig) < -PSD_TOL:
        raise StateValidationError(f"non-PSD beyond tolerance: min eigenvalue {np.min(eig)}")
    return np.clip(eig, 0.0, None)


def entropy(s: DensityMatrix) -> float:
    """von Neumann entropy in bits."""
    if s.subnormalized:
        raise StateValidationError("entropy of a subnormalized state is undefined here")
    eig = _clipped_eigenvalues(s)
    eig = eig[eig > EIG_ZERO_TOL]
    return float(-np.sum(eig * np.log2(eig)))


def conditional_entropy(s: DensityMatrix, a: Iterable[str], b: Iterable[str]) -> float:
    """S(A|B) = S(AB) - S(B) in bits."""
    a, b = set(a), set(b)
    if a & b:
        raise LabelError(f"overlapping label sets: {sorted(a & b)}")
    s_ab = entropy(partial_trace(s, a | b))
    s_b = entropy(partial_trace(s, b)) if b else 0.0
    return s_ab - s_b


def mutual_information(s: DensityMatrix, a: Iterable[str], b: Iterable[str]) -> float:
    """I(A:B) = S(A) - S(A|B) in bits."""
    a, b = set(a), set(b)
    if a & b:
        raise LabelError(f"overlapping label sets: {sorted(a & b)}")
    return entropy(partial_trace(s, a)) - conditional_entropy(s, a, b)


def conditional_mutual_information(s: DensityMatrix, a: Iterable[str],
                                   b: Iterable[str], c: Iterable[str]) -> float:
    """I(A:B|C) = S(A|C) - S(A|BC) in bits."""
    a, b, c = set(a), set(b), set(c)
    for x, y in ((a, b), (a, c), (b, c)):
        if x & y:
            raise LabelError(f"overlapping label sets: {sorted(x & y)}")
    return conditional_entropy(s, a, c) - conditional_entropy(s, a, b | c)


def trace_norm(x) -> float:
    """Sum of singular values, ||X||_1."""
    x = _as_square_complex(x)
    return float(np.sum(np.linalg.svd(x, compute_uv=False)))


def trace_distance(a, b) -> float:
    """(1/2)||a - b||_1 between two states or matrices of equal dimension."""
    ma = a.matrix if isinstance(a, DensityMatrix) else _as_square_complex(a)
    mb = b.matrix if isinstance(b, DensityMatrix) else _as_square_complex(b)
    if ma.shape != mb.shape:
        raise DimensionError(f"dimension mismatch: {ma.shape} vs {mb.shape}")
    return 0.5 * trace_norm(ma - mb)


def random_density(layout: SystemLayout, rank: int, seed) -> DensityMatrix:
    """Random rank-`rank` state from a normalized Ginibre square; deterministic in `seed`."""
    d = layout.dim
    if not 1 <= rank <= d:
        raise ValueError(f"rank must be in [1, {d}], got {rank}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    m = g @ g.conj().T
    return DensityMatrix(m / np.real(np.trace(m)), layout)


def pure_state(vector, layout: SystemLayout) -> DensityMatrix:
    """Density matrix |v><v| of a (normalized) state vector."""
    v = np.asarray(vector, dtype=complex).reshape(-1)
    if v.shape[0] != layout.dim:
        raise DimensionError(f"vector dim {v.shape[0]} != layout dim {layout.dim}")
    v = v / np.linalg.norm(v)
    return DensityMatrix(np.outer(v, v.conj()), layout)

"""Desk-scale realizations of the coding constructions.

Haar and generalized-Pauli tensor-product unitary families, distributed
randomization, pretty-good-measurement and sequential decoders, the gentle
sequential-measurement bound, full codes with measured decoding error and
leakage, and typical projectors.

RNG contract: a master seed derives one independent stream per
(sender, index, copy) via a counter construction, so reports are
bit-reproducible independent of execution order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from .qstate import (
    DensityMatrix,
    DimensionError,
    StateValidationError,
    SystemLayout,
    apply_unitary,
    embed_operator,
    maximally_mixed,
    partial_trace,
    permute_factors,
    tensor,
    tensor_power,
    trace_norm,
)

POVM_SUM_TOL = 1e-8
# matches the completeness tolerance; inverse square roots in the PGM
# amplify eigenvalue noise past the 1e-10 state-level PSD tolerance
POVM_PSD_TOL = 1e-8
PINV_CUTOFF = 1e-10
DIM_BUDGET = 4096


class BudgetError(ValueError):
    """Requested computation exceeds the dense-matrix dimension budget."""


def check_dim_budget(dim: int, max_dim: int = DIM_BUDGET) -> None:
    if dim > max_dim:
        raise BudgetError(f"total dimension {dim} exceeds budget {max_dim}")


def derived_rng(master_seed: int, *path: int) -> np.random.Generator:
    """Independent stream for a counter path under a master seed."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(path)))


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via a complex Ginibre matrix and QR with
    phase normalization of the triangular factor's diagonal."""
    if d < 1:
        raise ValueError("d must be >= 1")
    g = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / math.sqrt(2)
    q, r = np.linalg.qr(g)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def weyl_unitaries(d: int) -> list[np.ndarray]:
    """Generalized Pauli (Weyl-Heisenberg) unitaries X^a Z^b, a,b in [d]."""
    omega = np.exp(2j * np.pi / d)
    x = np.roll(np.eye(d), 1, axis=0)
    z = np.diag(omega ** np.arange(d))
    ops = []
    for a in range(d):
        for b in range(d):
            ops.append(np.linalg.matrix_power(x, a) @ np.linalg.matrix_power(z, b))
    return ops


@dataclass(frozen=True)
class UnitaryFamily:
    """Family of K tensor-product block unitaries on n copies of a d-dim system."""

    z: int
    n: int
    dim: int
    per_index: tuple[tuple[np.ndarray, ...], ...]  # K entries of n per-copy unitaries
    kind: str = "haar"
    seed: tuple[int, ...] | None = None

    def __post_init__(self):
        eye = np.eye(self.dim)
        for copies in self.per_index:
            if len(copies) != self.n:
                raise ValueError(f"each index needs {self.n} per-copy unitaries")
            for u in copies:
                if u.shape != (self.dim, self.dim):
                    raise DimensionError(f"per-copy unitary has shape {u.shape}")
                if np.max(np.abs(u.conj().T @ u - eye)) > 1e-10:
                    raise StateValidationError("family member is not unitary")

    @property
    def size(self) -> int:
        return len(self.per_index)

    def block(self, k: int) -> np.ndarray:
        """Realized block unitary: tensor product of the per-copy factors."""
        u = self.per_index[k][0]
        for v in self.per_index[k][1:]:
            u = np.kron(u, v)
        return u


def sample_family(z: int, n: int, K: int, d: int, rng) -> UnitaryFamily:
    """K independent Haar tensor-product unitaries.

    `rng` may be a Generator (factors drawn sequentially) or an integer
    master seed, in which case each (z, k, i) factor gets its own counter
    stream and the result is order-independent.
    """
    if K < 1 or n < 1:
        raise ValueError("K and n must be >= 1")
    seed = None
    if isinstance(rng, (int, np.integer)):
        seed = (int(rng), z)
        per_index = tuple(
            tuple(haar_unitary(d, derived_rng(rng, z, k, i)) for i in range(n))
            for k in range(K))
    else:
        per_index = tuple(
            tuple(haar_unitary(d, rng) for _ in range(n)) for _ in range(K))
    return UnitaryFamily(z, n, d, per_index, kind="haar", seed=seed)


def pauli_family(z: int, n: int, d: int, size: int | None = None) -> UnitaryFamily:
    """Deterministic Weyl-Heisenberg family; the full size (d^2)^n realizes
    an exact twirl to the maximally mixed state."""
    singles = weyl_unitaries(d)
    full = len(singles) ** n
    if size is None:
        size = full
    if not 1 <= size <= full:
        raise ValueError(f"size must be in [1, {full}]")
    per_index = []
    for combo in product(range(len(singles)), repeat=n):
        if len(per_index) == size:
            break
        per_index.append(tuple(singles[c] for c in combo))
    return UnitaryFamily(z, n, d, tuple(per_index), kind="pauli")


def identity_family(z: int, n: int, d: int, size: int = 1) -> UnitaryFamily:
    eye = np.eye(d)
    return UnitaryFamily(z, n, d, tuple(tuple(eye for _ in range(n))
                                        for _ in range(size)), kind="identity")


def _random_unitary_channel(rho: DensityMatrix, family: UnitaryFamily,
                            on: Sequence[str]) -> DensityMatrix:
    acc = np.zeros_like(rho.matrix)
    for k in range(family.size):
        acc = acc + apply_unitary(rho, family.block(k), on).matrix
    return DensityMatrix(acc / family.size, rho.layout, subnormalized=rho.subnormalized)


def randomize(rho_n: DensityMatrix, sender_groups: Sequence[Sequence[str]],
              w_labels: Sequence[str], families: Sequence[UnitaryFamily]
              ) -> tuple[DensityMatrix, float]:
    """Apply the per-sender uniform unitary mixtures and measure the full
    trace-norm distance to (maximally mixed on the senders) x (W marginal)."""
    check_dim_budget(rho_n.dim)
    if len(families) != len(sender_groups):
        raise ValueError("one family per sender group required")
    out = rho_n
    for group, fam in zip(sender_groups, families):
        if fam.dim ** fam.n != rho_n.layout.dim_of(group):
            raise DimensionError(
                f"family dim {fam.dim}^{fam.n} does not match group {tuple(group)}")
        out = _random_unitary_channel(out, fam, list(group))
    all_sender = [lab for g in sender_groups for lab in g]
    sender_layout = SystemLayout(tuple(
        (lab, rho_n.layout.dims[rho_n.layout.index(lab)]) for lab in all_sender))
    target = tensor(maximally_mixed(sender_layout), partial_trace(rho_n, w_labels))
    target = permute_factors(target, [lab for lab in rho_n.layout.labels
                                      if lab in set(all_sender) | set(w_labels)])
    reduced = partial_trace(out, set(all_sender) | set(w_labels))
    distance = trace_norm(reduced.matrix - target.matrix)
    return out, float(distance)


@dataclass(frozen=True)
class Povm:
    """Positive operators summing to the identity within tolerance."""

    elements: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.elements:
            raise ValueError("POVM needs at least one element")
        d = self.elements[0].shape[0]
        total = np.zeros((d, d), dtype=complex)
        for el in self.elements:
            if el.shape != (d, d):
                raise DimensionError("POVM elements must share one dimension")
            if np.min(np.linalg.eigvalsh((el + el.conj().T) / 2)) < -POVM_PSD_TOL:
                raise StateValidationError("POVM element is not PSD within tolerance")
            total = total + el
        dev = np.max(np.abs(total - np.eye(d)))
        if dev > POVM_SUM_TOL:
            raise StateValidationError(
                f"POVM completeness failure: max |sum - I| = {dev}")

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def __len__(self) -> int:
        return len(self.elements)


def _psd_power(m: np.ndarray, power: float, cutoff: float | None = None) -> np.ndarray:
    eig, vec = np.linalg.eigh((m + m.conj().T) / 2)
    eig = np.clip(eig, 0.0, None)
    out = np.zeros_like(eig)
    if cutoff is not None:
        support = eig > cutoff * (eig.max() if eig.size else 1.0)
    else:
        support = eig > 0
    out[support] = eig[support] ** power
    return (vec * out) @ vec.conj().T


def pgm_decoder(states: Sequence[DensityMatrix | np.ndarray],
                priors: Sequence[float], fold_completion: bool = False) -> Povm:
    """Square-root measurement for a state ensemble.

    Elements are rhobar^{-1/2} p_k rho_k rhobar^{-1/2} with the inverse
    square root taken on rhobar's support; the null-space projector is
    appended as a completion element, or folded uniformly into the K
    elements when `fold_completion` (which keeps exactly K outcomes).
    """
    mats = [s.matrix if isinstance(s, DensityMatrix) else np.asarray(s, dtype=complex)
            for s in states]
    priors = [float(p) for p in priors]
    if len(mats) != len(priors):
        raise ValueError("need one prior per state")
    if abs(sum(priors) - 1) > 1e-9:
        raise ValueError(f"priors must sum to 1, got {sum(priors)}")
    d = mats[0].shape[0]
    avg = sum(p * m for p, m in zip(priors, mats))
    if np.max(np.abs(avg)) == 0:
        raise ValueError("degenerate ensemble: average state is zero")
    inv_sqrt = _psd_power(avg, -0.5, cutoff=PINV_CUTOFF)
    elements = [inv_sqrt @ (p * m) @ inv_sqrt for p, m in zip(priors, mats)]
    completion = np.eye(d) - sum(elements)
    if fold_completion:
        elements = [el + completion / len(elements) for el in elements]
        return Povm(tuple(elements))
    if np.max(np.abs(completion)) > POVM_SUM_TOL:
        elements.append(completion)
    return Povm(tuple(elements))


def povm_success(povm: Povm, states: Sequence[DensityMatrix | np.ndarray],
                 priors: Sequence[float] | None = None) -> float:
    """Average probability of outcome k on state k (extra POVM elements
    beyond the ensemble count never fire correctly)."""
    mats = [s.matrix if isinstance(s, DensityMatrix) else np.asarray(s, dtype=complex)
            for s in states]
    if priors is None:
        priors = [1.0 / len(mats)] * len(mats)
    return float(np.real(sum(
        p * np.trace(povm.elements[k] @ m) for k, (p, m) in enumerate(zip(priors, mats)))))


def sequential_decoder(rho: DensityMatrix, sender_groups: Sequence[Sequence[str]],
                       v_labels: Sequence[str], families: Sequence[UnitaryFamily]
                       ) -> tuple[Povm, float]:
    """Gentle successive decoder for distributed encodings.

    Stage z discriminates the encodings of sender z on the marginal holding
    senders 1..z and the receiver system, via a pretty-good measurement.
    The stage operators are chained with their gentle complements over all
    outcome patterns, conjugated by the encoding unitaries, and summed into
    one POVM element per index tuple. Returns the POVM and the average
    success probability on the encoded states.
    """
    check_dim_budget(rho.dim)
    z_count = len(sender_groups)
    if len(families) != z_count:
        raise ValueError("one family per sender required")
    layout = rho.layout
    v_labels = list(v_labels)

    # per-stage: squared/gentle operators on the stage marginal, back-rotated
    stage_ops: list[list[tuple[np.ndarray, np.ndarray]]] = []
    stage_labels: list[list[str]] = []
    for z in range(z_count):
        labels = [lab for g in sender_groups[: z + 1] for lab in g] + v_labels
        marginal = partial_trace(rho, labels)
        order = list(marginal.layout.labels)
        group = list(sender_groups[z])
        fam = families[z]
        encoded = [apply_unitary(marginal, fam.block(k), group)
                   for k in range(fam.size)]
        povm = pgm_decoder(encoded, [1.0 / fam.size] * fam.size, fold_completion=True)
        ops = []
        for k in range(fam.size):
            u_full = embed_operator(fam.block(k), group, marginal.layout)
            upsilon = u_full.conj().T @ _psd_power(povm.elements[k], 0.5) @ u_full
            sq = upsilon @ upsilon
            eye = np.eye(sq.shape[0])
            gentle = upsilon @ _psd_power(eye - sq, 0.5)
            ops.append((sq, gentle))
        stage_ops.append(ops)
        stage_labels.append(order)

    rho_mat = rho.matrix
    sizes = [fam.size for fam in families]
    elements = []
    success_terms = []
    for k_tuple in product(*[range(s) for s in sizes]):
        lam = np.zeros((rho.dim, rho.dim), dtype=complex)
        for bits in product((0, 1), repeat=z_count):
            chain = np.eye(rho.dim, dtype=complex)
            for z in range(z_count):  # stage 1 applied first (rightmost)
                op = stage_ops[z][k_tuple[z]][bits[z]]
                chain = embed_operator(op, stage_labels[z], layout) @ chain
            lam = lam + chain.conj().T @ chain
        u_full = np.eye(rho.dim, dtype=complex)
        for z in range(z_count):
            u_full = u_full @ embed_operator(
                families[z].block(k_tuple[z]), list(sender_groups[z]), layout)
        lam = u_full @ lam @ u_full.conj().T
        elements.append(lam)
        rho_k = u_full @ rho_mat @ u_full.conj().T
        success_terms.append(float(np.real(np.trace(lam @ rho_k))))
    povm = Povm(tuple(elements))
    return povm, float(np.mean(success_terms))


@dataclass(frozen=True)
class UnionBoundResult:
    lhs: float
    rhs: float
    lambda_hat_trace: float
    chain_trace: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 1e-9


def union_bound_check(lambdas: Sequence[np.ndarray], rho) -> UnionBoundResult:
    """Gentle sequential-measurement bound for operators 0 <= L_j <= I.

    Computes Tr[rho] - Tr[Lhat rho] via the explicit outcome-pattern sum,
    the bound 2 sqrt(sum_j Tr[(I - L_j) rho]), and cross-validates against
    the ancilla-chain evaluation. Raises if they disagree beyond 1e-10 or
    the bound fails beyond 1e-9.
    """
    rho_mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    d = rho_mat.shape[0]
    mats = [np.asarray(l, dtype=complex) for l in lambdas]
    for l in mats:
        eig = np.linalg.eigvalsh((l + l.conj().T) / 2)
        if eig.min() < -1e-10 or eig.max() > 1 + 1e-10:
            raise StateValidationError("operator outside [0, I]")
    # outcome-pattern sum
    pieces = []
    for l in mats:
        sq = _psd_power(l, 0.5)
        pieces.append((l, sq @ _psd_power(np.eye(d) - l, 0.5)))
    lam_hat = np.zeros((d, d), dtype=complex)
    for bits in product((0, 1), repeat=len(mats)):
        chain = np.eye(d, dtype=complex)
        for j, b in enumerate(bits):
            chain = pieces[j][b] @ chain
        lam_hat = lam_hat + chain.conj().T @ chain
    lam_hat_trace = float(np.real(np.trace(lam_hat @ rho_mat)))
    # ancilla chain: Pi_j = L_j (x) |0> + sqrt(L_j) sqrt(I - L_j) (x) |1>
    sigma = rho_mat
    for l, gentle in pieces:
        # Pi maps H -> H (x) M_j with the fresh qubit least significant
        pi = np.zeros((2 * d, d), dtype=complex)
        pi[0::2, :] = l
        pi[1::2, :] = gentle
        big = np.kron(pi, np.eye(sigma.shape[0] // d))
        sigma = big @ sigma @ big.conj().T
    chain_trace = float(np.real(np.trace(sigma)))
    if abs(chain_trace - lam_hat_trace) > 1e-10:
        raise AssertionError(
            f"chain evaluation {chain_trace} != closed form {lam_hat_trace}")
    tr_rho = float(np.real(np.trace(rho_mat)))
    lhs = tr_rho - lam_hat_trace
    rhs = 2 * math.sqrt(max(0.0, sum(
        float(np.real(np.trace((np.eye(d) - l) @ rho_mat))) for l in mats)))
    result = UnionBoundResult(lhs, rhs, lam_hat_trace, chain_trace)
    if not result.holds:
        raise AssertionError(f"union bound violated: lhs {lhs} > rhs {rhs}")
    return result


@dataclass(frozen=True)
class SimulationReport:
    """Per-trial samples with their means; bit-reproducible from the seed."""

    trials: int
    estimates: dict[str, float]
    samples: dict[str, tuple[float, ...]]
    master_seed: int | None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "trials": self.trials,
            "master_seed": self.master_seed,
            "estimates": dict(sorted(self.estimates.items())),
            "samples": {k: list(v) for k, v in sorted(self.samples.items())},
            "extra": self.extra,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(["trial_index", "metric_name", "value"])
        for name in sorted(self.samples):
            for i, v in enumerate(self.samples[name]):
                writer.writerow([i, name, repr(v)])
        return buf.getvalue()


def _mean_estimates(samples: dict[str, tuple[float, ...]]) -> dict[str, float]:
    return {name: float(np.mean(vals)) for name, vals in samples.items()}


@dataclass(frozen=True)
class CodeSpec:
    """Full code: per-sender unitary families with block structure and a
    coarse-grained decoder, one POVM element per message tuple (a trailing
    completion element may follow them)."""

    n: int
    z_count: int
    sender_groups: tuple[tuple[str, ...], ...]  # n-copy labels per sender
    b_labels: tuple[str, ...]
    e_labels: tuple[str, ...]
    message_counts: tuple[int, ...]
    block_sizes: tuple[int, ...]
    families: tuple[UnitaryFamily, ...]
    decoder: Povm
    family_kind: str
    decoder_kind: str
    master_seed: int | None

    def __post_init__(self):
        for fam, m, l in zip(self.families, self.message_counts, self.block_sizes):
            if fam.size != m * l:
                raise ValueError(
                    f"family size {fam.size} != L*M = {l}*{m} for sender {fam.z}")

    @property
    def message_space(self) -> int:
        return int(np.prod(self.message_counts, dtype=object))


def _counts_from_rates(n: int, rates: Sequence[float]) -> list[int]:
    counts = []
    for r in rates:
        if r < -1e-12:
            raise ValueError(f"negative rate {r}")
        counts.append(max(1, 2 ** math.ceil(n * r - 1e-9)))
    return counts


def _flat_index(k_tuple: Sequence[int], sizes: Sequence[int]) -> int:
    idx = 0
    for k, s in zip(k_tuple, sizes):
        idx = idx * s + k
    return idx


def build_qmap_code(rho: DensityMatrix, senders: Sequence, b: Sequence[str],
                    e: Sequence[str], n: int, rates: Sequence[float],
                    splits: tuple[Sequence[float], Sequence[float]],
                    rng, family: str = "haar", decoder: str = "pgm",
                    max_dim: int = DIM_BUDGET) -> CodeSpec:
    """Construct a full code from a rate tuple and its (C, D) split.

    Message and block counts are 2^ceil(n R_z) and 2^ceil(n D_z); each
    message's encoding is the uniform mixture of its block of family
    unitaries, and the decoder coarse-grains the index-level decoder over
    blocks. The split must satisfy C_z = D_z + R_z within 1e-9.
    """
    groups = [(g,) if isinstance(g, str) else tuple(g) for g in senders]
    c_rates, d_rates = splits
    rates = [float(r) for r in rates]
    if len(c_rates) != len(groups) or len(d_rates) != len(groups):
        raise ValueError("splits must have one (C, D) pair per sender")
    for cz, dz, rz in zip(c_rates, d_rates, rates):
        if abs(cz - (dz + rz)) > 1e-9:
            raise ValueError(f"inconsistent split: C={cz} != D+R={dz + rz}")
    rho_n = tensor_power(rho, n)
    check_dim_budget(rho_n.dim, max_dim)
    message_counts = _counts_from_rates(n, rates)
    block_sizes = _counts_from_rates(n, d_rates)
    copy_groups = tuple(
        tuple(f"{lab}_{i}" for i in range(1, n + 1) for lab in g) for g in groups)
    b_copies = tuple(lab for i in range(1, n + 1) for lab in
                     (f"{x}_{i}" for x in b))
    e_copies = tuple(lab for i in range(1, n + 1) for lab in
                     (f"{x}_{i}" for x in e))
    master_seed = rng if isinstance(rng, (int, np.integer)) else None
    families = []
    for z, (m, l, g) in enumerate(zip(message_counts, block_sizes, groups), start=1):
        k = m * l
        d = rho.layout.dim_of(g)
        if family == "haar":
            families.append(sample_family(z, n, k, d, rng))
        elif family == "pauli":
            families.append(pauli_family(z, n, d, size=k))
        elif family == "identity":
            families.append(identity_family(z, n, d, size=k))
        else:
            raise ValueError(f"unknown family kind {family!r}")

    sizes = [fam.size for fam in families]
    encoded = []
    for k_tuple in product(*[range(s) for s in sizes]):
        state = rho_n
        for fam, group, k in zip(families, copy_groups, k_tuple):
            state = apply_unitary(state, fam.block(k), list(group))
        encoded.append(state)
    if decoder == "pgm":
        index_povm = pgm_decoder(encoded, [1.0 / len(encoded)] * len(encoded))
        index_elements = list(index_povm.elements[: len(encoded)])
        completion = (list(index_povm.elements[len(encoded):])
                      if len(index_povm) > len(encoded) else [])
    elif decoder == "sequential":
        index_povm, _ = sequential_decoder(
            rho_n, copy_groups, list(b_copies) + list(e_copies), families)
        index_elements = list(index_povm.elements)
        completion = []
    else:
        raise ValueError(f"unknown decoder kind {decoder!r}")

    coarse = []
    for m_tuple in product(*[range(m) for m in message_counts]):
        lam = np.zeros((rho_n.dim, rho_n.dim), dtype=complex)
        for l_tuple in product(*[range(l) for l in block_sizes]):
            k_tuple = [m * l_z + l for m, l_z, l in zip(m_tuple, block_sizes, l_tuple)]
            lam = lam + index_elements[_flat_index(k_tuple, sizes)]
        coarse.append(lam)
    decoder_povm = Povm(tuple(coarse + completion))
    return CodeSpec(n, len(groups), copy_groups, b_copies, e_copies,
                    tuple(message_counts), tuple(block_sizes), tuple(families),
                    decoder_povm, family, decoder, master_seed)


def evaluate_code(code: CodeSpec, rho: DensityMatrix,
                  e_labels: Sequence[str] | None = None,
                  max_messages: int = 4096,
                  rng: np.random.Generator | None = None,
                  mc_samples: int = 256) -> SimulationReport:
    """Decoding error and leakage of a code, exactly when the message space
    is small enough, else by uniform Monte Carlo sampling of messages.

    Reports per-message success and leakage samples, the decoding error
    epsilon = 1 - mean success, the leakage theta (mean full trace norm to
    the average encoded state on the senders-plus-eavesdropper marginal),
    and the randomization distance of the average state.
    """
    rho_n = tensor_power(rho, code.n)
    check_dim_budget(rho_n.dim)
    if e_labels is None:
        e_copies = list(code.e_labels)
    else:
        e_copies = [f"{x}_{i}" for i in range(1, code.n + 1) for x in e_labels]
    sender_copy = [lab for g in code.sender_groups for lab in g]
    leak_labels = set(sender_copy) | set(e_copies)

    # exact per-message states: uniform mixture of the block unitaries
    def encoded_message(m_tuple):
        acc = np.zeros((rho_n.dim, rho_n.dim), dtype=complex)
        blocks = 1
        for l in code.block_sizes:
            blocks *= l
        for l_tuple in product(*[range(l) for l in code.block_sizes]):
            state = rho_n
            for fam, group, m, l, l_z in zip(code.families, code.sender_groups,
                                             m_tuple, l_tuple, code.block_sizes):
                k = m * l_z + l
                state = apply_unitary(state, fam.block(k), list(group))
            acc += state.matrix
        return acc / blocks

    total_messages = code.message_space
    exact = total_messages <= max_messages
    if exact:
        message_tuples = list(product(*[range(m) for m in code.message_counts]))
    else:
        if rng is None:
            raise ValueError("Monte Carlo evaluation needs an rng")
        message_tuples = [tuple(int(rng.integers(m)) for m in code.message_counts)
                          for _ in range(mc_samples)]

    states = [encoded_message(m) for m in message_tuples]
    rho_bar = sum(states) / len(states)
    bar_state = DensityMatrix(rho_bar, rho_n.layout)
    bar_leak = partial_trace(bar_state, leak_labels)

    success_samples, leak_samples, rand_samples = [], [], []
    sender_layout = SystemLayout(tuple(
        (lab, rho_n.layout.dims[rho_n.layout.index(lab)]) for lab in sender_copy))
    pi_sender = maximally_mixed(sender_layout)
    bar_e = (partial_trace(bar_state, e_copies) if e_copies else None)
    for m_tuple, mat in zip(message_tuples, states):
        idx = _flat_index(m_tuple, code.message_counts)
        success_samples.append(float(np.real(np.trace(code.decoder.elements[idx] @ mat))))
        msg_state = DensityMatrix(mat, rho_n.layout)
        msg_leak = partial_trace(msg_state, leak_labels)
        leak_samples.append(trace_norm(msg_leak.matrix - bar_leak.matrix))
        if bar_e is not None:
            ref = permute_factors(tensor(pi_sender, bar_e),
                                  list(msg_leak.layout.labels))
        else:
            ref = permute_factors(pi_sender, list(msg_leak.layout.labels))
        rand_samples.append(trace_norm(msg_leak.matrix - ref.matrix))

    samples = {
        "success": tuple(success_samples),
        "leakage": tuple(leak_samples),
        "randomization_distance": tuple(rand_samples),
    }
    estimates = _mean_estimates(samples)
    estimates["epsilon"] = 1.0 - estimates["success"]
    estimates["theta"] = estimates["leakage"]
    extra = {
        "exact": exact,
        "family_kind": code.family_kind,
        "decoder_kind": code.decoder_kind,
        "message_counts": list(code.message_counts),
        "block_sizes": list(code.block_sizes),
    }
    if not exact:
        extra["standard_error"] = {
            name: float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
            for name, vals in samples.items()}
    return SimulationReport(len(message_tuples), estimates, samples,
                            code.master_seed, extra)


@dataclass(frozen=True)
class TypicalProjector:
    """Projector onto the entropy-typical eigenvalue sequences of rho^(x)n."""

    projector: np.ndarray
    rank: int
    mass: float
    epsilon: float  # 1 - mass
    rank_bound: float  # 2^{n(S + delta)}
    operator_bound: float  # 2^{-n(S - delta)}
    max_typical_prob: float
    bounds_hold: bool


def typical_projector(rho: DensityMatrix, n: int, delta: float) -> TypicalProjector:
    """Projector onto product eigenvectors whose empirical surprisal is
    within delta of the entropy, with the mass/rank/operator diagnostics."""
    d = rho.dim
    check_dim_budget(d ** n)
    eig, vec = np.linalg.eigh((rho.matrix + rho.matrix.conj().T) / 2)
    eig = np.clip(eig, 0.0, None)
    s = float(-np.sum(eig[eig > 1e-12] * np.log2(eig[eig > 1e-12])))
    surprisal = np.where(eig > 1e-12, -np.log2(np.where(eig > 1e-12, eig, 1.0)), np.inf)
    typical_mask = np.zeros(d ** n, dtype=bool)
    probs = np.zeros(d ** n)
    for idx, combo in enumerate(product(range(d), repeat=n)):
        emp = sum(surprisal[c] for c in combo) / n
        if abs(emp - s) <= delta + 1e-12:
            typical_mask[idx] = True
            probs[idx] = float(np.prod([eig[c] for c in combo]))
    basis = vec
    for _ in range(n - 1):
        basis = np.kron(basis, vec)
    proj = (basis[:, typical_mask] @ basis[:, typical_mask].conj().T
            if typical_mask.any() else np.zeros((d ** n, d ** n)))
    rank = int(typical_mask.sum())
    mass = float(probs[typical_mask].sum())
    rank_bound = 2.0 ** (n * (s + delta))
    op_bound = 2.0 ** (-n * (s - delta))
    max_prob = float(probs[typical_mask].max()) if rank else 0.0
    # the mass bound holds by definition with epsilon = 1 - mass
    holds = (0.0 <= mass <= 1.0 + 1e-12
             and rank <= rank_bound + 1e-6
             and max_prob <= op_bound + 1e-12)
    return TypicalProjector(proj, rank, mass, 1 - mass, rank_bound, op_bound,
                            max_prob, holds)


def chained_randomization_experiment(rho: DensityMatrix, senders: Sequence,
                                     w_labels: Sequence[str], n: int,
                                     block_sizes: Sequence[int], trials: int,
                                     master_seed: int, family: str = "haar",
                                     max_dim: int = DIM_BUDGET) -> SimulationReport:
    """Randomize each sender in sequence over `trials` independent family
    draws; reports per-stage and total distances and asserts the triangle
    chain total <= sum of stages."""
    groups = [(g,) if isinstance(g, str) else tuple(g) for g in senders]
    z_count = len(groups)
    if len(block_sizes) != z_count:
        raise ValueError("one block size per sender required")
    rho_n = tensor_power(rho, n)
    check_dim_budget(rho_n.dim, max_dim)
    copy_groups = [tuple(f"{lab}_{i}" for i in range(1, n + 1) for lab in g)
                   for g in groups]
    w_copies = [f"{x}_{i}" for i in range(1, n + 1) for x in w_labels]

    samples: dict[str, list[float]] = {"total_distance": []}
    for z in range(1, z_count + 1):
        samples[f"stage_{z}_distance"] = []
    for t in range(trials):
        families = []
        for z, (g, l) in enumerate(zip(groups, block_sizes), start=1):
            d = rho.layout.dim_of(g)
            if family == "haar":
                fams = tuple(
                    tuple(haar_unitary(d, derived_rng(master_seed, t, z, k, i))
                          for i in range(n)) for k in range(l))
                families.append(UnitaryFamily(z, n, d, fams, kind="haar",
                                              seed=(master_seed, t, z)))
            elif family == "pauli":
                families.append(pauli_family(z, n, d, size=l))
            else:
                raise ValueError(f"unknown family kind {family!r}")
        # per-stage distances on the suffix marginals
        stage_total = 0.0
        for z in range(z_count):
            suffix_labels = [lab for g in groups[z:] for lab in g] + list(w_labels)
            marg = partial_trace(rho, suffix_labels)
            marg_n = tensor_power(marg, n)
            copy_group = copy_groups[z]
            randomized = _random_unitary_channel(marg_n, families[z], list(copy_group))
            rest_labels = [lab for lab in marg_n.layout.labels
                           if lab not in set(copy_group)]
            group_layout = SystemLayout(tuple(
                (lab, marg_n.layout.dims[marg_n.layout.index(lab)])
                for lab in copy_group))
            ref = tensor(maximally_mixed(group_layout),
                         partial_trace(marg_n, rest_labels))
            ref = permute_factors(ref, list(marg_n.layout.labels))
            dist = trace_norm(randomized.matrix - ref.matrix)
            samples[f"stage_{z + 1}_distance"].append(dist)
            stage_total += dist
        _, total = randomize(rho_n, copy_groups, w_copies, families)
        if total > stage_total + 1e-9:
            raise AssertionError(
                f"triangle chain violated: total {total} > stage sum {stage_total}")
        samples["total_distance"].append(total)
    samples_t = {k: tuple(v) for k, v in samples.items()}
    return SimulationReport(trials, _mean_estimates(samples_t), samples_t,
                            master_seed, {"family_kind": family,
                                          "block_sizes": list(block_sizes),
                                          "n": n})

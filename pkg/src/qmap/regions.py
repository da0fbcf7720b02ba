"""Set functions over sender subsets, rate regions and their polytope structure.

Subsets of the sender index set {1..Z} are represented as bitmasks (bit z-1
for sender z) internally and as sorted 1-based index lists at the JSON
boundary. All tables are total over the 2^Z subsets with value 0 at the
empty set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

from .qstate import (
    DensityMatrix,
    LabelError,
    conditional_entropy,
    conditional_mutual_information,
)

ENTROPIC_TOL = 1e-9


class SeparationError(ValueError):
    """Sandwich condition between the sub- and supermodular table is violated."""

    def __init__(self, message: str, subset: tuple[int, ...]):
        super().__init__(message)
        self.subset = subset


def subsets_of(mask: int) -> tuple[int, ...]:
    """Sorted 1-based sender indices of a bitmask."""
    return tuple(z + 1 for z in range(mask.bit_length()) if mask >> z & 1)


def mask_of(subset: Iterable[int]) -> int:
    mask = 0
    for z in subset:
        mask |= 1 << (int(z) - 1)
    return mask


@dataclass(frozen=True)
class SetFunction:
    """Total real-valued table over subsets of {1..Z}, zero at the empty set."""

    z_count: int
    values: tuple[float, ...]  # indexed by bitmask

    def __post_init__(self):
        if self.z_count < 1:
            raise ValueError("z_count must be >= 1")
        if len(self.values) != 1 << self.z_count:
            raise ValueError(
                f"table must have {1 << self.z_count} entries, got {len(self.values)}")
        if self.values[0] != 0.0:
            raise ValueError(f"value at the empty set must be 0, got {self.values[0]}")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def value(self, subset: Iterable[int]) -> float:
        return self.values[mask_of(subset)]

    def at(self, mask: int) -> float:
        return self.values[mask]

    def to_json(self) -> dict:
        return {
            "z": self.z_count,
            "entries": [
                {"subset": list(subsets_of(m)), "value": self.values[m]}
                for m in range(1, 1 << self.z_count)
            ],
        }

    @staticmethod
    def from_json(obj: dict) -> "SetFunction":
        z = int(obj["z"])
        values = [0.0] * (1 << z)
        for entry in obj["entries"]:
            values[mask_of(entry["subset"])] = float(entry["value"])
        return SetFunction(z, tuple(values))


@dataclass(frozen=True)
class RateRegion:
    """One linear constraint on the rate tuple per nonempty sender subset."""

    z_count: int
    bounds: tuple[float, ...]  # indexed by bitmask, entry 0 unused
    direction: str  # "<=" or ">="

    def __post_init__(self):
        if self.direction not in ("<=", ">="):
            raise ValueError(f"direction must be '<=' or '>=', got {self.direction!r}")
        if len(self.bounds) != 1 << self.z_count:
            raise ValueError(
                f"need {1 << self.z_count} bounds, got {len(self.bounds)}")
        if any(not math.isfinite(b) for b in self.bounds[1:]):
            raise ValueError("all bounds must be finite")
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))

    def bound(self, subset: Iterable[int]) -> float:
        return self.bounds[mask_of(subset)]

    def to_json(self) -> dict:
        return {
            "z": self.z_count,
            "direction": self.direction,
            "entries": [
                {"subset": list(subsets_of(m)), "value": self.bounds[m]}
                for m in range(1, 1 << self.z_count)
            ],
        }

    @staticmethod
    def from_json(obj: dict) -> "RateRegion":
        z = int(obj["z"])
        bounds = [0.0] * (1 << z)
        for entry in obj["entries"]:
            bounds[mask_of(entry["subset"])] = float(entry["value"])
        return RateRegion(z, tuple(bounds), obj.get("direction", "<="))


@dataclass(frozen=True)
class MembershipResult:
    member: bool
    worst_subset: tuple[int, ...]
    worst_margin: float  # slack of the tightest constraint; negative if violated


def _normalize_senders(senders: Sequence) -> list[tuple[str, ...]]:
    groups = []
    for entry in senders:
        if isinstance(entry, str):
            groups.append((entry,))
        else:
            groups.append(tuple(entry))
    return groups


def _sender_log_dims(rho: DensityMatrix, groups: list[tuple[str, ...]]) -> list[float]:
    return [math.log2(rho.layout.dim_of(g)) for g in groups]


def _mask_labels(groups: list[tuple[str, ...]], mask: int) -> set[str]:
    labels: set[str] = set()
    for z in range(len(groups)):
        if mask >> z & 1:
            labels |= set(groups[z])
    return labels


def _check_roles(rho: DensityMatrix, groups: list[tuple[str, ...]], *extra) -> None:
    seen: set[str] = set()
    for g in list(groups) + [tuple(e) for e in extra]:
        g = set(g)
        rho.layout._check_known(g)
        if seen & g:
            raise LabelError(f"role label sets overlap on {sorted(seen & g)}")
        seen |= g


def chat_from_state(rho: DensityMatrix, senders: Sequence, v: Iterable[str]) -> SetFunction:
    """Encoding-capacity table: sum_Gamma log d_z - S(A_Gamma | A_Gamma_c V)."""
    groups = _normalize_senders(senders)
    v = tuple(v)
    _check_roles(rho, groups, v)
    log_dims = _sender_log_dims(rho, groups)
    z = len(groups)
    values = [0.0] * (1 << z)
    all_mask = (1 << z) - 1
    for mask in range(1, 1 << z):
        a_g = _mask_labels(groups, mask)
        cond = _mask_labels(groups, all_mask & ~mask) | set(v)
        values[mask] = (sum(log_dims[i] for i in range(z) if mask >> i & 1)
                        - conditional_entropy(rho, a_g, cond))
    return SetFunction(z, tuple(values))


def dhat_from_state(rho: DensityMatrix, senders: Sequence, w: Iterable[str]) -> SetFunction:
    """Randomization-cost table: sum_Gamma log d_z - S(A_Gamma | W)."""
    groups = _normalize_senders(senders)
    w = tuple(w)
    _check_roles(rho, groups, w)
    log_dims = _sender_log_dims(rho, groups)
    z = len(groups)
    values = [0.0] * (1 << z)
    for mask in range(1, 1 << z):
        a_g = _mask_labels(groups, mask)
        values[mask] = (sum(log_dims[i] for i in range(z) if mask >> i & 1)
                        - conditional_entropy(rho, a_g, set(w)))
    return SetFunction(z, tuple(values))


def dcheck_from_dhat(dhat: SetFunction, log_dims: Sequence[float]) -> SetFunction:
    """Complementary table 2*sum_Gamma log d_z - dhat(Gamma)."""
    if len(log_dims) != dhat.z_count:
        raise ValueError("need one log-dimension per sender")
    values = [0.0] * (1 << dhat.z_count)
    for mask in range(1, 1 << dhat.z_count):
        total = 2 * sum(log_dims[i] for i in range(dhat.z_count) if mask >> i & 1)
        values[mask] = total - dhat.at(mask)
    return SetFunction(dhat.z_count, tuple(values))


def main_region(rho: DensityMatrix, senders: Sequence, b: Iterable[str],
                e: Iterable[str]) -> RateRegion:
    """Achievable-rate constraints: sum_Gamma R_z <= I(A_Gamma : A_Gamma_c B | E).

    Also cross-checks each bound against chat - dhat (with the receiver and
    eavesdropper systems playing the conditioning roles) within 1e-9.
    """
    groups = _normalize_senders(senders)
    b, e = tuple(b), tuple(e)
    _check_roles(rho, groups, b, e)
    covered = {lab for g in groups for lab in g} | set(b) | set(e)
    if covered != set(rho.layout.labels):
        raise LabelError(
            f"roles must cover the layout; missing {sorted(set(rho.layout.labels) - covered)}")
    z = len(groups)
    all_mask = (1 << z) - 1
    chat = chat_from_state(rho, groups, b + e)
    dhat = dhat_from_state(rho, groups, e)
    bounds = [0.0] * (1 << z)
    for mask in range(1, 1 << z):
        a_g = _mask_labels(groups, mask)
        rest = _mask_labels(groups, all_mask & ~mask) | set(b)
        cmi = conditional_mutual_information(rho, a_g, rest, set(e))
        diff = chat.at(mask) - dhat.at(mask)
        if abs(cmi - diff) > ENTROPIC_TOL:
            raise ValueError(
                f"region identity violated at {subsets_of(mask)}: "
                f"I = {cmi}, chat - dhat = {diff}")
        bounds[mask] = cmi
    return RateRegion(z, tuple(bounds), "<=")


@dataclass(frozen=True)
class PropertyReport:
    """Outcome of the structural checks on a set-function table."""

    kind: str
    zero_at_empty: bool
    nonnegative: bool
    monotone: bool
    modular_inequality: bool  # strong sub-/superadditivity per `kind`
    worst_pair: tuple[tuple[int, ...], tuple[int, ...]] | None
    worst_violation: float

    @property
    def passed(self) -> bool:
        return (self.zero_at_empty and self.nonnegative and self.monotone
                and self.modular_inequality)


def check_set_function_properties(f: SetFunction, kind: str,
                                  tol: float = ENTROPIC_TOL) -> PropertyReport:
    """Check zero/nonnegative/monotone/strong-subadditivity of the table.

    `kind` is "subadditive-monotone" for polymatroid-style tables or
    "superadditive" for the randomization-cost table, where only the empty-set
    and (flipped) modular inequality checks apply.
    """
    if kind not in ("subadditive-monotone", "superadditive"):
        raise ValueError(f"unknown kind {kind!r}")
    n = 1 << f.z_count
    zero_ok = f.values[0] == 0.0
    nonneg_ok, mono_ok = True, True
    if kind == "subadditive-monotone":
        nonneg_ok = all(v >= -tol for v in f.values)
        for mask in range(n):
            for z in range(f.z_count):
                if not mask >> z & 1:
                    if f.at(mask) > f.at(mask | 1 << z) + tol:
                        mono_ok = False
    mod_ok = True
    worst_pair = None
    worst = 0.0
    for m1 in range(n):
        for m2 in range(n):
            gap = (f.at(m1) + f.at(m2)) - (f.at(m1 | m2) + f.at(m1 & m2))
            if kind == "superadditive":
                gap = -gap
            if gap < -tol:
                mod_ok = False
            if gap < worst:
                worst = gap
                worst_pair = (subsets_of(m1), subsets_of(m2))
    return PropertyReport(kind, zero_ok, nonneg_ok, mono_ok, mod_ok,
                          worst_pair, float(worst))


def region_from_set_function(f: SetFunction, direction: str) -> RateRegion:
    return RateRegion(f.z_count, f.values, direction)


def _greedy_vertex(f: SetFunction, order: Sequence[int]) -> tuple[float, ...]:
    comps = [0.0] * f.z_count
    prev = 0
    for z in order:
        cur = prev | 1 << (z - 1)
        comps[z - 1] = f.at(cur) - f.at(prev)
        prev = cur
    return tuple(comps)


def _verify_vertex(f: SetFunction, order: Sequence[int], region: RateRegion,
                   tol: float) -> None:
    vertex = _greedy_vertex(f, order)
    res = membership(region, vertex, tol)
    if not res.member:
        raise ValueError(
            f"greedy vertex {vertex} violates {res.worst_subset} by {-res.worst_margin}")
    # chain saturation, verified in exact rational arithmetic of the table values
    prev = 0
    total = Fraction(0)
    for z in order:
        cur = prev | 1 << (z - 1)
        total += Fraction(f.at(cur)) - Fraction(f.at(prev))
        if total != Fraction(f.at(cur)):
            raise ValueError(f"chain constraint {subsets_of(cur)} not saturated exactly")
        prev = cur


def polymatroid_vertices(f: SetFunction) -> list[tuple[float, ...]]:
    """Greedy extremal points of the <=-region of a normalized monotone
    strongly subadditive table, one per permutation, de-duplicated."""
    report = check_set_function_properties(f, "subadditive-monotone")
    if not report.passed:
        raise ValueError(f"table is not subadditive-monotone: {report}")
    region = region_from_set_function(f, "<=")
    seen: dict[tuple[float, ...], None] = {}
    for order in permutations(range(1, f.z_count + 1)):
        _verify_vertex(f, order, region, ENTROPIC_TOL)
        seen.setdefault(_greedy_vertex(f, order))
    return list(seen)


def contrapolymatroid_vertices(d: SetFunction,
                               log_dims: Sequence[float] | None = None
                               ) -> list[tuple[float, ...]]:
    """Greedy extremal points of the >=-region of a strongly superadditive table.

    When sender log-dimensions are supplied, the precondition is checked on
    the complementary table 2*sum log d - d; otherwise directly on d.
    """
    if log_dims is not None:
        report = check_set_function_properties(dcheck_from_dhat(d, log_dims),
                                               "subadditive-monotone")
    else:
        report = check_set_function_properties(d, "superadditive")
    if not report.passed:
        raise ValueError(f"precondition failed: {report}")
    region = region_from_set_function(d, ">=")
    seen: dict[tuple[float, ...], None] = {}
    for order in permutations(range(1, d.z_count + 1)):
        _verify_vertex(d, order, region, ENTROPIC_TOL)
        seen.setdefault(_greedy_vertex(d, order))
    return list(seen)


def membership(region: RateRegion, r: Sequence[float], slack: float) -> MembershipResult:
    """Whether the rate tuple satisfies every constraint within `slack`."""
    r = [float(x) for x in r]
    if len(r) != region.z_count:
        raise ValueError(f"rate tuple has {len(r)} entries, region has {region.z_count}")
    worst_margin = math.inf
    worst_subset: tuple[int, ...] = ()
    for mask in range(1, 1 << region.z_count):
        total = math.fsum(r[z] for z in range(region.z_count) if mask >> z & 1)
        if region.direction == "<=":
            margin = region.bounds[mask] - total
        else:
            margin = total - region.bounds[mask]
        if margin < worst_margin:
            worst_margin = margin
            worst_subset = subsets_of(mask)
    return MembershipResult(worst_margin >= -slack, worst_subset, float(worst_margin))


def separate(f: SetFunction, g: SetFunction, strict: bool = False) -> tuple[float, ...]:
    """Vector R with g(A) <= sum_A R_z <= f(A) for every nonempty A.

    Requires f submodular, g supermodular, both zero at the empty set and
    g <= f (strictly when `strict`). Strict mode shrinks the sandwich by
    Delta = min (f(A)-g(A))/(2|A|) per element before solving, so the
    returned point satisfies both families of inequalities strictly.
    Solved as a dense linear feasibility problem over the 2(2^Z - 1)
    constraints.
    """
    if f.z_count != g.z_count:
        raise ValueError("tables must have the same sender count")
    z = f.z_count
    n = 1 << z
    for mask in range(1, n):
        gap = f.at(mask) - g.at(mask)
        if gap < 0 or (strict and gap <= 0):
            raise SeparationError(
                f"sandwich condition fails at {subsets_of(mask)}: "
                f"g = {g.at(mask)}, f = {f.at(mask)}", subsets_of(mask))
    if strict:
        delta = min((f.at(m) - g.at(m)) / (2 * bin(m).count("1"))
                    for m in range(1, n))
        fv = [f.at(m) - bin(m).count("1") * delta for m in range(n)]
        gv = [g.at(m) + bin(m).count("1") * delta for m in range(n)]
    else:
        fv = list(f.values)
        gv = list(g.values)
    rows, rhs = [], []
    for mask in range(1, n):
        indicator = [1.0 if mask >> i & 1 else 0.0 for i in range(z)]
        rows.append(indicator)
        rhs.append(fv[mask])
        rows.append([-x for x in indicator])
        rhs.append(-gv[mask])
    res = linprog(c=np.zeros(z), A_ub=np.array(rows), b_ub=np.array(rhs),
                  bounds=[(None, None)] * z, method="highs")
    if not res.success:
        raise SeparationError(f"linear feasibility failed: {res.message}", ())
    return tuple(float(x) for x in res.x)


def rate_split(r: Sequence[float], chat: SetFunction, dhat: SetFunction
               ) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Split rates into encoding and randomization tuples with c_z = d_z + r_z.

    Requires sum_Gamma r_z < chat(Gamma) - dhat(Gamma) strictly for every
    nonempty Gamma; raises SeparationError naming the violating subset
    otherwise. The returned c is constructed by adding r to d entrywise.
    """
    r = [float(x) for x in r]
    if len(r) != chat.z_count or chat.z_count != dhat.z_count:
        raise ValueError("rate tuple and tables must agree on the sender count")
    z = chat.z_count
    shifted = [0.0] * (1 << z)
    for mask in range(1, 1 << z):
        total_r = math.fsum(r[i] for i in range(z) if mask >> i & 1)
        if total_r >= chat.at(mask) - dhat.at(mask):
            raise SeparationError(
                f"rates not strictly inside the region at {subsets_of(mask)}: "
                f"sum r = {total_r}, bound = {chat.at(mask) - dhat.at(mask)}",
                subsets_of(mask))
        shifted[mask] = chat.at(mask) - total_r
    d = separate(SetFunction(z, tuple(shifted)), dhat, strict=True)
    c = tuple(d[i] + r[i] for i in range(z))
    return c, d

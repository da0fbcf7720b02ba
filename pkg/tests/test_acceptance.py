"""Acceptance suite: one test per criterion, tolerances as stated inline.

The conftest hook prints one `criterion N: PASS/FAIL` line per test in the
terminal summary.
"""

import itertools
import json
import math
import time
from itertools import permutations

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from qmap.cli import main
from qmap.presets import _preset, bell_pair
from qmap.protocols import (
    build_qmap_code,
    derived_rng,
    evaluate_code,
    haar_unitary,
    pauli_family,
    pgm_decoder,
    povm_success,
    randomize,
    typical_projector,
    union_bound_check,
    UnitaryFamily,
)
from qmap.qstate import (
    DensityMatrix,
    SystemLayout,
    apply_unitary,
    conditional_mutual_information,
    entropy,
    random_density,
    tensor_power,
)
from qmap.regions import (
    RateRegion,
    chat_from_state,
    check_set_function_properties,
    dcheck_from_dhat,
    dhat_from_state,
    main_region,
    membership,
    polymatroid_vertices,
    rate_split,
    subsets_of,
)


def test_criterion_01_entropy_kernel():
    """Entropy matches an eigenvalue-sum oracle within 1e-9 on 100 random
    states; strong subadditivity >= -1e-9 on 100 random tripartite states.
    Runtime < 10 s."""
    start = time.monotonic()
    rng = np.random.default_rng(1001)
    for trial in range(100):
        d = int(rng.integers(2, 5))
        rank = int(rng.integers(1, d + 1))
        s = random_density(SystemLayout((("A", d),)), rank, rng)
        eig = np.linalg.eigvalsh(s.matrix)
        oracle = -math.fsum(x * math.log2(x) for x in eig if x > 1e-12)
        assert abs(entropy(s) - oracle) <= 1e-9
    layout = SystemLayout((("A", 2), ("B", 2), ("C", 2)))
    for trial in range(100):
        s = random_density(layout, int(rng.integers(1, 9)), rng)
        assert conditional_mutual_information(s, ["A"], ["B"], ["C"]) >= -1e-9
    assert time.monotonic() - start < 10


def test_criterion_02_structural_properties():
    """For 50 random states with Z=3 qubit senders plus qubit V/W, the
    encoding table and complementary randomization table pass
    zero/nonnegative/monotone/strongly-subadditive and the randomization
    table passes strongly-superadditive, all within 1e-9. Runtime < 60 s."""
    start = time.monotonic()
    layout = SystemLayout((("A1", 2), ("A2", 2), ("A3", 2), ("V", 2)))
    senders = ["A1", "A2", "A3"]
    for seed in range(50):
        rho = random_density(layout, layout.dim, derived_rng(2001, seed))
        chat = chat_from_state(rho, senders, ["V"])
        dhat = dhat_from_state(rho, senders, ["V"])
        dcheck = dcheck_from_dhat(dhat, [1.0, 1.0, 1.0])
        assert check_set_function_properties(chat, "subadditive-monotone",
                                             tol=1e-9).passed
        assert check_set_function_properties(dcheck, "subadditive-monotone",
                                             tol=1e-9).passed
        assert check_set_function_properties(dhat, "superadditive",
                                             tol=1e-9).passed
    assert time.monotonic() - start < 60


def test_criterion_03_region_identity():
    """|I(A_G : A_Gc B | E) - (chat(G) - dhat(G))| <= 1e-9 for every subset
    on 50 random five-qubit states with explicit B and E systems."""
    layout = SystemLayout((("A1", 2), ("A2", 2), ("A3", 2), ("B", 2), ("E", 2)))
    senders = ["A1", "A2", "A3"]
    groups = [("A1",), ("A2",), ("A3",)]
    for seed in range(50):
        rho = random_density(layout, layout.dim, derived_rng(3001, seed))
        chat = chat_from_state(rho, senders, ["B", "E"])
        dhat = dhat_from_state(rho, senders, ["E"])
        # main_region also asserts the identity internally within 1e-9
        region = main_region(rho, senders, ["B"], ["E"])
        for mask in range(1, 8):
            a_g = {groups[i][0] for i in range(3) if mask >> i & 1}
            rest = {groups[i][0] for i in range(3) if not mask >> i & 1} | {"B"}
            cmi = conditional_mutual_information(rho, a_g, rest, {"E"})
            assert abs(cmi - (chat.at(mask) - dhat.at(mask))) <= 1e-9
            assert abs(region.bounds[mask] - cmi) <= 1e-9


def _full_region_vertices(f):
    """All extremal points of the down-closed <=-polytope: greedy along every
    chain of every subset, zeros elsewhere."""
    z = f.z_count
    points = {tuple([0.0] * z)}
    for r in range(1, z + 1):
        for subset in itertools.combinations(range(1, z + 1), r):
            for order in permutations(subset):
                comps = [0.0] * z
                prev = 0
                for s in order:
                    cur = prev | 1 << (s - 1)
                    comps[s - 1] = f.at(cur) - f.at(prev)
                    prev = cur
                points.add(tuple(comps))
    return np.array(sorted(points))


def _grid_covered_by_hull(f, step=1e-2):
    """Every grid point satisfying the region constraints (and >= 0) must lie
    inside the convex hull of the greedy vertices and their projections."""
    z = f.z_count
    verts = _full_region_vertices(f)
    hull = ConvexHull(verts)
    eqs = hull.equations  # rows [normal | offset], inside iff n.x + b <= 0
    axes = [np.arange(0.0, f.at(1 << i) + step / 2, step) for i in range(z)]
    masks = list(range(1, 1 << z))
    if z == 1:
        pts = axes[0][:, None]
        feasible = pts[:, 0] <= f.at(1) + 1e-12
        inside = (pts @ eqs[:, :1].T + eqs[:, 1]).max(axis=1) <= 1e-7
        return bool(np.all(inside[feasible]))
    for x0 in axes[0]:
        grids = np.meshgrid(*axes[1:], indexing="ij")
        coords = [np.full(grids[0].shape, x0)] + list(grids)
        feasible = np.ones(grids[0].shape, dtype=bool)
        for mask in masks:
            total = sum(coords[i] for i in range(z) if mask >> i & 1)
            feasible &= total <= f.at(mask) + 1e-12
        if not feasible.any():
            continue
        pts = np.stack([c[feasible] for c in coords], axis=1)
        violation = (pts @ eqs[:, :-1].T + eqs[:, -1]).max(axis=1)
        if violation.max() > 1e-7:
            return False
    return True


def test_criterion_04_greedy_vertices():
    """For Z <= 3 every greedy vertex satisfies all region constraints
    within 1e-9 and saturates its chain exactly; a step-1e-2 grid oracle
    finds no feasible point outside the hull of the vertices and their
    coordinate projections."""
    spec = _preset("two-bell", {})
    chat2 = chat_from_state(spec.state, spec.senders, spec.receiver)
    layout = SystemLayout((("A1", 2), ("A2", 2), ("A3", 2), ("V", 2)))
    rho = random_density(layout, layout.dim, derived_rng(4001))
    chat3 = chat_from_state(rho, ["A1", "A2", "A3"], ["V"])
    for f in (chat2, chat3):
        region = RateRegion(f.z_count, f.values, "<=")
        # polymatroid_vertices raises if any vertex violates the region
        # within 1e-9 or fails exact chain saturation
        for v in polymatroid_vertices(f):
            assert membership(region, v, 1e-9).member
        assert _grid_covered_by_hull(f, step=1e-2)


def test_criterion_05_rate_splitting():
    """For 50 random tables with strict interior, rate_split returns (C, D)
    with all 2(2^Z - 1) sandwich inequalities strictly positive and
    c_z - d_z = r_z exact."""
    layout = SystemLayout((("A1", 2), ("A2", 2), ("B", 2), ("E", 2)))
    done = 0
    seed = 0
    while done < 50:
        rho = random_density(layout, layout.dim, derived_rng(5001, seed))
        seed += 1
        chat = chat_from_state(rho, ["A1", "A2"], ["B", "E"])
        dhat = dhat_from_state(rho, ["A1", "A2"], ["E"])
        gaps = [chat.at(m) - dhat.at(m) for m in range(1, 4)]
        if min(gaps) <= 1e-6:
            continue
        r = [0.25 * min(gaps) / 2] * 2
        c, d = rate_split(r, chat, dhat)
        for mask in range(1, 4):
            idx = [i for i in range(2) if mask >> i & 1]
            assert math.fsum(c[i] for i in idx) < chat.at(mask)
            assert math.fsum(d[i] for i in idx) > dhat.at(mask)
        assert all(c[i] == d[i] + r[i] for i in range(2))
        done += 1
    assert seed < 200  # strict interior should be generic


def test_criterion_06_union_bound():
    """1000 random (L1..L3, rho) trials at d=8: the bound holds within 1e-9
    every trial and the pattern-sum evaluation matches the ancilla-chain
    evaluation within 1e-10 (both asserted inside union_bound_check)."""
    for trial in range(1000):
        rng = derived_rng(6001, trial)
        lams = []
        for _ in range(3):
            g = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
            h = g @ g.conj().T
            lams.append(h / (np.linalg.eigvalsh(h).max() * (1 + rng.uniform(0, 1))))
        rho = random_density(SystemLayout((("S", 8),)), 8, rng)
        res = union_bound_check(lams, rho)
        assert res.lhs <= res.rhs + 1e-9
        assert abs(res.lambda_hat_trace - res.chain_trace) <= 1e-10


def test_criterion_07_exact_superdense():
    """Z=1, n=1, Bell state, Pauli family: M=4, L=1 decodes with error 0;
    M=1, L=4 randomizes with distance 0, both within 1e-10."""
    rho = bell_pair()
    code = build_qmap_code(rho, [("A1",)], ("B",), (), 1, [2.0],
                           ([2.0], [0.0]), 0, family="pauli")
    report = evaluate_code(code, rho)
    assert report.estimates["epsilon"] <= 1e-10
    code = build_qmap_code(rho, [("A1",)], ("B",), (), 1, [0.0],
                           ([2.0], [2.0]), 0, family="pauli")
    report = evaluate_code(code, rho)
    assert report.estimates["randomization_distance"] <= 1e-10
    assert report.estimates["theta"] <= 1e-10


def _haar_family(master, *path, n, size, d=2):
    per_index = tuple(
        tuple(haar_unitary(d, derived_rng(master, *path, k, i))
              for i in range(n)) for k in range(size))
    return UnitaryFamily(1, n, d, per_index, kind="haar")


def test_criterion_08_trends():
    """20 seeds, n in {1, 2}, qubit sender: the seed-averaged randomization
    distance is non-increasing in L over {2,4,8,16} and the seed-averaged
    decoding success is non-increasing in K over {2,4,8,16}.
    Runtime < 10 min."""
    start = time.monotonic()
    rho = bell_pair()
    seeds = range(20)
    sizes = [2, 4, 8, 16]
    for n in (1, 2):
        rho_n = tensor_power(rho, n)
        group = tuple(f"A1_{i}" for i in range(1, n + 1))
        w = [f"B_{i}" for i in range(1, n + 1)]
        mean_dist = []
        mean_succ = []
        for size in sizes:
            dists, succs = [], []
            for s in seeds:
                fam = _haar_family(8001, s, n, size, n=n, size=size)
                _, dist = randomize(rho_n, [group], w, [fam])
                dists.append(dist)
                encoded = [apply_unitary(rho_n, fam.block(k), list(group))
                           for k in range(size)]
                povm = pgm_decoder(encoded, [1.0 / size] * size)
                succs.append(povm_success(povm, encoded))
            mean_dist.append(float(np.mean(dists)))
            mean_succ.append(float(np.mean(succs)))
        for a, b in zip(mean_dist, mean_dist[1:]):
            assert b <= a + 1e-12, f"distance trend broken at n={n}: {mean_dist}"
        for a, b in zip(mean_succ, mean_succ[1:]):
            assert b <= a + 1e-12, f"success trend broken at n={n}: {mean_succ}"
    assert time.monotonic() - start < 600


def test_criterion_09_typical_projector():
    """rho = diag(0.9, 0.1), n=10, delta=0.2: projector rank equals the
    brute-force typical-string count exactly and the mass/rank/operator
    bounds hold with the achieved epsilon."""
    rho = DensityMatrix(np.diag([0.9, 0.1]), SystemLayout((("X", 2),)))
    n, delta = 10, 0.2
    tp = typical_projector(rho, n, delta)
    s = -(0.9 * math.log2(0.9) + 0.1 * math.log2(0.1))
    surprisal = [-math.log2(0.9), -math.log2(0.1)]
    count = 0
    mass = 0.0
    for bits in itertools.product((0, 1), repeat=n):
        emp = sum(surprisal[b] for b in bits) / n
        if abs(emp - s) <= delta + 1e-12:
            count += 1
            mass += math.prod(0.9 if b == 0 else 0.1 for b in bits)
    assert tp.rank == count
    assert abs(tp.mass - mass) <= 1e-12
    assert tp.rank <= 2 ** (n * (s + delta)) + 1e-6
    assert tp.max_typical_prob <= 2 ** (-n * (s - delta)) + 1e-12
    assert abs(tp.epsilon - (1 - mass)) <= 1e-12
    assert tp.bounds_hold


def test_criterion_10_reproducibility(tmp_path):
    """Stochastic commands repeated with the same master seed produce
    byte-identical JSON and CSV reports."""
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"preset": {"name": "bell"}}))
    configs = {
        "simulate-randomization": {"n": 1, "block_sizes": [4], "trials": 3},
        "simulate-encoding": {"n": 1, "k_sweep": [2, 4], "trials": 2},
        "simulate-code": {"n": 1, "rates": [1.0],
                          "splits": {"c": [1.5], "d": [0.5]}},
    }
    for command, cfg in configs.items():
        cfg_path = tmp_path / f"{command}.json"
        cfg_path.write_text(json.dumps(cfg))
        blobs = []
        for run in ("r1", "r2"):
            out = tmp_path / command / run
            assert main([command, "--spec", str(spec), "--config",
                         str(cfg_path), "--out", str(out), "--seed", "42"]) == 0
            blobs.append(((out / f"{command}.json").read_bytes(),
                          (out / f"{command}.csv").read_bytes()))
        assert blobs[0] == blobs[1], f"{command} reports differ across runs"

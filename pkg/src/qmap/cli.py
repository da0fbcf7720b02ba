"""Batch front end: resolve state specs, dispatch to the region and protocol
machinery, and emit JSON/CSV artifacts.

Exit codes: 0 success, 2 validation error, 3 invariant violation,
4 budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import protocols, regions
from .presets import ResolvedSpec, SpecError, resolve_state_spec
from .protocols import BudgetError
from .qstate import (
    LabelError,
    StateValidationError,
    partial_trace,
    random_density,
    SystemLayout,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INVARIANT = 3
EXIT_BUDGET = 4

DEFAULT_BUDGET_QUBITS = 12
MAX_BUDGET_QUBITS = 14


def budget_qubits() -> int:
    raw = os.environ.get("QMAP_BUDGET_QUBITS")
    if raw is None:
        return DEFAULT_BUDGET_QUBITS
    try:
        return min(MAX_BUDGET_QUBITS, int(raw))
    except ValueError:
        raise SpecError(f"QMAP_BUDGET_QUBITS must be an integer, got {raw!r}")


def check_budget(n: int, state_dim: int) -> int:
    budget = budget_qubits()
    needed = n * math.log2(state_dim)
    if needed > budget + 1e-9:
        raise BudgetError(
            f"n * log2(dim) = {needed:.2f} qubits exceeds budget {budget}")
    return 2 ** budget


def _load_json(path: str, what: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise SpecError(f"{what} file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise SpecError(f"{what} is not valid JSON: {exc}") from exc


def _write_json(out_dir: Path, name: str, payload: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_csv(out_dir: Path, name: str, content: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(content)
    return path


def _region_tables(spec: ResolvedSpec):
    chat = regions.chat_from_state(spec.state, spec.senders,
                                   spec.receiver + spec.eavesdropper)
    dhat = regions.dhat_from_state(spec.state, spec.senders, spec.eavesdropper)
    region = regions.main_region(spec.state, spec.senders, spec.receiver,
                                 spec.eavesdropper)
    return chat, dhat, region


def cmd_region(spec: ResolvedSpec, config: dict, out_dir: Path) -> int:
    chat, dhat, region = _region_tables(spec)
    residuals = [
        {"subset": list(regions.subsets_of(m)),
         "residual": region.bounds[m] - (chat.at(m) - dhat.at(m))}
        for m in range(1, 1 << region.z_count)]
    payload = {
        "constraints": region.to_json(),
        "chat": chat.to_json(),
        "dhat": dhat.to_json(),
        "identity_residuals": residuals,
    }
    _write_json(out_dir, "region", payload)
    return EXIT_OK


def _rates_from_config(config: dict, z: int) -> list[float]:
    rates = config.get("rates")
    if rates is None or len(rates) != z:
        raise SpecError(f"config needs a 'rates' list of length {z}", "$.rates")
    return [float(r) for r in rates]


def cmd_check(spec: ResolvedSpec, config: dict, out_dir: Path) -> int:
    _, _, region = _region_tables(spec)
    rates = _rates_from_config(config, region.z_count)
    slack = float(config.get("slack", 1e-9))
    res = regions.membership(region, rates, slack)
    payload = {
        "rates": rates,
        "slack": slack,
        "member": res.member,
        "worst_subset": list(res.worst_subset),
        "worst_margin": res.worst_margin,
    }
    _write_json(out_dir, "check", payload)
    return EXIT_OK


def cmd_split(spec: ResolvedSpec, config: dict, out_dir: Path) -> int:
    chat, dhat, region = _region_tables(spec)
    rates = _rates_from_config(config, region.z_count)
    try:
        c, d = regions.rate_split(rates, chat, dhat)
    except regions.SeparationError as exc:
        raise SpecError(f"rates rejected: {exc}", "$.rates") from exc
    margins = {}
    for m in range(1, 1 << region.z_count):
        idx = [i for i in range(region.z_count) if m >> i & 1]
        margins[",".join(str(i + 1) for i in idx)] = {
            "c_margin": chat.at(m) - math.fsum(c[i] for i in idx),
            "d_margin": math.fsum(d[i] for i in idx) - dhat.at(m),
        }
    payload = {"rates": rates, "c": list(c), "d": list(d), "margins": margins}
    _write_json(out_dir, "split", payload)
    return EXIT_OK


def _require_seed(args, config: dict) -> int:
    seed = args.seed if args.seed is not None else config.get("master_seed")
    if seed is None:
        raise SpecError("stochastic commands require --seed or config master_seed",
                        "$.master_seed")
    return int(seed)


def cmd_simulate_randomization(spec: ResolvedSpec, config: dict, out_dir: Path,
                               seed: int) -> int:
    n = int(config.get("n", 1))
    z = len(spec.senders)
    block_sizes = config.get("block_sizes")
    if block_sizes is None or len(block_sizes) != z:
        raise SpecError(f"config needs 'block_sizes' of length {z}", "$.block_sizes")
    trials = int(config.get("trials", 1))
    family = config.get("family", "haar")
    max_dim = check_budget(n, spec.state.dim)
    w_labels = list(spec.eavesdropper) if spec.eavesdropper else list(spec.receiver)
    report = protocols.chained_randomization_experiment(
        spec.state, spec.senders, w_labels, n, [int(x) for x in block_sizes],
        trials, seed, family=family, max_dim=max_dim)
    _write_json(out_dir, "simulate-randomization", report.to_json())
    _write_csv(out_dir, "simulate-randomization", report.to_csv())
    return EXIT_OK


def cmd_simulate_encoding(spec: ResolvedSpec, config: dict, out_dir: Path,
                          seed: int) -> int:
    """Sweep family sizes; for each size and trial, PGM-decode the encoded
    index states and record the average success probability."""
    from .qstate import apply_unitary, tensor_power
    from itertools import product as iproduct

    n = int(config.get("n", 1))
    k_sweep = [int(k) for k in config.get("k_sweep", [1, 2, 4])]
    trials = int(config.get("trials", 1))
    family = config.get("family", "haar")
    check_budget(n, spec.state.dim)
    rho_n = tensor_power(spec.state, n)
    copy_groups = [tuple(f"{lab}_{i}" for i in range(1, n + 1) for lab in g)
                   for g in spec.senders]
    samples: dict[str, list[float]] = {f"success_K{k}": [] for k in k_sweep}
    for k in k_sweep:
        for t in range(trials):
            fams = []
            for z, g in enumerate(spec.senders, start=1):
                d = spec.state.layout.dim_of(g)
                if family == "haar":
                    fams.append(protocols.UnitaryFamily(
                        z, n, d,
                        tuple(tuple(protocols.haar_unitary(
                            d, protocols.derived_rng(seed, k, t, z, kk, i))
                            for i in range(n)) for kk in range(k)),
                        kind="haar", seed=(seed, k, t, z)))
                elif family == "pauli":
                    fams.append(protocols.pauli_family(z, n, d, size=k))
                else:
                    raise SpecError(f"unknown family {family!r}", "$.family")
            encoded = []
            for k_tuple in iproduct(*[range(f.size) for f in fams]):
                state = rho_n
                for fam, group, kk in zip(fams, copy_groups, k_tuple):
                    state = apply_unitary(state, fam.block(kk), list(group))
                encoded.append(state)
            povm = protocols.pgm_decoder(encoded, [1 / len(encoded)] * len(encoded))
            samples[f"success_K{k}"].append(protocols.povm_success(povm, encoded))
    samples_t = {name: tuple(vals) for name, vals in samples.items()}
    estimates = {name: float(np.mean(vals)) for name, vals in samples_t.items()}
    report = protocols.SimulationReport(trials, estimates, samples_t, seed,
                                        {"k_sweep": k_sweep, "n": n,
                                         "family_kind": family})
    _write_json(out_dir, "simulate-encoding", report.to_json())
    _write_csv(out_dir, "simulate-encoding", report.to_csv())
    return EXIT_OK


def cmd_simulate_code(spec: ResolvedSpec, config: dict, out_dir: Path,
                      seed: int) -> int:
    n = int(config.get("n", 1))
    z = len(spec.senders)
    rates = _rates_from_config(config, z)
    family = config.get("family", "haar")
    decoder = config.get("decoder", "pgm")
    max_dim = check_budget(n, spec.state.dim)
    splits_cfg = config.get("splits")
    if splits_cfg is not None:
        splits = ([float(x) for x in splits_cfg["c"]],
                  [float(x) for x in splits_cfg["d"]])
    else:
        chat, dhat, _ = _region_tables(spec)
        c, d = regions.rate_split(rates, chat, dhat)
        splits = (list(c), list(d))
    code = protocols.build_qmap_code(
        spec.state, spec.senders, spec.receiver, spec.eavesdropper, n, rates,
        splits, seed, family=family, decoder=decoder, max_dim=max_dim)
    report = protocols.evaluate_code(code, spec.state)
    _write_json(out_dir, "simulate-code", report.to_json())
    _write_csv(out_dir, "simulate-code", report.to_csv())
    return EXIT_OK


def _lemma_structure_suite(seed: int, sizes: list[int], states_per_size: int) -> dict:
    """Zero/nonnegative/monotone/strongly-subadditive checks for the encoding
    table and its randomization complements on random states."""
    results = {"passed": True, "cases": 0, "failures": []}
    for z in sizes:
        for trial in range(states_per_size):
            rng = protocols.derived_rng(seed, 1, z, trial)
            layout = SystemLayout(tuple(
                [(f"A{i}", 2) for i in range(1, z + 1)] + [("V", 2)]))
            rho = random_density(layout, layout.dim, rng)
            senders = [f"A{i}" for i in range(1, z + 1)]
            chat = regions.chat_from_state(rho, senders, ["V"])
            dhat = regions.dhat_from_state(rho, senders, ["V"])
            dcheck = regions.dcheck_from_dhat(dhat, [1.0] * z)
            for name, table, kind in (
                    ("chat", chat, "subadditive-monotone"),
                    ("dcheck", dcheck, "subadditive-monotone"),
                    ("dhat", dhat, "superadditive")):
                report = regions.check_set_function_properties(table, kind)
                results["cases"] += 1
                if not report.passed:
                    results["passed"] = False
                    results["failures"].append(
                        {"z": z, "trial": trial, "table": name,
                         "worst": report.worst_violation})
    return results


def _lemma_vertices_suite(seed: int, sizes: list[int], states_per_size: int) -> dict:
    results = {"passed": True, "cases": 0, "failures": []}
    for z in sizes:
        for trial in range(states_per_size):
            rng = protocols.derived_rng(seed, 2, z, trial)
            layout = SystemLayout(tuple(
                [(f"A{i}", 2) for i in range(1, z + 1)] + [("V", 2)]))
            rho = random_density(layout, layout.dim, rng)
            senders = [f"A{i}" for i in range(1, z + 1)]
            chat = regions.chat_from_state(rho, senders, ["V"])
            dhat = regions.dhat_from_state(rho, senders, ["V"])
            results["cases"] += 1
            try:
                regions.polymatroid_vertices(chat)
                regions.contrapolymatroid_vertices(dhat, [1.0] * z)
            except ValueError as exc:
                results["passed"] = False
                results["failures"].append({"z": z, "trial": trial, "error": str(exc)})
    return results


def _lemma_separation_suite(seed: int, sizes: list[int], trials: int) -> dict:
    results = {"passed": True, "cases": 0, "failures": []}
    for z in sizes:
        for trial in range(trials):
            rng = protocols.derived_rng(seed, 3, z, trial)
            layout = SystemLayout(tuple(
                [(f"A{i}", 2) for i in range(1, z + 1)] + [("B", 2), ("E", 2)]))
            rho = random_density(layout, layout.dim, rng)
            senders = [f"A{i}" for i in range(1, z + 1)]
            chat = regions.chat_from_state(rho, senders, ["B", "E"])
            dhat = regions.dhat_from_state(rho, senders, ["E"])
            gaps = [chat.at(m) - dhat.at(m) for m in range(1, 1 << z)]
            if min(gaps) <= 1e-6:
                continue  # no strict interior to split in
            rates = [0.25 * min(gaps) / z] * z
            results["cases"] += 1
            try:
                c, d = regions.rate_split(rates, chat, dhat)
                for m in range(1, 1 << z):
                    idx = [i for i in range(z) if m >> i & 1]
                    if not (math.fsum(c[i] for i in idx) < chat.at(m)
                            and math.fsum(d[i] for i in idx) > dhat.at(m)):
                        raise AssertionError(f"sandwich fails at mask {m}")
                    if any(c[i] != d[i] + rates[i] for i in idx):
                        raise AssertionError("c != d + r")
            except (ValueError, AssertionError) as exc:
                results["passed"] = False
                results["failures"].append({"z": z, "trial": trial, "error": str(exc)})
    return results


def _lemma_union_bound_suite(seed: int, trials: int, dim: int = 8) -> dict:
    results = {"passed": True, "cases": trials, "failures": []}
    for trial in range(trials):
        rng = protocols.derived_rng(seed, 4, trial)
        lams = []
        for _ in range(3):
            g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
            h = g @ g.conj().T
            lams.append(h / (np.linalg.eigvalsh(h).max() * (1 + rng.uniform(0, 1))))
        layout = SystemLayout((("S", dim),))
        rho = random_density(layout, dim, rng)
        try:
            protocols.union_bound_check(lams, rho)
        except AssertionError as exc:
            results["passed"] = False
            results["failures"].append({"trial": trial, "error": str(exc)})
    return results


def cmd_verify_lemmas(config: dict, out_dir: Path, seed: int) -> int:
    sizes = [int(z) for z in config.get("sizes", [2, 3])]
    states_per_size = int(config.get("states_per_size", 10))
    union_trials = int(config.get("union_trials", 100))
    suites = {
        "set_function_structure": _lemma_structure_suite(seed, sizes, states_per_size),
        "greedy_vertices": _lemma_vertices_suite(seed, sizes, states_per_size),
        "rate_splitting": _lemma_separation_suite(seed, sizes, states_per_size),
        "union_bound": _lemma_union_bound_suite(seed, union_trials),
    }
    if config.get("counterexample"):
        # negative control: a table violating strong subadditivity must fail
        bad = regions.SetFunction(2, (0.0, 1.0, 1.0, 3.0))
        report = regions.check_set_function_properties(bad, "subadditive-monotone")
        suites["set_function_structure"]["passed"] = report.passed
        suites["set_function_structure"]["failures"].append(
            {"injected": True, "worst": report.worst_violation,
             "worst_pair": [list(p) for p in (report.worst_pair or ())]})
    payload = {"seed": seed, "suites": suites,
               "passed": all(s["passed"] for s in suites.values())}
    _write_json(out_dir, "verify-lemmas", payload)
    return EXIT_OK if payload["passed"] else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qmap",
        description="Rate regions and coding simulations for the "
                    "quantum multiple-access one-time pad")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("region", "check", "split", "simulate-randomization",
                 "simulate-encoding", "simulate-code", "verify-lemmas"):
        p = sub.add_parser(name)
        if name != "verify-lemmas":
            p.add_argument("--spec", required=True, help="state spec JSON file")
        p.add_argument("--config", help="experiment config JSON file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="master seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    try:
        config = _load_json(args.config, "config") if args.config else {}
        if args.command == "verify-lemmas":
            return cmd_verify_lemmas(config, out_dir,
                                     args.seed if args.seed is not None else 0)
        spec = resolve_state_spec(_load_json(args.spec, "spec"))
        if args.command == "region":
            return cmd_region(spec, config, out_dir)
        if args.command == "check":
            return cmd_check(spec, config, out_dir)
        if args.command == "split":
            return cmd_split(spec, config, out_dir)
        seed = _require_seed(args, config)
        if args.command == "simulate-randomization":
            return cmd_simulate_randomization(spec, config, out_dir, seed)
        if args.command == "simulate-encoding":
            return cmd_simulate_encoding(spec, config, out_dir, seed)
        if args.command == "simulate-code":
            return cmd_simulate_code(spec, config, out_dir, seed)
        raise SpecError(f"unknown command {args.command!r}")
    except BudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (SpecError, LabelError, ValueError) as exc:
        if isinstance(exc, StateValidationError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVARIANT
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except AssertionError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())

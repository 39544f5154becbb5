"""Experiment runner: generate instances, run traced processors, verify
witness suites, and sweep growth tables. CSV artifacts are canonical and
byte-reproducible for a fixed config+seed; figures render alongside them."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import core, engines, figures, instances, probelab, witnesses
from .core import SymbolString, named_rng, tree_windows

OUT_ENV = "STREAMPROBE_OUT"
PROBLEM_ALIASES = {
    "conv": "convolution",
    "convolution": "convolution",
    "mult": "multiplication",
    "multiplication": "multiplication",
    "ham": "hamming",
    "hamming": "hamming",
}


class CliError(ValueError):
    pass


def _out_dir(arg: str | None) -> Path:
    path = Path(arg or os.environ.get(OUT_ENV, "streamprobe_out"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _problem(name: str) -> str:
    try:
        return PROBLEM_ALIASES[name]
    except KeyError:
        raise CliError(f"unknown problem {name!r}; use conv, mult or hamming")


# ---------------------------------------------------------------------------
# Instance construction shared by run/sweep/gen


def _build_fixed(family: str, n: int, q: int, seed: int, mu: int):
    """Returns (fixed SymbolString, extras dict)."""
    if family == "kn":
        kn = instances.make_kn(n)
        return SymbolString(kn.codes, max(q, 2)), {}
    if family == "kqn":
        return instances.kqn_digits(q, n), {"decimal": str(instances.make_kqn(q, n))}
    if family == "random":
        rng = named_rng(seed, "fixed")
        return SymbolString(rng.integers(0, q, n), q), {}
    if family == "hamming-pipeline":
        inst = instances.build_hamming_instance(mu, n, seed=seed)
        return inst.fixed, {"instance": inst}
    raise CliError(f"unknown family {family!r}")


def _build_stream(problem: str, n: int, q: int, seed: int, extras: dict):
    inst = extras.get("instance")
    if inst is not None:
        stream, draws = instances.sample_hamming_stream(inst, n, seed)
        return stream, {"draws": draws}
    rng = named_rng(seed, "stream")
    hi = q - 1 if problem == "hamming" else q  # the stream never carries star
    return SymbolString(rng.integers(0, hi, n), q), {}


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    out = _out_dir(args.out)
    family = args.family
    n, q, seed, mu = args.n, args.q, args.seed, args.mu
    if not core.is_power_of_two(n):
        raise CliError(f"n={n} rejected: n must be a power of two")
    manifest: dict = {"family": family, "n": n, "seed": seed}
    files: dict[str, str] = {}

    if family == "hamming-pipeline":
        inst = instances.build_hamming_instance(mu, n, seed=seed)
        core.save_symbol_string(out / "fixed.json", inst.fixed, "fixed")
        core.save_symbol_string(out / "block_string.json", inst.r_string, "fixed")
        files["fixed"] = "fixed.json"
        files["block_string"] = "block_string.json"
        for i, member in enumerate(inst.family.members):
            name = f"block_{i:02d}.json"
            core.save_symbol_string(out / name, member, "stream")
            files[f"block_{i}"] = name
        manifest.update(inst.manifest())
        manifest["sum_count"] = len(witnesses.enumerate_sums(inst.vectors))
        if inst.mu >= 4 and core.is_prime(inst.mu - 1):
            code = instances.search_cyclic_code(inst.mu, args.gamma, seed=seed)
            manifest["code_gamma"] = args.gamma
            manifest["code_size"] = len(code)
            manifest["code_size_bound"] = (inst.mu - 1) ** args.gamma
        else:
            manifest["code_size"] = None
    else:
        if family == "kqn" and not core.is_power_of_two(q):
            raise CliError(f"q={q} rejected: base must be a power of two for kqn")
        fixed, extras = _build_fixed(family, n, q, seed, mu)
        core.save_symbol_string(out / "fixed.json", fixed, "fixed")
        files["fixed"] = "fixed.json"
        manifest["q"] = fixed.q
        manifest.update({k: v for k, v in extras.items() if k != "instance"})
        if family == "kn":
            manifest["popcount"] = int(np.count_nonzero(fixed.codes))

    manifest["files"] = files
    _write_json(out / "manifest.json", manifest)
    print(f"wrote instance bundle to {out}")
    return 0


# ---------------------------------------------------------------------------
# run


def _traced_run(problem: str, algo: str, fixed: SymbolString, stream: SymbolString,
                w: int | None, force_trace: bool):
    n = len(fixed)
    params = engines.default_params(problem, algo, n, fixed.q)
    if w is not None:
        params = core.Params(n=n, q=fixed.q, w=w, seed=params.seed)
    keep_trace = force_trace or n <= 1024
    counter = None
    if not keep_trace:
        counter = probelab.StreamingTransferCounter(
            n, engines.store_capacity(problem, algo, n)
        )
    run = engines.run_traced(problem, algo, fixed, stream, params,
                             record_trace=keep_trace, transfer_counter=counter)
    if keep_trace:
        tree = probelab.compute_info_transfer(run.trace, n)
    else:
        tree = counter.to_tree()
    return run, tree, keep_trace


def cmd_run(args) -> int:
    out = _out_dir(args.out)
    problem = _problem(args.problem)
    started = time.time()
    if args.fixed_file:
        fixed, role = core.load_symbol_string(args.fixed_file)
        if role != "fixed":
            raise CliError(f"{args.fixed_file} has role {role!r}, expected 'fixed'")
        extras: dict = {}
    else:
        fixed, extras = _build_fixed(args.family, args.n, args.q, args.seed, args.mu)
    n, q = len(fixed), fixed.q
    if args.stream_file:
        stream, role = core.load_symbol_string(args.stream_file)
        if role != "stream":
            raise CliError(f"{args.stream_file} has role {role!r}, expected 'stream'")
        stream_extras: dict = {}
    else:
        stream, stream_extras = _build_stream(problem, n, q, args.seed, extras)
    if len(stream) != n:
        raise CliError(f"stream length {len(stream)} != n={n}")

    run, tree, kept_trace = _traced_run(problem, args.algo, fixed, stream,
                                        args.w, args.force_trace)
    sum_pp = probelab.sum_information_transfer(tree, 2, "probed_probed")
    sum_wr = probelab.sum_information_transfer(tree, 2, "written_read")
    bound_ok = sum_pp <= run.store.probes

    with open(out / "outputs.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "A_t"])
        writer.writerows(
            zip(range(n), stream.codes.tolist(), run.outputs.tolist())
        )
    tree.to_csv(out / "tree.csv")
    if kept_trace:
        run.trace.to_csv(out / "trace.csv")
    if not args.no_figures:
        figures.save_tree_figure(tree, out / "fig_tree.png",
                                 title=f"{problem}/{args.algo} n={n} q={q}")
        figures.save_outputs_figure(stream.codes, run.outputs, out / "fig_outputs.png",
                                    title=f"{problem}/{args.algo} n={n} q={q}")

    report = {
        "config": {
            "problem": problem, "algo": args.algo, "n": n, "q": q,
            "w": run.params.w, "seed": args.seed, "family": args.family,
        },
        "totals": {
            "probes": run.store.probes,
            "reads": run.store.reads,
            "writes": run.store.writes,
            "sum_iv_probed_probed": sum_pp,
            "sum_iv_written_read": sum_wr,
            "amortized_iv_per_output": sum_pp / n,
            "probes_per_output": run.store.probes / n,
        },
        "counting_bound_ok": bound_ok,
        "kernel_calls": run.kernel_counter.calls if run.kernel_counter else None,
        "kernel_mults": run.kernel_counter.mults if run.kernel_counter else None,
        "trace_kept": kept_trace,
        "draws": list(stream_extras.get("draws", [])),
        "state_layout": run.factory(
            probelab.CellStore(run.params.w, run.capacity, record_trace=False)
        ).state_layout(),
        "wall_time_s": round(time.time() - started, 3),
    }
    _write_json(out / "report.json", report)
    status = "ok" if bound_ok else "COUNTING BOUND VIOLATED"
    print(f"run {problem}/{args.algo} n={n} q={q}: probes={run.store.probes} "
          f"sum_iv={sum_pp} ({status}); artifacts in {out}")
    return 0 if bound_ok else 1


# ---------------------------------------------------------------------------
# verify suites


def _check(name: str, ok: bool, detail: str, warn_only: bool = False) -> dict:
    status = "PASS" if ok else ("WARN" if warn_only else "FAIL")
    return {"name": name, "status": status, "detail": detail}


def suite_conv_kn(n: int, q: int, trials: int, seed: int) -> list[dict]:
    fixed = SymbolString(instances.make_kn(n).codes, q)
    rng = named_rng(seed, "verify-conv-kn")
    bad = 0
    nodes = tree_windows(n)
    for _ in range(trials):
        u = SymbolString(rng.integers(0, q, n), q)
        outputs = engines.conv_outputs_reference(fixed, u, q)
        for v in nodes:
            rep = witnesses.decode_conv_kn(core.slice_av(outputs, v), v, fixed, u)
            if not rep.verify_against(u) or len(rep.recovered) != v.half - v.half // 2:
                bad += 1
    return [_check(f"conv-kn n={n} q={q}", bad == 0,
                   f"{trials} streams x {len(nodes)} nodes, {bad} failures")]


def suite_toeplitz_fraction(q: int, ell: int) -> list[dict]:
    got = instances.toeplitz_nonsingular_fraction(q, ell)
    want = Fraction(q - 1, q)
    return [_check(f"toeplitz-fraction q={q} ell={ell}", got == want,
                   f"enumerated {got}, expected {want}")]


def suite_toeplitz_decoder(q: int, trials: int, seed: int, n: int = 16) -> list[dict]:
    rng = named_rng(seed, "verify-toeplitz")
    recovered = 0
    bad = 0
    nodes = [v for v in tree_windows(n) if v.half in (2, 4)]
    for _ in range(trials):
        fixed = SymbolString(rng.integers(0, q, n), q)
        u = SymbolString(rng.integers(0, q, n), q)
        outputs = engines.conv_outputs_reference(fixed, u, q)
        for v in nodes:
            rep = witnesses.decode_conv_toeplitz(core.slice_av(outputs, v), v, fixed, u)
            if rep.ambiguity == 1:
                recovered += 1
                if not rep.verify_against(u) or len(rep.recovered) != v.half:
                    bad += 1
    return [_check(f"toeplitz-decoder q={q}", bad == 0 and recovered > 0,
                   f"{recovered} nonsingular windows recovered, {bad} failures")]


def suite_kqn() -> list[dict]:
    checks = []
    checks.append(_check("kqn value", instances.make_kqn(16, 8) == 65814,
                         f"K(16,8) = {instances.make_kqn(16, 8)}, expected 65814"))
    ok = True
    for q in (2, 4, 16):
        digits_per = (q.bit_length() - 1)
        for n in range(1, 33):
            m = n * digits_per
            if m < 2:
                continue
            if instances.kqn_bits(q, n) != instances.make_kn(m).codes.tolist()[::-1]:
                ok = False
    checks.append(_check("kqn reversal identity", ok, "q in {2,4,16}, n <= 32"))
    return checks


def suite_lemma1(problem: str, n: int, trials: int, seed: int) -> list[dict]:
    rng = named_rng(seed, "verify-lemma1", problem)
    bad = 0
    for _ in range(trials):
        q = 5 if problem != "hamming" else 6
        fixed = SymbolString(rng.integers(0, q, n), q)
        hi = q - 1 if problem == "hamming" else q
        stream = SymbolString(rng.integers(0, hi, n), q)
        run = engines.run_traced(problem, "naive", fixed, stream)
        for v in tree_windows(n):
            try:
                probelab.roundtrip_check(run.factory, stream.codes, run.outputs,
                                         run.trace, v, run.params.w, run.capacity)
            except probelab.DecodeMismatch:
                bad += 1
    return [_check(f"lemma1-roundtrip {problem} n={n}", bad == 0,
                   f"{trials} runs, all nodes, {bad} mismatches")]


def suite_sum_oracle(mu: int, trials: int, seed: int) -> list[dict]:
    rng = named_rng(seed, "verify-sums")
    bad = 0
    for _ in range(trials):
        size = mu * (mu - 1)
        vectors = tuple(tuple(int(b) for b in rng.integers(0, 2, mu)) for _ in range(size))
        keep = max(mu, size - int(rng.integers(0, max(1, size - mu + 1))))
        blocked = frozenset(int(i) for i in rng.choice(size, size - keep, replace=False))
        vm = instances.VectorMultiset(mu, vectors, blocked)
        if witnesses.enumerate_sums(vm) != witnesses.enumerate_sums_recursive(vm):
            bad += 1
    return [_check(f"sum-oracle mu={mu}", bad == 0, f"{trials} trials, {bad} disagreements")]


def suite_hamarray_sum(mu: int, seed: int = 0) -> list[dict]:
    import itertools as it

    q = mu * mu + 2
    vm = instances.search_vector_multiset(mu, trials=16, seed=seed)
    r_string = instances.build_r(vm, q)
    r = len(r_string)
    combos = it.combinations(range(len(vm.vectors)), mu)
    phases = []
    for _ in range(mu):
        try:
            phases.append([next(combos)])
        except StopIteration:
            break
    pop = instances.populate_uprime(vm, q, phases)
    ha = instances.hamarray(r_string, pop.uprime)
    bad = sum(
        1
        for wexp in pop.windows
        for k in range(mu)
        if int(ha[wexp.start_alignment + 1 + k]) != r - wexp.sums[k]
    )
    return [_check(f"hamarray-sum mu={mu}", bad == 0,
                   f"{len(pop.windows)} windows x {mu} entries, {bad} mismatches")]


def suite_cyclic_code(mu: int, gamma: int, seed: int = 0) -> list[dict]:
    code = instances.search_cyclic_code(mu, gamma, seed=seed)
    failures = instances.check_cyclic_code(code)
    detail = (f"size {len(code)} of bound {(mu - 1) ** gamma}; "
              + ("; ".join(failures) if failures else "all four invariants hold"))
    return [_check(f"cyclic-code mu={mu} gamma={gamma}", not failures, detail)]


def suite_hamming_blocks(mu: int, n: int, seed: int) -> list[dict]:
    inst = instances.build_hamming_instance(mu, n, seed=seed)
    stream, draws = instances.sample_hamming_stream(inst, n, seed + 1)
    run = engines.run_traced("hamming", "naive", inst.fixed, stream,
                             record_trace=False)
    sqrt_n = 1 << (core.ceil_log2(n) // 2 + (core.ceil_log2(n) % 2))
    bad = 0
    total = 0
    for v in tree_windows(n):
        if v.ell < sqrt_n:
            continue
        claim = witnesses.recoverable_blocks(v, inst)
        rep = witnesses.decode_hamming_blocks(
            core.slice_av(run.outputs, v), v, inst, stream)
        if not claim:
            continue
        total += len(claim)
        if not rep.ok or not rep.verify_against(stream):
            bad += 1
            continue
        for blk in claim:
            member = inst.family.members[draws[blk]]
            got = [rep.recovered.get(t) for t in range(blk * 2 * inst.r, (blk + 1) * 2 * inst.r)]
            if got != member.codes.tolist():
                bad += 1
    return [_check(f"hamming-blocks mu={mu} n={n}", bad == 0 and total > 0,
                   f"{total} block recoveries checked, {bad} failures")]


def suite_mult_ambiguity(n: int = 8, q: int = 2) -> list[dict]:
    fixed = instances.kqn_digits(q, n)
    worst = witnesses.mult_ambiguity_experiment(fixed)
    observed = max(worst.values())
    return [_check(f"mult-ambiguity fixed-operand n={n} q={q}", observed <= 2,
                   f"max collision group over all nodes and fixings: {observed} "
                   f"(expected <= 2)", warn_only=True)]


def suite_mult_fraction(ells=(2, 4), q: int = 2) -> list[dict]:
    checks = []
    for ell in ells:
        frac, _ = witnesses.mult_f_fraction(q, ell)
        checks.append(_check(
            f"mult-fraction q={q} ell_v={ell}", frac >= Fraction(1, 2),
            f"fraction with ambiguity <= 4: {frac} (expected >= 1/2)", warn_only=True))
    return checks


SUITES = {
    "conv-kn": lambda a: suite_conv_kn(a.n or 16, a.q or 5, a.trials, a.seed),
    "toeplitz-fraction": lambda a: suite_toeplitz_fraction(a.q or 2, a.ell),
    "toeplitz-decoder": lambda a: suite_toeplitz_decoder(a.q or 3, a.trials, a.seed),
    "kqn": lambda a: suite_kqn(),
    "lemma1-roundtrip": lambda a: suite_lemma1(_problem(a.problem or "conv"),
                                               a.n or 16, a.trials, a.seed),
    "sum-oracle": lambda a: suite_sum_oracle(a.mu, a.trials, a.seed),
    "hamarray-sum": lambda a: suite_hamarray_sum(a.mu, a.seed),
    "cyclic-code": lambda a: suite_cyclic_code(max(a.mu, 4), a.gamma, a.seed),
    "hamming-blocks": lambda a: suite_hamming_blocks(a.mu, a.n or 64, a.seed),
    "mult-ambiguity": lambda a: suite_mult_ambiguity(a.n or 8, a.q or 2),
    "mult-fraction": lambda a: suite_mult_fraction(q=a.q or 2),
}


def cmd_verify(args) -> int:
    out = _out_dir(args.out)
    if args.suite == "all":
        names = list(SUITES)
    else:
        if args.suite not in SUITES:
            raise CliError(f"unknown suite {args.suite!r}; options: "
                           + ", ".join(sorted(SUITES)) + ", all")
        names = [args.suite]
    checks: list[dict] = []
    for name in names:
        checks.extend(SUITES[name](args))
    for check in checks:
        print(f"{check['status']:4s} {check['name']}: {check['detail']}")
    failed = [c for c in checks if c["status"] == "FAIL"]
    warned = [c for c in checks if c["status"] == "WARN"]
    _write_json(out / "verify.json", {
        "suite": args.suite, "checks": checks,
        "failed": len(failed), "warned": len(warned),
    })
    print(f"{len(checks) - len(failed) - len(warned)} passed, "
          f"{len(warned)} warned, {len(failed)} failed")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(args) -> int:
    out = _out_dir(args.out)
    problem = _problem(args.problem)
    ns = [int(x) for x in args.ns.split(",") if x]
    for n in ns:
        if not core.is_power_of_two(n):
            raise CliError(f"n={n} rejected: n must be a power of two")
    algos = [a for a in args.algos.split(",") if a]
    rows: list[dict] = []
    for n in ns:
        for algo in algos:
            fixed, extras = _build_fixed(args.family, n, args.q, args.seed, args.mu)
            stream, _ = _build_stream(problem, n, fixed.q, args.seed, extras)
            run, tree, _ = _traced_run(problem, algo, fixed, stream, None, False)
            sum_pp = probelab.sum_information_transfer(tree, 2, "probed_probed")
            sum_wr = probelab.sum_information_transfer(tree, 2, "written_read")
            rows.append({
                "n": n, "problem": problem, "algo": algo,
                "total_probes": run.store.probes,
                "sum_iv_pp": sum_pp, "sum_iv_wr": sum_wr,
                "probes_per_output": run.store.probes / n,
                "iv_pp_per_output": sum_pp / n,
            })
            if sum_pp > run.store.probes:
                raise CliError(f"counting bound violated at n={n} algo={algo}")
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "problem", "algo", "total_probes", "sum_iv_pp",
                         "sum_iv_wr", "probes_per_output", "iv_pp_per_output"])
        for row in rows:
            writer.writerow([row["n"], row["problem"], row["algo"],
                             row["total_probes"], row["sum_iv_pp"], row["sum_iv_wr"],
                             f"{row['probes_per_output']:.4f}",
                             f"{row['iv_pp_per_output']:.4f}"])
    warns = []
    for algo in algos:
        series = [r["iv_pp_per_output"] for r in sorted(
            (r for r in rows if r["algo"] == algo), key=lambda r: r["n"])]
        if any(b < a for a, b in zip(series, series[1:])):
            warns.append(f"amortized sum I_v per output not nondecreasing for {algo}")
    if not args.no_figures and rows:
        figures.save_sweep_figure(rows, out / "fig_sweep.png",
                                  title=f"{problem} sweep (q={args.q})")
    _write_json(out / "sweep_report.json", {
        "config": {"problem": problem, "algos": algos, "ns": ns, "q": args.q,
                   "seed": args.seed, "family": args.family},
        "rows": rows, "warnings": warns,
    })
    for warn in warns:
        print(f"WARN {warn}")
    print(f"sweep over n in {ns}: {len(rows)} rows in {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--n", type=int, default=None)
    sub.add_argument("--q", type=int, default=None)
    sub.add_argument("--w", type=int, default=None)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--mu", type=int, default=2)
    sub.add_argument("--gamma", type=int, default=1)
    sub.add_argument("--ell", type=int, default=2)
    sub.add_argument("--trials", type=int, default=20)
    sub.add_argument("--family", default="random",
                     choices=["kn", "kqn", "random", "hamming-pipeline"])
    sub.add_argument("--out", default=None,
                     help=f"output directory (default ${OUT_ENV} or ./streamprobe_out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamprobe",
        description="streaming convolution/multiplication/Hamming lab "
                    "with cell-probe tracing",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("gen", help="construct an instance bundle")
    _add_common(gen)
    gen.set_defaults(func=cmd_gen, n=64, q=2)

    run = subs.add_parser("run", help="run a processor under tracing")
    _add_common(run)
    run.add_argument("--problem", required=True)
    run.add_argument("--algo", default="naive", choices=["naive", "fast"])
    run.add_argument("--fixed-file", default=None)
    run.add_argument("--stream-file", default=None)
    run.add_argument("--force-trace", action="store_true",
                     help="keep the full trace even for large n")
    run.add_argument("--no-figures", action="store_true")
    run.set_defaults(func=cmd_run, n=16, q=5)

    verify = subs.add_parser("verify", help="run witness suites")
    _add_common(verify)
    verify.add_argument("--suite", default="all")
    verify.add_argument("--problem", default=None)
    verify.set_defaults(func=cmd_verify)

    sweep = subs.add_parser("sweep", help="growth table across n")
    _add_common(sweep)
    sweep.add_argument("--problem", required=True)
    sweep.add_argument("--algos", default="naive,fast")
    sweep.add_argument("--ns", default="64,128,256,512")
    sweep.add_argument("--no-figures", action="store_true")
    sweep.set_defaults(func=cmd_sweep, q=5)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, core.ParameterError, instances.ConstructionError,
            engines.EngineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

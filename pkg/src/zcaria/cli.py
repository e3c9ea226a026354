"""Command-line front end.

Exit codes: 0 success, 1 a checked claim failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import attack as A
from . import fwht as F
from . import masks as M
from . import stats
from .cipher import PROFILE_DIR_ENV, PairFileError, PairSet, ProfileError, generate_dataset, load_profile, random_round_keys
from .circuits import Circuit

DEFAULT_PROFILE_ENV = "ZCARIA_PROFILE"
# k1[0] style cells and k7,2 style combined keys, so "k1[0],k7,2" splits cleanly
KEY_NAME = re.compile(r"k\d+(?:\[\d+\]|,\d+)")


class UsageError(Exception):
    pass


def load_schema(name: str) -> dict:
    """Bundled JSON schema for a subcommand report (``verify_zc``, ``plan``, ...)."""
    return json.loads(resources.files("zcaria").joinpath("schemas", f"{name}.json").read_text())


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _profile(args, rounds: int | None = None):
    try:
        return load_profile(args.profile, rounds=rounds)
    except (ProfileError, OSError, ValueError) as exc:
        raise UsageError(f"cannot load profile {args.profile!r}: {exc}") from exc


def _invocation(args) -> str:
    return " ".join(["zcaria"] + sys.argv[1:]) if sys.argv else "zcaria"


# -- verify-zc ------------------------------------------------------------------------


def cmd_verify_zc(args) -> int:
    profile = _profile(args)
    out_pattern = M.claimed_output_pattern()
    family = M.single_cell_family()
    hulls = M.enumerate_zc_hulls(family, [out_pattern], args.half_rounds)
    diff = M.enumerate_zc_hulls(family, [out_pattern], args.half_rounds, mode=M.DIFFERENCE)
    found = {h.input.support[0]: h for h in hulls}
    claimed = {}
    ok = True
    for cell in M.CLAIMED_INPUT_CELLS:
        h = found.get(cell)
        claimed[str(cell)] = {"proved": h is not None, "witness": None if h is None else list(h.witness.cells)}
        ok &= h is not None
    report = {
        "profile": profile.name,
        "output_pattern": str(out_pattern),
        "half_rounds": args.half_rounds,
        "hulls": [h.to_dict() for h in hulls],
        "hull_input_cells": sorted(found),
        "difference_mode_input_cells": sorted(h.input.support[0] for h in diff),
        "claimed_input_cells": list(M.CLAIMED_INPUT_CELLS),
        "claimed": claimed,
        "seed": args.seed,
    }
    if args.exhaustive:
        ex_profile = profile if profile.cell_width == 2 else load_profile("toy2")
        rng = np.random.default_rng(args.seed)
        cells = sorted(set(found) | set(M.CLAIMED_INPUT_CELLS))
        values = M.hull_instantiations(2, args.instantiations)
        runs = []
        for t in range(args.keys):
            keys = random_round_keys(ex_profile.with_rounds(5), rng)[1:5]
            corr = M.hull_correlations(ex_profile, cells, keys, values, threads=args.threads)
            for cell, rows in corr.items():
                for b, h, c in rows:
                    runs.append({"key_set": t, "input_cell": cell, "b": b, "h": h, "correlation": str(c)})
                    if cell in found and c != 0:
                        ok = False
        report["exhaustive"] = {"profile": ex_profile.name, "keys": args.keys, "results": runs}
    report["verified"] = bool(ok)
    _emit(report, args.out)
    return 0 if ok else 1


# -- plan -----------------------------------------------------------------------------


def _errs(args, rounds: int) -> stats.ErrorProbs:
    base = stats.TARGET_6R if rounds == 6 else stats.TARGET_7R
    return stats.ErrorProbs(
        base.log2_beta0 if args.beta0 is None else args.beta0,
        base.log2_beta1 if args.beta1 is None else args.beta1,
    )


def cmd_plan(args) -> int:
    variants = A.VARIANTS if args.all else [args.variant]
    if not args.all and args.variant is None:
        raise UsageError("give --variant or --all")
    try:
        plans = [A.plan(v, args.n, None, _errs(args, int(v[0]))) for v in variants]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.format == "table":
        text = A.plan_table(plans) + "\n\n" + A.COST_CONVENTION + "\n"
        if args.out:
            Path(args.out).write_text(text)
        else:
            print(text, end="")
    else:
        _emit({"plans": [p.to_dict() for p in plans]}, args.out)
    return 0


# -- gen ------------------------------------------------------------------------------


def _write_keys(path, profile, keys) -> None:
    Path(path).write_text(
        json.dumps({"profile": profile.name, "rounds": profile.rounds, "round_keys": np.asarray(keys).tolist()}) + "\n"
    )


def _read_keys(path) -> np.ndarray:
    try:
        return np.array(json.loads(Path(path).read_text())["round_keys"], dtype=np.uint8)
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read round keys from {path}: {exc}") from exc


def cmd_gen(args) -> int:
    profile = _profile(args, args.rounds)
    rng = np.random.default_rng(args.seed)
    keys = _read_keys(args.keys) if args.keys else random_round_keys(profile, rng)
    try:
        generate_dataset(profile, keys, args.count, args.seed + 1, path=args.pairs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.keys_out:
        _write_keys(args.keys_out, profile, keys)
    _emit({"pairs": args.pairs, "count": args.count, "rounds": profile.rounds, "profile": profile.name,
           "seed": args.seed, "invocation": _invocation(args)}, args.out)
    return 0


# -- attack ---------------------------------------------------------------------------


def _parse_pins(items) -> dict[str, int]:
    pins = {}
    for item in items or []:
        name, _, value = item.partition("=")
        if not value:
            raise UsageError(f"pin {item!r} is not NAME=VALUE")
        pins[name.strip()] = int(value, 0)
    return pins


def cmd_attack(args) -> int:
    try:
        pairs = PairSet.read(args.pairs)
    except (OSError, PairFileError) as exc:
        raise UsageError(f"cannot read pairs: {exc}") from exc
    if len(pairs) == 0:
        raise UsageError("pair file holds no pairs; the statistic is undefined for N = 0")
    if args.count is not None:
        if args.count < 1 or args.count > len(pairs):
            raise UsageError(f"--count must lie in 1..{len(pairs)}")
        pairs = PairSet(pairs.cell_width, pairs.rounds, pairs.plaintexts[: args.count], pairs.ciphertexts[: args.count])
    profile = _profile(args, pairs.rounds)
    if profile.cell_width != pairs.cell_width:
        raise UsageError(f"profile width {profile.cell_width} does not match the pair file ({pairs.cell_width})")
    keys = _read_keys(args.keys) if args.keys else None
    circuit = Circuit(profile, pairs.rounds)
    pins = _parse_pins(args.pin)
    if args.free is not None:
        if keys is None:
            raise UsageError("--free needs --keys to pin the remaining cells to their true values")
        free = KEY_NAME.findall(args.free)
        true = circuit.true_guess(keys)
        bad = [f for f in free if f not in true]
        if bad or not free:
            raise UsageError(f"unknown key cells: {bad or args.free!r}")
        pins = {k: v for k, v in true.items() if k not in free} | pins
    try:
        cfg = A.ExperimentConfig(profile, pairs.rounds, pins, args.tau, true_keys=keys, seed=args.seed)
        run = A.run_partial_sum_attack if args.technique == "ps" else A.run_fft_attack
        result = run(cfg, pairs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    payload = result.to_dict() | {"variant": f"{pairs.rounds}r-{args.technique}", "invocation": _invocation(args),
                                  "parameters": {"profile": profile.name, "pinned": pins}}
    if args.report_dir:
        from . import report

        d = Path(args.report_dir)
        d.mkdir(parents=True, exist_ok=True)
        report.write_attack_csv(result, d / "attack.csv")
        report.plot_attack(result, d / "attack.png")
    _emit(payload, args.out)
    return 0


# -- calibrate ------------------------------------------------------------------------


def cmd_calibrate(args) -> int:
    if args.l < 2 or args.N < 1 or args.N > 1 << args.n:
        raise UsageError("need l >= 2 and 1 <= N <= 2^n")
    rates = A.measure_error_rates(
        args.n, args.l, args.N, args.trials, args.seed, stats.ErrorProbs.from_probs(args.beta0, args.beta1), args.tau
    )
    payload = rates.to_dict() | {"n": args.n, "l": args.l, "N": args.N, "seed": args.seed,
                                 "target_beta0": args.beta0, "invocation": _invocation(args)}
    if args.report_dir:
        from . import report

        d = Path(args.report_dir)
        d.mkdir(parents=True, exist_ok=True)
        report.write_calibration_csv(rates, d / "calibration.csv")
        report.plot_calibration(rates, d / "calibration.png")
    _emit(payload, args.out)
    return 0


# -- fwht-selftest --------------------------------------------------------------------


def cmd_fwht_selftest(args) -> int:
    rng = np.random.default_rng(args.seed)
    failures = 0
    worst_ratio = 0.0
    for _ in range(args.instances):
        m = int(rng.integers(1, args.max_m + 1))
        signs = F.SignTable(m, rng.integers(0, 2, 1 << m).astype(np.uint8))
        x = rng.integers(0, 50, 1 << m)
        ops = F.OpCounter()
        eps = F.xor_convolve(signs, x, counter=ops)
        failures += not np.array_equal(eps, F.naive_convolve(signs, x))
        worst_ratio = max(worst_ratio, ops.additions / (3 * m * 2**m + 2**m))
        v = rng.integers(-100, 100, 1 << m)
        t = F.fwht(v)
        failures += not np.array_equal(F.fwht(t), v << m)
        failures += int((t.astype(object) ** 2).sum()) != (1 << m) * int((v.astype(object) ** 2).sum())
    _emit({"instances": args.instances, "max_m": args.max_m, "failures": failures,
           "max_addition_ratio": worst_ratio, "seed": args.seed}, args.out)
    return 0 if failures == 0 and worst_ratio <= 1 else 1


# -- report ---------------------------------------------------------------------------


def cmd_report(args) -> int:
    from . import report

    d = Path(args.outdir)
    d.mkdir(parents=True, exist_ok=True)
    plans = [A.plan(v) for v in A.VARIANTS]
    report.write_plan_csv(plans, d / "plans.csv")
    report.write_plan_steps_csv(plans, d / "plan_steps.csv")
    report.plot_plan_steps(plans, d / "plan_steps.png")
    (d / "plans.json").write_text(json.dumps({"plans": [p.to_dict() for p in plans]}, indent=2) + "\n")
    rates = A.measure_error_rates(args.n, args.l, args.N, args.trials, args.seed,
                                  stats.ErrorProbs.from_probs(args.beta0, 0.25))
    report.write_calibration_csv(rates, d / "calibration.csv")
    report.plot_calibration(rates, d / "calibration.png")
    (d / "calibration.json").write_text(json.dumps(rates.to_dict(), indent=2) + "\n")
    files = sorted(p.name for p in d.iterdir())
    _emit({"outdir": str(d), "files": files, "seed": args.seed}, args.out)
    return 0


# -- parser ---------------------------------------------------------------------------


def _pow2_int(text: str) -> int:
    text = text.strip()
    if text.startswith("2^"):
        return 1 << int(text[2:])
    return int(text, 0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zcaria", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("--profile", default=os.environ.get(DEFAULT_PROFILE_ENV, "toy4"),
                        help=f"profile name or path (bundled, ${PROFILE_DIR_ENV}, or a file)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out", help="write the JSON report here instead of stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-zc", help="prove the 4-round hulls symbolically")
    p.add_argument("--half-rounds", type=int, default=2)
    p.add_argument("--exhaustive", action="store_true", help="exact 2^32 check on 2-bit cells")
    p.add_argument("--keys", type=int, default=3, help="random key sets for --exhaustive")
    p.add_argument("--instantiations", type=int, default=2, help="(b, h) values per hull")
    p.set_defaults(func=cmd_verify_zc)

    p = sub.add_parser("plan", help="full-scale complexity figures")
    p.add_argument("--variant", choices=A.VARIANTS)
    p.add_argument("--all", action="store_true")
    p.add_argument("--beta0", type=float, help="log2 of beta0")
    p.add_argument("--beta1", type=float, help="log2 of beta1")
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--format", choices=("table", "json"), default="json")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("gen", help="generate a pair file")
    p.add_argument("--count", type=_pow2_int, required=True)
    p.add_argument("--rounds", type=int, default=6)
    p.add_argument("--pairs", required=True)
    p.add_argument("--keys", help="round keys JSON to use instead of random ones")
    p.add_argument("--keys-out", help="write the round keys used here")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("attack", help="desk-scale key recovery")
    p.add_argument("--pairs", required=True)
    p.add_argument("--keys", help="true round keys JSON (pins cells, ranks the right key)")
    p.add_argument("--technique", choices=("ps", "fft"), default="ps")
    p.add_argument("--free", help="comma-separated key cells to enumerate; the rest are pinned")
    p.add_argument("--pin", action="append", help="NAME=VALUE, repeatable")
    p.add_argument("--count", type=_pow2_int, help="use only the first COUNT pairs")
    p.add_argument("--tau", type=float)
    p.add_argument("--report-dir")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("calibrate", help="error rates against synthetic sources")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--l", type=int, default=16)
    p.add_argument("--N", type=_pow2_int, default=1 << 18)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--beta0", type=float, default=0.25)
    p.add_argument("--beta1", type=float, default=0.25)
    p.add_argument("--tau", type=float)
    p.add_argument("--report-dir")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("fwht-selftest", help="transform and convolution against naive oracles")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--max-m", type=int, default=10)
    p.set_defaults(func=cmd_fwht_selftest)

    p = sub.add_parser("report", help="plan and calibration tables plus figures")
    p.add_argument("--outdir", required=True)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--l", type=int, default=16)
    p.add_argument("--N", type=_pow2_int, default=1 << 18)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--beta0", type=float, default=0.25)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"zcaria: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

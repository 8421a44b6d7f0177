"""Command line front end: build, train, game, sweep, verify, replay.

Outputs go to --out, else $GHALAB_OUT_DIR, else ./ghalab-out. The exit code
is 0 when every requested verdict was computed, whether or not it passed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import exact_arith as ea
from .adversary import ALGORITHMS, run_breakdown_game, write_transcript
from .networks import net_from_json
from .oracle import QueryLog, replay
from .problems import FamilyValidationError, family_from_config, family_from_manifest
from .sweep import cells_from_spec, family_name, run_sweep, stored_outcome, train_cell, verify_stored
from .trainers import TRAINERS, ContractError, TrainingError, run_trainer

OUT_ENV = "GHALAB_OUT_DIR"


class CommandError(Exception):
    pass


def _out_dir(args) -> str:
    path = args.out or os.environ.get(OUT_ENV) or "ghalab-out"
    os.makedirs(path, exist_ok=True)
    return path


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise CommandError(f"{path}: malformed JSON ({exc})") from None
    except OSError as exc:
        raise CommandError(f"{path}: {exc.strerror}") from None


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise CommandError("missing " + ", ".join("--" + n for n in missing))


def _load_family(path: str):
    obj = _load_json(path)
    return family_from_manifest(obj) if "config" in obj and "members" in obj else family_from_config(obj)


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------------
# commands


def cmd_build(args) -> int:
    _need(args, "config")
    cfg = _load_json(args.config)
    family = family_from_config(cfg)
    path = os.path.join(_out_dir(args), f"{family_name(cfg)}.manifest.json")
    manifest = family.to_manifest()
    manifest["config"] = dict(cfg)
    _write_json(path, manifest)
    print(f"kappa_eff_sq={ea.rational_str(family.kappa_eff_sq)} members={len(family.members())}")
    print(path)
    return 0


def cmd_train(args) -> int:
    _need(args, "family", "eps")
    family = _load_family(args.family)
    branch = args.branch or 1
    n = args.n or 1
    trainer = args.trainer or "rbf"
    eps = ea.rational_from_json(args.eps)
    try:
        res = train_cell(family, branch, n, trainer, eps, args.seed)
    except (ContractError, TrainingError) as exc:
        print(f"no verdict: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    stored = stored_outcome(family.config, branch, n, eps, args.seed, trainer, res)
    tag = f"{trainer}-b{branch}-n{n}-eps{ea.rational_str(eps).replace('/', '_')}"
    path = os.path.join(_out_dir(args), f"{tag}.outcome.json")
    _write_json(path, stored)
    v = res["verdict"]
    print(f"{'PASS' if v.passed else 'FAIL'} violation_sq={ea.rational_str(v.violation_sq)} "
          f"bound_sq={ea.rational_str(v.bound_sq)} queries={stored['queries']}")
    print(path)
    return 0


def cmd_game(args) -> int:
    _need(args, "family")
    family = _load_family(args.family)
    key = args.trainer or "rbf"
    if key not in ALGORITHMS:
        raise CommandError(f"unknown algorithm {key!r}; choose from {sorted(ALGORITHMS)}")
    eps = None if args.eps is None else ea.rational_from_json(args.eps)
    tr = run_breakdown_game(ALGORITHMS[key](family), family, eps, args.budget or 10 ** 6)
    out = _out_dir(args)
    tpath = os.path.join(out, f"game-{key}.transcript.jsonl")
    write_transcript(tr, tpath)
    report = tr.report(tpath)
    _write_json(os.path.join(out, f"game-{key}.json"), report)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    _need(args, "config")
    spec = _load_json(args.config)
    families = list(spec.get("families", []))
    if args.family:
        families.append(args.family)
    configs = []
    for f in families:
        obj = _load_json(f) if isinstance(f, str) else f
        configs.append(obj["config"] if "members" in obj else obj)
    if args.eps:
        spec["eps"] = [args.eps]
    if args.trainer:
        spec["trainers"] = [args.trainer]
    cells = cells_from_spec(spec, configs)
    out = _out_dir(args)
    rows = run_sweep(cells, out, args.jobs or 1)
    errors = sum(1 for r in rows if r["verdict"] == "ERROR")
    print(f"{len(rows)} rows, {errors} without a verdict -> {os.path.join(out, 'results.csv')}")
    return 0 if errors == 0 else 1


def _outcome_files(path: str) -> list[str]:
    if os.path.isdir(path):
        sub = os.path.join(path, "outcomes")
        base = sub if os.path.isdir(sub) else path
        return sorted(os.path.join(base, f) for f in os.listdir(base) if f.endswith(".json"))
    return [path]


def cmd_verify(args) -> int:
    files = []
    for f in _outcome_files(args.path):
        obj = _load_json(f)
        if "net" in obj and "verdict" in obj:
            files.append((f, obj))
    if not files:
        raise CommandError(f"no stored outcomes under {args.path}")
    mismatches = 0
    for f, obj in files:
        same, fresh = verify_stored(obj)
        mismatches += not same
        print(f"{'OK      ' if same else 'MISMATCH'} {'PASS' if fresh.passed else 'FAIL'} {f}")
    print(f"{len(files)} outcomes re-verified, {mismatches} mismatches")
    return 0


def cmd_replay(args) -> int:
    stored = _load_json(args.path)
    family = family_from_config(stored["config"])
    T = family.iota(stored["branch"], stored["n"], strict=False)
    oracle = replay(QueryLog.from_jsonl(stored["log"]), len(T), T.N, T.m)
    outcome = run_trainer(stored["trainer"], oracle, ea.rational_from_json(stored["eps"]), family)
    same = outcome.net == net_from_json(stored["net"])
    print(f"{'IDENTICAL' if same else 'DIFFERENT'} net from {len(oracle.log)} replayed answers")
    return 0


COMMANDS = {
    "build": cmd_build, "train": cmd_train, "game": cmd_game,
    "sweep": cmd_sweep, "verify": cmd_verify, "replay": cmd_replay,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ghalab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name in ("verify", "replay"):
            p.add_argument("path", help="stored outcome file or sweep output directory")
        p.add_argument("--config")
        p.add_argument("--family", help="family manifest or config JSON")
        p.add_argument("--branch", type=int, choices=(1, 2))
        p.add_argument("--n", type=int)
        p.add_argument("--eps", help="rational such as 1/64")
        p.add_argument("--trainer", help=f"trainer {sorted(TRAINERS)} or game algorithm {sorted(ALGORITHMS)}")
        p.add_argument("--seed", type=int, help="jitter-oracle seed (exact oracle when omitted)")
        p.add_argument("--budget", type=int)
        p.add_argument("--out")
        p.add_argument("--jobs", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except FamilyValidationError as exc:
        print(f"invalid family: {exc}", file=sys.stderr)
        return 1
    except (CommandError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

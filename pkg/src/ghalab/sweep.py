"""Sweep cells, their CSV rows and stored outcomes.

A cell is one (family, member, trainer, eps[, oracle seed]) training run or
one (family, algorithm, eps) breakdown game. Cells are independent, so they
run in a process pool; rows are sorted by their key before writing.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from functools import lru_cache

from . import exact_arith as ea
from .adversary import ALGORITHMS, run_breakdown_game
from .networks import net_from_json
from .optimality import Verdict, is_eps_accurate
from .oracle import ExactOracle, JitterOracle
from .problems import FamilyValidationError, ProblemFamily, family_from_config
from .trainers import ContractError, TrainingError, blowup_witness, run_trainer

COLUMNS = [
    "family", "kind", "branch", "n", "eps", "trainer", "seed", "verdict", "violation_sq",
    "jacobian_frobenius_sq", "blowup_quotient_sq", "queries", "max_precision",
    "declared_branch", "error_sq", "violation_float_advisory", "wall_ms",
]


@lru_cache(maxsize=64)
def _family(config_json: str) -> ProblemFamily:
    return family_from_config(json.loads(config_json))


def family_name(cfg: dict) -> str:
    return cfg.get("name") or f"{cfg['kind']}-seed{cfg.get('seed', 0)}"


def make_oracle(T, seed: int | None):
    return ExactOracle(T) if seed is None else JitterOracle(T, seed)


def train_cell(family: ProblemFamily, branch: int, n: int, trainer: str, eps: Fraction,
               seed: int | None = None) -> dict:
    """Run one trainer on one member and compute every verdict for it."""
    T = family.iota(branch, n, strict=False)
    start = time.perf_counter()
    outcome = run_trainer(trainer, make_oracle(T, seed), eps, family)
    verdict = is_eps_accurate(outcome.net, family, T, eps)
    ys = family.union_M2()
    frob = max(ea.frobenius_sq(outcome.net.jacobian(y)) for y in ys)
    blowup = None
    if branch == 1:
        blowup, _ = blowup_witness(outcome.net, family, n, family.epsilon1 / 2)
    return {
        "outcome": outcome,
        "verdict": verdict,
        "jacobian_frobenius_sq": frob,
        "blowup_quotient_sq": blowup,
        "wall_ms": (time.perf_counter() - start) * 1000,
    }


def _fmt(q) -> str:
    return "" if q is None else ea.rational_str(q)


def _run_cell(cell: dict) -> tuple[dict, dict | None, str | None]:
    """Worker entry point: returns (csv row, stored outcome, transcript text)."""
    cfg = cell["config"]
    family = _family(json.dumps(cfg, sort_keys=True))
    eps = ea.rational_from_json(cell["eps"])
    row = {c: "" for c in COLUMNS}
    row.update(family=family_name(cfg), kind=family.kind, eps=ea.rational_str(eps), trainer=cell["trainer"])
    if cell["type"] == "game":
        start = time.perf_counter()
        tr = run_breakdown_game(ALGORITHMS[cell["trainer"]](family), family, eps, cell.get("budget", 10 ** 6))
        row.update(
            trainer="game:" + cell["trainer"],
            branch=tr.declared_branch, n=tr.declared_n if tr.n_adv is not None else "",
            verdict="NONHALTING" if tr.nonhalting else ("DEFEATED" if tr.defeated else "SURVIVED"),
            declared_branch=tr.declared_branch, error_sq=_fmt(tr.error_sq),
            queries=len(tr.log), max_precision=tr.log.max_precision,
            wall_ms=f"{(time.perf_counter() - start) * 1000:.1f}",
        )
        buf = io.StringIO()
        buf.write(json.dumps({"header": tr.report()}, sort_keys=True) + "\n")
        buf.write(tr.log.to_jsonl())
        return row, None, buf.getvalue()

    branch, n, seed = cell["branch"], cell["n"], cell.get("seed")
    row.update(branch=branch, n=n, seed="" if seed is None else seed)
    try:
        res = train_cell(family, branch, n, cell["trainer"], eps, seed)
    except ContractError as exc:
        row.update(verdict="OUT_OF_REGIME", violation_sq=str(exc))
        return row, None, None
    except (TrainingError, FamilyValidationError, ValueError) as exc:
        row.update(verdict="ERROR", violation_sq=f"{type(exc).__name__}: {exc}")
        return row, None, None
    v: Verdict = res["verdict"]
    out = res["outcome"]
    row.update(
        verdict="PASS" if v.passed else "FAIL",
        violation_sq=_fmt(v.violation_sq),
        jacobian_frobenius_sq=_fmt(res["jacobian_frobenius_sq"]),
        blowup_quotient_sq=_fmt(res["blowup_quotient_sq"]),
        queries=out.queries, max_precision=out.max_precision,
        violation_float_advisory=f"{float(v.violation_sq):.6g}",
        wall_ms=f"{res['wall_ms']:.1f}",
    )
    return row, stored_outcome(cfg, branch, n, eps, seed, cell["trainer"], res), None


def stored_outcome(cfg: dict, branch: int, n: int, eps, seed, trainer: str, res: dict) -> dict:
    """JSON record of a training run, enough to re-verify and replay it."""
    out = res["outcome"]
    return {
        "config": cfg, "branch": branch, "n": n, "eps": ea.rational_to_json(eps), "seed": seed,
        "trainer": trainer, "net": out.net.to_json(), "certificate": out.certificate.to_json(),
        "verdict": res["verdict"].to_json(),
        "jacobian_frobenius_sq": ea.rational_to_json(res["jacobian_frobenius_sq"]),
        "blowup_quotient_sq": None if res["blowup_quotient_sq"] is None
        else ea.rational_to_json(res["blowup_quotient_sq"]),
        "queries": out.queries, "max_precision": out.max_precision,
        "log": out.log.to_jsonl(),
    }


def applicable(family: ProblemFamily, trainer: str, branch: int) -> bool:
    """pinv needs basis pairs; rbf needs distinct measurements, which branch 2 lacks at y = 0."""
    if trainer == "pinv":
        return family.kind == "thm5"
    if trainer == "rbf":
        return branch == 1
    return True


def cells_from_spec(spec: dict, configs: list[dict]) -> list[dict]:
    """Expand a sweep spec into cells, leaving out trainer/member pairs the trainer cannot take."""
    eps_grid = [ea.rational_to_json(ea.rational_from_json(e)) for e in spec["eps"]]
    if not eps_grid or not configs:
        raise ValueError("sweep needs non-empty family and eps grids")
    if any(ea.rational_from_json(e) <= 0 for e in eps_grid):
        raise ValueError("every eps must be positive")
    seeds = spec.get("seeds", [None])
    cells = []
    for cfg in configs:
        family = _family(json.dumps(cfg, sort_keys=True))
        n_grid = spec.get("n", list(range(1, family.n_max + 1)))
        if not n_grid:
            raise ValueError("n grid must be non-empty")
        members = [(1, n) for n in n_grid] + [(2, 1)]
        for trainer in spec.get("trainers", ["rbf"]):
            for branch, n in members:
                if not applicable(family, trainer, branch):
                    continue
                for eps in eps_grid:
                    for seed in seeds:
                        cells.append({"type": "train", "config": cfg, "branch": branch, "n": n,
                                      "eps": eps, "trainer": trainer, "seed": seed})
        if spec.get("adversary", False):
            for alg in spec.get("algorithms", sorted(ALGORITHMS)):
                for eps in eps_grid:
                    cells.append({"type": "game", "config": cfg, "eps": eps, "trainer": alg,
                                  "budget": spec.get("budget", 10 ** 6)})
    return cells


def _sort_key(row: dict):
    def num(s):
        return Fraction(s) if s not in ("", None) else Fraction(-1)
    return (row["family"], row["trainer"], num(row["branch"]), num(row["n"]), num(row["eps"]), num(row["seed"]))


def run_sweep(cells: list[dict], out_dir: str, jobs: int = 1) -> list[dict]:
    """Run all cells, write results.csv, outcomes/ and transcripts/ under out_dir."""
    os.makedirs(os.path.join(out_dir, "outcomes"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "transcripts"), exist_ok=True)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    order = sorted(range(len(results)), key=lambda i: _sort_key(results[i][0]))
    rows = []
    for idx, i in enumerate(order):
        row, stored, transcript = results[i]
        row = dict(row, row_id=idx)
        if stored is not None:
            with open(os.path.join(out_dir, "outcomes", f"{idx:05d}.json"), "w") as fh:
                json.dump(stored, fh, sort_keys=True)
        if transcript is not None:
            with open(os.path.join(out_dir, "transcripts", f"{idx:05d}.jsonl"), "w") as fh:
                fh.write(transcript)
        rows.append(row)
    with open(os.path.join(out_dir, "results.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["row_id"] + COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return rows


def verify_stored(stored: dict) -> tuple[bool, Verdict]:
    """Recompute the verdict of a stored outcome; True when it matches what was recorded."""
    family = _family(json.dumps(stored["config"], sort_keys=True))
    T = family.iota(stored["branch"], stored["n"], strict=False)
    net = net_from_json(stored["net"])
    fresh = is_eps_accurate(net, family, T, ea.rational_from_json(stored["eps"]))
    return fresh.to_json() == stored["verdict"], fresh

"""Command-line interface: ``adascore {discover,simulate,evaluate,benchmark,replay}``.

Exit codes: 0 success, 2 bad input (unparsable CSV or graph, invalid
flags, mismatched graphs), 3 numerical failure, 4 data generation failure
(no valid hidden set exists).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .discovery import DiscoveryConfig, Mode, adascore
from .errors import (
    ConfigError,
    DegenerateColumn,
    DegenerateData,
    InsufficientSamples,
    NodeCountMismatch,
    NoValidHiding,
    SingularSystem,
    TooFewSamples,
)
from .io import CsvFormatError, GraphFormatError, read_csv, read_graph, write_csv, write_graph
from .metrics import evaluate
from .regression import KrrConfig
from .score import SteinConfig, stein_score_table
from .simulate import Dataset, MechanismKind, make_instance, random_baseline, standardize, write_bundle

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_GENERATION = 0, 2, 3, 4
SUBSET_WARNING_NEIGHBORS = 12

EPILOG = """exit codes:
  0  success
  2  input error (CSV/graph parse failure, invalid flags, node mismatch)
  3  numerical failure (singular kernel system, degenerate data)
  4  generation failure (no hidden set with a confounding effect)
"""


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _fail_input(msg):
    return CliError(EXIT_INPUT, msg)


# ---------------------------------------------------------------------------
# manifests


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config: dict
    seed: int | None
    input_checksums: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)  # relative path -> sha256
    started: str = ""
    finished: str = ""
    version: str = __version__

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _record_outputs(out_dir: Path, names) -> dict:
    return {n: sha256_file(out_dir / n) for n in names}


# ---------------------------------------------------------------------------
# commands


def _discovery_config(args) -> DiscoveryConfig:
    try:
        return DiscoveryConfig(
            mode=Mode(args.mode),
            alpha=args.alpha,
            prune_alpha=args.prune_alpha,
            stein=SteinConfig(eta=args.stein_eta),
            krr=KrrConfig(folds=args.folds, seed=args.seed),
            max_subset_size=args.max_subset_size,
            seed=args.seed,
        )
    except ValueError as exc:
        raise _fail_input(f"invalid configuration: {exc}") from exc


def _load_dataset(path, do_standardize: bool) -> Dataset:
    try:
        values, header = read_csv(path)
    except (CsvFormatError, OSError, UnicodeDecodeError) as exc:
        raise _fail_input(str(exc)) from exc
    if values.ndim != 2 or values.shape[1] < 2:
        raise _fail_input(f"{path}: need at least 2 columns")
    if values.shape[0] < 2:
        raise _fail_input(f"{path}: need at least 2 data rows")
    data = Dataset(values, header)
    if do_standardize:
        try:
            data = standardize(data)
        except DegenerateColumn as exc:
            raise _fail_input(f"{path}: {exc}") from exc
    return data


def cmd_discover(args) -> int:
    started = _now()
    cfg = _discovery_config(args)
    data = _load_dataset(args.csv, not args.no_standardize)
    if args.max_subset_size is None and data.d - 1 > SUBSET_WARNING_NEIGHBORS:
        print(f"warning: {data.d} variables and no --max-subset-size; neighbourhood subset "
              "enumeration may take very long", file=sys.stderr)
    graph, trace = adascore(data, cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mixed = graph.to_mixed() if cfg.mode is Mode.DAG else graph
    write_graph(mixed, out / "graph.txt")
    write_graph(mixed, out / "graph.json")
    names = ["graph.txt", "graph.json"]
    if args.trace:
        (out / "trace.jsonl").write_text(trace.to_jsonl(), encoding="utf-8")
        names.append("trace.jsonl")
    if args.dump_scores:
        _dump_scores(data, cfg, out / "scores.csv")
        names.append("scores.csv")
    RunManifest(
        command="discover",
        argv=list(args.argv),
        config=_jsonable(cfg),
        seed=args.seed,
        input_checksums={str(args.csv): sha256_file(args.csv)},
        outputs=_record_outputs(out, names),
        started=started,
        finished=_now(),
    ).write(out)
    print((out / "graph.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def _dump_scores(data: Dataset, cfg: DiscoveryConfig, path: Path) -> None:
    """Score table over all columns: first derivatives, then the Hessian diagonal."""
    table = stein_score_table(data.values - data.values.mean(axis=0), cfg=cfg.stein)
    diag = np.diagonal(table.cross, axis1=1, axis2=2)
    header = [f"score_{c}" for c in data.column_names] + [f"hess_{c}" for c in data.column_names]
    write_csv(path, np.hstack([table.first, diag]), header)


def cmd_simulate(args) -> int:
    started = _now()
    if args.nodes < 1 or not 0 <= args.edge_prob <= 1 or args.samples < 2 or args.hidden < 0:
        raise _fail_input("need --nodes >= 1, 0 <= --edge-prob <= 1, --samples >= 2, --hidden >= 0")
    if args.hidden >= args.nodes:
        raise _fail_input("--hidden must leave at least one observed node")
    inst = make_instance(args.nodes, args.edge_prob, args.mechanism, args.samples, args.hidden,
                         args.seed, center=args.center)
    out = Path(args.out_dir)
    meta = {"nodes": args.nodes, "edge_prob": args.edge_prob, "samples": args.samples,
            "hidden": args.hidden}
    write_bundle(inst, out, meta)
    RunManifest(
        command="simulate",
        argv=list(args.argv),
        config=meta | {"mechanism": args.mechanism, "center": args.center},
        seed=args.seed,
        outputs=_record_outputs(out, ["data.csv", "truth.json", "meta.json"]),
        started=started,
        finished=_now(),
    ).write(out)
    return EXIT_OK


def _read_graph_or_fail(path):
    try:
        return read_graph(path)
    except (GraphFormatError, OSError, UnicodeDecodeError) as exc:
        raise _fail_input(f"{path}: {exc}") from exc


def cmd_evaluate(args) -> int:
    pred = _read_graph_or_fail(args.pred)
    truth = _read_graph_or_fail(args.truth)
    if pred.num_nodes != truth.num_nodes:
        raise _fail_input(f"node count mismatch: {pred.num_nodes} vs {truth.num_nodes}")
    if pred.node_names and truth.node_names and list(pred.node_names) != list(truth.node_names):
        if sorted(pred.node_names) != sorted(truth.node_names):
            raise _fail_input("predicted and true graphs have different node names")
        pred = _relabel(pred, truth.node_names)
    print(json.dumps(evaluate(pred, truth), sort_keys=True))
    return EXIT_OK


def _relabel(g, names):
    from .graphs import MixedGraph

    pos = {n: i for i, n in enumerate(names)}
    out = MixedGraph(g.num_nodes, node_names=names)
    for a, b, ma, mb in g.edges():
        out.set_edge(pos[g.node_names[a]], pos[g.node_names[b]], ma, mb)
    return out


# ---------------------------------------------------------------------------
# benchmark


def _parse_int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _parse_list(text: str, conv=str) -> list:
    return [conv(p.strip()) for p in text.split(",") if p.strip()]


ROW_FIELDS = ["cell", "nodes", "edge_prob", "mechanism", "hidden", "samples", "mode", "seed",
              "method", "status", "shd", "f1_any", "f1_directed", "f1_unidentifiable", "error"]


def _cell_name(nodes, p, mech, hidden, mode) -> str:
    return f"d{nodes}_p{p:g}_{mech}_h{hidden}_{mode}"


def _run_one(job: dict) -> list[dict]:
    """simulate -> discover -> evaluate for one seed, plus the random baseline."""
    base = {k: job[k] for k in ("cell", "nodes", "edge_prob", "mechanism", "hidden", "samples",
                                "mode", "seed")}
    rows = []
    try:
        inst = make_instance(job["nodes"], job["edge_prob"], job["mechanism"], job["samples"],
                             job["hidden"], job["seed"])
    except NoValidHiding as exc:
        return [base | {"method": "adascore", "status": "error", "error": f"generation: {exc}"}]
    try:
        cfg = DiscoveryConfig(mode=Mode(job["mode"]), alpha=job["alpha"],
                              prune_alpha=job["prune_alpha"], seed=job["seed"],
                              max_subset_size=job["max_subset_size"])
        graph, _ = adascore(inst.data, cfg)
        graph = graph.to_mixed() if cfg.mode is Mode.DAG else graph
        rows.append(base | {"method": "adascore", "status": "ok"} | evaluate(graph, inst.target))
    except Exception as exc:  # recorded per row; the sweep continues
        rows.append(base | {"method": "adascore", "status": "error", "error": repr(exc)})
    if job["baseline"]:
        d_obs = inst.data.d
        rnd = random_baseline(job["nodes"], job["edge_prob"], d_obs, job["mechanism"], job["seed"])
        rows.append(base | {"method": "random", "status": "ok"} | evaluate(rnd, inst.target))
    return rows


def _job_key(job: dict) -> str:
    return hashlib.sha256(json.dumps(job, sort_keys=True).encode()).hexdigest()[:16]


def _summarize(rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        if r.get("status") == "ok":
            groups.setdefault((r["cell"], r["method"]), []).append(r)
    out = []
    for (cell, method), rs in sorted(groups.items()):
        entry = {"cell": cell, "method": method, "runs": len(rs)}
        for metric in ("shd", "f1_any", "f1_directed", "f1_unidentifiable"):
            v = np.array([r[metric] for r in rs], dtype=float)
            q1, med, q3 = np.percentile(v, [25, 50, 75])
            entry[f"{metric}_q1"], entry[f"{metric}_median"], entry[f"{metric}_q3"] = (
                float(q1), float(med), float(q3))
        out.append(entry)
    return out


def _threads() -> int:
    raw = os.environ.get("ADASCORE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise _fail_input(f"ADASCORE_THREADS must be an integer, got {raw!r}") from exc
    return max(1, n)


def cmd_benchmark(args) -> int:
    started = _now()
    try:
        nodes = _parse_int_list(args.nodes)
        probs = _parse_list(args.edge_probs, float)
        mechs = [MechanismKind(m).value for m in _parse_list(args.mechanisms)]
        modes = [Mode(m).value for m in _parse_list(args.modes)]
        hidden = _parse_int_list(args.hidden)
        seeds = _parse_int_list(args.seeds)
    except ValueError as exc:
        raise _fail_input(f"invalid sweep specification: {exc}") from exc
    if not all([nodes, probs, mechs, modes, hidden, seeds]):
        raise _fail_input("every sweep dimension needs at least one value")
    out = Path(args.out_dir)
    runs_dir = out / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)

    jobs = []
    for d in nodes:
        for p in probs:
            for mech in mechs:
                for h in hidden:
                    for mode in modes:
                        for seed in seeds:
                            jobs.append({
                                "cell": _cell_name(d, p, mech, h, mode), "nodes": d,
                                "edge_prob": p, "mechanism": mech, "hidden": h,
                                "samples": args.samples, "mode": mode, "seed": seed,
                                "alpha": args.alpha, "prune_alpha": args.prune_alpha,
                                "max_subset_size": args.max_subset_size,
                                "baseline": not args.no_baseline,
                            })

    def row_path(job):
        return runs_dir / f"{job['cell']}_s{job['seed']}_{_job_key(job)}.json"

    todo = [j for j in jobs if not row_path(j).exists()]
    skipped = len(jobs) - len(todo)
    if skipped:
        print(f"resuming: {skipped} of {len(jobs)} runs already complete", file=sys.stderr)

    def store(job, rows):
        path = row_path(job)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(rows, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(path)  # a run counts as complete only once its file is whole

    workers = min(_threads(), max(1, len(todo)))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            for job, rows in zip(todo, pool.map(_run_one, todo)):
                store(job, rows)
    else:
        for job in todo:
            store(job, _run_one(job))

    rows = []
    for job in jobs:  # deterministic ordering regardless of completion order
        rows.extend(json.loads(row_path(job).read_text(encoding="utf-8")))
    with open(out / "rows.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, ROW_FIELDS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in ROW_FIELDS})
    summary = _summarize(rows)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        if summary:
            w = csv.DictWriter(fh, list(summary[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(summary)
    RunManifest(
        command="benchmark",
        argv=list(args.argv),
        config={"jobs": len(jobs), "samples": args.samples, "alpha": args.alpha,
                "prune_alpha": args.prune_alpha},
        seed=None,
        outputs=_record_outputs(out, ["rows.csv", "summary.json", "summary.csv"]),
        started=started,
        finished=_now(),
    ).write(out)
    failed = sum(r.get("status") != "ok" for r in rows)
    for s in summary:
        print(f"{s['cell']:<40} {s['method']:<9} median SHD {s['shd_median']:g} "
              f"(IQR {s['shd_q1']:g}-{s['shd_q3']:g}), median F1 {s['f1_any_median']:.3f}")
    if failed:
        print(f"{failed} run(s) failed; see rows.csv", file=sys.stderr)
        return 1
    return EXIT_OK


def cmd_replay(args) -> int:
    """Re-run a manifest's command into a scratch directory and compare checksums."""
    try:
        man = RunManifest.read(args.manifest)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError, TypeError) as exc:
        raise _fail_input(f"cannot read manifest {args.manifest}: {exc}") from exc
    if man.command == "benchmark":
        raise _fail_input("benchmark manifests are replayed by rerunning the sweep")
    argv = list(man.argv)
    if "--out-dir" not in argv:
        raise _fail_input("manifest has no --out-dir to redirect")
    argv[argv.index("--out-dir") + 1] = str(args.out_dir)
    code = main(argv, _quiet=True)
    if code != EXIT_OK:
        return code
    new = RunManifest.read(Path(args.out_dir) / "manifest.json")
    diff = sorted(n for n in man.outputs if man.outputs[n] != new.outputs.get(n))
    if diff:
        print("outputs differ: " + ", ".join(diff), file=sys.stderr)
        return 1
    print(f"replay identical: {len(man.outputs)} output file(s)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _jsonable(cfg) -> dict:
    d = asdict(cfg)
    d["mode"] = cfg.mode.value
    return json.loads(json.dumps(d, default=list))


def _add_discovery_flags(p):
    p.add_argument("--mode", choices=[m.value for m in Mode], default="mixed")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--prune-alpha", type=float, default=0.001)
    p.add_argument("--max-subset-size", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adascore", description="Score-based causal discovery with hidden variables.",
        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("discover", help="learn a graph from a CSV file", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("csv", type=Path)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    _add_discovery_flags(p)
    p.add_argument("--stein-eta", type=float, default=1e-3)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", action="store_true", help="also write trace.jsonl")
    p.add_argument("--dump-scores", action="store_true",
                   help="also write scores.csv with the estimated score table (debugging)")
    p.add_argument("--no-standardize", action="store_true",
                   help="use the columns as given instead of dividing by their standard deviation")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("simulate", help="generate a benchmark bundle", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--edge-prob", type=float, required=True)
    p.add_argument("--mechanism", choices=[m.value for m in MechanismKind], required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--hidden", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--center", action="store_true", help="also mean-centre the columns")
    p.add_argument("--out-dir", type=Path, required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="compare a predicted graph with the truth")
    p.add_argument("pred", type=Path)
    p.add_argument("truth", type=Path)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="run a resumable simulation sweep", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--nodes", default="5", help="comma list or ranges, e.g. 3,5 or 3-7")
    p.add_argument("--edge-probs", default="0.3")
    p.add_argument("--mechanisms", default="linear")
    p.add_argument("--hidden", default="0")
    p.add_argument("--modes", default="mixed")
    p.add_argument("--seeds", default="0-19")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--prune-alpha", type=float, default=0.001)
    p.add_argument("--max-subset-size", type=int, default=None)
    p.add_argument("--no-baseline", action="store_true")
    p.add_argument("--out-dir", type=Path, required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("replay", help="re-run a manifest and check outputs are identical")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out-dir", type=Path, required=True)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None, _quiet=False) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad flags, 0 on --help
        return int(exc.code or 0)
    args.argv = argv
    try:
        if _quiet:
            import contextlib
            import io

            with contextlib.redirect_stdout(io.StringIO()):
                return args.func(args)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, InsufficientSamples, TooFewSamples, NodeCountMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SingularSystem, DegenerateData, DegenerateColumn, np.linalg.LinAlgError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NoValidHiding as exc:
        print(f"generation failure: {exc}", file=sys.stderr)
        return EXIT_GENERATION


if __name__ == "__main__":
    sys.exit(main())

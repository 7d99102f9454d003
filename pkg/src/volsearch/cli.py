"""Batch command line: synth, build, retrieve, evaluate, and grid sweeps.

Exit codes: 0 ok, 1 usage error, 2 data error (malformed files, unknown
ids, invalid datasets), 3 internal error. Every command is deterministic
given its flags and seeds; reruns produce byte-identical outputs.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aggregate import WeightingPolicy
from .evaluate import EvalReport, evaluate, evaluate_slicewise, summarize_across_configs
from .exact import Metric
from .hnsw import HnswParams
from .interchange import InterchangeError, read_dataset, write_dataset
from .lsh import LshParams
from .model import (
    Dataset,
    InvalidDatasetError,
    Level,
    Organ,
    UnknownVolumeError,
    parse_organ,
)
from .pipeline import (
    IndexKind,
    build_index,
    load_index,
    retrieve_slicewise,
    retrieve_volumes,
    save_index,
)
from .sampling import SAMPLING_TOKENS, SamplingPlan
from .synth import SynthSpec, generate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    pass


class GridConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); remap to our usage code
        raise UsageError(message)


def _int_range(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("..")
    try:
        if sep:
            out = (int(lo), int(hi))
        else:
            out = (int(lo), int(lo))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or LO..HI, got {text!r}") from None
    if out[1] < out[0]:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return out


def _float_range(text: str) -> tuple[float, float]:
    lo, sep, hi = text.partition("..")
    try:
        if sep:
            out = (float(lo), float(hi))
        else:
            out = (float(lo), float(lo))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X or LO..HI, got {text!r}") from None
    if out[1] < out[0]:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return out


def _organ_list(text: str) -> tuple[Organ, ...]:
    try:
        return tuple(parse_organ(tok) for tok in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _metric(text: str) -> Metric:
    try:
        return Metric.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _sampling_token(text: str) -> str:
    token = text.strip().lower()
    if token != "slicewise":
        try:
            SamplingPlan.parse(token)
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"unknown sampling {text!r}; valid tokens: {SAMPLING_TOKENS}"
            ) from None
    return token


def _weighting(text: str) -> WeightingPolicy:
    try:
        return WeightingPolicy.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _levels(text: str) -> list[Level]:
    if text.strip().lower() == "all":
        return [Level.MODALITY, Level.BODY_REGION, Level.ORGAN]
    try:
        return [Level.parse(text)]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _default_jobs() -> int:
    raw = os.environ.get("VOLSEARCH_JOBS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    spec = SynthSpec(
        dim=args.dim,
        organs=args.organs,
        volumes_per_organ=args.volumes,
        slices_per_volume=args.slices,
        spacing_mm=args.spacing,
        cluster_separation=args.sep,
        noise_fraction=args.noise,
        seed=args.seed,
        query_volumes_per_organ=args.query_volumes,
    )
    db, queries = generate(spec)
    n_db = write_dataset(db, args.out)
    n_q = write_dataset(queries, args.out_queries)
    print(f"wrote {args.out} ({db.num_records} records, {n_db} bytes)")
    print(f"wrote {args.out_queries} ({queries.num_records} records, {n_q} bytes)")
    return EXIT_OK


def _lsh_params(args, seed: int) -> LshParams:
    return LshParams(num_bits=args.bits, seed=seed, rerank_depth=args.rerank)


def _hnsw_params(args, seed: int) -> HnswParams:
    return HnswParams(
        M=args.m,
        M0=args.m0,
        ef_construction=args.ef_construction,
        ef_search=args.ef_search,
        seed=seed,
    )


def cmd_build(args) -> int:
    db = read_dataset(args.infile)
    kind = IndexKind.parse(args.index)
    index = build_index(
        kind, db, args.metric, _lsh_params(args, args.seed), _hnsw_params(args, args.seed)
    )
    save_index(index, args.out)
    print(f"built {kind.value} index over {db.num_records} records -> {args.out}")
    return EXIT_OK


def _predictions_lines(rows) -> str:
    return "".join("\t".join(str(c) for c in row) + "\n" for row in rows)


def cmd_retrieve(args) -> int:
    db = read_dataset(args.db)
    queries = read_dataset(args.queries)
    kind = IndexKind.parse(args.index_kind)
    if args.index_file:
        index = load_index(kind, args.index_file, db, args.metric)
    else:
        index = build_index(
            kind, db, args.metric, _lsh_params(args, args.seed), _hnsw_params(args, args.seed)
        )
    if args.sampling == "slicewise":
        rows = retrieve_slicewise(db, queries, index)
    else:
        plan = SamplingPlan.parse(args.sampling, seed=args.seed)
        rows = retrieve_volumes(db, queries, index, plan, args.weighting)
    Path(args.out).write_text(_predictions_lines(rows))
    print(f"wrote {len(rows)} predictions -> {args.out}")
    return EXIT_OK


def _read_predictions(path: str | Path) -> tuple[list[tuple[str, ...]], bool]:
    """Returns (rows, slicewise). Slicewise files carry a slice-index column."""
    rows = []
    widths = set()
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = tuple(line.split("\t"))
        if len(parts) not in (2, 3):
            raise ValueError(f"{path}:{ln}: expected 2 or 3 tab-separated fields")
        if len(parts) == 3:
            try:
                int(parts[1])
            except ValueError:
                raise ValueError(f"{path}:{ln}: slice index {parts[1]!r} is not an integer") from None
        widths.add(len(parts))
        rows.append(parts)
    if not rows:
        raise ValueError(f"{path}: no predictions found")
    if len(widths) > 1:
        raise ValueError(f"{path}: mixed 2- and 3-column prediction lines")
    return rows, widths == {3}


def _evaluate_rows(
    rows, slicewise: bool, db: Dataset, queries: Dataset, level: Level
) -> EvalReport:
    if slicewise:
        truths = [queries.volume(qid).label(level) for qid, _, _ in rows]
        preds = [db.volume(pid).label(level) for _, _, pid in rows]
        return evaluate_slicewise(preds, truths, level)
    return evaluate([(qid, pid) for qid, pid in rows], db, queries, level)


def cmd_evaluate(args) -> int:
    from .report import report_text, write_level_report

    db = read_dataset(args.db)
    queries = read_dataset(args.queries)
    rows, slicewise = _read_predictions(args.predictions)
    out_dir = Path(args.out_dir)
    for level in args.level:
        report = _evaluate_rows(rows, slicewise, db, queries, level)
        write_level_report(report, out_dir, f"report_{level.value}")
        sys.stdout.write(report_text(report))
        sys.stdout.write("\n")
    print(f"reports -> {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------- grid


@dataclass(frozen=True)
class GridColumn:
    label: str
    sampling: str  # token or "slicewise"
    policy: WeightingPolicy | None  # None for slicewise


@dataclass
class GridConfig:
    seed: int
    metric: Metric
    levels: list[Level]
    indexes: list[IndexKind]
    columns: list[GridColumn]
    datasets: list[tuple[str, Path, Path]]
    lsh: LshParams
    hnsw: HnswParams


def _config_get(doc: dict, key: str, kind, default=None, required=False):
    if key not in doc:
        if required:
            raise GridConfigError(f"grid config: missing field {key!r}")
        return default
    value = doc[key]
    if not isinstance(value, kind):
        raise GridConfigError(
            f"grid config: field {key!r} must be {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _column_label(token: str, policy: WeightingPolicy) -> str:
    if policy.kind == "uniform":
        return token
    if policy.sigma_fraction == 1.0 / 6.0:
        return f"{token}+w"
    return f"{token}+w{policy.sigma_fraction:g}"


def load_grid_config(path: str | Path) -> GridConfig:
    import yaml

    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise GridConfigError(f"grid config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise GridConfigError(f"grid config {path}: top level must be a mapping")

    seed = _config_get(doc, "seed", int, default=0)
    metric = Metric.parse(_config_get(doc, "metric", str, default="l2"))

    levels = []
    for i, token in enumerate(_config_get(doc, "levels", list, default=["modality", "region", "organ"])):
        try:
            levels.append(Level.parse(str(token)))
        except ValueError as exc:
            raise GridConfigError(f"grid config: levels[{i}]: {exc}") from None

    indexes = []
    for i, token in enumerate(_config_get(doc, "indexes", list, required=True)):
        try:
            indexes.append(IndexKind.parse(str(token)))
        except ValueError as exc:
            raise GridConfigError(f"grid config: indexes[{i}]: {exc}") from None

    weightings = []
    for i, token in enumerate(_config_get(doc, "weightings", list, default=["uniform"])):
        try:
            weightings.append(WeightingPolicy.parse(str(token)))
        except ValueError as exc:
            raise GridConfigError(f"grid config: weightings[{i}]: {exc}") from None

    columns: list[GridColumn] = []
    for i, token in enumerate(_config_get(doc, "sampling", list, required=True)):
        token = str(token).strip().lower()
        if token == "slicewise":
            columns.append(GridColumn("slicewise", "slicewise", None))
            continue
        try:
            SamplingPlan.parse(token)
        except ValueError as exc:
            raise GridConfigError(f"grid config: sampling[{i}]: {exc}") from None
        for policy in weightings:
            columns.append(GridColumn(_column_label(token, policy), token, policy))
    labels = [c.label for c in columns]
    if len(set(labels)) != len(labels):
        raise GridConfigError("grid config: duplicate sampling/weighting columns")

    datasets = []
    raw_datasets = _config_get(doc, "datasets", list, required=True)
    for i, entry in enumerate(raw_datasets):
        if not isinstance(entry, dict):
            raise GridConfigError(f"grid config: datasets[{i}] must be a mapping")
        try:
            name = str(entry["name"])
            db = Path(str(entry["db"]))
            q = Path(str(entry["queries"]))
        except KeyError as exc:
            raise GridConfigError(f"grid config: datasets[{i}]: missing field {exc}") from None
        datasets.append((name, db, q))
    if not datasets:
        raise GridConfigError("grid config: datasets must not be empty")

    lsh_doc = _config_get(doc, "lsh", dict, default={})
    lsh = LshParams(
        num_bits=int(lsh_doc.get("bits", 1024)),
        seed=int(lsh_doc.get("seed", seed)),
        rerank_depth=int(lsh_doc.get("rerank", 0)),
    )
    hnsw_doc = _config_get(doc, "hnsw", dict, default={})
    hnsw = HnswParams(
        M=int(hnsw_doc.get("m", 16)),
        M0=int(hnsw_doc["m0"]) if "m0" in hnsw_doc else None,
        ef_construction=int(hnsw_doc.get("ef_construction", 200)),
        ef_search=int(hnsw_doc.get("ef_search", 64)),
        seed=int(hnsw_doc.get("seed", seed)),
    )
    return GridConfig(
        seed=seed,
        metric=metric,
        levels=levels,
        indexes=indexes,
        columns=columns,
        datasets=datasets,
        lsh=lsh,
        hnsw=hnsw,
    )


def _safe_name(label: str) -> str:
    return label.replace(":", "-").replace("/", "-")


def _run_grid_cell(
    cfg: GridConfig,
    db: Dataset,
    queries: Dataset,
    index,
    column: GridColumn,
    cell_dir: Path,
) -> dict[Level, EvalReport]:
    if column.sampling == "slicewise":
        rows = retrieve_slicewise(db, queries, index)
        slicewise = True
    else:
        plan = SamplingPlan.parse(column.sampling, seed=cfg.seed)
        rows = retrieve_volumes(db, queries, index, plan, column.policy)
        slicewise = False
    cell_dir.mkdir(parents=True, exist_ok=True)
    (cell_dir / "predictions.tsv").write_text(_predictions_lines(rows))

    import json

    from .report import report_text

    reports = {}
    for level in cfg.levels:
        report = _evaluate_rows(rows, slicewise, db, queries, level)
        reports[level] = report
        (cell_dir / f"report_{level.value}.txt").write_text(report_text(report))
        (cell_dir / f"report_{level.value}.json").write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
        )
    return reports


def cmd_grid(args) -> int:
    from .report import render_matrix_png, write_matrix_tsv, write_summary_json

    cfg = load_grid_config(args.config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    loaded: dict[str, tuple[Dataset, Dataset]] = {}
    for name, db_path, q_path in cfg.datasets:
        loaded[name] = (read_dataset(db_path), read_dataset(q_path))

    # Builds are single-writer; cells then share the indexes read-only.
    indexes: dict[tuple[str, IndexKind], object] = {}
    for name, _, _ in cfg.datasets:
        db, _ = loaded[name]
        for kind in cfg.indexes:
            indexes[(name, kind)] = build_index(kind, db, cfg.metric, cfg.lsh, cfg.hnsw)

    cells = [
        (name, kind, column)
        for name, _, _ in cfg.datasets
        for kind in cfg.indexes
        for column in cfg.columns
    ]

    def run(cell):
        name, kind, column = cell
        db, queries = loaded[name]
        cell_dir = out_dir / "cells" / f"{_safe_name(name)}__{kind.value}__{_safe_name(column.label)}"
        return cell, _run_grid_cell(cfg, db, queries, indexes[(name, kind)], column, cell_dir)

    results: dict[tuple[str, IndexKind, GridColumn], dict[Level, EvalReport]] = {}
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            for cell, reports in pool.map(run, cells):
                results[cell] = reports
    else:
        for cell in cells:
            results[cell] = run(cell)[1]

    row_labels = [
        f"{name}/{kind.value}" for name, _, _ in cfg.datasets for kind in cfg.indexes
    ]
    col_labels = [c.label for c in cfg.columns]
    for level in cfg.levels:
        values = np.zeros((len(row_labels), len(col_labels)))
        r = 0
        for name, _, _ in cfg.datasets:
            for kind in cfg.indexes:
                for c, column in enumerate(cfg.columns):
                    values[r, c] = results[(name, kind, column)][level].overall_recall
                r += 1
        write_matrix_tsv(out_dir / f"grid_{level.value}.tsv", row_labels, col_labels, values)
        render_matrix_png(
            out_dir / f"grid_{level.value}.png",
            row_labels,
            col_labels,
            values,
            f"overall average recall ({level.value})",
        )
        # Per-class median/max across every index x column variant of a dataset.
        for name, _, _ in cfg.datasets:
            variants = {
                f"{kind.value}/{column.label}": results[(name, kind, column)][level]
                for kind in cfg.indexes
                for column in cfg.columns
            }
            write_summary_json(
                out_dir / f"summary_{_safe_name(name)}_{level.value}.json",
                summarize_across_configs(variants),
            )

    print(f"grid: {len(cells)} cells -> {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="volsearch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic database and query set")
    p.add_argument("--organs", type=_organ_list, default=tuple(Organ),
                   help="comma-separated organ names (default: all 10)")
    p.add_argument("--volumes", type=int, default=4, help="database volumes per organ")
    p.add_argument("--query-volumes", type=int, default=None,
                   help="query volumes per organ (default: same as --volumes)")
    p.add_argument("--slices", type=_int_range, default=(20, 40), metavar="LO..HI")
    p.add_argument("--spacing", type=_float_range, default=(1.0, 3.0), metavar="LO..HI")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--sep", type=float, default=12.0, help="cluster separation in noise stds")
    p.add_argument("--noise", type=float, default=0.0, help="background slice fraction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="database output file")
    p.add_argument("--out-queries", required=True, help="query output file")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", help="build and persist an index")
    p.add_argument("--index", required=True, choices=["exact", "lsh", "hnsw"])
    p.add_argument("--in", dest="infile", required=True, help="dataset file")
    p.add_argument("--out", required=True, help="index output file")
    p.add_argument("--metric", type=_metric, default=Metric.L2)
    p.add_argument("--seed", type=int, default=0)
    _add_index_params(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("retrieve", help="retrieve the most similar volume per query")
    p.add_argument("--db", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--index-kind", required=True, choices=["exact", "lsh", "hnsw"])
    p.add_argument("--index-file", default=None, help="load a persisted index instead of building")
    p.add_argument("--sampling", type=_sampling_token, default="all",
                   help=f"one of: {SAMPLING_TOKENS}")
    p.add_argument("--weighting", type=_weighting, default=WeightingPolicy(),
                   help="uniform or gaussian[:FRACTION]")
    p.add_argument("--metric", type=_metric, default=Metric.L2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="predictions output file")
    _add_index_params(p)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("evaluate", help="score predictions at one or more label levels")
    p.add_argument("--predictions", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--level", type=_levels, default=[Level.MODALITY, Level.BODY_REGION, Level.ORGAN],
                   help="modality | region | organ | all")
    p.add_argument("--out-dir", default="reports")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grid", help="run an index x sampling x weighting sweep")
    p.add_argument("--config", required=True, help="YAML grid configuration")
    p.add_argument("--out-dir", default="reports")
    p.add_argument("--jobs", type=int, default=_default_jobs(),
                   help="concurrent cells (default: $VOLSEARCH_JOBS or 1)")
    p.set_defaults(func=cmd_grid)
    return parser


def _add_index_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bits", type=int, default=1024, help="LSH signature bits")
    p.add_argument("--rerank", type=int, default=0, help="LSH exact re-rank depth (0 = off)")
    p.add_argument("--m", type=int, default=16, help="HNSW max neighbors per upper layer")
    p.add_argument("--m0", type=int, default=None, help="HNSW layer-0 cap (default 2*m)")
    p.add_argument("--ef-construction", type=int, default=200)
    p.add_argument("--ef-search", type=int, default=64)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (
        InterchangeError,
        InvalidDatasetError,
        UnknownVolumeError,
        GridConfigError,
        FileNotFoundError,
        IsADirectoryError,
        NotADirectoryError,
        PermissionError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance suite: one test per gate criterion, at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v` to get one pass/fail line
per criterion. The 10,000-vector cluster benchmark is built once and
shared by the index-fidelity criteria.

Known red: test_lsh_cluster_agreement pins a 0.99 top-1 cluster agreement
target that is unattainable on this benchmark geometry; see the test's
docstring and the "Known limitations" section of the README for the
measured analysis. It is left failing rather than weakened.
"""
import collections
import math
import statistics
import struct
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import make_dataset, random_dataset
from volsearch.aggregate import SliceMatch, WeightingPolicy, aggregate, aggregate_with_weights, gaussian_weights
from volsearch.cli import main
from volsearch.evaluate import evaluate, summarize_across_configs
from volsearch.exact import ExactIndex, Metric
from volsearch.hnsw import HnswParams, hnsw_build
from volsearch.interchange import read_dataset, write_dataset
from volsearch.lsh import LshParams, lsh_build
from volsearch.model import Dataset, Level, Organ, SliceRef, organ_to_body_region
from volsearch.sampling import sample_equidistant_mm, sample_fixed_step, sample_random
from volsearch.synth import generate_clusters

SEED = 20240817


@pytest.fixture(scope="module")
def bench():
    return generate_clusters(
        dim=128,
        num_clusters=100,
        points_per_cluster=100,
        num_queries=1000,
        separation=10.0,
        seed=SEED,
    )


@pytest.fixture(scope="module")
def exact_truth(bench):
    index = ExactIndex(bench.db, Metric.L2)
    return index, [index.search(q, 1)[0] for q in bench.queries]


def test_hnsw_oracle_fidelity(bench, exact_truth):
    """HNSW recall@1 vs exact >= 0.95 over 1,000 queries, ef_search=64, < 60 s."""
    _, truth = exact_truth
    t0 = time.perf_counter()
    index = hnsw_build(bench.db, HnswParams(ef_search=64, seed=SEED))
    build_s = time.perf_counter() - t0
    t0 = time.perf_counter()
    agree = sum(
        index.search(q, 1)[0].ref == t.ref for q, t in zip(bench.queries, truth)
    )
    query_s = time.perf_counter() - t0
    recall = agree / len(bench.queries)
    elapsed = build_s + query_s
    print(f"hnsw recall@1={recall:.4f} build={build_s:.1f}s queries={query_s:.1f}s")
    assert recall >= 0.95
    assert elapsed < 60.0


def test_lsh_cluster_agreement(bench):
    """LSH (1024 bits, Hamming only) top-1 cluster agreement, stated bound 0.99.

    Left red intentionally. On this shared benchmark (100 equidistant
    Gaussian clusters, separation 10 per-coordinate stds, dim 128) the
    clusters overlap enough that even exhaustive L2 search returns a
    point from the query's generating cluster for only ~98% of queries,
    so no index can reach 0.99; sign-hash ranking lands at 0.985 with the
    pinned seed (0.977-0.995 across seeds). The only geometries that
    reach 0.99 robustly are tight clusters, on which the graph index's
    plain closest-M neighbor rule fragments into per-cluster cliques and
    its own recall gate fails instead (recall@1 ~0.34). The 0.99 bound is
    kept as stated rather than loosened; see README "Known limitations".
    """
    index = lsh_build(bench.db, LshParams(num_bits=1024, seed=SEED))
    agree = sum(
        bench.cluster_of(index.search(q, 1)[0].ref.volume_id) == int(c)
        for q, c in zip(bench.queries, bench.query_cluster)
    )
    agreement = agree / len(bench.queries)
    print(f"lsh top-1 cluster agreement={agreement:.4f}")
    assert agreement >= 0.99, (
        f"measured {agreement:.4f}; unattainable on this geometry, "
        "see docstring and README known limitations"
    )


def test_lsh_full_rerank_equals_exact(bench, exact_truth):
    """LSH with rerank_depth = dataset size matches exact search exactly."""
    exact, _ = exact_truth
    index = lsh_build(
        bench.db, LshParams(num_bits=1024, seed=SEED, rerank_depth=bench.db.num_records)
    )
    for q in bench.queries[:100]:
        assert index.search(q, 10) == exact.search(q, 10)


def test_lsh_angle_law():
    """Orthogonal pairs differ on 0.5 +/- 0.05 of 4096 bits, 100 pairs, fixed seed."""
    dim = 64
    ds = make_dataset({"v": [np.ones(dim, np.float32)]})
    index = lsh_build(ds, LshParams(num_bits=4096, seed=SEED))
    rng = np.random.default_rng(SEED)
    for _ in range(100):
        a = rng.standard_normal(dim)
        b = rng.standard_normal(dim)
        b -= (a @ b) / (a @ a) * a
        frac = np.mean(index.encode(a.astype(np.float32)) != index.encode(b.astype(np.float32)))
        assert 0.45 <= frac <= 0.55


def test_aggregation_mode_oracle():
    """Uniform aggregation equals mode enumeration on 1,000 random match lists."""
    rng = np.random.default_rng(SEED)
    tie_cases = 0
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        ids = [f"v{int(rng.integers(0, 6))}" for _ in range(n)]
        dists = [float(rng.uniform(0, 2)) for _ in range(n)]
        matches = [SliceMatch(i, SliceRef(v, 0), d) for i, (v, d) in enumerate(zip(ids, dists))]
        winner, _ = aggregate(matches, n, WeightingPolicy())
        counts = collections.Counter(ids)
        ranked = counts.most_common()
        if len(ranked) == 1 or ranked[0][1] > ranked[1][1]:
            assert winner == ranked[0][0]
        else:
            tie_cases += 1
            best = ranked[0][1]
            tied = [v for v, c in counts.items() if c == best]
            cum = {v: sum(d for i, d in zip(ids, dists) if i == v) for v in tied}
            assert winner == min(tied, key=lambda v: (cum[v], v))
    assert tie_cases > 0  # the tie rule was actually exercised


def test_gaussian_weighting():
    """Symmetry/decrease on 100 random lengths; worked 3-slice example to 1e-6."""
    rng = np.random.default_rng(SEED)
    for _ in range(100):
        n = int(rng.integers(1, 400))
        w = gaussian_weights(n)
        np.testing.assert_allclose(w, w[::-1], atol=1e-15)
        half = w[: (n + 1) // 2]
        assert np.all(np.diff(half) >= 0)
        assert np.max(w) == (w[n // 2] if n % 2 else w[n // 2 - 1])

    w3 = gaussian_weights(3)
    np.testing.assert_allclose(w3, [0.1353352832366127, 1.0, 0.1353352832366127], atol=1e-6)

    for _ in range(100):
        n = int(rng.integers(1, 30))
        ids = [f"v{int(rng.integers(0, 4))}" for _ in range(n)]
        matches = [SliceMatch(i, SliceRef(v, 0), 0.25) for i, v in enumerate(ids)]
        w = gaussian_weights(n)
        assert aggregate_with_weights(matches, w)[0] == aggregate_with_weights(matches, 123.0 * w)[0]


def test_sampler_arithmetic():
    """Worked sampling examples exact; nesting/clamping under 1,000 fuzz cases."""
    assert sample_random(3, 5, seed=0) == [0, 1, 2]
    assert sample_equidistant_mm(30, 1.0, 10.0) == [0, 10, 20]
    assert sample_equidistant_mm(8, 5.0, 3.0) == list(range(8))  # step = max(1, round(0.6))
    assert sample_equidistant_mm(1, 1.0, 99.0) == [0]
    assert sample_fixed_step(12, 5) == [0, 5, 10]
    assert sample_fixed_step(3, 1) == [0, 1, 2]
    assert sample_fixed_step(2, 10) == [0]

    rng = np.random.default_rng(SEED)
    for _ in range(1000):
        num_slices = int(rng.integers(1, 150))
        everything = list(range(num_slices))
        n = int(rng.integers(1, 50))
        rnd = sample_random(num_slices, n, int(rng.integers(0, 2**32)))
        mm = sample_equidistant_mm(num_slices, float(rng.uniform(0.5, 5)), float(rng.uniform(0.5, 20)))
        stp = sample_fixed_step(num_slices, int(rng.integers(1, 12)))
        for out in (rnd, mm, stp):
            assert out == sorted(set(out))
            assert set(out) <= set(everything)
        assert len(rnd) == min(n, num_slices)  # clamping
        if n >= num_slices:
            assert rnd == everything


GRID_YAML = """\
seed: {seed}
metric: l2
levels: [modality, region, organ]
indexes: [exact, lsh, hnsw]
sampling: [all, "mm:7", "random:40", slicewise]
weightings: [uniform, gaussian]
datasets:
  - name: organs10
    db: {db}
    queries: {q}
"""


def _read_grid(path):
    lines = Path(path).read_text().splitlines()
    cols = lines[0].split("\t")[1:]
    rows = {}
    for line in lines[1:]:
        parts = line.split("\t")
        rows[parts[0]] = dict(zip(cols, map(float, parts[1:])))
    return rows


def test_paper_shaped_end_to_end(tmp_path):
    """Grid over {exact,lsh,hnsw} x {all, mm:7, random:40, weighted}: modality
    recall 1.0 in every volume-level cell, slice-wise modality recall < 1.0
    with background noise present, organ recall >= 0.9 everywhere; < 5 min."""
    t0 = time.perf_counter()
    db = tmp_path / "db.embv"
    q = tmp_path / "q.embv"
    assert main([
        "synth", "--volumes", "4", "--query-volumes", "3", "--slices", "24..40",
        "--dim", "64", "--sep", "12", "--noise", "0.02", "--seed", str(SEED),
        "--out", str(db), "--out-queries", str(q),
    ]) == 0
    cfg = tmp_path / "grid.yaml"
    cfg.write_text(GRID_YAML.format(seed=SEED, db=db, q=q))
    out = tmp_path / "reports"
    assert main(["grid", "--config", str(cfg), "--out-dir", str(out), "--jobs", "2"]) == 0

    modality = _read_grid(out / "grid_modality.tsv")
    organ = _read_grid(out / "grid_organ.tsv")
    volume_cols = ["all", "all+w", "mm:7", "mm:7+w", "random:40", "random:40+w"]
    for row, cells in modality.items():
        for col in volume_cols:
            assert cells[col] == 1.0, f"{row} {col}: modality recall {cells[col]}"
        assert cells["slicewise"] < 1.0, f"{row}: slice-wise modality recall not degraded"
    for row, cells in organ.items():
        for col in volume_cols + ["slicewise"]:
            assert cells[col] >= 0.9, f"{row} {col}: organ recall {cells[col]}"
    elapsed = time.perf_counter() - t0
    print(f"end-to-end grid in {elapsed:.1f}s")
    assert elapsed < 300.0


def test_interchange_round_trip(tmp_path):
    """Bit-identical round trips on 100 random datasets plus the sized examples."""
    rng = np.random.default_rng(SEED)
    for case in range(100):
        ds = random_dataset(rng)
        p1 = tmp_path / "a.embv"
        p2 = tmp_path / "b.embv"
        write_dataset(ds, p1)
        back = read_dataset(p1)
        assert back == ds
        write_dataset(back, p2)
        assert p1.read_bytes() == p2.read_bytes()

    empty = tmp_path / "empty.embv"
    assert write_dataset(Dataset([], {}), empty) == 24
    assert empty.stat().st_size == 24
    one = tmp_path / "one.embv"
    ds = make_dataset({"v": [[1.0, 2.0], [3.0, 4.0]]})
    assert write_dataset(ds, one) == 54
    assert one.stat().st_size == 54


def test_evaluator_formulas():
    """Hand-computed 2x2, level-consistency on 100 random sets, summary medians."""
    from conftest import make_volume

    def labeled(mapping):
        volumes, embeddings = [], {}
        for vid, organ in mapping.items():
            volumes.append(make_volume(vid, organ, 1))
            embeddings[SliceRef(vid, 0)] = np.zeros(2, np.float32)
        return Dataset(volumes, embeddings)

    db = labeled({"ab": Organ.LIVER, "ch": Organ.LUNG})
    queries = labeled(
        {"q1": Organ.LIVER, "q2": Organ.PANCREAS, "q3": Organ.LUNG, "q4": Organ.LUNG}
    )
    report = evaluate(
        [("q1", "ab"), ("q2", "ab"), ("q3", "ab"), ("q4", "ch")], db, queries, Level.BODY_REGION
    )
    assert report.recall["Chest"] == 0.5
    assert report.precision["Abdomen"] == pytest.approx(2 / 3)

    rng = np.random.default_rng(SEED)
    db10 = labeled({f"d{i}": Organ(i) for i in range(10)})
    q30 = labeled({f"q{i}": Organ(int(rng.integers(0, 10))) for i in range(30)})
    for _ in range(100):
        preds = [(f"q{i}", f"d{int(rng.integers(0, 10))}") for i in range(30)]
        organ_rep = evaluate(preds, db10, q30, Level.ORGAN)
        region_rep = evaluate(preds, db10, q30, Level.BODY_REGION)
        rolled = np.zeros((4, 4), dtype=np.int64)
        for t in Organ:
            for p in Organ:
                rolled[int(organ_to_body_region(t)), int(organ_to_body_region(p))] += (
                    organ_rep.confusion[int(t), int(p)]
                )
        np.testing.assert_array_equal(rolled, region_rep.confusion)

    base = evaluate([("q1", "ab")], db, queries, Level.BODY_REGION)

    def with_recall(v):
        import copy

        rep = copy.deepcopy(base)
        rep.recall["Abdomen"] = v
        return rep

    one = summarize_across_configs({"a": with_recall(0.8)})
    assert one["Abdomen"] == (0.8, 0.8)
    odd = summarize_across_configs({k: with_recall(v) for k, v in zip("abc", (0.4, 0.5, 0.7))})
    assert odd["Abdomen"] == (0.5, 0.7)
    even = summarize_across_configs({k: with_recall(v) for k, v in zip("ab", (0.4, 0.6))})
    assert even["Abdomen"] == (pytest.approx(0.5), 0.6)


def test_every_command_deterministic(tmp_path):
    """Rerunning each CLI command with identical flags yields identical bytes."""

    def run_all(base: Path) -> dict[str, bytes]:
        base.mkdir()
        db = base / "db.embv"
        q = base / "q.embv"
        assert main([
            "synth", "--organs", "liver,lung,brain", "--volumes", "2", "--slices", "10..14",
            "--dim", "16", "--sep", "12", "--noise", "0.05", "--seed", "3",
            "--out", str(db), "--out-queries", str(q),
        ]) == 0
        for kind in ("exact", "lsh", "hnsw"):
            assert main([
                "build", "--index", kind, "--in", str(db), "--out", str(base / f"{kind}.idx"),
                "--seed", "5", "--bits", "128",
            ]) == 0
        assert main([
            "retrieve", "--db", str(db), "--queries", str(q), "--index-kind", "hnsw",
            "--sampling", "random:6", "--weighting", "gaussian", "--seed", "5",
            "--out", str(base / "preds.tsv"),
        ]) == 0
        assert main([
            "evaluate", "--predictions", str(base / "preds.tsv"), "--db", str(db),
            "--queries", str(q), "--level", "all", "--out-dir", str(base / "reports"),
        ]) == 0
        cfg = base / "grid.yaml"
        cfg.write_text(GRID_YAML.format(seed=3, db=db, q=q))
        assert main(["grid", "--config", str(cfg), "--out-dir", str(base / "grid"), "--jobs", "2"]) == 0
        # grid.yaml is an input we wrote with absolute paths, not an output
        return {
            str(p.relative_to(base)): p.read_bytes()
            for p in sorted(base.rglob("*"))
            if p.is_file() and p.name != "grid.yaml"
        }

    first = run_all(tmp_path / "run1")
    second = run_all(tmp_path / "run2")
    assert first.keys() == second.keys()
    for rel in first:
        assert first[rel] == second[rel], f"{rel} differs between identical reruns"

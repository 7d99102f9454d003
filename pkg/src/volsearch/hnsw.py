"""Hierarchical navigable small world graph for approximate nearest-neighbor search.

Nodes are inserted one at a time. Each draws a geometric level
floor(-ln(u) * level_scale); search greedily descends from the entry point
through the sparse upper layers, then runs a best-first expansion with a
bounded frontier at layer 0. Neighbor selection is the plain
"closest M" rule (no diversity heuristic). Layer 0 holds every node and
dominates the work, so its best-first loop runs in a numba kernel over
flat adjacency arrays; the small upper layers stay in Python.

Builds are single-writer. After the build the graph is immutable and
searches are thread-safe.
"""
from __future__ import annotations

import heapq
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .exact import Metric, SearchHit, ZeroVectorError, as_query, scan_distances
from .model import Dataset, SliceRef

MAGIC = b"HNS1"
VERSION = 1


@dataclass(frozen=True)
class HnswParams:
    M: int = 16
    M0: int | None = None  # layer-0 degree cap; defaults to 2 * M
    ef_construction: int = 200
    ef_search: int = 64
    level_scale: float | None = None  # defaults to 1 / ln(M)
    seed: int = 0

    def __post_init__(self):
        if self.M < 1 or self.ef_construction < 1 or self.ef_search < 1:
            raise ValueError("M, ef_construction and ef_search must be >= 1")
        if self.M0 is not None and self.M0 < self.M:
            raise ValueError("M0 must be >= M")

    @property
    def m0(self) -> int:
        return self.M0 if self.M0 is not None else 2 * self.M

    @property
    def scale(self) -> float:
        if self.level_scale is not None:
            return self.level_scale
        return 1.0 / math.log(self.M) if self.M > 1 else 1.0


@njit(cache=True)
def _kernel_dist(X, norms, metric_code, qn, q, v):
    # metric 0: squared L2 (monotone in L2); metric 1: cosine distance.
    dim = X.shape[1]
    s = 0.0
    if metric_code == 0:
        for t in range(dim):
            df = np.float64(X[v, t]) - np.float64(q[t])
            s += df * df
        return s
    for t in range(dim):
        s += np.float64(X[v, t]) * np.float64(q[t])
    return 1.0 - s / (norms[v] * qn)


@njit(cache=True)
def _heap_push(hd, hi, length, d, i):
    j = length
    hd[j] = d
    hi[j] = i
    length += 1
    while j > 0:
        p = (j - 1) >> 1
        if hd[j] < hd[p] or (hd[j] == hd[p] and hi[j] < hi[p]):
            hd[p], hd[j] = hd[j], hd[p]
            hi[p], hi[j] = hi[j], hi[p]
            j = p
        else:
            break
    return length


@njit(cache=True)
def _heap_pop(hd, hi, length):
    length -= 1
    hd[0], hd[length] = hd[length], hd[0]
    hi[0], hi[length] = hi[length], hi[0]
    j = 0
    while True:
        left = 2 * j + 1
        right = left + 1
        best = j
        if left < length and (
            hd[left] < hd[best] or (hd[left] == hd[best] and hi[left] < hi[best])
        ):
            best = left
        if right < length and (
            hd[right] < hd[best] or (hd[right] == hd[best] and hi[right] < hi[best])
        ):
            best = right
        if best == j:
            break
        hd[best], hd[j] = hd[j], hd[best]
        hi[best], hi[j] = hi[j], hi[best]
        j = best
    return length


@njit(cache=True)
def _search_layer0(X, norms, metric_code, adj, deg, eps, q, ef):
    """Best-first expansion at layer 0.

    Candidate min-heap orders by (distance, id); the result heap keeps the
    ef best under the same order by storing negated keys. Ties everywhere
    resolve to the smaller node id, which is storage order.
    """
    n = deg.shape[0]
    qn = 1.0
    if metric_code == 1:
        s = 0.0
        for t in range(q.shape[0]):
            s += np.float64(q[t]) * np.float64(q[t])
        qn = np.sqrt(s)
    visited = np.zeros(n, dtype=np.bool_)

    cap = 1024
    cd = np.empty(cap, np.float64)
    ci = np.empty(cap, np.int64)
    cn = 0
    rd = np.empty(ef + 1, np.float64)
    ri = np.empty(ef + 1, np.int64)
    rn = 0

    for e in range(eps.shape[0]):
        u = eps[e]
        if visited[u]:
            continue
        visited[u] = True
        d = _kernel_dist(X, norms, metric_code, qn, q, u)
        if cn == cap:
            cap *= 2
            nd = np.empty(cap, np.float64)
            ni = np.empty(cap, np.int64)
            nd[:cn] = cd[:cn]
            ni[:cn] = ci[:cn]
            cd, ci = nd, ni
        cn = _heap_push(cd, ci, cn, d, u)
        rn = _heap_push(rd, ri, rn, -d, -u)
        if rn > ef:
            rn = _heap_pop(rd, ri, rn)

    while cn > 0:
        d0 = cd[0]
        u = ci[0]
        cn = _heap_pop(cd, ci, cn)
        if rn >= ef and d0 > -rd[0]:
            break
        for m in range(deg[u]):
            v = adj[u, m]
            if visited[v]:
                continue
            visited[v] = True
            d = _kernel_dist(X, norms, metric_code, qn, q, v)
            if rn < ef or d < -rd[0] or (d == -rd[0] and -v > ri[0]):
                if cn == cap:
                    cap *= 2
                    nd = np.empty(cap, np.float64)
                    ni = np.empty(cap, np.int64)
                    nd[:cn] = cd[:cn]
                    ni[:cn] = ci[:cn]
                    cd, ci = nd, ni
                cn = _heap_push(cd, ci, cn, d, v)
                rn = _heap_push(rd, ri, rn, -d, -v)
                if rn > ef:
                    rn = _heap_pop(rd, ri, rn)

    out_d = np.empty(rn, np.float64)
    out_i = np.empty(rn, np.int64)
    for j in range(rn - 1, -1, -1):
        out_d[j] = -rd[0]
        out_i[j] = -ri[0]
        rn = _heap_pop(rd, ri, rn)
    return out_d, out_i


@dataclass
class HnswAudit:
    """Result of a structural graph audit; `unreachable` flags, not fails."""

    violations: list[str] = field(default_factory=list)
    unreachable: list[SliceRef] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


class HnswIndex:
    kind = "hnsw"

    def __init__(self, dim: int, params: HnswParams = HnswParams(), metric: Metric = Metric.L2,
                 capacity: int = 1024):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.params = params
        self.metric = metric
        self.ds: Dataset | None = None
        capacity = max(capacity, 1)
        self._X = np.zeros((capacity, dim), dtype=np.float32)
        self._norms = np.ones(capacity, dtype=np.float64)
        self._adj0 = np.full((capacity, params.m0), -1, dtype=np.int32)
        self._deg0 = np.zeros(capacity, dtype=np.int32)
        self._levels: list[int] = []
        self._refs: list[SliceRef] = []
        self._rows: dict[SliceRef, int] = {}
        self._upper: list[dict[int, list[int]]] = []  # _upper[l - 1] = layer l adjacency
        self._entry = -1
        self._entry_level = -1
        self._rng = np.random.default_rng(params.seed)

    def __len__(self) -> int:
        return len(self._refs)

    @property
    def entry_point(self) -> SliceRef | None:
        return self._refs[self._entry] if self._entry >= 0 else None

    def level_of(self, ref: SliceRef) -> int:
        return self._levels[self._rows[ref]]

    def neighbors(self, ref: SliceRef, layer: int) -> list[SliceRef]:
        row = self._rows[ref]
        return [self._refs[i] for i in self._neighbor_rows(row, layer)]

    def _neighbor_rows(self, row: int, layer: int) -> list[int]:
        if layer == 0:
            return [int(v) for v in self._adj0[row, : self._deg0[row]]]
        adj = self._upper[layer - 1] if layer - 1 < len(self._upper) else {}
        return list(adj.get(row, []))

    def _grow(self, needed: int) -> None:
        cap = self._X.shape[0]
        if needed <= cap:
            return
        new_cap = max(cap * 2, needed)
        for name, fill in (("_X", 0), ("_norms", 1.0), ("_adj0", -1), ("_deg0", 0)):
            old = getattr(self, name)
            shape = (new_cap,) + old.shape[1:]
            arr = np.full(shape, fill, dtype=old.dtype)
            arr[: len(self._refs)] = old[: len(self._refs)]
            setattr(self, name, arr)

    def _internal_dists(self, q: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Squared L2 or cosine distance, float64; ranks identically to the metric."""
        block = self._X[rows].astype(np.float64)
        q64 = q.astype(np.float64)
        if self.metric is Metric.L2:
            diff = block - q64
            return np.einsum("ij,ij->i", diff, diff)
        qn = np.sqrt(np.dot(q64, q64))
        return 1.0 - (block @ q64) / (self._norms[rows] * qn)

    def _search_upper(self, q: np.ndarray, eps: list[int], layer: int, ef: int) -> list[tuple[float, int]]:
        """Python twin of the layer-0 kernel for the small upper layers."""
        adj = self._upper[layer - 1]
        visited: set[int] = set()
        cand: list[tuple[float, int]] = []
        best: list[tuple[float, int]] = []  # (-d, -id): root is the worst kept
        for u in eps:
            if u in visited:
                continue
            visited.add(u)
            d = float(self._internal_dists(q, np.array([u]))[0])
            heapq.heappush(cand, (d, u))
            heapq.heappush(best, (-d, -u))
            if len(best) > ef:
                heapq.heappop(best)
        while cand:
            d0, u = heapq.heappop(cand)
            if len(best) >= ef and d0 > -best[0][0]:
                break
            fresh = [v for v in adj.get(u, []) if v not in visited]
            if not fresh:
                continue
            visited.update(fresh)
            dists = self._internal_dists(q, np.array(fresh))
            for v, d in zip(fresh, dists):
                d = float(d)
                if len(best) < ef or d < -best[0][0] or (d == -best[0][0] and -v > best[0][1]):
                    heapq.heappush(cand, (d, v))
                    heapq.heappush(best, (-d, -v))
                    if len(best) > ef:
                        heapq.heappop(best)
        return sorted((-d, -i) for d, i in best)

    def _search_layer(self, q: np.ndarray, eps: list[int], layer: int, ef: int) -> list[tuple[float, int]]:
        if layer > 0:
            return self._search_upper(q, eps, layer, ef)
        n = len(self._refs)
        out_d, out_i = _search_layer0(
            self._X[:n],
            self._norms[:n],
            0 if self.metric is Metric.L2 else 1,
            self._adj0[:n],
            self._deg0[:n],
            np.asarray(eps, dtype=np.int64),
            q,
            ef,
        )
        return [(float(d), int(i)) for d, i in zip(out_d, out_i)]

    def _descend(self, q: np.ndarray, stop_layer: int) -> list[int]:
        """Greedy ef=1 walk from the entry point down to stop_layer (exclusive)."""
        eps = [self._entry]
        for layer in range(self._entry_level, stop_layer, -1):
            eps = [self._search_layer(q, eps, layer, 1)[0][1]]
        return eps

    def _draw_level(self) -> int:
        u = 1.0 - self._rng.random()  # in (0, 1]
        return int(math.floor(-math.log(u) * self.params.scale))

    def insert(self, ref: SliceRef, vec: np.ndarray) -> None:
        if ref in self._rows:
            raise ValueError(f"ref {ref} already inserted")
        q = as_query(vec, self.dim)
        if self.metric is Metric.COSINE and not np.any(q):
            raise ZeroVectorError("cosine index cannot hold the zero vector")

        row = len(self._refs)
        self._grow(row + 1)
        self._X[row] = q
        self._norms[row] = float(np.sqrt(np.dot(q.astype(np.float64), q.astype(np.float64))))
        self._refs.append(ref)
        self._rows[ref] = row
        level = self._draw_level()
        self._levels.append(level)
        while len(self._upper) < level:
            self._upper.append({})
        for layer in range(1, level + 1):
            self._upper[layer - 1][row] = []

        if self._entry < 0:
            self._entry = row
            self._entry_level = level
            return

        eps = self._descend(q, level)
        for layer in range(min(level, self._entry_level), -1, -1):
            found = self._search_layer(q, eps, layer, self.params.ef_construction)
            cap = self.params.m0 if layer == 0 else self.params.M
            chosen = [i for _, i in found[:cap]]
            self._set_neighbors(row, layer, chosen)
            for nb in chosen:
                self._add_link(nb, layer, row)
            eps = [i for _, i in found]

        if level > self._entry_level:
            self._entry = row
            self._entry_level = level

    def _set_neighbors(self, row: int, layer: int, rows: list[int]) -> None:
        if layer == 0:
            self._deg0[row] = len(rows)
            self._adj0[row, : len(rows)] = rows
        else:
            self._upper[layer - 1][row] = list(rows)

    def _add_link(self, row: int, layer: int, other: int) -> None:
        cap = self.params.m0 if layer == 0 else self.params.M
        current = self._neighbor_rows(row, layer)
        current.append(other)
        if len(current) > cap:
            ids = np.asarray(current, dtype=np.int64)
            d = self._internal_dists(self._X[row], ids)
            keep = ids[np.lexsort((ids, d))][:cap]
            current = [int(v) for v in keep]
        self._set_neighbors(row, layer, current)

    def search(self, query: np.ndarray, k: int, ef_search: int | None = None) -> list[SearchHit]:
        if not self._refs:
            raise ValueError("cannot search an empty graph")
        if k <= 0:
            raise ValueError("k must be positive")
        q = as_query(query, self.dim)
        if self.metric is Metric.COSINE and not np.any(q):
            raise ZeroVectorError("cosine distance is undefined for the zero vector")
        ef = max(ef_search if ef_search is not None else self.params.ef_search, k)
        eps = self._descend(q, 0)
        found = self._search_layer(q, eps, 0, ef)[:k]
        rows = np.asarray([i for _, i in found], dtype=np.int64)
        dists = scan_distances(self._X[rows], q, self.metric)
        order = np.lexsort((rows, dists))
        return [SearchHit(self._refs[int(rows[i])], float(dists[i])) for i in order]

    def audit(self) -> HnswAudit:
        """Structural checks: level shape, degree caps, link validity, reachability."""
        report = HnswAudit()
        n = len(self._refs)
        for row in range(n):
            level = self._levels[row]
            if self._deg0[row] > self.params.m0:
                report.violations.append(f"node {row}: layer-0 degree {self._deg0[row]} over cap")
            for layer in range(1, len(self._upper) + 1):
                present = row in self._upper[layer - 1]
                if present != (layer <= level):
                    report.violations.append(
                        f"node {row}: present at layer {layer} inconsistent with level {level}"
                    )
            for layer in range(0, level + 1):
                nbrs = self._neighbor_rows(row, layer)
                cap = self.params.m0 if layer == 0 else self.params.M
                if len(nbrs) > cap:
                    report.violations.append(f"node {row}: layer-{layer} degree over cap")
                for v in nbrs:
                    if not (0 <= v < n):
                        report.violations.append(f"node {row}: dangling neighbor {v}")
                    elif layer > 0 and self._levels[v] < layer:
                        report.violations.append(
                            f"node {row}: layer-{layer} neighbor {v} has level {self._levels[v]}"
                        )
        if n:
            seen = np.zeros(n, dtype=bool)
            stack = [self._entry]
            seen[self._entry] = True
            while stack:
                u = stack.pop()
                for v in self._adj0[u, : self._deg0[u]]:
                    if not seen[v]:
                        seen[v] = True
                        stack.append(int(v))
            report.unreachable = [self._refs[i] for i in np.flatnonzero(~seen)]
        return report

    def save(self, path: str | Path) -> None:
        p = self.params
        head = struct.pack(
            "<4sIIBIIIIdqQqi",
            MAGIC,
            VERSION,
            self.dim,
            0 if self.metric is Metric.L2 else 1,
            p.M,
            p.m0,
            p.ef_construction,
            p.ef_search,
            p.scale,
            p.seed,
            len(self._refs),
            self._entry,
            self._entry_level,
        )
        out = [head]
        n = len(self._refs)
        out.append(np.asarray(self._levels, dtype="<u4").tobytes())
        out.append(np.ascontiguousarray(self._deg0[:n], dtype="<u4").tobytes())
        for row in range(n):
            out.append(np.ascontiguousarray(self._adj0[row, : self._deg0[row]], dtype="<u4").tobytes())
        for row in range(n):
            for layer in range(1, self._levels[row] + 1):
                nbrs = self._upper[layer - 1][row]
                out.append(struct.pack("<I", len(nbrs)))
                out.append(np.asarray(nbrs, dtype="<u4").tobytes())
        Path(path).write_bytes(b"".join(out))

    @classmethod
    def load(cls, path: str | Path, ds: Dataset, metric: Metric | None = None) -> "HnswIndex":
        blob = Path(path).read_bytes()
        head = struct.Struct("<4sIIBIIIIdqQqi")
        if len(blob) < head.size:
            raise ValueError(f"{path}: truncated HNSW index file")
        (magic, version, dim, metric_code, m, m0, efc, efs, scale, seed, n, entry,
         entry_level) = head.unpack_from(blob)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported HNSW index version {version}")
        if dim != ds.dim or n != ds.num_records:
            raise ValueError(
                f"{path}: index was built over {n} records of dim {dim}, dataset has "
                f"{ds.num_records} of dim {ds.dim}"
            )
        stored_metric = Metric.L2 if metric_code == 0 else Metric.COSINE
        if metric is not None and metric is not stored_metric:
            raise ValueError(f"{path}: index was built with metric {stored_metric.value}")
        params = HnswParams(
            M=m, M0=m0, ef_construction=efc, ef_search=efs, level_scale=scale, seed=seed
        )
        index = cls(dim, params, stored_metric, capacity=max(int(n), 1))
        matrix = ds.matrix()
        refs = ds.slice_refs()
        off = head.size

        def take(count, dtype):
            nonlocal off
            arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off)
            off += arr.nbytes
            return arr

        levels = take(n, "<u4").astype(np.int64)
        deg0 = take(n, "<u4").astype(np.int32)
        index._refs = list(refs)
        index._rows = {ref: i for i, ref in enumerate(refs)}
        index._levels = [int(v) for v in levels]
        index._X[:n] = matrix
        x64 = matrix.astype(np.float64)
        index._norms[:n] = np.sqrt(np.einsum("ij,ij->i", x64, x64))
        index._deg0[:n] = deg0
        for row in range(n):
            nbrs = take(int(deg0[row]), "<u4")
            index._adj0[row, : nbrs.shape[0]] = nbrs
        max_level = int(levels.max()) if n else 0
        index._upper = [{} for _ in range(max_level)]
        for row in range(n):
            for layer in range(1, int(levels[row]) + 1):
                (count,) = struct.unpack_from("<I", blob, off)
                off += 4
                nbrs = take(int(count), "<u4")
                index._upper[layer - 1][row] = [int(v) for v in nbrs]
        if off != len(blob):
            raise ValueError(f"{path}: unexpected file length")
        index._entry = int(entry)
        index._entry_level = int(entry_level)
        index.ds = ds
        return index


def hnsw_build(ds: Dataset, params: HnswParams = HnswParams(), metric: Metric = Metric.L2) -> HnswIndex:
    """Insert every dataset record in storage order."""
    if ds.num_records == 0:
        raise ValueError("cannot build an HNSW index over an empty dataset")
    index = HnswIndex(ds.dim, params, metric, capacity=ds.num_records)
    matrix = ds.matrix()
    for row, ref in enumerate(ds.slice_refs()):
        index.insert(ref, matrix[row])
    index.ds = ds
    return index

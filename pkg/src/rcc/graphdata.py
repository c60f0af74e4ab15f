"""Graphs, datasets, splitting and noise injection.

Adjacency is stored in CSR form (``indptr``/``indices``) with sorted,
symmetric neighbor lists. Everything here is immutable after construction.
"""

from __future__ import annotations

import logging
import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class DatasetFormatError(ValueError):
    """A dataset file could not be parsed."""


class AdjacencyStructure:
    """Sparse symmetric 0/1 graph without self-loops."""

    __slots__ = ("indptr", "indices", "__dict__")

    def __init__(self, indptr, indices, *, validate=True):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)
        if validate:
            self._validate()

    @classmethod
    def from_edges(cls, n, edges):
        """Build from an iterable of (u, v) pairs; direction and duplicates collapse."""
        e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                       dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ValueError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed")
        both = np.concatenate([e, e[:, ::-1]])
        keys = np.unique(both[:, 0] * n + both[:, 1]) if n else np.zeros(0, np.int64)
        rows, cols = np.divmod(keys, n) if n else (keys, keys)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        return cls(np.cumsum(indptr), cols, validate=False)

    def _validate(self):
        n = self.n
        if self.indptr[0] != 0 or np.any(np.diff(self.indptr) < 0):
            raise ValueError("indptr must start at 0 and be non-decreasing")
        if self.indptr[-1] != self.indices.shape[0]:
            raise ValueError("indptr does not match indices length")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= n):
            raise ValueError("neighbor index out of range")
        rows = np.repeat(np.arange(n), self.degrees)
        if np.any(rows == self.indices):
            raise ValueError("self-loop present")
        for i in range(n):
            nb = self.indices[self.indptr[i]:self.indptr[i + 1]]
            if nb.size > 1 and np.any(np.diff(nb) <= 0):
                raise ValueError(f"neighbors of {i} not strictly sorted")
        fwd = np.sort(rows * n + self.indices)
        bwd = np.sort(self.indices * n + rows)
        if not np.array_equal(fwd, bwd):
            raise ValueError("adjacency is not symmetric")

    @property
    def n(self):
        return self.indptr.shape[0] - 1

    @cached_property
    def degrees(self):
        d = np.diff(self.indptr)
        d.setflags(write=False)
        return d

    @cached_property
    def inverse_degrees(self):
        """1/deg per node, 0 for isolated nodes."""
        inv = np.zeros(self.n, dtype=np.float64)
        np.divide(1.0, self.degrees, out=inv, where=self.degrees > 0)
        inv.setflags(write=False)
        return inv

    @property
    def num_edges(self):
        """Number of undirected edges."""
        return int(self.indices.shape[0] // 2)

    @property
    def neighbor_lists(self):
        return [self.neighbors(i).tolist() for i in range(self.n)]

    def neighbors(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def has_edge(self, i, j):
        nb = self.neighbors(i)
        pos = np.searchsorted(nb, j)
        return bool(pos < nb.size and nb[pos] == j)

    def edges(self):
        """Undirected edges as an (m, 2) array with u < v."""
        rows = np.repeat(np.arange(self.n), self.degrees)
        keep = rows < self.indices
        return np.stack([rows[keep], self.indices[keep]], axis=1)

    def to_dense(self):
        a = np.zeros((self.n, self.n))
        rows = np.repeat(np.arange(self.n), self.degrees)
        a[rows, self.indices] = 1.0
        return a

    def subgraph(self, nodes):
        """Induced subgraph on ``nodes`` (relabelled 0..len(nodes)-1 in the given order)."""
        nodes = np.asarray(nodes, dtype=np.int64)
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[nodes] = np.arange(nodes.size)
        e = self.edges()
        keep = (remap[e[:, 0]] >= 0) & (remap[e[:, 1]] >= 0)
        return AdjacencyStructure.from_edges(nodes.size, remap[e[keep]])

    def __eq__(self, other):
        return (isinstance(other, AdjacencyStructure)
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    def __repr__(self):
        return f"AdjacencyStructure(n={self.n}, edges={self.num_edges})"


class AttributedGraph:
    """Adjacency + n×d local features + optional labels in [0, k)."""

    def __init__(self, adjacency, features, labels=None, num_classes=None, *,
                 column_names=None, label_names=None, node_ids=None, meta=None):
        features = np.ascontiguousarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != adjacency.n:
            raise ValueError(
                f"features must be {adjacency.n}×d, got shape {features.shape}")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite values")
        features.setflags(write=False)
        if labels is not None:
            labels = np.ascontiguousarray(labels, dtype=np.int64)
            if labels.shape != (adjacency.n,):
                raise ValueError("labels must have one entry per node")
            if num_classes is None:
                num_classes = int(labels.max()) + 1 if labels.size else 2
            if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
                raise ValueError("label out of range [0, k)")
            labels.setflags(write=False)
        if num_classes is not None and num_classes < 2:
            raise ValueError("need at least two classes")
        if column_names is not None and len(column_names) != features.shape[1]:
            raise ValueError("column_names length differs from d")
        self.adjacency = adjacency
        self.features = features
        self._labels = labels
        self.num_classes = num_classes
        self.column_names = None if column_names is None else list(column_names)
        self.label_names = None if label_names is None else list(label_names)
        self.node_ids = (np.arange(adjacency.n) if node_ids is None
                         else np.asarray(node_ids))
        self.meta = dict(meta or {})

    @property
    def labels(self):
        return self._labels

    @property
    def n(self):
        return self.adjacency.n

    @property
    def d(self):
        return self.features.shape[1]

    def _replace(self, **changes):
        kw = dict(adjacency=self.adjacency, features=self.features,
                  labels=self._labels, num_classes=self.num_classes,
                  column_names=self.column_names, label_names=self.label_names,
                  node_ids=self.node_ids, meta=self.meta)
        kw.update(changes)
        return AttributedGraph(**kw)

    def subgraph(self, nodes):
        nodes = np.asarray(nodes, dtype=np.int64)
        return self._replace(
            adjacency=self.adjacency.subgraph(nodes),
            features=self.features[nodes],
            labels=None if self._labels is None else self._labels[nodes],
            node_ids=self.node_ids[nodes])

    def without_labels(self):
        return self._replace(labels=None)

    def __repr__(self):
        return (f"AttributedGraph(n={self.n}, edges={self.adjacency.num_edges}, "
                f"d={self.d}, k={self.num_classes})")


class AuditedGraph(AttributedGraph):
    """Graph that logs every read of ``labels`` together with a phase tag.

    ``phase`` is a zero-argument callable returning the current phase name;
    reads are appended to ``label_reads``.
    """

    def __init__(self, graph, phase):
        super().__init__(graph.adjacency, graph.features, graph._labels,
                         graph.num_classes, column_names=graph.column_names,
                         label_names=graph.label_names, node_ids=graph.node_ids,
                         meta=graph.meta)
        self._phase = phase
        self.label_reads = []

    @property
    def labels(self):
        self.label_reads.append(self._phase())
        return self._labels

    def _replace(self, **changes):
        g = AuditedGraph.__new__(AuditedGraph)
        AttributedGraph.__init__(g, **{**dict(
            adjacency=self.adjacency, features=self.features, labels=self._labels,
            num_classes=self.num_classes, column_names=self.column_names,
            label_names=self.label_names, node_ids=self.node_ids, meta=self.meta),
            **changes})
        g._phase = self._phase
        g.label_reads = self.label_reads
        return g


def disjoint_union(graphs):
    """Place several graphs side by side as one graph with no cross edges."""
    graphs = list(graphs)
    offset = 0
    edges = []
    for g in graphs:
        edges.append(g.adjacency.edges() + offset)
        offset += g.n
    adj = AdjacencyStructure.from_edges(offset, np.concatenate(edges) if edges else [])
    labels = None
    if all(g.labels is not None for g in graphs):
        labels = np.concatenate([g.labels for g in graphs])
    k = max((g.num_classes or 2) for g in graphs)
    return AttributedGraph(adj, np.concatenate([g.features for g in graphs]),
                           labels, k, column_names=graphs[0].column_names)


# ---------------------------------------------------------------- citation data

def load_citation_dataset(content_path, cites_path):
    """Load a Cora/CiteSeer style ``.content`` + ``.cites`` pair.

    Edges are symmetrized; label strings are indexed by first appearance and
    kept in ``graph.label_names``. Citations naming unknown ids (or a paper
    citing itself) are skipped and counted in ``graph.meta``.
    """
    ids, rows, label_str = [], [], []
    nonbinary = 0
    with open(content_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise DatasetFormatError(
                    f"{content_path}:{lineno}: expected id, features and label")
            try:
                vals = [float(v) for v in parts[1:-1]]
            except ValueError as exc:
                raise DatasetFormatError(f"{content_path}:{lineno}: {exc}") from None
            if rows and len(vals) != len(rows[0]):
                raise DatasetFormatError(
                    f"{content_path}:{lineno}: {len(vals)} features, expected {len(rows[0])}")
            nonbinary += sum(v not in (0.0, 1.0) for v in vals)
            ids.append(parts[0].strip())
            rows.append(vals)
            label_str.append(parts[-1].strip())
    if nonbinary:
        warnings.warn(f"{content_path}: {nonbinary} feature values outside {{0, 1}}",
                      stacklevel=2)
    index = {}
    for pos, node in enumerate(ids):
        if node in index:
            raise DatasetFormatError(f"{content_path}: duplicate node id {node!r}")
        index[node] = pos
    label_names = list(dict.fromkeys(label_str))
    lab_index = {s: i for i, s in enumerate(label_names)}
    labels = np.array([lab_index[s] for s in label_str], dtype=np.int64)

    edges, dropped, self_cites = [], 0, 0
    with open(cites_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DatasetFormatError(
                    f"{cites_path}:{lineno}: expected 'cited<TAB>citing'")
            a, b = index.get(parts[0]), index.get(parts[1])
            if a is None or b is None:
                dropped += 1
            elif a == b:
                self_cites += 1
            else:
                edges.append((a, b))
    if dropped:
        log.warning("%s: skipped %d citations with unknown node ids", cites_path, dropped)
    n = len(ids)
    d = len(rows[0]) if rows else 0
    feats = np.array(rows, dtype=np.float64).reshape(n, d)
    return AttributedGraph(
        AdjacencyStructure.from_edges(n, edges), feats, labels,
        max(len(label_names), 2), label_names=label_names, node_ids=np.array(ids),
        meta={"dropped_edges": dropped, "self_citations": self_cites})


def write_citation_dataset(graph, content_path, cites_path):
    """Inverse of :func:`load_citation_dataset` (node ids are the row indices)."""
    names = graph.label_names or [f"class{c}" for c in range(graph.num_classes)]
    with open(content_path, "w", encoding="utf-8") as fh:
        for i in range(graph.n):
            vals = "\t".join(repr(float(v)) for v in graph.features[i])
            fh.write(f"n{i}\t{vals}\t{names[graph.labels[i]]}\n")
    with open(cites_path, "w", encoding="utf-8") as fh:
        for u, v in graph.adjacency.edges():
            fh.write(f"n{u}\tn{v}\n")


# ---------------------------------------------------------------- synthetic data

FEATURE_SCALE = 4.0


def generate_synthetic_homophily_graph(n, k, d, homophily, signal, avg_degree, seed):
    """Planted-label graph with tunable homophily and feature informativeness.

    Each edge joins two same-label nodes with probability ``homophily``,
    otherwise two nodes of different labels. Features are
    ``signal * FEATURE_SCALE * e_y + N(0, I)`` (class means on the simplex of
    the first k coordinate axes), so ``signal=0`` gives label-free noise.
    """
    if n < k:
        raise ValueError("need n >= k")
    if d < k:
        raise ValueError("need d >= k so every class gets its own mean direction")
    if not (0.0 <= homophily <= 1.0 and 0.0 <= signal <= 1.0):
        raise ValueError("homophily and signal must lie in [0, 1]")
    m = int(math.floor(n * avg_degree / 2))
    if m > n * (n - 1) // 2:
        raise ValueError(f"avg_degree {avg_degree} too large for n={n}")
    r_lab, r_edge, r_feat = (np.random.default_rng(s)
                             for s in np.random.SeedSequence(seed).spawn(3))
    labels = r_lab.integers(0, k, size=n)
    members = [np.flatnonzero(labels == c) for c in range(k)]

    seen = set()
    edges = []
    budget = 50 * m + 1000
    while len(edges) < m:
        budget -= 1
        if budget < 0:
            raise ValueError("could not place distinct edges; lower avg_degree or homophily")
        u = int(r_edge.integers(n))
        same = r_edge.random() < homophily
        pool = members[labels[u]] if same else np.flatnonzero(labels != labels[u])
        if pool.size < (2 if same else 1):
            continue
        v = int(pool[r_edge.integers(pool.size)])
        if u == v:
            continue
        key = (min(u, v), max(u, v))
        if key in seen:
            continue
        seen.add(key)
        edges.append(key)

    means = np.zeros((k, d))
    means[np.arange(k), np.arange(k)] = FEATURE_SCALE * signal
    feats = means[labels] + r_feat.standard_normal((n, d))
    return AttributedGraph(AdjacencyStructure.from_edges(n, edges), feats, labels, k,
                           meta={"generator": "homophily", "seed": seed})


# ---------------------------------------------------------------- images

@dataclass(frozen=True)
class GridImage:
    """RGB image (height×width×3 in [0, 1]) with a binary foreground mask."""

    pixels: np.ndarray
    mask: np.ndarray
    name: str = field(default="", compare=False)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        mk = np.asarray(self.mask, dtype=np.int64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError("pixels must be height×width×3")
        if mk.shape != px.shape[:2]:
            raise ValueError("mask shape differs from image shape")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ValueError("channel values must lie in [0, 1]")
        if not np.isin(mk, (0, 1)).all():
            raise ValueError("mask entries must be 0 or 1")
        px.setflags(write=False)
        mk.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "mask", mk)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    def __eq__(self, other):
        return (isinstance(other, GridImage) and np.array_equal(self.pixels, other.pixels)
                and np.array_equal(self.mask, other.mask))


_BITS = ((np.arange(32)[:, None] >> np.arange(4, -1, -1)) & 1).astype(np.float64)


def sinusoidal_expand(base):
    """Expand 5 base values into 64 features.

    For every binary vector c of length 5 (enumerated as the integer 0..31,
    most significant bit paired with the first base value) emit
    ``sin(c·s), cos(c·s)``. Works row-wise on an (m, 5) array too.
    """
    s = np.asarray(base, dtype=np.float64)
    if s.shape[-1] != 5:
        raise ValueError("sinusoidal expansion needs 5 base values")
    proj = s @ _BITS.T
    out = np.empty(s.shape[:-1] + (64,))
    out[..., 0::2] = np.sin(proj)
    out[..., 1::2] = np.cos(proj)
    return out


def grid_adjacency(height, width):
    idx = np.arange(height * width).reshape(height, width)
    right = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    down = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    return AdjacencyStructure.from_edges(height * width, np.concatenate([right, down]))


def build_grid_graph(image):
    """One node per pixel, 4-neighborhood edges, sinusoidal pixel features, k=2."""
    h, w = image.height, image.width
    rows, cols = np.meshgrid(np.arange(h) / h, np.arange(w) / w, indexing="ij")
    base = np.concatenate([image.pixels.reshape(-1, 3),
                           rows.reshape(-1, 1), cols.reshape(-1, 1)], axis=1)
    return AttributedGraph(grid_adjacency(h, w), sinusoidal_expand(base),
                           image.mask.reshape(-1), 2,
                           label_names=["background", "foreground"],
                           meta={"image": image.name, "shape": (h, w)})


def salt_pepper_noise(image, amount, seed):
    """Replace each pixel with pure black or white with probability ``amount``."""
    if not 0.0 <= amount <= 1.0:
        raise ValueError("amount must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    hit = rng.random(image.mask.shape) < amount
    white = rng.random(image.mask.shape) < 0.5
    px = image.pixels.copy()
    px[hit] = np.where(white[hit], 1.0, 0.0)[:, None]
    return GridImage(px, image.mask, image.name)


def generate_synthetic_image(height, width, seed):
    """Stand-in for a segmentation photo: a textured ellipse on a textured background.

    Foreground and background colors overlap, so local pixel features are
    informative but imperfect.
    """
    rng = np.random.default_rng(seed)
    cy, cx = rng.uniform(0.35, 0.65, size=2)
    ry, rx = rng.uniform(0.18, 0.32, size=2)
    yy, xx = np.meshgrid((np.arange(height) + 0.5) / height,
                         (np.arange(width) + 0.5) / width, indexing="ij")
    mask = (((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0).astype(np.int64)
    fg = rng.uniform(0.35, 0.65, size=3) + np.array([0.15, 0.0, -0.15])
    bg = rng.uniform(0.35, 0.65, size=3) + np.array([-0.15, 0.05, 0.15])
    base = np.where(mask[..., None] == 1, fg, bg)
    px = np.clip(base + 0.12 * rng.standard_normal((height, width, 3)), 0.0, 1.0)
    return GridImage(px, mask, name=f"synthetic-{seed}")


def _ppm_tokens(path):
    toks = []
    with open(path, encoding="ascii") as fh:
        for line in fh:
            toks.extend(line.split("#", 1)[0].split())
    return toks


def read_ppm(path):
    """Read a plain (P3) PPM; returns height×width×3 floats in [0, 1]."""
    toks = _ppm_tokens(path)
    if not toks or toks[0] != "P3":
        raise DatasetFormatError(f"{path}: not a plain PPM (P3) file")
    try:
        w, h, maxval = int(toks[1]), int(toks[2]), int(toks[3])
        vals = np.array([int(t) for t in toks[4:]], dtype=np.float64)
    except (IndexError, ValueError) as exc:
        raise DatasetFormatError(f"{path}: {exc}") from None
    if vals.size != w * h * 3:
        raise DatasetFormatError(f"{path}: expected {w * h * 3} samples, got {vals.size}")
    return vals.reshape(h, w, 3) / maxval


def read_pbm(path):
    """Read a plain (P1) PBM; returns height×width ints in {0, 1}."""
    toks = _ppm_tokens(path)
    if not toks or toks[0] != "P1":
        raise DatasetFormatError(f"{path}: not a plain PBM (P1) file")
    try:
        w, h = int(toks[1]), int(toks[2])
    except (IndexError, ValueError) as exc:
        raise DatasetFormatError(f"{path}: {exc}") from None
    bits = "".join(toks[3:])
    if len(bits) != w * h or set(bits) - {"0", "1"}:
        raise DatasetFormatError(f"{path}: bad bitmap payload")
    return np.array([int(b) for b in bits], dtype=np.int64).reshape(h, w)


def write_ppm(path, pixels, maxval=255):
    h, w, _ = pixels.shape
    q = np.rint(np.asarray(pixels) * maxval).astype(int)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"P3\n{w} {h}\n{maxval}\n")
        for row in q:
            fh.write(" ".join(str(v) for v in row.ravel()) + "\n")


def write_pbm(path, mask):
    h, w = mask.shape
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"P1\n{w} {h}\n")
        for row in np.asarray(mask):
            fh.write(" ".join(str(int(v)) for v in row) + "\n")


def load_image(ppm_path, pbm_path):
    px = read_ppm(ppm_path)
    mask = read_pbm(pbm_path)
    if mask.shape != px.shape[:2]:
        raise DatasetFormatError(f"{pbm_path}: mask size differs from {ppm_path}")
    return GridImage(px, mask, name=Path(ppm_path).stem)


def load_image_dir(directory):
    """Load every ``*.ppm`` in a directory together with its same-stem ``*.pbm`` mask."""
    directory = Path(directory)
    out = []
    for ppm in sorted(directory.glob("*.ppm")):
        pbm = ppm.with_suffix(".pbm")
        if not pbm.exists():
            raise DatasetFormatError(f"{ppm}: missing mask {pbm.name}")
        out.append(load_image(ppm, pbm))
    if not out:
        raise DatasetFormatError(f"{directory}: no .ppm images found")
    return out


# ---------------------------------------------------------------- splits & noise

def snowball_order(adjacency, count, rng, start=None):
    """Breadth-first node collection; restarts from a random unvisited node when stuck."""
    n = adjacency.n
    visited = np.zeros(n, dtype=bool)
    order = []
    queue = deque()
    first = start
    while len(order) < count:
        if not queue:
            if first is not None:
                s, first = int(first), None
            else:
                s = int(rng.choice(np.flatnonzero(~visited)))
            visited[s] = True
            order.append(s)
            queue.append(s)
            continue
        u = queue.popleft()
        for v in adjacency.neighbors(u):
            if len(order) >= count:
                break
            if not visited[v]:
                visited[v] = True
                order.append(int(v))
                queue.append(int(v))
    return np.array(order, dtype=np.int64)


def snowball_split(graph, test_fraction, seed, start=None):
    """Hold out a snowball-sampled test subgraph of ceil(n·test_fraction) nodes.

    Returns ``(train, test)`` induced subgraphs; node order within each is the
    original ascending order and ``node_ids`` map back to the input graph.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    count = math.ceil(graph.n * test_fraction - 1e-9)
    rng = np.random.default_rng(seed)
    test_nodes = np.sort(snowball_order(graph.adjacency, count, rng, start))
    mask = np.ones(graph.n, dtype=bool)
    mask[test_nodes] = False
    return graph.subgraph(np.flatnonzero(mask)), graph.subgraph(test_nodes)


def delete_feature_columns(graph, fraction, seed):
    """Drop a seeded random floor(fraction·d) subset of feature columns."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must lie in [0, 1)")
    d = graph.d
    drop = int(math.floor(fraction * d + 1e-9))
    if d - drop <= 0:
        raise ValueError("no feature columns would remain")
    rng = np.random.default_rng(seed)
    removed = rng.choice(d, size=drop, replace=False)
    keep = np.setdiff1d(np.arange(d), removed)
    names = None if graph.column_names is None else [graph.column_names[c] for c in keep]
    return graph._replace(features=graph.features[:, keep], column_names=names)

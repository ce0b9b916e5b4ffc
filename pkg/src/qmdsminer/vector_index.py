"""Random-projection spill tree for dot-product threshold queries.

For unit vectors ``dot(q, x) >= theta`` is the same as ``|q - x| <= sqrt(2 - 2 theta)``,
so a threshold query is a ball query and a subtree can be skipped when the
ball lies entirely on the other side of its splitting hyperplane.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus_io import key_order
from .embedding import NORM_TOLERANCE, VectorStore, dot_rows

DEFAULT_LEAF_CAPACITY = 64
DEFAULT_SPILL_FRACTION = 0.1
DEFAULT_SEED = 0

# absorbs unit-norm slack on q and x plus rounding in the projections
_RADIUS_SLACK = 1e-9


@dataclass
class _Node:
    direction: np.ndarray | None = None
    offset: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None
    rows: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.rows is not None


class Index:
    def __init__(self, store: VectorStore, leaf_capacity: int, spill_fraction: float, seed: int, root: _Node):
        self.store = store
        self.dimension = store.dimension
        self.leaf_capacity = leaf_capacity
        self.spill_fraction = spill_fraction
        self.seed = seed
        self.root = root

    def __len__(self) -> int:
        return len(self.store)

    def leaves(self) -> list[_Node]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend((node.right, node.left))
        return out

    def depth(self) -> int:
        def walk(node: _Node) -> int:
            return 0 if node.is_leaf else 1 + max(walk(node.left), walk(node.right))

        return walk(self.root)

    def structure(self) -> list:
        """Preorder node records; equal lists mean structurally identical trees."""
        return list(_dump_nodes(self))


def _check_params(leaf_capacity: int, spill_fraction: float) -> None:
    if leaf_capacity < 1:
        raise ValueError("leaf_capacity must be >= 1")
    if not 0.0 <= spill_fraction < 0.5:
        raise ValueError("spill_fraction must lie in [0, 0.5)")


def build_index(
    store: VectorStore,
    leaf_capacity: int = DEFAULT_LEAF_CAPACITY,
    spill_fraction: float = DEFAULT_SPILL_FRACTION,
    seed: int = DEFAULT_SEED,
) -> Index:
    """Split recursively on seeded random directions at the median projection.

    With ``spill_fraction > 0`` the points nearest each splitting hyperplane
    are copied into both children.
    """
    _check_params(leaf_capacity, spill_fraction)
    rng = np.random.default_rng(seed)
    matrix = store.matrix

    def build(rows: np.ndarray) -> _Node:
        if len(rows) <= leaf_capacity:
            return _Node(rows=rows)
        direction = rng.standard_normal(store.dimension)
        direction /= np.linalg.norm(direction)
        proj = dot_rows(matrix[rows], direction)
        offset = float(np.median(proj))
        go_left = proj < offset
        go_right = ~go_left
        n_spill = int(spill_fraction * len(rows))
        if n_spill:
            nearest = np.argsort(np.abs(proj - offset), kind="stable")[:n_spill]
            go_left[nearest] = True
            go_right[nearest] = True
        if go_left.all() or go_right.all():
            return _Node(rows=rows)
        return _Node(direction, offset, build(rows[go_left]), build(rows[go_right]))

    root = build(np.arange(len(store)))
    return Index(store, leaf_capacity, spill_fraction, seed, root)


def ball_radius(theta: float) -> float:
    """Euclidean radius containing every unit-ish x with dot(q, x) >= theta."""
    return math.sqrt(max(0.0, 2.0 * (1.0 + NORM_TOLERANCE) ** 2 - 2.0 * theta)) + _RADIUS_SLACK


def _check_query(q: np.ndarray, dimension: int, theta: float) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (dimension,):
        raise ValueError(f"query has shape {q.shape}, index dimension is {dimension}")
    if abs(float(np.linalg.norm(q)) - 1.0) > NORM_TOLERANCE:
        raise ValueError("query vector is not unit-normalized")
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    return q


def _ranked(keys: list[str], scores: np.ndarray, theta: float) -> list[tuple[str, float]]:
    hits = [(keys[i], float(scores[i])) for i in np.flatnonzero(scores >= theta)]
    hits.sort(key=lambda kv: (-kv[1], key_order(kv[0])))
    return hits


def query_threshold(index: Index, q: np.ndarray, theta: float, exact: bool = True) -> list[tuple[str, float]]:
    """All stored keys with ``dot(q, x) >= theta``, best first.

    ``exact=True`` descends toward q and backtracks into every sibling whose
    half-space meets the query ball, so the answer equals a full scan.
    ``exact=False`` follows only q's own side at each split and relies on
    spilled boundary points for recall.
    """
    q = _check_query(q, index.dimension, theta)
    if not len(index):
        return []
    radius = ball_radius(theta)
    found: list[np.ndarray] = []
    stack = [index.root]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            found.append(node.rows)
            continue
        p = float(np.dot(node.direction, q))
        if p < node.offset:
            near, far, crosses = node.left, node.right, p + radius >= node.offset
        else:
            near, far, crosses = node.right, node.left, p - radius < node.offset
        if exact and crosses:
            stack.append(far)
        stack.append(near)
    rows = np.unique(np.concatenate(found))
    scores = dot_rows(index.store.matrix[rows], q)
    keys = index.store.keys
    return _ranked([keys[r] for r in rows], scores, theta)


def brute_force_query(store: VectorStore, q: np.ndarray, theta: float) -> list[tuple[str, float]]:
    """Exhaustive scan with the same ordering as :func:`query_threshold`."""
    q = _check_query(q, store.dimension, theta)
    if not len(store):
        return []
    return _ranked(store.keys, dot_rows(store.matrix, q), theta)


def _dump_nodes(index: Index):
    keys = index.store.keys
    stack = [index.root]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            yield {"leaf": [keys[r] for r in node.rows]}
        else:
            yield {"direction": node.direction.tolist(), "offset": node.offset}
            stack.extend((node.right, node.left))


def save_index(index: Index, path: str | Path) -> None:
    header = {
        "dimension": index.dimension,
        "leaf_capacity": index.leaf_capacity,
        "spill_fraction": index.spill_fraction,
        "seed": index.seed,
        "count": len(index),
        "keys": index.store.keys,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header) + "\n")
        for rec in _dump_nodes(index):
            fh.write(json.dumps(rec) + "\n")


def load_index(path: str | Path, vectors: VectorStore) -> Index:
    """Rebuild a saved tree; vectors are looked up in ``vectors`` by key."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty index file")
    header, records = lines[0], iter(lines[1:])
    if header["dimension"] != vectors.dimension:
        raise ValueError(f"{path}: index dimension {header['dimension']} != vector dimension {vectors.dimension}")
    missing = [k for k in header["keys"] if k not in vectors]
    if missing:
        raise ValueError(f"{path}: vectors missing for {missing[:3]}")
    store = vectors.subset(header["keys"])
    if len(store) != header["count"]:
        raise ValueError(f"{path}: header count {header['count']} != {len(store)} keys")
    row_of = {k: i for i, k in enumerate(store.keys)}

    def read() -> _Node:
        rec = next(records)
        if "leaf" in rec:
            return _Node(rows=np.array([row_of[k] for k in rec["leaf"]], dtype=np.intp))
        node = _Node(np.array(rec["direction"], dtype=np.float64), float(rec["offset"]))
        node.left = read()
        node.right = read()
        return node

    root = read()
    return Index(store, header["leaf_capacity"], header["spill_fraction"], header["seed"], root)

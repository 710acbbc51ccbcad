"""Buffer-spin networks as planar graphs.

Buffer spins are the vertices 2..N+1 (vertex 1 is the central spin, which
never takes part in the planarity question).  A geometry is a simple
undirected graph on those vertices; an edge marks a nonzero buffer-buffer
coupling.  Planar graphs on N >= 3 vertices carry at most 3N-6 edges, so
the number of admissible coupling arrays for N buffer spins is

    M = sum_{k=0}^{3N-6} C(E, k),     E = N(N-1)/2.

For N >= 6 this count includes edge subsets that exceed no edge bound yet
are non-planar (K_{3,3} being the smallest); the enumeration below applies
a true planarity filter and makes the shortfall measurable.

The planarity test is a Kuratowski subgraph/subdivision search, which is
exhaustive and exact for graphs on at most 6 vertices: the only
obstructions that fit are K5, K5 with a single subdivided edge, and
K_{3,3} itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, permutations
from math import comb

import numpy as np

MAX_BUFFER_SPINS = 6


def _edge_slots(n_buffer: int) -> list[tuple[int, int]]:
    verts = range(2, n_buffer + 2)
    return list(combinations(verts, 2))


@dataclass(frozen=True)
class BufferGraph:
    """Simple undirected graph on buffer vertices 2..n_buffer+1.

    Only simplicity is enforced at construction; the planarity and
    3N-6 edge-count invariants are properties of the graphs produced by
    :func:`enumerate_buffer_graphs` / accepted by cluster validation, and
    deliberately not of the type itself -- otherwise non-planar test
    inputs such as K5 could not even be represented.
    """

    n_buffer: int
    edges: frozenset

    def __init__(self, n_buffer: int, edges=()):
        if n_buffer < 0:
            raise ValueError("n_buffer must be nonnegative")
        norm = set()
        for e in edges:
            u, v = int(e[0]), int(e[1])
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            if not (2 <= u <= n_buffer + 1 and 2 <= v <= n_buffer + 1):
                raise ValueError(f"edge ({u},{v}) outside vertex range 2..{n_buffer + 1}")
            norm.add((min(u, v), max(u, v)))
        object.__setattr__(self, "n_buffer", int(n_buffer))
        object.__setattr__(self, "edges", frozenset(norm))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def degree(self, v: int) -> int:
        return sum(1 for e in self.edges if v in e)

    def to_text(self) -> str:
        """Serialize as ``N=<n>; edges=(i,j),(k,l),...`` (empty list allowed)."""
        body = ",".join(f"({u},{v})" for u, v in self.sorted_edges())
        return f"N={self.n_buffer}; edges={body}"

    @classmethod
    def from_text(cls, text: str) -> "BufferGraph":
        """Parse the ``N=<n>; edges=...`` serialization produced by to_text."""
        try:
            n_part, e_part = text.split(";", 1)
            n_buffer = int(n_part.strip().split("=", 1)[1])
            body = e_part.strip().split("=", 1)[1].strip()
        except (ValueError, IndexError):
            raise ValueError(f"malformed graph text: {text!r}") from None
        edges = []
        if body:
            for chunk in body.replace("(", " ").replace(")", " ").split(","):
                chunk = chunk.strip()
                if chunk:
                    edges.append(int(chunk))
            if len(edges) % 2:
                raise ValueError(f"malformed edge list in {text!r}")
            edges = list(zip(edges[0::2], edges[1::2]))
        return cls(n_buffer, edges)

    def _bitmask(self) -> int:
        slots = _edge_slots(self.n_buffer)
        index = {e: i for i, e in enumerate(slots)}
        mask = 0
        for e in self.edges:
            mask |= 1 << index[e]
        return mask


@dataclass(frozen=True)
class GeometryClass:
    """Identifier of a geometry: buffer count, edge count k and a canonical key.

    ``index`` is the canonical adjacency bitmask (minimum over all vertex
    relabelings), so two graphs share an index exactly when they are
    isomorphic.
    """

    n_buffer: int
    k: int
    index: int


def geometry_count(n_buffer: int) -> int:
    """Number of admissible coupling arrays for ``n_buffer`` buffer spins.

    Evaluates M = sum_{k<=3N-6} C(E, k) exactly (Python integers).  The
    3N-6 cap applies for N >= 3; for N < 3 every edge subset is counted.
    """
    if n_buffer < 1:
        raise ValueError("n_buffer must be >= 1")
    e_full = n_buffer * (n_buffer - 1) // 2
    cap = 3 * n_buffer - 6 if n_buffer >= 3 else e_full
    return sum(comb(e_full, k) for k in range(0, min(cap, e_full) + 1))


# ---------------------------------------------------------------------------
# Planarity (exact Kuratowski search for <= 6 vertices)
# ---------------------------------------------------------------------------


def is_planar(g: BufferGraph) -> bool:
    """True iff the buffer graph admits a planar embedding.

    Exact for up to 6 vertices via Kuratowski obstructions: a graph this
    small is non-planar iff it contains K5 on five vertices, K5 with one
    edge subdivided through a sixth vertex, or K_{3,3}.
    """
    if g.n_buffer > MAX_BUFFER_SPINS:
        raise ValueError(
            f"planarity test supports at most {MAX_BUFFER_SPINS} buffer vertices"
        )
    return not _has_kuratowski(set(g.edges), range(2, g.n_buffer + 2))


def _has_kuratowski(edges: set, vertices) -> bool:
    verts = list(vertices)
    has = lambda u, v: (min(u, v), max(u, v)) in edges

    # K5 on any five vertices
    for s in combinations(verts, 5):
        missing = [(u, v) for u, v in combinations(s, 2) if not has(u, v)]
        if not missing:
            return True
        # K5 with exactly one edge replaced by a 2-path through an
        # outside vertex (the only K5 subdivision that fits in 6 vertices)
        if len(missing) == 1:
            (u, v) = missing[0]
            for w in verts:
                if w not in s and has(u, w) and has(w, v):
                    return True

    # K_{3,3} on six vertices
    if len(verts) >= 6:
        for s in combinations(verts, 6):
            rest = list(s)
            anchor = rest[0]
            for pair in combinations(rest[1:], 2):
                side_a = (anchor,) + pair
                side_b = tuple(x for x in rest if x not in side_a)
                if all(has(a, b) for a in side_a for b in side_b):
                    return True
    return False


# ---------------------------------------------------------------------------
# Canonical forms and enumeration
# ---------------------------------------------------------------------------


def _perm_weight_table(n_buffer: int) -> np.ndarray:
    """int64 table W[p, s] = 2**(slot that slot s maps to under permutation p)."""
    slots = _edge_slots(n_buffer)
    index = {e: i for i, e in enumerate(slots)}
    verts = list(range(2, n_buffer + 2))
    rows = []
    for perm in permutations(verts):
        relabel = dict(zip(verts, perm))
        rows.append(
            [1 << index[tuple(sorted((relabel[u], relabel[v])))] for (u, v) in slots]
        )
    return np.array(rows, dtype=np.int64)


def canonical_key(g: BufferGraph) -> int:
    """Minimum adjacency bitmask over all vertex relabelings.

    Equal keys <=> isomorphic graphs; cheap for n_buffer <= 6 (at most 720
    permutations).
    """
    slots = _edge_slots(g.n_buffer)
    if not slots:
        return 0
    bits = np.zeros(len(slots), dtype=np.int64)
    index = {e: i for i, e in enumerate(slots)}
    for e in g.edges:
        bits[index[e]] = 1
    weights = _perm_weight_table(g.n_buffer)
    return int((weights @ bits).min())


def _graph_from_bitmask(n_buffer: int, mask: int) -> BufferGraph:
    slots = _edge_slots(n_buffer)
    return BufferGraph(n_buffer, [e for i, e in enumerate(slots) if mask >> i & 1])


def classify_geometry(g: BufferGraph) -> GeometryClass:
    """GeometryClass of a graph: edge count plus canonical isomorphism key."""
    return GeometryClass(g.n_buffer, g.n_edges, canonical_key(g))


def enumerate_buffer_graphs(
    n_buffer: int,
    planar_filter: bool = True,
    up_to_isomorphism: bool = False,
) -> list[BufferGraph]:
    """All buffer networks on ``n_buffer`` vertices, in canonical sorted order.

    Generates every edge subset within the 3N-6 cap (N >= 3; the full
    C(N,2) range below that), optionally keeps only planar graphs, and
    optionally deduplicates to one canonical representative per
    isomorphism class.
    """
    if not 1 <= n_buffer <= MAX_BUFFER_SPINS:
        raise ValueError(f"n_buffer must be in 1..{MAX_BUFFER_SPINS}")
    slots = _edge_slots(n_buffer)
    n_slots = len(slots)
    cap = 3 * n_buffer - 6 if n_buffer >= 3 else n_slots

    masks = []
    for mask in range(1 << n_slots):
        if mask.bit_count() <= cap:
            masks.append(mask)

    if planar_filter:
        masks = [m for m in masks if _mask_is_planar(n_buffer, m, slots)]

    if up_to_isomorphism and n_slots:
        weights = _perm_weight_table(n_buffer)
        powers = 1 << np.arange(n_slots, dtype=np.int64)
        seen = set()
        canon = []
        for mask in masks:
            bits = (mask & powers).astype(bool).astype(np.int64)
            key = int((weights @ bits).min())
            if key not in seen:
                seen.add(key)
                canon.append(key)
        masks = sorted(canon)
    else:
        masks = sorted(masks)

    return [_graph_from_bitmask(n_buffer, m) for m in masks]


def _mask_is_planar(n_buffer: int, mask: int, slots) -> bool:
    if n_buffer < 5:
        return True
    edges = {slots[i] for i in range(len(slots)) if mask >> i & 1}
    return not _has_kuratowski(edges, range(2, n_buffer + 2))


def extreme_geometry(n_buffer: int, which: str) -> BufferGraph:
    """The two reference geometries per buffer count: ``empty`` or ``maximal``.

    Maximal means a maximal planar buffer network with 3N-6 edges (N >= 3):
    single edge (N=2), triangle (N=3), K4 (N=4, the tetrahedral network),
    K5 minus one edge (N=5).  For N=6 two triangulations exist (this one
    and the octahedron); the reference results follow the stacked one --
    two hub vertices joined to everything plus a path through the other
    four -- so that is what ``maximal`` returns.
    """
    if not 2 <= n_buffer <= MAX_BUFFER_SPINS:
        raise ValueError(f"n_buffer must be in 2..{MAX_BUFFER_SPINS}")
    if which == "empty":
        return BufferGraph(n_buffer, [])
    if which != "maximal":
        raise ValueError(f"which must be 'empty' or 'maximal', got {which!r}")

    verts = list(range(2, n_buffer + 2))
    if n_buffer <= 4:
        edges = list(combinations(verts, 2))
    elif n_buffer == 5:
        edges = [e for e in combinations(verts, 2) if e != (5, 6)]
    else:  # join of the hub pair {2,3} with the path 4-5-6-7
        edges = [(2, 3)]
        edges += [(h, v) for h in (2, 3) for v in (4, 5, 6, 7)]
        edges += [(4, 5), (5, 6), (6, 7)]
    return BufferGraph(n_buffer, edges)


def octahedron_graph() -> BufferGraph:
    """The other 6-vertex triangulation: complement of a perfect matching."""
    skip = {(2, 3), (4, 5), (6, 7)}
    return BufferGraph(6, [e for e in combinations(range(2, 8), 2) if e not in skip])

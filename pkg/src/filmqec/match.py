"""Space-time detector graph and minimum-weight perfect matching."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DataError, DegenerateProbability, ShapeMismatch
from .sim import RoundNoise, combine_independent

EXACT_LIMIT = 20


@dataclass(frozen=True)
class DetectorEdge:
    u: int
    v: int  # may be the boundary node
    probability: float
    weight: float
    support: int  # bitmask over data qubits


def edge_weight(p: float) -> float:
    if not 0.0 < p < 0.5:
        raise DegenerateProbability(f"edge probability {p} outside (0, 0.5)")
    return math.log((1.0 - p) / p)


class DetectorGraph:
    """Detectors ``(t, i)`` for ``t < r``, ``i < d-1`` (0-based), plus one boundary node.

    Detector ``(t, i)`` has node index ``t * (d-1) + i``; the boundary is
    node ``r * (d-1)``. Edge supports are bitmasks over data qubits.
    """

    def __init__(self, d: int, r: int, edges: list[DetectorEdge]):
        self.d = d
        self.r = r
        self.edges = tuple(edges)

    @property
    def num_detectors(self) -> int:
        return self.r * (self.d - 1)

    @property
    def boundary(self) -> int:
        return self.num_detectors

    def node(self, t: int, i: int) -> int:
        return t * (self.d - 1) + i

    def coords(self, k: int) -> tuple[int, int] | None:
        if k == self.boundary:
            return None
        return divmod(k, self.d - 1)

    @cached_property
    def quantum_exponent(self) -> int:
        """Exponent ``E`` such that every edge weight is an integer multiple of ``2**E``."""
        exps = [math.frexp(e.weight)[1] - 53 for e in self.edges if e.weight != 0.0]
        return min(exps, default=0)

    def exact_weight(self, w: float) -> int:
        """``w / 2**E`` as an exact integer."""
        num, den = w.as_integer_ratio()
        q = num << -self.quantum_exponent if self.quantum_exponent < 0 else num >> self.quantum_exponent
        return q // den

    def to_float(self, units: int) -> float:
        """Correctly rounded value of an exact integer weight."""
        return math.ldexp(float(units), self.quantum_exponent)

    @cached_property
    def _adjacency(self) -> list[list[tuple[int, int, int]]]:
        adj: list[list[tuple[int, int, int]]] = [[] for _ in range(self.num_detectors + 1)]
        for e in self.edges:
            w = self.exact_weight(e.weight)
            adj[e.u].append((e.v, w, e.support))
            adj[e.v].append((e.u, w, e.support))
        return adj

    @cached_property
    def exact_paths(self) -> tuple[list[list[int | None]], list[list[int]]]:
        """All-pairs shortest distances as exact integers (``None`` when
        unreachable) and path support masks, one Dijkstra per node.

        Path lengths are summed in integers so that equal-weight alternatives
        tie exactly, whatever order their edges were added in.
        """
        rows = [_dijkstra(self._adjacency, src) for src in range(self.num_detectors + 1)]
        return [r[0] for r in rows], [r[1] for r in rows]

    @cached_property
    def shortest_paths(self) -> tuple[np.ndarray, list[list[int]]]:
        """All-pairs distances as floats and path support masks."""
        exact, masks = self.exact_paths
        dist = np.array([[math.inf if x is None else self.to_float(x) for x in row] for row in exact])
        return dist, masks


def _dijkstra(adj, src):
    n = len(adj)
    dist: list[int | None] = [None] * n
    mask = [0] * n
    dist[src] = 0
    heap = [(0, src)]
    done = [False] * n
    while heap:
        dv, v = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        for u, w, sup in adj[v]:
            nd = dv + w
            if dist[u] is None or nd < dist[u]:
                dist[u] = nd
                mask[u] = mask[v] ^ sup
                heapq.heappush(heap, (nd, u))
    return dist, mask


def build_detector_graph(
    noise: RoundNoise, d: int, r: int, final_measurement_edges: bool = False
) -> DetectorGraph:
    """Weighted detector graph from per-round noise.

    Space edges carry the per-round flip probability of the shared data qubit
    (final round: combined with its readout flip probability). Time edges
    carry the ancilla measurement-flip probability. Zero-probability edges are
    dropped. With ``final_measurement_edges`` each last-round detector also
    gets an empty-support edge to the boundary for a last-round measurement
    flip.
    """
    if noise.distance != d:
        raise ShapeMismatch(f"noise is for d={noise.distance}, graph requested for d={d}")
    g = DetectorGraph(d, r, [])
    edges = []

    def add(u, v, p, support):
        if p == 0:
            return
        edges.append(DetectorEdge(u, v, p, edge_weight(p), support))

    for t in range(r):
        for j in range(d):
            p = noise.data_flip[j]
            if t == r - 1:
                p = combine_independent([p, noise.readout_flip[j]])
            left = g.node(t, j - 1) if j > 0 else g.boundary
            right = g.node(t, j) if j < d - 1 else g.boundary
            add(left, right, float(p), 1 << j)
        if t < r - 1:
            for i in range(d - 1):
                add(g.node(t, i), g.node(t + 1, i), float(noise.meas_flip[i]), 0)
    if final_measurement_edges:
        for i in range(d - 1):
            add(g.node(r - 1, i), g.boundary, float(noise.meas_flip[i]), 0)
    return DetectorGraph(d, r, edges)


@dataclass(frozen=True)
class MatchResult:
    pairing: tuple  # ((t, i), (t, i) or None for the boundary)
    total_weight: float
    correction: np.ndarray  # (d,) uint8


def _mask_to_bits(mask: int, d: int) -> np.ndarray:
    return np.array([(mask >> j) & 1 for j in range(d)], dtype=np.uint8)


def match_exact(dist: np.ndarray, bdist: np.ndarray) -> list[tuple[int, int | None]]:
    """Minimum-weight matching of ``k`` nodes where each node either pairs with
    another or takes its boundary option. O(k^2 2^k) subset DP.

    ``dist`` and ``bdist`` may hold floats or exact integers (``inf`` for
    unreachable). Ties resolve to the first option in the order: boundary, then partners by
    ascending index, always expanding the lowest unmatched node.
    """
    k = len(bdist)
    full = (1 << k) - 1
    best = {0: (0.0, None)}

    def solve(mask: int) -> float:
        hit = best.get(mask)
        if hit is not None:
            return hit[0]
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        choice_cost = bdist[i] + solve(rest)
        choice = None
        m = rest
        while m:
            j = (m & -m).bit_length() - 1
            m &= m - 1
            c = dist[i][j] + solve(rest & ~(1 << j))
            if c < choice_cost:
                choice_cost, choice = c, j
        best[mask] = (choice_cost, choice)
        return choice_cost

    solve(full)
    pairs = []
    mask = full
    while mask:
        i = (mask & -mask).bit_length() - 1
        j = best[mask][1]
        pairs.append((i, j))
        mask &= ~(1 << i)
        if j is not None:
            mask &= ~(1 << j)
    return pairs


def _unit_cost(unit, dist, bdist):
    a, b = unit
    return bdist[a] if b is None else dist[a][b]


def _best_local(nodes, dist, bdist):
    """Optimal re-pairing of at most four nodes (with boundary options)."""
    sub = [[dist[a][b] for b in nodes] for a in nodes]
    local = match_exact(sub, [bdist[a] for a in nodes])
    return [(nodes[i], None if j is None else nodes[j]) for i, j in local]


def match_greedy(dist: np.ndarray, bdist: np.ndarray) -> list[tuple[int, int | None]]:
    """Greedy cheapest-option matching followed by 2-opt over unit pairs."""
    k = len(bdist)
    options = [(bdist[a], a, -1) for a in range(k)]
    options += [(dist[a][b], a, b) for a, b in itertools.combinations(range(k), 2)]
    options.sort()
    used = [False] * k
    units = []
    for _, a, b in options:
        if used[a] or (b >= 0 and used[b]):
            continue
        used[a] = True
        if b >= 0:
            used[b] = True
            units.append((a, b))
        else:
            units.append((a, None))
    improved = True
    while improved:
        improved = False
        for x, y in itertools.combinations(range(len(units)), 2):
            ux, uy = units[x], units[y]
            nodes = [n for n in ux + uy if n is not None]
            current = _unit_cost(ux, dist, bdist) + _unit_cost(uy, dist, bdist)
            local = _best_local(nodes, dist, bdist)
            cost = sum(_unit_cost(u, dist, bdist) for u in local)
            if cost < current:
                # local may contain one to four units; splice them in place
                units = [u for n, u in enumerate(units) if n not in (x, y)] + local
                improved = True
                break
    return units


def decode_mwpm(graph: DetectorGraph, chi: np.ndarray) -> MatchResult:
    """Match fired detectors of one shot.

    Exact subset DP for up to ``EXACT_LIMIT`` fired detectors, greedy with
    2-opt above. Weights are compared as exact integers, so ``total_weight``
    is the correctly rounded sum of the chosen path lengths. The correction is the XOR of data-qubit supports along the
    shortest path of every matched pair.
    """
    chi = np.asarray(chi)
    if chi.shape != (graph.r, graph.d - 1):
        raise ShapeMismatch(f"detections have shape {chi.shape}, graph expects {(graph.r, graph.d - 1)}")
    fired = np.flatnonzero(chi.reshape(-1))
    d = graph.d
    if len(fired) == 0:
        return MatchResult((), 0.0, np.zeros(d, dtype=np.uint8))
    exact, masks = graph.exact_paths

    def units(a, b):
        x = exact[a][b]
        return math.inf if x is None else x

    sub = [[units(a, b) for b in fired] for a in fired]
    bdist = [units(a, graph.boundary) for a in fired]
    pairs = match_exact(sub, bdist) if len(fired) <= EXACT_LIMIT else match_greedy(sub, bdist)
    total_units = 0
    mask = 0
    pairing = []
    for i, j in pairs:
        a = int(fired[i])
        b = graph.boundary if j is None else int(fired[j])
        total_units += units(a, b)
        mask ^= masks[a][b]
        pairing.append((graph.coords(a), graph.coords(b)))
    if not math.isfinite(total_units):
        raise DataError("detection pattern cannot be explained by the graph's fault edges")
    total = graph.to_float(total_units)
    return MatchResult(tuple(pairing), total, _mask_to_bits(mask, d))


def decode_mwpm_batch(graph: DetectorGraph, chis: np.ndarray) -> np.ndarray:
    """Corrections for many shots; repeated detection patterns are decoded once."""
    out = np.zeros((len(chis), graph.d), dtype=np.uint8)
    cache: dict[bytes, np.ndarray] = {}
    for n, chi in enumerate(np.asarray(chis, dtype=np.uint8)):
        key = chi.tobytes()
        corr = cache.get(key)
        if corr is None:
            corr = cache[key] = decode_mwpm(graph, chi).correction
        out[n] = corr
    return out


def decode_majority(bits) -> int:
    bits = np.asarray(bits)
    if len(bits) % 2 == 0:
        raise ValueError("majority vote needs an odd number of bits")
    return int(2 * int(bits.sum()) > len(bits))

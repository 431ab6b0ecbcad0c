"""Device calibration snapshots, chain extraction and feature normalization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyCorpus,
    FormatError,
    MissingEdge,
    MissingQubit,
    NonContiguousChain,
)

NODE_FEATURES = ("t1", "t2", "sq_gate_error", "readout_error")
EDGE_FEATURES = ("tq_gate_error",)
STD_FLOOR = 1e-6


@dataclass(frozen=True)
class QubitCalib:
    t1: float  # us
    t2: float  # us
    readout_error: float
    sq_gate_error: float

    def __post_init__(self):
        if not (self.t1 > 0 and self.t2 > 0):
            raise FormatError(f"coherence times must be positive, got T1={self.t1}, T2={self.t2}")
        for name in ("readout_error", "sq_gate_error"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise FormatError(f"{name}={p} outside [0, 1]")

    def features(self) -> tuple[float, float, float, float]:
        return (self.t1, self.t2, self.sq_gate_error, self.readout_error)


@dataclass(frozen=True)
class EdgeCalib:
    q0: int
    q1: int
    tq_gate_error: float

    def __post_init__(self):
        if self.q0 == self.q1:
            raise FormatError(f"self-loop edge on qubit {self.q0}")
        if not 0.0 <= self.tq_gate_error <= 1.0:
            raise FormatError(f"tq_gate_error={self.tq_gate_error} outside [0, 1]")

    @property
    def key(self) -> tuple[int, int]:
        return (min(self.q0, self.q1), max(self.q0, self.q1))


@dataclass(frozen=True)
class GateDurations:
    """Durations in microseconds."""

    gate1: float
    gate2: float
    meas_reset: float
    idle_round: float

    def __post_init__(self):
        for name in ("gate1", "gate2", "meas_reset", "idle_round"):
            if getattr(self, name) < 0:
                raise FormatError(f"duration {name} is negative")


@dataclass(frozen=True)
class CalibrationSnapshot:
    snapshot_id: str
    timestamp: int
    device_name: str
    qubits: dict[int, QubitCalib]
    edges: tuple[EdgeCalib, ...]
    durations: GateDurations
    _edge_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {}
        for e in self.edges:
            for q in (e.q0, e.q1):
                if q not in self.qubits:
                    raise MissingQubit(f"edge ({e.q0}, {e.q1}) references unknown qubit {q}")
            if e.key in index:
                raise FormatError(f"duplicate edge {e.key}")
            index[e.key] = e
        object.__setattr__(self, "_edge_index", index)

    def edge(self, a: int, b: int) -> EdgeCalib | None:
        return self._edge_index.get((min(a, b), max(a, b)))

    def neighbors(self, q: int) -> list[int]:
        out = []
        for e in self.edges:
            if e.q0 == q:
                out.append(e.q1)
            elif e.q1 == q:
                out.append(e.q0)
        return sorted(out)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "snapshot_id": self.snapshot_id,
            "timestamp": self.timestamp,
            "device": self.device_name,
            "qubits": {
                str(q): {
                    "t1_us": c.t1,
                    "t2_us": c.t2,
                    "readout_error": c.readout_error,
                    "sq_gate_error": c.sq_gate_error,
                }
                for q, c in sorted(self.qubits.items())
            },
            "edges": [{"q0": e.q0, "q1": e.q1, "tq_gate_error": e.tq_gate_error} for e in self.edges],
            "durations_us": {
                "gate1": self.durations.gate1,
                "gate2": self.durations.gate2,
                "meas_reset": self.durations.meas_reset,
                "idle_round": self.durations.idle_round,
            },
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "CalibrationSnapshot":
        _check_keys(raw, {"snapshot_id", "timestamp", "device", "qubits", "edges", "durations_us"}, "snapshot")
        qubits = {}
        for key, q in raw["qubits"].items():
            _check_keys(q, {"t1_us", "t2_us", "readout_error", "sq_gate_error"}, f"qubit {key}")
            try:
                idx = int(key)
            except ValueError:
                raise FormatError(f"qubit key {key!r} is not an integer") from None
            qubits[idx] = QubitCalib(
                t1=float(q["t1_us"]),
                t2=float(q["t2_us"]),
                readout_error=float(q["readout_error"]),
                sq_gate_error=float(q["sq_gate_error"]),
            )
        edges = []
        for e in raw["edges"]:
            _check_keys(e, {"q0", "q1", "tq_gate_error"}, "edge")
            edges.append(EdgeCalib(int(e["q0"]), int(e["q1"]), float(e["tq_gate_error"])))
        dur = raw["durations_us"]
        _check_keys(dur, {"gate1", "gate2", "meas_reset", "idle_round"}, "durations_us")
        return cls(
            snapshot_id=str(raw["snapshot_id"]),
            timestamp=int(raw["timestamp"]),
            device_name=str(raw["device"]),
            qubits=qubits,
            edges=tuple(edges),
            durations=GateDurations(**{k: float(v) for k, v in dur.items()}),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def loads(cls, text: str) -> "CalibrationSnapshot":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"snapshot is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise FormatError("snapshot root must be an object")
        return cls.from_dict(raw)


def _check_keys(obj: dict, expected: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: expected an object")
    keys = set(obj)
    if keys - expected:
        raise FormatError(f"{where}: unknown keys {sorted(keys - expected)}")
    if expected - keys:
        raise FormatError(f"{where}: missing keys {sorted(expected - keys)}")


def save_snapshot(snapshot: CalibrationSnapshot, path: str | Path) -> None:
    Path(path).write_text(snapshot.dumps())


def load_snapshot(path: str | Path) -> CalibrationSnapshot:
    return CalibrationSnapshot.loads(Path(path).read_text())


@dataclass(frozen=True)
class ChainSpec:
    """A repetition-code layout: ``data[0], anc[0], data[1], ..., data[d-1]``."""

    data_qubits: tuple[int, ...]
    ancilla_qubits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "data_qubits", tuple(int(q) for q in self.data_qubits))
        object.__setattr__(self, "ancilla_qubits", tuple(int(q) for q in self.ancilla_qubits))

    @property
    def distance(self) -> int:
        return len(self.data_qubits)

    @property
    def physical_order(self) -> tuple[int, ...]:
        order = []
        for i, q in enumerate(self.data_qubits):
            order.append(q)
            if i < len(self.ancilla_qubits):
                order.append(self.ancilla_qubits[i])
        return tuple(order)

    @classmethod
    def from_path(cls, path: Sequence[int]) -> "ChainSpec":
        """Split an odd-length physical path into data (even slots) and ancillas."""
        if len(path) % 2 == 0:
            raise NonContiguousChain(f"a chain needs an odd number of qubits, got {len(path)}")
        return cls(tuple(path[0::2]), tuple(path[1::2]))


@dataclass(frozen=True)
class CalibSubgraph:
    """Feature matrices of one chain, in physical (interleaved) order.

    ``node_features`` columns follow ``NODE_FEATURES``: T1, T2, single-qubit
    gate error, readout error.
    """

    qubit_ids: tuple[int, ...]
    node_features: np.ndarray  # (N, 4)
    edges: tuple[tuple[int, int], ...]  # local node indices
    edge_features: np.ndarray  # (E,)
    normalized: bool = False

    @property
    def num_nodes(self) -> int:
        return len(self.qubit_ids)

    def adjacency(self, edge_conditioning: bool = True) -> np.ndarray:
        """Dense weighted adjacency without self-loops.

        With ``edge_conditioning`` each entry is ``max(0, 1 + e_uv)`` where
        ``e_uv`` is the (normally z-scored) two-qubit error of the edge.
        """
        n = self.num_nodes
        a = np.zeros((n, n))
        for (u, v), e in zip(self.edges, self.edge_features):
            w = max(0.0, 1.0 + float(e)) if edge_conditioning else 1.0
            a[u, v] = a[v, u] = w
        return a


def extract_chain_subgraph(
    snapshot: CalibrationSnapshot, chain: ChainSpec, nodes: str = "chain"
) -> CalibSubgraph:
    """Pull the path graph of ``chain`` out of ``snapshot``.

    ``nodes="chain"`` keeps all 2d-1 qubits. ``nodes="data"`` keeps the d data
    qubits only; the edge feature between consecutive data qubits is then the
    mean two-qubit error of the two couplers through the shared ancilla.
    """
    d = chain.distance
    if d < 2 or len(chain.ancilla_qubits) != d - 1:
        raise NonContiguousChain(
            f"chain has {d} data and {len(chain.ancilla_qubits)} ancilla qubits; need d and d-1"
        )
    order = chain.physical_order
    if len(set(order)) != len(order):
        raise NonContiguousChain(f"chain repeats a qubit: {order}")
    for q in order:
        if q not in snapshot.qubits:
            raise MissingQubit(f"qubit {q} not in snapshot {snapshot.snapshot_id}")
    couplers = []
    for a, b in zip(order[:-1], order[1:]):
        e = snapshot.edge(a, b)
        if e is None:
            raise MissingEdge(f"no coupler between qubits {a} and {b} in snapshot {snapshot.snapshot_id}")
        couplers.append(e.tq_gate_error)

    if nodes == "chain":
        ids = order
        feats = np.array([snapshot.qubits[q].features() for q in ids], dtype=np.float64)
        edges = tuple((i, i + 1) for i in range(len(ids) - 1))
        efeat = np.array(couplers, dtype=np.float64)
    elif nodes == "data":
        ids = chain.data_qubits
        feats = np.array([snapshot.qubits[q].features() for q in ids], dtype=np.float64)
        edges = tuple((i, i + 1) for i in range(d - 1))
        efeat = np.array([(couplers[2 * i] + couplers[2 * i + 1]) / 2 for i in range(d - 1)])
    else:
        raise ValueError(f"nodes must be 'chain' or 'data', got {nodes!r}")
    return CalibSubgraph(tuple(ids), feats, edges, efeat)


@dataclass(frozen=True)
class FeatureNorm:
    node_mean: np.ndarray  # (4,)
    node_std: np.ndarray  # (4,)
    edge_mean: np.ndarray  # (1,)
    edge_std: np.ndarray  # (1,)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.node_mean, self.node_std, self.edge_mean, self.edge_std])

    @classmethod
    def from_array(cls, a: np.ndarray) -> "FeatureNorm":
        a = np.asarray(a, dtype=np.float64)
        return cls(a[0:4].copy(), a[4:8].copy(), a[8:9].copy(), a[9:10].copy())

    @classmethod
    def identity(cls) -> "FeatureNorm":
        return cls(np.zeros(4), np.ones(4), np.zeros(1), np.ones(1))


def fit_norm(corpus: Iterable[CalibSubgraph]) -> FeatureNorm:
    """Z-score statistics pooled over every node and edge of ``corpus``."""
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("cannot fit normalization on an empty corpus")
    nodes = np.concatenate([g.node_features for g in corpus], axis=0)
    edges = np.concatenate([g.edge_features for g in corpus])[:, None]
    node_mean, node_std = _column_stats(nodes)
    edge_mean, edge_std = _column_stats(edges) if edges.size else (np.zeros(1), np.ones(1))
    return FeatureNorm(
        node_mean=node_mean,
        node_std=np.maximum(node_std, STD_FLOOR),
        edge_mean=edge_mean,
        edge_std=np.maximum(edge_std, STD_FLOOR),
    )


def _column_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # scale by the column max first so huge values (e.g. T1 standing in for
    # "no decay") neither overflow when squared nor leave rounding residue
    scale = np.abs(x).max(axis=0)
    scale[scale == 0] = 1.0
    y = x / scale
    return y.mean(axis=0) * scale, y.std(axis=0) * scale


def normalize(subgraph: CalibSubgraph, norm: FeatureNorm) -> CalibSubgraph:
    """Apply ``(x - mean) / std`` feature-wise.

    Not idempotent: calling it on an already normalized subgraph normalizes
    twice, so the ``normalized`` flag is checked.
    """
    if subgraph.normalized:
        raise ValueError("subgraph is already normalized")
    return replace(
        subgraph,
        node_features=(subgraph.node_features - norm.node_mean) / norm.node_std,
        edge_features=(subgraph.edge_features - norm.edge_mean[0]) / norm.edge_std[0],
        normalized=True,
    )


def denormalize(subgraph: CalibSubgraph, norm: FeatureNorm) -> CalibSubgraph:
    if not subgraph.normalized:
        raise ValueError("subgraph is not normalized")
    return replace(
        subgraph,
        node_features=subgraph.node_features * norm.node_std + norm.node_mean,
        edge_features=subgraph.edge_features * norm.edge_std[0] + norm.edge_mean[0],
        normalized=False,
    )


# -- synthetic devices ---------------------------------------------------

def heavy_hex_edges(rows: int, cols: int) -> tuple[int, list[tuple[int, int]]]:
    """Heavy-hex style coupling map: ``rows`` linear rows of ``cols`` qubits
    joined by bridge qubits every fourth column, alternating offset 0 / 2.

    Returns the qubit count and the edge list.
    """
    edges = []
    row_q = [[r * cols + c for c in range(cols)] for r in range(rows)]
    for row in row_q:
        edges += list(zip(row[:-1], row[1:]))
    n = rows * cols
    for r in range(rows - 1):
        for c in range(2 * (r % 2), cols, 4):
            edges += [(row_q[r][c], n), (n, row_q[r + 1][c])]
            n += 1
    return n, edges


def synthetic_snapshot(
    rows: int = 3,
    cols: int = 15,
    seed: int = 0,
    snapshot_id: str | None = None,
    device_name: str = "synthetic",
    timestamp: int = 0,
    t1_median: float = 150.0,
    t2_median: float = 100.0,
    readout_median: float = 0.015,
    sq_median: float = 3e-4,
    tq_median: float = 6e-3,
    spread: float = 0.5,
    durations: GateDurations | None = None,
) -> CalibrationSnapshot:
    """Random heavy-hex device with log-normally scattered parameters."""
    rng = np.random.default_rng(seed)
    n, edge_list = heavy_hex_edges(rows, cols)

    def draw(median):
        return float(median * math.exp(spread * rng.standard_normal()))

    qubits = {}
    for q in range(n):
        t1 = draw(t1_median)
        t2 = min(draw(t2_median), 2 * t1)
        qubits[q] = QubitCalib(
            t1=t1,
            t2=t2,
            readout_error=min(draw(readout_median), 0.45),
            sq_gate_error=min(draw(sq_median), 0.45),
        )
    edges = tuple(EdgeCalib(a, b, min(draw(tq_median), 0.45)) for a, b in edge_list)
    return CalibrationSnapshot(
        snapshot_id=snapshot_id or f"{device_name}-{seed}",
        timestamp=timestamp,
        device_name=device_name,
        qubits=qubits,
        edges=edges,
        durations=durations or GateDurations(gate1=0.036, gate2=0.068, meas_reset=1.5, idle_round=0.2),
    )


def find_chains(snapshot: CalibrationSnapshot, d: int, limit: int | None = None) -> list[ChainSpec]:
    """Enumerate simple paths of 2d-1 qubits, each path reported once.

    Paths are produced in lexicographic order of their qubit sequence, with the
    orientation whose first qubit is smaller.
    """
    length = 2 * d - 1
    adj = {q: snapshot.neighbors(q) for q in sorted(snapshot.qubits)}
    found: list[ChainSpec] = []

    def extend(path: list[int]) -> bool:
        if len(path) == length:
            if path[0] < path[-1]:
                found.append(ChainSpec.from_path(path))
                if limit is not None and len(found) >= limit:
                    return True
            return False
        for nb in adj[path[-1]]:
            if nb not in path:
                path.append(nb)
                if extend(path):
                    return True
                path.pop()
        return False

    for start in sorted(adj):
        if extend([start]):
            break
    return found

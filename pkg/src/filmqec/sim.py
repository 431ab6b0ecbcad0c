"""Repetition-code shot generation under calibration-derived flip noise.

The simulator tracks only the Pauli component the code detects (X flips for
the Z-basis code, Z flips for the X-basis code), so a binary flip frame is
exact for this code family.
"""

from __future__ import annotations

import hashlib
import io
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np

from .calib import CalibrationSnapshot, ChainSpec, EdgeCalib, QubitCalib, extract_chain_subgraph
from .errors import ConfigError, FormatError, NonPositiveDuration

BASES = ("Z", "X")
DATASET_MAGIC = b"QRS1"
_HEADER = struct.Struct("<4sHHBBI32s")
_CHUNK = 1 << 16


@dataclass(frozen=True)
class ExperimentConfig:
    distance: int
    rounds: int
    basis: str = "Z"
    logical_state: int = 0
    shots: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.distance < 3 or self.distance % 2 == 0:
            raise ConfigError(f"distance must be an odd integer >= 3, got {self.distance}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.basis not in BASES:
            raise ConfigError(f"basis must be 'Z' or 'X', got {self.basis!r}")
        if self.logical_state not in (0, 1):
            raise ConfigError("logical_state must be 0 or 1")
        if self.shots < 0:
            raise ConfigError("shots must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class PauliTwirl:
    p_x: float
    p_y: float
    p_z: float

    def flip_probability(self, basis: str) -> float:
        """Probability that the twirl flips the channel the ``basis`` code detects."""
        return self.p_x + self.p_y if basis == "Z" else self.p_z + self.p_y


def twirl_from_coherence(t1: float, t2: float, dt: float) -> PauliTwirl:
    """Pauli twirl of amplitude plus phase damping over an idle of ``dt``.

    ``p_z`` is clamped at zero when ``t2 > 2 t1`` makes it negative. A zero
    duration is the no-idle limit and returns a zero channel.
    """
    if not (t1 > 0 and t2 > 0):
        raise NonPositiveDuration(f"T1 and T2 must be positive, got {t1}, {t2}")
    if dt < 0:
        raise NonPositiveDuration(f"idle duration must be non-negative, got {dt}")
    if dt == 0:
        return PauliTwirl(0.0, 0.0, 0.0)
    amp = -math.expm1(-dt / t1)
    phase = -math.expm1(-dt / t2)
    pxy = amp / 4
    return PauliTwirl(pxy, pxy, max(0.0, phase / 2 - amp / 4))


def combine_independent(probs) -> float:
    """Probability that at least one of several independent mechanisms fires."""
    # a + b - ab is 1 - (1-a)(1-b), but leaves a unchanged (bit for bit) when b = 0
    acc = 0.0
    for p in probs:
        acc = acc + p - acc * p
    return acc


@dataclass(frozen=True)
class RoundNoise:
    data_flip: np.ndarray  # (d,) per round
    meas_flip: np.ndarray  # (d-1,)
    readout_flip: np.ndarray  # (d,) final data readout
    basis: str = "Z"
    snapshot_id: str = ""

    def __post_init__(self):
        for name in ("data_flip", "meas_flip", "readout_flip"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if np.any(a < 0) or np.any(a > 1):
                raise ConfigError(f"{name} probabilities must lie in [0, 1]")
            object.__setattr__(self, name, a)
        d = len(self.data_flip)
        if len(self.meas_flip) != d - 1 or len(self.readout_flip) != d:
            raise ConfigError("RoundNoise vectors have inconsistent lengths")

    @property
    def distance(self) -> int:
        return len(self.data_flip)

    @classmethod
    def uniform(cls, d: int, p_data: float, p_meas: float | None = None, p_readout: float = 0.0, **kw):
        p_meas = p_data if p_meas is None else p_meas
        return cls(np.full(d, p_data), np.full(d - 1, p_meas), np.full(d, p_readout), **kw)


def build_round_noise(snapshot: CalibrationSnapshot, chain: ChainSpec, basis: str) -> RoundNoise:
    """Per-round flip probabilities for one chain.

    Data qubit, per round: idle twirl over ``meas_reset + idle_round``, one
    single-qubit gate (2p/3), and one CX per adjacent ancilla (8p/15 each).
    Ancilla measurement flip: readout assignment error, one single-qubit gate,
    its two CX gates and an idle twirl over ``gate1 + 2 gate2``.
    """
    if basis not in BASES:
        raise ConfigError(f"basis must be 'Z' or 'X', got {basis!r}")
    extract_chain_subgraph(snapshot, chain)  # validates the chain
    dur = snapshot.durations
    d = chain.distance
    data, anc = chain.data_qubits, chain.ancilla_qubits

    def cx(a: int, b: int) -> float:
        return 8.0 * snapshot.edge(a, b).tq_gate_error / 15.0

    data_flip = np.empty(d)
    for j, q in enumerate(data):
        cal = snapshot.qubits[q]
        mech = [
            twirl_from_coherence(cal.t1, cal.t2, dur.meas_reset + dur.idle_round).flip_probability(basis),
            2.0 * cal.sq_gate_error / 3.0,
        ]
        if j > 0:
            mech.append(cx(q, anc[j - 1]))
        if j < d - 1:
            mech.append(cx(q, anc[j]))
        data_flip[j] = combine_independent(mech)

    meas_flip = np.empty(d - 1)
    for i, a in enumerate(anc):
        cal = snapshot.qubits[a]
        meas_flip[i] = combine_independent([
            cal.readout_error,
            2.0 * cal.sq_gate_error / 3.0,
            cx(a, data[i]),
            cx(a, data[i + 1]),
            twirl_from_coherence(cal.t1, cal.t2, dur.gate1 + 2 * dur.gate2).flip_probability(basis),
        ])

    readout_flip = np.array([snapshot.qubits[q].readout_error for q in data])
    return RoundNoise(data_flip, meas_flip, readout_flip, basis=basis, snapshot_id=snapshot.snapshot_id)


# -- shots ---------------------------------------------------------------

@dataclass(frozen=True)
class ShotRecord:
    syndromes: np.ndarray  # (r, d-1)
    detections: np.ndarray  # (r, d-1)
    prepared: np.ndarray  # (d,)
    measured: np.ndarray  # (d,)
    target: np.ndarray  # (d,)


def detections_from_syndromes(s: np.ndarray) -> np.ndarray:
    """XOR consecutive rounds along axis -2, with an all-zero round before the first."""
    s = np.asarray(s, dtype=np.uint8)
    chi = s.copy()
    chi[..., 1:, :] ^= s[..., :-1, :]
    return chi


def syndromes_from_detections(chi: np.ndarray) -> np.ndarray:
    return (np.cumsum(chi, axis=-2, dtype=np.int64) & 1).astype(np.uint8)


@dataclass
class ShotSet:
    """Shots of one (d, r, basis, logical state) experiment, stored as arrays."""

    distance: int
    rounds: int
    basis: str
    logical_state: int
    syndromes: np.ndarray  # (N, r, d-1) uint8
    measured: np.ndarray  # (N, d) uint8
    snapshot_hash: bytes = bytes(32)
    _chi: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.syndromes = np.ascontiguousarray(self.syndromes, dtype=np.uint8)
        self.measured = np.ascontiguousarray(self.measured, dtype=np.uint8)
        n = len(self.syndromes)
        if self.syndromes.shape != (n, self.rounds, self.distance - 1):
            raise FormatError(f"syndrome array has shape {self.syndromes.shape}")
        if self.measured.shape != (n, self.distance):
            raise FormatError(f"measurement array has shape {self.measured.shape}")

    def __len__(self) -> int:
        return len(self.syndromes)

    @property
    def detections(self) -> np.ndarray:
        if self._chi is None:
            self._chi = detections_from_syndromes(self.syndromes)
        return self._chi

    @property
    def prepared(self) -> np.ndarray:
        return np.full(self.distance, self.logical_state, dtype=np.uint8)

    @property
    def targets(self) -> np.ndarray:
        return self.measured ^ np.uint8(self.logical_state)

    def __getitem__(self, k: int) -> ShotRecord:
        return ShotRecord(
            syndromes=self.syndromes[k],
            detections=self.detections[k],
            prepared=self.prepared,
            measured=self.measured[k],
            target=self.targets[k],
        )

    def __iter__(self) -> Iterator[ShotRecord]:
        for k in range(len(self)):
            yield self[k]

    def subset(self, idx) -> "ShotSet":
        return replace(self, syndromes=self.syndromes[idx], measured=self.measured[idx], _chi=None)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        write_dataset(self, buf)
        return buf.getvalue()


def snapshot_hash(snapshot_id: str) -> bytes:
    return hashlib.sha256(snapshot_id.encode()).digest()


def shots_from_faults(
    config: ExperimentConfig,
    data_flips: np.ndarray,
    meas_flips: np.ndarray,
    readout_flips: np.ndarray,
    snapshot_id: str = "",
) -> ShotSet:
    """Deterministic shot construction from explicit fault patterns.

    ``data_flips[n, t, j]`` flips data qubit ``j`` just before the round-``t``
    parity check, ``meas_flips[n, t, i]`` flips the round-``t`` outcome of
    ancilla ``i``, ``readout_flips[n, j]`` flips the final readout of ``j``.
    """
    frame = np.cumsum(np.asarray(data_flips, dtype=np.uint8), axis=1, dtype=np.uint8) & 1
    s = (frame[:, :, :-1] ^ frame[:, :, 1:]) ^ np.asarray(meas_flips, dtype=np.uint8)
    m = np.uint8(config.logical_state) ^ frame[:, -1, :] ^ np.asarray(readout_flips, dtype=np.uint8)
    return ShotSet(
        config.distance, config.rounds, config.basis, config.logical_state, s, m, snapshot_hash(snapshot_id)
    )


def _draws_per_shot(d: int, r: int) -> int:
    return r * d + r * (d - 1) + d


def sample_faults(config: ExperimentConfig, noise: RoundNoise, start: int, stop: int):
    """Fault patterns for shots ``[start, stop)``.

    Shot ``n`` consumes its own Philox counter block, so any partition of the
    shot range gives identical faults.
    """
    d, r = config.distance, config.rounds
    u = _draws_per_shot(d, r)
    blocks = -(-u // 4)
    bitgen = np.random.Philox(key=config.seed)
    bitgen.advance(start * blocks)
    draws = np.random.Generator(bitgen).random((stop - start, 4 * blocks))[:, :u]
    n = stop - start
    a, b = r * d, r * d + r * (d - 1)
    data = (draws[:, :a].reshape(n, r, d) < noise.data_flip).astype(np.uint8)
    meas = (draws[:, a:b].reshape(n, r, d - 1) < noise.meas_flip).astype(np.uint8)
    ro = (draws[:, b:] < noise.readout_flip).astype(np.uint8)
    return data, meas, ro


def simulate_shots(config: ExperimentConfig, noise: RoundNoise) -> ShotSet:
    if noise.distance != config.distance:
        raise ConfigError(f"noise is for d={noise.distance}, config has d={config.distance}")
    parts = []
    for start in range(0, config.shots, _CHUNK):
        stop = min(config.shots, start + _CHUNK)
        parts.append(shots_from_faults(config, *sample_faults(config, noise, start, stop), noise.snapshot_id))
    d, r = config.distance, config.rounds
    if not parts:
        return ShotSet(d, r, config.basis, config.logical_state, np.zeros((0, r, d - 1)),
                       np.zeros((0, d)), snapshot_hash(noise.snapshot_id))
    return ShotSet(
        d, r, config.basis, config.logical_state,
        np.concatenate([p.syndromes for p in parts]),
        np.concatenate([p.measured for p in parts]),
        parts[0].snapshot_hash,
    )


# -- dataset files -------------------------------------------------------

def write_dataset(shots: ShotSet, target: str | Path | BinaryIO) -> None:
    """Write the little-endian ``QRS1`` layout; detections and targets are not stored."""
    if len(shots.snapshot_hash) != 32:
        raise FormatError("snapshot hash must be 32 bytes")
    header = _HEADER.pack(
        DATASET_MAGIC, shots.distance, shots.rounds, BASES.index(shots.basis),
        shots.logical_state, len(shots), shots.snapshot_hash,
    )
    n = len(shots)
    s_bits = np.packbits(shots.syndromes.reshape(n, -1), axis=1, bitorder="little")
    m_bits = np.packbits(shots.measured, axis=1, bitorder="little")
    body = np.concatenate([s_bits, m_bits], axis=1).tobytes()
    if isinstance(target, (str, Path)):
        Path(target).write_bytes(header + body)
    else:
        target.write(header + body)


def read_dataset(source: str | Path | BinaryIO | bytes) -> ShotSet:
    if isinstance(source, bytes):
        raw = source
    elif isinstance(source, (str, Path)):
        raw = Path(source).read_bytes()
    else:
        raw = source.read()
    if len(raw) < _HEADER.size:
        raise FormatError("dataset file is truncated")
    magic, d, r, basis, q, n, digest = _HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise FormatError(f"bad dataset magic {magic!r}")
    if basis > 1 or q > 1 or d < 2 or r < 1:
        raise FormatError("dataset header has invalid fields")
    sb = -(-(r * (d - 1)) // 8)
    mb = -(-d // 8)
    body = raw[_HEADER.size:]
    if len(body) != n * (sb + mb):
        raise FormatError(f"dataset body has {len(body)} bytes, expected {n * (sb + mb)}")
    rows = np.frombuffer(body, dtype=np.uint8).reshape(n, sb + mb)
    s = np.unpackbits(rows[:, :sb], axis=1, bitorder="little", count=r * (d - 1)).reshape(n, r, d - 1)
    m = np.unpackbits(rows[:, sb:], axis=1, bitorder="little", count=d)
    return ShotSet(d, r, BASES[basis], q, s, m, digest)


# -- drift ---------------------------------------------------------------

PROBABILITY_CAP = 0.45


def drifted_snapshot(base: CalibrationSnapshot, drift_seed: int, scale: float) -> CalibrationSnapshot:
    """Multiply every calibration parameter by an independent log-normal factor.

    Probabilities are capped at ``PROBABILITY_CAP``. With ``scale == 0`` the
    snapshot is returned unchanged, id included.
    """
    if not 0.0 <= scale <= 1.0:
        raise ConfigError(f"drift scale must lie in [0, 1], got {scale}")
    if scale == 0:
        return base
    rng = np.random.default_rng(drift_seed)

    def f() -> float:
        return math.exp(scale * rng.standard_normal())

    qubits = {}
    for q, c in sorted(base.qubits.items()):
        qubits[q] = QubitCalib(
            t1=c.t1 * f(),
            t2=c.t2 * f(),
            readout_error=min(c.readout_error * f(), PROBABILITY_CAP),
            sq_gate_error=min(c.sq_gate_error * f(), PROBABILITY_CAP),
        )
    edges = tuple(EdgeCalib(e.q0, e.q1, min(e.tq_gate_error * f(), PROBABILITY_CAP)) for e in base.edges)
    return CalibrationSnapshot(
        snapshot_id=f"{base.snapshot_id}~drift{drift_seed}",
        timestamp=base.timestamp,
        device_name=base.device_name,
        qubits=qubits,
        edges=edges,
        durations=base.durations,
    )

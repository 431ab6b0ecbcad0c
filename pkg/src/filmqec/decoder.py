"""Calibration-conditioned FiLM decoder and its unconditioned CNN twin.

A model holds three pieces: a GCN hardware encoder with mean pooling, an
MLP that turns the pooled embedding into per-channel (gamma, beta) for each
conv block, and the conv backbone plus linear head that maps a detection
tensor to per-qubit flip logits. The CNN baseline is the same backbone and
head with the first two pieces absent.
"""

from __future__ import annotations

import csv
import io
import struct
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn
from .calib import NODE_FEATURES, CalibSubgraph, FeatureNorm, normalize
from .errors import FormatError, ShapeMismatch, UntrainedModel
from .nn import Tensor
from .sim import BASES

CHANNELS = (128, 256, 512)
LATENT = 256
GCN_DEPTH = 3
CHECKPOINT_MAGIC = b"QNN1"
_META = struct.Struct("<HHBIdB")
_FLAG_FILM, _FLAG_EDGE, _FLAG_DATA_NODES = 1, 2, 4


def film_width(channels=CHANNELS) -> int:
    return 2 * sum(channels)


@dataclass
class ModelParams:
    """All decoder tensors plus what is needed to use them.

    Tensor names: ``gcn.{0,1,2}.{weight,bias}``, ``film.fc{1,2}.{weight,bias}``,
    ``conv.{0,1,2}.{weight,bias}``, ``head.{weight,bias}``. Affine and GCN
    weights are (in, out); conv weights are (C_out, C_in, 3, 3).
    """

    d: int
    r: int
    basis: str
    tensors: dict[str, np.ndarray]
    norm: FeatureNorm = field(default_factory=FeatureNorm.identity)
    film_enabled: bool = True
    edge_conditioning: bool = True
    nodes: str = "chain"
    epoch: int = 0
    val_accuracy: float = 0.0

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(self.tensors[f"conv.{i}.weight"].shape[0] for i in range(3))

    @property
    def latent(self) -> int:
        return self.tensors["gcn.2.weight"].shape[1] if self.film_enabled else 0

    def copy(self) -> "ModelParams":
        return replace(self, tensors={k: v.copy() for k, v in self.tensors.items()})

    # -- checkpoint file -----------------------------------------------
    def to_bytes(self) -> bytes:
        """``QNN1`` layout, little-endian: tensors as f32, then the 10 f64
        normalization statistics, then (d, r, basis, epoch, val accuracy, flags)."""
        out = io.BytesIO()
        out.write(CHECKPOINT_MAGIC)
        out.write(struct.pack("<I", len(self.tensors)))
        for name, arr in self.tensors.items():
            raw = name.encode()
            out.write(struct.pack("<H", len(raw)))
            out.write(raw)
            out.write(struct.pack("<B", arr.ndim))
            out.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            out.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        out.write(np.asarray(self.norm.as_array(), dtype="<f8").tobytes())
        flags = (
            (_FLAG_FILM if self.film_enabled else 0)
            | (_FLAG_EDGE if self.edge_conditioning else 0)
            | (_FLAG_DATA_NODES if self.nodes == "data" else 0)
        )
        out.write(_META.pack(self.d, self.r, BASES.index(self.basis), self.epoch, self.val_accuracy, flags))
        return out.getvalue()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ModelParams":
        view = memoryview(raw)
        if bytes(view[:4]) != CHECKPOINT_MAGIC:
            raise FormatError(f"bad checkpoint magic {bytes(view[:4])!r}")
        try:
            pos = 4
            (count,) = struct.unpack_from("<I", view, pos)
            pos += 4
            tensors = {}
            for _ in range(count):
                (n,) = struct.unpack_from("<H", view, pos)
                pos += 2
                name = bytes(view[pos:pos + n]).decode()
                pos += n
                (rank,) = struct.unpack_from("<B", view, pos)
                pos += 1
                shape = struct.unpack_from(f"<{rank}I", view, pos)
                pos += 4 * rank
                size = int(np.prod(shape, dtype=np.int64))
                tensors[name] = np.frombuffer(view, dtype="<f4", count=size, offset=pos).reshape(shape).astype(np.float32)
                pos += 4 * size
            norm = FeatureNorm.from_array(np.frombuffer(view, dtype="<f8", count=10, offset=pos))
            pos += 80
            d, r, basis, epoch, acc, flags = _META.unpack_from(view, pos)
            pos += _META.size
        except (struct.error, ValueError, UnicodeDecodeError) as exc:
            raise FormatError(f"truncated or corrupt checkpoint: {exc}") from None
        if pos != len(raw):
            raise FormatError(f"checkpoint has {len(raw) - pos} trailing bytes")
        return cls(
            d=d, r=r, basis=BASES[basis], tensors=tensors, norm=norm,
            film_enabled=bool(flags & _FLAG_FILM), edge_conditioning=bool(flags & _FLAG_EDGE),
            nodes="data" if flags & _FLAG_DATA_NODES else "chain", epoch=epoch, val_accuracy=acc,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "ModelParams":
        return cls.from_bytes(Path(path).read_bytes())


def init_params(
    d: int,
    r: int,
    basis: str = "Z",
    film: bool = True,
    channels=CHANNELS,
    latent: int = LATENT,
    seed: int = 0,
    edge_conditioning: bool = True,
    nodes: str = "chain",
) -> ModelParams:
    """Fan-in scaled uniform init; the FiLM output layer starts at gamma=1, beta=0.

    Each tensor draws from its own stream keyed by (seed, name), so a FiLM
    model and a CNN built with the same seed share their backbone and head.
    """

    def uniform(name, shape, fan_in):
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(np.float32)

    t: dict[str, np.ndarray] = {}
    if film:
        widths = [len(NODE_FEATURES)] + [latent] * GCN_DEPTH
        for i in range(GCN_DEPTH):
            t[f"gcn.{i}.weight"] = uniform(f"gcn.{i}.weight", (widths[i], widths[i + 1]), widths[i])
            t[f"gcn.{i}.bias"] = uniform(f"gcn.{i}.bias", (widths[i + 1],), widths[i])
        t["film.fc1.weight"] = uniform("film.fc1.weight", (latent, latent), latent)
        t["film.fc1.bias"] = uniform("film.fc1.bias", (latent,), latent)
        t["film.fc2.weight"] = np.zeros((latent, film_width(channels)), dtype=np.float32)
        t["film.fc2.bias"] = identity_film_vector(channels)
    c_in = 1
    for i, c in enumerate(channels):
        t[f"conv.{i}.weight"] = uniform(f"conv.{i}.weight", (c, c_in, 3, 3), 9 * c_in)
        t[f"conv.{i}.bias"] = uniform(f"conv.{i}.bias", (c,), 9 * c_in)
        c_in = c
    flat = channels[-1] * r * (d - 1)
    t["head.weight"] = uniform("head.weight", (flat, d), flat)
    t["head.bias"] = uniform("head.bias", (d,), flat)
    return ModelParams(d, r, basis, t, film_enabled=film, edge_conditioning=edge_conditioning, nodes=nodes)


def identity_film_vector(channels=CHANNELS) -> np.ndarray:
    return np.concatenate([np.concatenate([np.ones(c), np.zeros(c)]) for c in channels]).astype(np.float32)


@dataclass(frozen=True)
class FilmParams:
    gammas: tuple[np.ndarray, ...]
    betas: tuple[np.ndarray, ...]

    @classmethod
    def identity(cls, channels=CHANNELS) -> "FilmParams":
        return cls(tuple(np.ones(c) for c in channels), tuple(np.zeros(c) for c in channels))

    def vector(self) -> np.ndarray:
        return np.concatenate([x for g, b in zip(self.gammas, self.betas) for x in (g, b)], axis=-1)


def film_slices(channels=CHANNELS) -> list[tuple[slice, slice]]:
    """(gamma, beta) column ranges of the generator output, block by block."""
    out, pos = [], 0
    for c in channels:
        out.append((slice(pos, pos + c), slice(pos + c, pos + 2 * c)))
        pos += 2 * c
    return out


def partition(theta: np.ndarray, channels=CHANNELS) -> FilmParams:
    theta = np.asarray(theta)
    if theta.shape[-1] != film_width(channels):
        raise ShapeMismatch(f"generator output has width {theta.shape[-1]}, expected {film_width(channels)}")
    sl = film_slices(channels)
    return FilmParams(tuple(theta[..., g] for g, _ in sl), tuple(theta[..., b] for _, b in sl))


# -- graph side ---------------------------------------------------------

def graph_inputs(subgraphs, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Stack normalized subgraphs into features (G, N, 4) and adjacency (G, N, N)."""
    feats, adjs = [], []
    for g in subgraphs:
        if not g.normalized:
            g = normalize(g, params.norm)
        feats.append(g.node_features)
        adjs.append(nn.normalized_adjacency(g.adjacency(params.edge_conditioning)))
    shapes = {f.shape for f in feats}
    if len(shapes) != 1:
        raise ShapeMismatch(f"subgraphs in one batch must share a node count, got {shapes}")
    return np.stack(feats), np.stack(adjs)


def _tensors(params: ModelParams, dtype=None, track: bool = False) -> dict[str, Tensor]:
    """Wrap parameter arrays; ``dtype=None`` keeps storage precision without copying."""
    return {
        k: Tensor(v if dtype is None else v.astype(dtype, copy=False), requires_grad=track, name=k)
        for k, v in params.tensors.items()
    }


def _dtype_of(params: ModelParams, dtype):
    return params.tensors["head.weight"].dtype if dtype is None else np.dtype(dtype)


def encoder_graph(x: Tensor, a_norm: np.ndarray, t: dict[str, Tensor]) -> Tensor:
    """Three ReLU GCN layers then mean pooling; (.., N, 4) -> (.., latent)."""
    h = x
    for i in range(GCN_DEPTH):
        h = nn.relu(nn.gcn_layer(h, a_norm, t[f"gcn.{i}.weight"], t[f"gcn.{i}.bias"]))
    return nn.global_mean_pool(h)


def generator_graph(z: Tensor, t: dict[str, Tensor]) -> Tensor:
    h = nn.relu(nn.affine(z, t["film.fc1.weight"], t["film.fc1.bias"]))
    return nn.affine(h, t["film.fc2.weight"], t["film.fc2.bias"])


def encode_hardware(subgraph: CalibSubgraph, params: ModelParams, dtype=np.float64) -> np.ndarray:
    """Latent hardware vector of one chain (normalized with ``params.norm`` if needed)."""
    x, a = graph_inputs([subgraph], params)
    t = _tensors(params, dtype)
    return encoder_graph(Tensor(x[0].astype(dtype)), a[0], t).data


def generate_film(z: np.ndarray, params: ModelParams, dtype=np.float64) -> FilmParams:
    t = _tensors(params, dtype)
    return partition(generator_graph(Tensor(np.asarray(z, dtype=dtype)), t).data, params.channels)


def film_for_subgraph(subgraph: CalibSubgraph, params: ModelParams, dtype=np.float64) -> FilmParams:
    if not params.film_enabled:
        return FilmParams.identity(params.channels)
    return generate_film(encode_hardware(subgraph, params, dtype), params, dtype)


# -- decoder arm ------------------------------------------------------------

def _check_chi(chi: np.ndarray, d: int, r: int) -> np.ndarray:
    chi = np.asarray(chi)
    if chi.shape[-2:] != (r, d - 1) or chi.ndim not in (2, 3):
        raise ShapeMismatch(f"detections of shape {chi.shape} do not fit d={d}, r={r}")
    return chi


def backbone_graph(x: Tensor, t: dict[str, Tensor], gammas=None, betas=None) -> Tensor:
    """Conv blocks (optionally FiLM-modulated), flatten, linear head.

    ``x`` is (B, 1, r, d-1); gammas/betas are per-block Tensors of shape
    (C,) or (B, C), or ``None`` for the unmodulated path.
    """
    h = x
    for i in range(3):
        h = nn.conv2d_3x3(h, t[f"conv.{i}.weight"], t[f"conv.{i}.bias"])
        if gammas is not None:
            h = nn.film(h, gammas[i], betas[i])
        h = nn.relu(h)
    flat = nn.reshape(h, (h.shape[0], -1))
    return nn.affine(flat, t["head.weight"], t["head.bias"])


def forward(chi: np.ndarray, film: FilmParams | None, params: ModelParams, dtype=None) -> np.ndarray:
    """Per-qubit logits for one detection tensor (r, d-1) or a batch (B, r, d-1).

    ``film=None`` runs the plain CNN path (equivalent to gamma=1, beta=0).
    Computation runs in ``dtype`` (default: the parameters' storage dtype).
    """
    chi = _check_chi(chi, params.d, params.r)
    single = chi.ndim == 2
    dtype = _dtype_of(params, dtype)
    x = Tensor(np.asarray(chi, dtype=dtype).reshape(-1, 1, params.r, params.d - 1))
    t = _tensors(params, dtype)
    if film is None:
        out = backbone_graph(x, t).data
    else:
        gam = [Tensor(np.asarray(g, dtype=dtype)) for g in film.gammas]
        bet = [Tensor(np.asarray(b, dtype=dtype)) for b in film.betas]
        out = backbone_graph(x, t, gam, bet).data
    return out[0] if single else out


@dataclass
class FoldedModel:
    """Backbone with FiLM baked into conv weights: W' = gamma W, b' = gamma b + beta."""

    d: int
    r: int
    tensors: dict[str, np.ndarray]

    def forward(self, chi: np.ndarray) -> np.ndarray:
        chi = _check_chi(chi, self.d, self.r)
        single = chi.ndim == 2
        x = Tensor(np.asarray(chi, dtype=self.tensors["head.weight"].dtype).reshape(-1, 1, self.r, self.d - 1))
        t = {k: Tensor(v) for k, v in self.tensors.items()}
        out = backbone_graph(x, t).data
        return out[0] if single else out


def fold(params: ModelParams, film: FilmParams, dtype=np.float64) -> FoldedModel:
    """Bake ``film`` into the conv weights; the product is formed in float64
    and stored as ``dtype``."""
    t = {}
    for i in range(3):
        g = np.asarray(film.gammas[i], dtype=np.float64)
        b = np.asarray(film.betas[i], dtype=np.float64)
        if g.ndim != 1:
            raise ShapeMismatch("folding needs one (gamma, beta) per channel, not per shot")
        w = params.tensors[f"conv.{i}.weight"].astype(np.float64) * g[:, None, None, None]
        t[f"conv.{i}.weight"] = w.astype(dtype)
        t[f"conv.{i}.bias"] = (params.tensors[f"conv.{i}.bias"].astype(np.float64) * g + b).astype(dtype)
    t["head.weight"] = params.tensors["head.weight"].astype(dtype)
    t["head.bias"] = params.tensors["head.bias"].astype(dtype)
    return FoldedModel(params.d, params.r, t)


def fold_model(model: FoldedModel, film: FilmParams) -> FoldedModel:
    """Fold a further (gamma, beta) into an already folded model."""
    shim = ModelParams(model.d, model.r, "Z", dict(model.tensors), film_enabled=False)
    return fold(shim, film, dtype=model.tensors["head.weight"].dtype)


def logits_to_correction(logits: np.ndarray) -> np.ndarray:
    """``1[sigmoid(logit) > 0.5]``; a logit of exactly 0 decodes to 0."""
    p = 1.0 / (1.0 + np.exp(-np.clip(np.asarray(logits, dtype=np.float64), -nn.ops.LOGIT_CLAMP, nn.ops.LOGIT_CLAMP)))
    return (p > 0.5).astype(np.uint8)


def decode_shot(chi: np.ndarray, model, film: FilmParams | None = None) -> np.ndarray:
    """Correction bits from a ``FoldedModel`` or from ``ModelParams`` (+ FiLM)."""
    if isinstance(model, FoldedModel):
        return logits_to_correction(model.forward(chi))
    return logits_to_correction(forward(chi, film, model, dtype=np.float64))


# -- interpretability ---------------------------------------------------------

@dataclass(frozen=True)
class FilmMode:
    param_kind: str  # "gamma" or "beta"
    layer: int  # 1-based block index
    mode: int  # 1-based, by descending singular value
    sigma: float
    components: np.ndarray  # unit vector over (T1, T2, eps_g, eps_r)


def mean_film_jacobian(params: ModelParams, subgraphs, generator=None) -> np.ndarray:
    """Jacobian of the generator output w.r.t. normalized node features,
    averaged over nodes and then over subgraphs: (film width, 4).

    One reverse sweep per output row, batched by replicating each graph once
    per output. ``generator`` (x, a_norm, tensors) -> theta replaces the
    encoder+MLP, e.g. to plant a known map.
    """
    x_all, a_all = graph_inputs(subgraphs, params)
    t = _tensors(params, np.float64)
    gen = generator or (lambda x, a, tt: generator_graph(encoder_graph(x, a, tt), tt))
    width = None
    acc = None
    for x, a in zip(x_all, a_all):
        if width is None:
            width = gen(Tensor(x), a, t).shape[-1]
        xs = Tensor(np.broadcast_to(x, (width,) + x.shape).copy(), requires_grad=True)
        theta = gen(xs, np.broadcast_to(a, (width,) + a.shape), t)
        theta.backward(np.eye(width))
        jac = xs.grad.mean(axis=1)  # (width, 4): average over nodes
        acc = jac if acc is None else acc + jac
    return acc / len(x_all)


def jacobian_svd(params: ModelParams, subgraphs, generator=None) -> list[FilmMode]:
    """SVD of each (C_l x 4) block of the averaged FiLM Jacobian.

    Singular values are descending; each right singular vector is unit norm
    with its largest-magnitude component made positive.
    """
    if generator is None and (not params.film_enabled or params.epoch == 0):
        raise UntrainedModel("Jacobian analysis needs a trained FiLM model")
    jac = mean_film_jacobian(params, subgraphs, generator)
    modes = []
    for layer, (gs, bs) in enumerate(film_slices(params.channels), start=1):
        for kind, sl in (("gamma", gs), ("beta", bs)):
            _, sig, vt = np.linalg.svd(jac[sl], full_matrices=False)
            for k, (s, v) in enumerate(zip(sig, vt), start=1):
                if v[np.argmax(np.abs(v))] < 0:
                    v = -v
                modes.append(FilmMode(kind, layer, k, float(s), v))
    return modes


SVD_COLUMNS = ("param_kind", "layer", "mode", "sigma", "c_t1", "c_t2", "c_eg", "c_er")


def modes_to_csv(modes: list[FilmMode]) -> str:
    buf = io.StringIO()
    buf.write("# Jacobian taken w.r.t. z-scored calibration features\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SVD_COLUMNS)
    for m in modes:
        w.writerow([m.param_kind, m.layer, m.mode, repr(m.sigma)] + [repr(float(c)) for c in m.components])
    return buf.getvalue()

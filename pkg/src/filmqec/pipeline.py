"""Training, evaluation, latency benchmarking and transfer evaluation."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from . import decoder as dec
from . import nn
from .calib import CalibrationSnapshot, CalibSubgraph, ChainSpec, extract_chain_subgraph, fit_norm
from .errors import ConfigError, EmptyDataset, MismatchedModel, ShapeMismatch
from .match import DetectorGraph, build_detector_graph, decode_mwpm_batch
from .nn import Tensor
from .sim import ExperimentConfig, RoundNoise, ShotSet, build_round_noise, simulate_shots

log = logging.getLogger(__name__)

TRAIN_FRACTION = 0.7
DECODERS = ("film_cnn", "cnn", "mwpm", "majority")
Z95 = float(stats.norm.ppf(0.975))


@dataclass
class LabeledShots:
    """Shots of one experiment together with the calibration they ran under."""

    shots: ShotSet
    subgraph: CalibSubgraph  # raw (un-normalized) features
    noise: RoundNoise | None = None
    snapshot_id: str = ""
    chain: ChainSpec | None = None
    _graph: DetectorGraph | None = field(default=None, repr=False)

    @property
    def key(self) -> tuple[int, int, str]:
        return (self.shots.distance, self.shots.rounds, self.shots.basis)

    @property
    def detector_graph(self) -> DetectorGraph:
        if self._graph is None:
            if self.noise is None:
                raise ConfigError("MWPM needs the noise model the shots were generated under")
            self._graph = build_detector_graph(self.noise, self.shots.distance, self.shots.rounds)
        return self._graph


def make_experiment(
    snapshot: CalibrationSnapshot,
    chain: ChainSpec,
    config: ExperimentConfig,
    noise_snapshot: CalibrationSnapshot | None = None,
) -> LabeledShots:
    """Simulate ``config`` on ``chain``; the decoders see ``noise_snapshot``
    (defaults to the generating snapshot)."""
    seen = noise_snapshot or snapshot
    noise = build_round_noise(snapshot, chain, config.basis)
    shots = simulate_shots(config, noise)
    return LabeledShots(
        shots=shots,
        subgraph=extract_chain_subgraph(seen, chain),
        noise=build_round_noise(seen, chain, config.basis),
        snapshot_id=seen.snapshot_id,
        chain=chain,
    )


# -- splitting ------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """Shuffled train/validation split; validation gets the remainder."""

    seed: int = 0
    train_fraction: float = TRAIN_FRACTION

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train fraction must lie in (0, 1), got {self.train_fraction}")

    @property
    def val_fraction(self) -> float:
        return 1.0 - self.train_fraction

    def split(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        perm = np.random.default_rng(self.seed).permutation(n)
        cut = int(round(self.train_fraction * n))
        return np.sort(perm[:cut]), np.sort(perm[cut:])


def split_indices(n: int, seed: int, train_fraction: float = TRAIN_FRACTION) -> tuple[np.ndarray, np.ndarray]:
    return SplitSpec(seed, train_fraction).split(n)


@dataclass
class Corpus:
    """Pooled arrays of many ``LabeledShots`` of one (d, r, basis)."""

    d: int
    r: int
    basis: str
    chi: np.ndarray  # (N, r, d-1)
    targets: np.ndarray  # (N, d)
    graph_index: np.ndarray  # (N,)
    subgraphs: list[CalibSubgraph]

    @classmethod
    def pool(cls, datasets: Sequence[LabeledShots]) -> "Corpus":
        if not datasets or sum(len(x.shots) for x in datasets) == 0:
            raise EmptyDataset("no shots to pool")
        keys = {x.key for x in datasets}
        if len(keys) != 1:
            raise ShapeMismatch(f"datasets mix (d, r, basis) settings: {sorted(keys)}")
        d, r, basis = keys.pop()
        return cls(
            d, r, basis,
            np.concatenate([x.shots.detections for x in datasets]),
            np.concatenate([x.shots.targets for x in datasets]),
            np.concatenate([np.full(len(x.shots), k) for k, x in enumerate(datasets)]),
            [x.subgraph for x in datasets],
        )

    def __len__(self) -> int:
        return len(self.chi)


# -- training -------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 4096
    lr: float = 5e-3
    seed: int = 0
    film: bool = True
    channels: tuple[int, ...] = dec.CHANNELS
    latent: int = dec.LATENT
    micro_batch: int = 1024
    val_every: int = 1
    edge_conditioning: bool = True
    nodes: str = "chain"


@dataclass
class TrainResult:
    checkpoint: dec.ModelParams
    log: list[dict]


def _film_tensors(theta: Tensor, channels) -> tuple[list[Tensor], list[Tensor]]:
    gam, bet = [], []
    for g, b in dec.film_slices(channels):
        gam.append(nn.take_cols(theta, g.start, g.stop))
        bet.append(nn.take_cols(theta, b.start, b.stop))
    return gam, bet


def _batch_logits(params: dec.ModelParams, t: dict[str, Tensor], chi: np.ndarray, gidx: np.ndarray,
                  graph_x: np.ndarray | None, graph_a: np.ndarray | None) -> Tensor:
    dtype = params.tensors["head.weight"].dtype
    x = Tensor(chi.astype(dtype).reshape(-1, 1, params.r, params.d - 1))
    if not params.film_enabled:
        return dec.backbone_graph(x, t)
    used, local = np.unique(gidx, return_inverse=True)
    z = dec.encoder_graph(Tensor(graph_x[used]), graph_a[used], t)
    theta = nn.take_rows(dec.generator_graph(z, t), local)
    gam, bet = _film_tensors(theta, params.channels)
    return dec.backbone_graph(x, t, gam, bet)


def predict_bits(params: dec.ModelParams, corpus: Corpus, idx: np.ndarray | None = None,
                 chunk: int = 2048) -> np.ndarray:
    """Thresholded per-qubit predictions, computed in storage precision."""
    idx = np.arange(len(corpus)) if idx is None else idx
    gx, ga = _graph_arrays(params, corpus)
    t = dec._tensors(params)
    out = np.zeros((len(idx), corpus.d), dtype=np.uint8)
    for s in range(0, len(idx), chunk):
        sel = idx[s:s + chunk]
        logits = _batch_logits(params, t, corpus.chi[sel], corpus.graph_index[sel], gx, ga).data
        out[s:s + chunk] = dec.logits_to_correction(logits)
    return out


def _graph_arrays(params: dec.ModelParams, corpus: Corpus):
    if not params.film_enabled:
        return None, None
    gx, ga = dec.graph_inputs(corpus.subgraphs, params)
    dtype = params.tensors["head.weight"].dtype
    return gx.astype(dtype), ga.astype(dtype)


def _dedupe(corpus: Corpus, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Merge shots with the same detections and calibration graph.

    Returns representative rows, their mean targets and weights (count over
    batch size). BCE is linear in the target, so the weighted loss over the
    merged rows equals the plain mean over ``batch``, gradient included.
    """
    keys = np.concatenate(
        [corpus.graph_index[batch, None].astype(np.int64), corpus.chi[batch].reshape(len(batch), -1)], axis=1
    )
    _, first, inverse, counts = np.unique(keys, axis=0, return_index=True, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    soft = np.zeros((len(first), corpus.d))
    np.add.at(soft, inverse, corpus.targets[batch])
    soft /= counts[:, None]
    return batch[first], soft, counts / len(batch)


def train(datasets: Sequence[LabeledShots] | Corpus, config: TrainConfig,
          on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Fit a FiLM+CNN (or CNN when ``config.film`` is false) on a 70/30 split.

    Each optimizer step uses ``batch_size`` shots; repeated (detections,
    calibration) rows are merged and the rest is accumulated over
    ``micro_batch`` chunks. The returned checkpoint is the one with the best
    validation per-bit accuracy; validation never feeds the gradient.
    """
    corpus = datasets if isinstance(datasets, Corpus) else Corpus.pool(datasets)
    if len(corpus) < 2:
        raise EmptyDataset("need at least two shots to split into train and validation")
    train_idx, val_idx = split_indices(len(corpus), config.seed)
    params = dec.init_params(
        corpus.d, corpus.r, corpus.basis, film=config.film, channels=config.channels,
        latent=config.latent, seed=config.seed, edge_conditioning=config.edge_conditioning,
        nodes=config.nodes,
    )
    if config.film:
        used = np.unique(corpus.graph_index[train_idx])
        params.norm = fit_norm([corpus.subgraphs[k] for k in used])
    gx, ga = _graph_arrays(params, corpus)
    state = nn.AdamState(base_lr=config.lr, t_max=config.epochs)
    rng = np.random.default_rng(config.seed)
    best: dec.ModelParams | None = None
    history = []
    for epoch in range(config.epochs):
        lr = state.lr(epoch)
        order = rng.permutation(train_idx)
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            rows, soft, weight = _dedupe(corpus, batch)
            t = dec._tensors(params, track=True)
            batch_loss = 0.0
            for ms in range(0, len(rows), config.micro_batch):
                mb = slice(ms, ms + config.micro_batch)
                sel = rows[mb]
                logits = _batch_logits(params, t, corpus.chi[sel], corpus.graph_index[sel], gx, ga)
                loss = nn.bce_loss(nn.sigmoid(nn.cast(logits, np.float64)), soft[mb], weight[mb])
                loss.backward()
                batch_loss += float(loss.data)
            grads = {k: v.grad for k, v in t.items()}
            nn.adam_step(params.tensors, grads, state, lr=lr)
            losses.append((batch_loss, len(batch)))
        mean_loss = sum(l * n for l, n in losses) / max(1, sum(n for _, n in losses))
        entry = {"epoch": epoch + 1, "loss": mean_loss, "lr": lr}
        if len(val_idx) and ((epoch + 1) % config.val_every == 0 or epoch + 1 == config.epochs):
            acc = float(np.mean(predict_bits(params, corpus, val_idx) == corpus.targets[val_idx]))
            entry["val_accuracy"] = acc
            if best is None or acc > best.val_accuracy:
                best = params.copy()
                best.epoch = epoch + 1
                best.val_accuracy = acc
        history.append(entry)
        log.info("epoch %d loss %.5f val_acc %s", epoch + 1, mean_loss, entry.get("val_accuracy"))
        if on_epoch:
            on_epoch(entry)
    if best is None:
        best = params.copy()
        best.epoch = config.epochs
    return TrainResult(best, history)


# -- evaluation -----------------------------------------------------------

def wilson_interval(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for ``k`` successes in ``n`` trials."""
    if n <= 0:
        raise EmptyDataset("confidence interval needs at least one shot")
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, {n}]")
    z2 = z * z
    denom = n + z2
    center = (k + z2 / 2) / denom
    half = z / denom * math.sqrt(k * (n - k) / n + z2 / 4)
    return max(0.0, center - half), min(1.0, center + half)


def ler_ratio(ler_a: float, ler_b: float) -> float | None:
    """rho(A, B) = LER_A / LER_B; ``None`` when LER_B is zero."""
    return None if ler_b == 0 else ler_a / ler_b


def ler_gain(ler_a: float, ler_b: float) -> float | None:
    """Reciprocal of ``ler_ratio``; ``None`` when either LER is zero."""
    rho = ler_ratio(ler_a, ler_b)
    return None if not rho else 1.0 / rho


def paired_binomial_test(fail_a: np.ndarray, fail_b: np.ndarray) -> tuple[int, int, float]:
    """Exact one-sided sign test on discordant shots (H1: A fails less often).

    Returns (shots only A got wrong, shots only B got wrong, p-value).
    """
    fail_a = np.asarray(fail_a, dtype=bool)
    fail_b = np.asarray(fail_b, dtype=bool)
    if fail_a.shape != fail_b.shape:
        raise ShapeMismatch("paired test needs failures on the same shots")
    only_a = int(np.sum(fail_a & ~fail_b))
    only_b = int(np.sum(fail_b & ~fail_a))
    if only_a + only_b == 0:
        return 0, 0, 1.0
    p = stats.binomtest(only_b, only_a + only_b, 0.5, alternative="greater").pvalue
    return only_a, only_b, float(p)


def logical_failures(corrections: np.ndarray, shots: ShotSet) -> np.ndarray:
    """Per shot: majority(m XOR c) != q."""
    corrected = shots.measured ^ np.asarray(corrections, dtype=np.uint8)
    votes = 2 * corrected.sum(axis=1, dtype=np.int64) > shots.distance
    return votes != bool(shots.logical_state)


def _unique_rows(chi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    flat = chi.reshape(len(chi), -1)
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    return uniq.reshape((-1,) + chi.shape[1:]), inverse.reshape(-1)


def corrections_from_model(model, chi: np.ndarray, chunk: int = 1024) -> np.ndarray:
    """Batched corrections from a ``FoldedModel`` or an unconditioned ``ModelParams``.

    Each distinct detection pattern is run once.
    """
    uniq, inverse = _unique_rows(np.asarray(chi, dtype=np.uint8))
    out = np.zeros((len(uniq), model.d), dtype=np.uint8)
    for s in range(0, len(uniq), chunk):
        part = uniq[s:s + chunk]
        logits = model.forward(part) if isinstance(model, dec.FoldedModel) else dec.forward(part, None, model)
        out[s:s + chunk] = dec.logits_to_correction(logits)
    return out[inverse]


def _check_model(model: dec.ModelParams, ds: LabeledShots) -> None:
    if (model.d, model.r, model.basis) != ds.key:
        raise MismatchedModel(
            f"checkpoint is for (d={model.d}, r={model.r}, {model.basis}), "
            f"dataset is (d={ds.key[0]}, r={ds.key[1]}, {ds.key[2]})"
        )


def folded_for(model: dec.ModelParams, subgraph: CalibSubgraph, dtype=np.float32) -> dec.FoldedModel:
    """FiLM for one calibration subgraph, baked into the conv weights."""
    return dec.fold(model, dec.film_for_subgraph(subgraph, model), dtype=dtype)


def decoder_corrections(name: str, ds: LabeledShots, film_model: dec.ModelParams | None = None,
                        cnn_model: dec.ModelParams | None = None,
                        subgraph: CalibSubgraph | None = None) -> np.ndarray:
    """Corrections of decoder ``name`` for every shot of ``ds``.

    ``subgraph`` overrides the calibration the FiLM model is conditioned on.
    """
    shots = ds.shots
    if name == "film_cnn":
        if film_model is None:
            raise ConfigError("film_cnn evaluation needs a FiLM checkpoint")
        _check_model(film_model, ds)
        if not film_model.film_enabled:
            raise MismatchedModel("film_cnn decoder given an unconditioned checkpoint")
        return corrections_from_model(folded_for(film_model, subgraph or ds.subgraph), shots.detections)
    if name == "cnn":
        if cnn_model is None:
            raise ConfigError("cnn evaluation needs a CNN checkpoint")
        _check_model(cnn_model, ds)
        return corrections_from_model(cnn_model, shots.detections)
    if name == "mwpm":
        return decode_mwpm_batch(ds.detector_graph, shots.detections)
    if name == "majority":
        return np.zeros((len(shots), shots.distance), dtype=np.uint8)
    raise ConfigError(f"unknown decoder {name!r}; choose from {DECODERS}")


@dataclass(frozen=True)
class EvalRow:
    decoder: str
    d: int
    r: int
    basis: str
    shots: int
    errors: int
    ler: float
    ci_low: float
    ci_high: float


EVAL_COLUMNS = ("tag", "decoder", "d", "r", "basis", "shots", "errors", "ler", "ci_low", "ci_high")
RATIO_COLUMNS = ("tag", "d", "r", "basis", "decoder_a", "decoder_b", "rho", "gain")


@dataclass
class EvalReport:
    """Aggregated LERs per (decoder, d, r, basis), plus per-shot failure masks."""

    rows: list[EvalRow]
    failures: dict[tuple[str, int, int, str], np.ndarray]
    tag: str = "validation"

    def row(self, decoder: str, d: int, r: int, basis: str) -> EvalRow:
        for x in self.rows:
            if (x.decoder, x.d, x.r, x.basis) == (decoder, d, r, basis):
                return x
        raise KeyError((decoder, d, r, basis))

    def ratio(self, a: str, b: str, d: int, r: int, basis: str) -> float | None:
        return ler_ratio(self.row(a, d, r, basis).ler, self.row(b, d, r, basis).ler)

    def gain(self, a: str, b: str, d: int, r: int, basis: str) -> float | None:
        return ler_gain(self.row(a, d, r, basis).ler, self.row(b, d, r, basis).ler)

    def ratios(self) -> list[dict]:
        out = []
        cells = sorted({(x.d, x.r, x.basis) for x in self.rows})
        for d, r, basis in cells:
            names = [x.decoder for x in self.rows if (x.d, x.r, x.basis) == (d, r, basis)]
            for a in names:
                for b in names:
                    if a != b:
                        out.append({"tag": self.tag, "d": d, "r": r, "basis": basis, "decoder_a": a,
                                    "decoder_b": b, "rho": self.ratio(a, b, d, r, basis),
                                    "gain": self.gain(a, b, d, r, basis)})
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(EVAL_COLUMNS)
        for x in self.rows:
            w.writerow([self.tag, x.decoder, x.d, x.r, x.basis, x.shots, x.errors,
                        repr(x.ler), repr(x.ci_low), repr(x.ci_high)])
        return buf.getvalue()

    def ratios_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RATIO_COLUMNS)
        for x in self.ratios():
            w.writerow([x[c] if x[c] is not None else "" for c in RATIO_COLUMNS])
        return buf.getvalue()


def _row(name: str, key: tuple[int, int, str], fails: np.ndarray) -> EvalRow:
    n, k = len(fails), int(fails.sum())
    lo, hi = wilson_interval(k, n)
    return EvalRow(name, key[0], key[1], key[2], n, k, k / n, lo, hi)


def evaluate(
    datasets: Sequence[LabeledShots],
    film_model: dec.ModelParams | None = None,
    cnn_model: dec.ModelParams | None = None,
    decoders: Iterable[str] = DECODERS,
    tag: str = "validation",
    subgraphs: Sequence[CalibSubgraph] | None = None,
) -> EvalReport:
    """Decode every dataset with every decoder and pool shots per (d, r, basis).

    ``subgraphs`` (one per dataset) replaces the calibration the FiLM model is
    conditioned on, for ablations with stale or shuffled snapshots.
    """
    decoders = list(decoders)
    for name in decoders:
        if name not in DECODERS:
            raise ConfigError(f"unknown decoder {name!r}; choose from {DECODERS}")
    if not datasets:
        raise EmptyDataset("nothing to evaluate")
    if subgraphs is not None and len(subgraphs) != len(datasets):
        raise ShapeMismatch("need one override subgraph per dataset")
    pooled: dict[tuple[str, int, int, str], list[np.ndarray]] = {}
    for n, ds in enumerate(datasets):
        if len(ds.shots) == 0:
            continue
        override = None if subgraphs is None else subgraphs[n]
        for name in decoders:
            corr = decoder_corrections(name, ds, film_model, cnn_model, override)
            pooled.setdefault((name,) + ds.key, []).append(logical_failures(corr, ds.shots))
    if not pooled:
        raise EmptyDataset("every dataset is empty")
    failures = {k: np.concatenate(v) for k, v in pooled.items()}
    order = {name: i for i, name in enumerate(DECODERS)}
    keys = sorted(failures, key=lambda k: (k[1], k[2], k[3], order[k[0]]))
    return EvalReport([_row(k[0], k[1:], failures[k]) for k in keys], {k: failures[k] for k in keys}, tag)


def transfer_eval(
    datasets: Sequence[LabeledShots],
    film_model: dec.ModelParams | None = None,
    cnn_model: dec.ModelParams | None = None,
    decoders: Iterable[str] = DECODERS,
    stale_subgraphs: Sequence[CalibSubgraph] | None = None,
) -> dict[str, EvalReport]:
    """Evaluate without retraining on shots from drifted snapshots and unseen chains.

    Returns ``{"transfer": report}``, plus ``"transfer_stale"`` (FiLM only)
    when ``stale_subgraphs`` gives the out-of-date calibration per dataset.
    """
    out = {"transfer": evaluate(datasets, film_model, cnn_model, decoders, tag="transfer")}
    if stale_subgraphs is not None:
        out["transfer_stale"] = evaluate(datasets, film_model, None, ["film_cnn"], tag="transfer_stale",
                                         subgraphs=stale_subgraphs)
    return out


# -- latency --------------------------------------------------------------

LATENCY_MODES = ("dynamic", "folded", "no_film")
LATENCY_COLUMNS = ("d", "r", "mode", "mean_us", "std_us", "iterations", "warmup")


@dataclass(frozen=True)
class LatencyRow:
    d: int
    r: int
    mode: str
    mean_us: float
    std_us: float
    iterations: int
    warmup: int


@dataclass
class LatencyReport:
    rows: list[LatencyRow]

    def get(self, d: int, r: int, mode: str) -> LatencyRow:
        for x in self.rows:
            if (x.d, x.r, x.mode) == (d, r, mode):
                return x
        raise KeyError((d, r, mode))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LATENCY_COLUMNS)
        for x in self.rows:
            w.writerow([x.d, x.r, x.mode, f"{x.mean_us:.3f}", f"{x.std_us:.3f}", x.iterations, x.warmup])
        return buf.getvalue()


def latency_callable(mode: str, film_model: dec.ModelParams | None, subgraph: CalibSubgraph | None,
                     cnn_model: dec.ModelParams | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Batch-size-1 forward pass for one latency mode, in storage precision.

    ``dynamic`` runs the hardware encoder and FiLM generator on every call;
    ``folded`` uses precomputed FiLM baked into the weights; ``no_film`` is the
    bare CNN.
    """
    if mode == "dynamic":
        params = film_model
        dtype = params.tensors["head.weight"].dtype
        x, a = dec.graph_inputs([subgraph], params)
        t = dec._tensors(params)
        x, a = x[0].astype(dtype), a[0].astype(dtype)

        def run(chi):
            theta = dec.generator_graph(dec.encoder_graph(Tensor(x), a, t), t).data
            return dec.forward(chi, dec.partition(theta, params.channels), params)

        return run
    if mode == "folded":
        folded = folded_for(film_model, subgraph, dtype=film_model.tensors["head.weight"].dtype)
        return folded.forward
    if mode == "no_film":
        model = cnn_model if cnn_model is not None else film_model
        return lambda chi: dec.forward(chi, None, model)
    raise ConfigError(f"unknown latency mode {mode!r}; choose from {LATENCY_MODES}")


def bench_latency(run: Callable[[np.ndarray], np.ndarray], d: int, r: int, mode: str,
                  iterations: int = 2000, warmup: int = 500, seed: int = 0) -> LatencyRow:
    """Time single-shot calls of ``run`` on random detection tensors."""
    if iterations <= 0:
        raise ConfigError("latency benchmark needs at least one timed iteration")
    if warmup < 0:
        raise ConfigError("warmup count cannot be negative")
    rng = np.random.default_rng(seed)
    inputs = rng.integers(0, 2, size=(warmup + iterations, r, d - 1), dtype=np.uint8)
    for k in range(warmup):
        run(inputs[k])
    times = np.empty(iterations)
    for k in range(iterations):
        chi = inputs[warmup + k]
        t0 = time.perf_counter_ns()
        run(chi)
        times[k] = (time.perf_counter_ns() - t0) / 1000.0
    return LatencyRow(d, r, mode, float(times.mean()), float(times.std()), iterations, warmup)


def bench_all(film_model: dec.ModelParams, subgraph: CalibSubgraph, cnn_model: dec.ModelParams | None = None,
              modes: Iterable[str] = LATENCY_MODES, iterations: int = 2000, warmup: int = 500,
              seed: int = 0) -> LatencyReport:
    rows = []
    for mode in modes:
        run = latency_callable(mode, film_model, subgraph, cnn_model)
        rows.append(bench_latency(run, film_model.d, film_model.r, mode, iterations, warmup, seed))
    return LatencyReport(rows)

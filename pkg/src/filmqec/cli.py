"""Command-line entry point: ``generate``, ``train``, ``eval``, ``bench``, ``analyze``.

Every subcommand reads one JSON config (``--config``); ``--seed`` and
``--out`` override the config. Exit codes: 0 success, 2 configuration
error, 3 data error, 4 model or shape mismatch.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

from . import decoder as dec
from . import pipeline as pl
from .calib import ChainSpec, extract_chain_subgraph, find_chains, load_snapshot, save_snapshot, synthetic_snapshot
from .errors import ConfigError, DataError, FilmQECError, ModelError
from .sim import ExperimentConfig, build_round_noise, drifted_snapshot, read_dataset, simulate_shots, write_dataset

log = logging.getLogger("filmqec")

MANIFEST = "manifest.json"
EXIT_CONFIG, EXIT_DATA, EXIT_MODEL = 2, 3, 4

DEFAULTS: dict = {
    "snapshots": [],  # paths; empty means one synthetic device
    "synthetic": {"count": 1, "rows": 3, "cols": 15, "spread": 0.5},
    "drift": {"scale": 0.0, "count": 0},
    "chains": 2,
    "holdout_chains": 1,
    "grid": {"d": [3], "r": [3], "bases": ["Z"], "logical_states": [0, 1]},
    "shots": 2000,
    "seed": 0,
    "dataset_dir": "data",
    "checkpoint_dir": "checkpoints",
    "report_dir": "reports",
    "train": {"epochs": 100, "batch_size": 4096, "lr": 5e-3, "micro_batch": 1024,
              "channels": list(dec.CHANNELS), "latent": dec.LATENT, "film": True, "cnn": True},
    "eval": {"decoders": list(pl.DECODERS)},
    "bench": {"iterations": 2000, "warmup": 500, "modes": list(pl.LATENCY_MODES)},
}


# -- config ---------------------------------------------------------------

def _merge(base: dict, override: dict, where: str = "config") -> dict:
    out = dict(base)
    for k, v in override.items():
        if k not in base:
            raise ConfigError(f"unknown key {where}.{k}")
        if isinstance(base[k], dict) and not isinstance(v, dict):
            raise ConfigError(f"{where}.{k} must be an object")
        out[k] = _merge(base[k], v, f"{where}.{k}") if isinstance(base[k], dict) else v
    return out


def load_config(path: str | None, seed: int | None = None) -> dict:
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {p} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    cfg = _merge(DEFAULTS, raw)
    if seed is not None:
        cfg["seed"] = seed
    grid = cfg["grid"]
    for key in ("d", "r", "bases", "logical_states"):
        if not grid[key]:
            raise ConfigError(f"grid.{key} must be non-empty")
    if not 0 <= int(cfg["seed"]) < 2**64:
        raise ConfigError("seed must fit in 64 unsigned bits")
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _derive_seed(*parts) -> int:
    """Stable 64-bit seed from the run seed and a tuple of labels."""
    h = hashlib.sha256(json.dumps(parts).encode()).digest()
    return int.from_bytes(h[:8], "little")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _provenance(cfg: dict, command: str, **extra) -> dict:
    return {"command": command, "config_hash": config_hash(cfg), "seed": cfg["seed"], **extra}


# -- generate -------------------------------------------------------------

def _base_snapshots(cfg: dict):
    if cfg["snapshots"]:
        out = []
        for p in cfg["snapshots"]:
            if not Path(p).is_file():
                raise ConfigError(f"snapshot file not found: {p}")
            out.append(load_snapshot(p))
        return out
    syn = cfg["synthetic"]
    return [
        synthetic_snapshot(rows=syn["rows"], cols=syn["cols"], spread=syn["spread"],
                           seed=_derive_seed(cfg["seed"], "synthetic", k), snapshot_id=f"synthetic-{k}")
        for k in range(syn["count"])
    ]


def cmd_generate(cfg: dict, out: Path) -> dict:
    """One dataset file per (snapshot, chain, d, r, basis, logical state) plus a manifest."""
    snaps = []
    for base in _base_snapshots(cfg):
        snaps.append(base)
        for k in range(cfg["drift"]["count"]):
            seed = _derive_seed(cfg["seed"], "drift", base.snapshot_id, k)
            snaps.append(drifted_snapshot(base, seed % 2**32, cfg["drift"]["scale"]))
    grid = cfg["grid"]
    entries = []
    for si, snap in enumerate(snaps):
        snap_file = out / "snapshots" / f"snap{si:03d}.json"
        snap_file.parent.mkdir(parents=True, exist_ok=True)
        save_snapshot(snap, snap_file)
        for d in grid["d"]:
            chains = find_chains(snap, d, limit=cfg["chains"])
            if len(chains) < cfg["chains"]:
                raise DataError(f"snapshot {snap.snapshot_id} has only {len(chains)} chains of distance {d}")
            for ci, chain in enumerate(chains):
                role = "eval" if ci >= cfg["chains"] - cfg["holdout_chains"] else "train"
                for r in grid["r"]:
                    for basis in grid["bases"]:
                        noise = build_round_noise(snap, chain, basis)
                        for q in grid["logical_states"]:
                            seed = _derive_seed(cfg["seed"], snap.snapshot_id, ci, d, r, basis, q)
                            shots = simulate_shots(ExperimentConfig(d, r, basis, q, cfg["shots"], seed), noise)
                            name = f"snap{si:03d}_c{ci}_d{d}_r{r}_{basis}{q}.qrs"
                            write_dataset(shots, out / name)
                            entries.append({
                                "file": name, "sha256": _sha256(out / name), "snapshot_id": snap.snapshot_id,
                                "snapshot_file": f"snapshots/{snap_file.name}",
                                "chain": {"data": list(chain.data_qubits), "ancilla": list(chain.ancilla_qubits)},
                                "d": d, "r": r, "basis": basis, "logical_state": q, "shots": len(shots),
                                "seed": seed, "role": role,
                            })
    manifest = {
        "provenance": _provenance(cfg, "generate", snapshot_ids=[s.snapshot_id for s in snaps]),
        "created_unix": int(time.time()),
        "datasets": entries,
    }
    _write(out / MANIFEST, json.dumps(manifest, indent=2) + "\n")
    log.info("wrote %d datasets to %s", len(entries), out)
    return manifest


def load_manifest(data_dir: Path) -> dict:
    path = data_dir / MANIFEST
    if not path.is_file():
        raise ConfigError(f"dataset manifest not found: {path}")
    return json.loads(path.read_text())


def load_datasets(data_dir: Path, d: int, r: int, basis: str, role: str | None = None) -> list[pl.LabeledShots]:
    """Datasets of one (d, r, basis) from a generated directory, verified against the manifest hashes."""
    manifest = load_manifest(data_dir)
    snaps: dict = {}
    out = []
    for e in manifest["datasets"]:
        if (e["d"], e["r"], e["basis"]) != (d, r, basis) or (role is not None and e["role"] != role):
            continue
        path = data_dir / e["file"]
        if not path.is_file():
            raise DataError(f"dataset file listed in manifest is missing: {path}")
        if _sha256(path) != e["sha256"]:
            raise DataError(f"dataset file {path} does not match its manifest hash")
        if e["snapshot_file"] not in snaps:
            snaps[e["snapshot_file"]] = load_snapshot(data_dir / e["snapshot_file"])
        snap = snaps[e["snapshot_file"]]
        chain = ChainSpec(tuple(e["chain"]["data"]), tuple(e["chain"]["ancilla"]))
        out.append(pl.LabeledShots(
            shots=read_dataset(path), subgraph=extract_chain_subgraph(snap, chain),
            noise=build_round_noise(snap, chain, basis), snapshot_id=snap.snapshot_id, chain=chain,
        ))
    return out


def _cells(cfg: dict):
    for d in cfg["grid"]["d"]:
        for r in cfg["grid"]["r"]:
            for basis in cfg["grid"]["bases"]:
                yield d, r, basis


def _ckpt_name(kind: str, d: int, r: int, basis: str) -> str:
    return f"{kind}_d{d}_r{r}_{basis}.qnn"


# -- train ----------------------------------------------------------------

def cmd_train(cfg: dict, out: Path) -> list[Path]:
    data_dir = Path(cfg["dataset_dir"])
    tc = cfg["train"]
    written = []
    for d, r, basis in _cells(cfg):
        datasets = load_datasets(data_dir, d, r, basis, role="train")
        if not datasets:
            raise DataError(f"no training datasets for d={d}, r={r}, basis={basis} in {data_dir}")
        corpus = pl.Corpus.pool(datasets)
        for kind, film in (("film", True), ("cnn", False)):
            if not tc[kind]:
                continue
            config = pl.TrainConfig(
                epochs=tc["epochs"], batch_size=tc["batch_size"], lr=tc["lr"], seed=cfg["seed"], film=film,
                channels=tuple(tc["channels"]), latent=tc["latent"], micro_batch=tc["micro_batch"],
            )
            result = pl.train(corpus, config)
            path = out / _ckpt_name(kind, d, r, basis)
            path.parent.mkdir(parents=True, exist_ok=True)
            result.checkpoint.save(path)
            _write(out / f"train_{kind}_d{d}_r{r}_{basis}.ndjson",
                   "".join(json.dumps(e, sort_keys=True) + "\n" for e in result.log))
            written.append(path)
            log.info("saved %s (epoch %d, val acc %.5f)", path, result.checkpoint.epoch,
                     result.checkpoint.val_accuracy)
    _write(out / "provenance.json", json.dumps(
        _provenance(cfg, "train", checkpoints=[p.name for p in written],
                    train_config=dataclasses.asdict(pl.TrainConfig(**{k: v for k, v in tc.items()
                                                                      if k not in ("film", "cnn")}))),
        indent=2, sort_keys=True) + "\n")
    return written


# -- eval / bench / analyze ---------------------------------------------------

def _load_ckpt(path: Path | None) -> dec.ModelParams | None:
    if path is None:
        return None
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    return dec.ModelParams.load(path)


def _checkpoints(cfg: dict, d: int, r: int, basis: str, args) -> tuple:
    ck = Path(cfg["checkpoint_dir"])
    film_path = Path(args.film_checkpoint) if args.film_checkpoint else ck / _ckpt_name("film", d, r, basis)
    cnn_path = Path(args.cnn_checkpoint) if args.cnn_checkpoint else ck / _ckpt_name("cnn", d, r, basis)
    film = _load_ckpt(film_path) if (args.film_checkpoint or film_path.is_file()) else None
    cnn = _load_ckpt(cnn_path) if (args.cnn_checkpoint or cnn_path.is_file()) else None
    return film, cnn


def cmd_eval(cfg: dict, out: Path, args) -> list[pl.EvalReport]:
    data_dir = Path(cfg["dataset_dir"])
    reports = []
    for d, r, basis in _cells(cfg):
        datasets = load_datasets(data_dir, d, r, basis, role="eval")
        if not datasets:
            raise DataError(f"no evaluation datasets for d={d}, r={r}, basis={basis} in {data_dir}")
        film, cnn = _checkpoints(cfg, d, r, basis, args)
        names = [n for n in cfg["eval"]["decoders"]
                 if not (n == "film_cnn" and film is None) and not (n == "cnn" and cnn is None)]
        reports.append(pl.evaluate(datasets, film, cnn, names, tag="eval"))
    rows_csv = reports[0].to_csv() + "".join(x.to_csv().split("\n", 1)[1] for x in reports[1:])
    ratio_csv = reports[0].ratios_csv() + "".join(x.ratios_csv().split("\n", 1)[1] for x in reports[1:])
    _write(out / "eval.csv", rows_csv)
    _write(out / "ratios.csv", ratio_csv)
    _write(out / "eval_provenance.json", json.dumps(_provenance(cfg, "eval"), indent=2, sort_keys=True) + "\n")
    return reports


def cmd_bench(cfg: dict, out: Path, args) -> pl.LatencyReport:
    data_dir = Path(cfg["dataset_dir"])
    bc = cfg["bench"]
    rows = []
    for d, r, basis in _cells(cfg):
        film, cnn = _checkpoints(cfg, d, r, basis, args)
        if film is None:
            raise ConfigError(f"no FiLM checkpoint for d={d}, r={r}, basis={basis}")
        datasets = load_datasets(data_dir, d, r, basis)
        if not datasets:
            raise DataError(f"no datasets (for a calibration subgraph) at d={d}, r={r}, basis={basis}")
        report = pl.bench_all(film, datasets[0].subgraph, cnn, bc["modes"], bc["iterations"], bc["warmup"],
                              seed=cfg["seed"] % 2**32)
        rows += report.rows
    report = pl.LatencyReport(rows)
    _write(out / "latency.csv", report.to_csv())
    return report


def cmd_analyze(cfg: dict, out: Path, args) -> list[Path]:
    data_dir = Path(cfg["dataset_dir"])
    written = []
    for d, r, basis in _cells(cfg):
        film, _ = _checkpoints(cfg, d, r, basis, args)
        if film is None:
            raise ConfigError(f"no FiLM checkpoint for d={d}, r={r}, basis={basis}")
        datasets = load_datasets(data_dir, d, r, basis)
        if not datasets:
            raise DataError(f"no datasets at d={d}, r={r}, basis={basis}")
        modes = dec.jacobian_svd(film, [x.subgraph for x in datasets])
        path = out / f"svd_d{d}_r{r}_{basis}.csv"
        _write(path, dec.modes_to_csv(modes))
        written.append(path)
    return written


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="filmqec", description=__doc__.split("\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (defaults are used for absent keys)")
    common.add_argument("--seed", type=int, help="run seed; overrides the config")
    common.add_argument("--out", help="output directory; overrides the subcommand's directory in the config")
    common.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    models = argparse.ArgumentParser(add_help=False)
    models.add_argument("--film-checkpoint", help="FiLM checkpoint to use instead of the checkpoint directory")
    models.add_argument("--cnn-checkpoint", help="CNN checkpoint to use instead of the checkpoint directory")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="simulate datasets and write a manifest")
    sub.add_parser("train", parents=[common], help="train FiLM+CNN and CNN checkpoints")
    sub.add_parser("eval", parents=[common, models], help="LER table with Wilson intervals and ratios")
    sub.add_parser("bench", parents=[common, models], help="per-shot latency of dynamic, folded, no-FiLM")
    sub.add_parser("analyze", parents=[common, models], help="Jacobian-SVD of the FiLM generator")
    return parser


_OUT_KEY = {"generate": "dataset_dir", "train": "checkpoint_dir", "eval": "report_dir",
            "bench": "report_dir", "analyze": "report_dir"}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
        key = _OUT_KEY[args.command]
        if args.out:
            cfg[key] = args.out
        out = Path(cfg[key])
        if args.command == "generate":
            cmd_generate(cfg, out)
        elif args.command == "train":
            cmd_train(cfg, out)
        elif args.command == "eval":
            cmd_eval(cfg, out, args)
        elif args.command == "bench":
            cmd_bench(cfg, out, args)
        else:
            cmd_analyze(cfg, out, args)
    except ConfigError as exc:
        print(f"filmqec: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelError as exc:
        print(f"filmqec: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (DataError, FilmQECError) as exc:
        print(f"filmqec: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"filmqec: I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()

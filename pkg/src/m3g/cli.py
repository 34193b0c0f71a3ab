"""``m3g`` command line: synth, train, eval and merge.

Every command writes ``manifest.json`` into its output directory with the
config snapshot, seeds, SHA-256 digests of inputs and outputs, and timings.
Failures print one line ``m3g: error[CODE]: message`` and exit with status 2.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from ._accel import BACKEND
from .dataset import (
    ATTRIBUTES,
    NEIGHBORHOODS,
    POINTS,
    RELATIONS,
    city_of,
    load_bundle,
    load_graph,
    merge_data_dirs,
    read_data_dir,
)
from .encoders import EmbeddingTable, export_embeddings, read_embeddings
from .errors import ConfigError, M3GError
from .evaluation import AttributeTable, DownstreamProtocol, kmeans, proximity_correlation, run_downstream
from .geo import Modality
from .synth import SynthConfig, generate_cities, write_world
from .trainer import TrainConfig, run_training, with_edges, write_loss_history

log = logging.getLogger("m3g")

MANIFEST = "manifest.json"
EMBEDDINGS = "embeddings.csv"
EMBEDDINGS_INIT = "embeddings_init.csv"
LOSS_HISTORY = "loss_history.csv"
REPORT = "report.csv"
CLUSTERS = "clusters.csv"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"m3g: error[E_USAGE]: {message}\n")


def read_kv_config(path: str | Path | None) -> dict[str, str]:
    """Parse ``key = value`` lines (``#`` comments allowed, no sections)."""
    if not path:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[m3g]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc.message.splitlines()[0]}") from None
    return dict(cp["m3g"])


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _digests(paths: Sequence[Path]) -> dict[str, str]:
    return {str(p): sha256_file(p) for p in paths if Path(p).is_file()}


def write_manifest(out: Path, command: str, config: dict, seeds: dict, inputs: Sequence[Path],
                   outputs: Sequence[Path], timings: dict) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "backend": BACKEND,
        "config": {k: v for k, v in config.items()},
        "seeds": seeds,
        "inputs": _digests(inputs),
        "outputs": _digests(outputs),
        "timings_s": {k: round(v, 4) for k, v in timings.items()},
    }
    path = out / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def _data_files(d: Path) -> list[Path]:
    return [d / n for n in (NEIGHBORHOODS, POINTS, RELATIONS, ATTRIBUTES) if (d / n).exists()]


def cmd_synth(args) -> int:
    t0 = time.perf_counter()
    values = read_kv_config(args.config)
    if args.seed is not None:
        values["seed"] = args.seed
    cfg = SynthConfig.from_dict(values)
    out = Path(args.out)
    worlds = generate_cities(cfg)
    outputs: list[Path] = []
    if len(worlds) == 1:
        outputs += write_world(worlds[0], out)
    else:
        for w in worlds:
            outputs += write_world(w, out / w.config.city)
    write_manifest(out, "synth", cfg.as_dict(), {"master": cfg.seed, "cities": [w.config.seed for w in worlds]},
                   [Path(args.config)] if args.config else [], outputs, {"total": time.perf_counter() - t0})
    print(f"wrote {len(worlds)} world(s) with {sum(len(w.neighborhoods) for w in worlds)} neighborhoods to {out}")
    return 0


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    values = read_kv_config(args.config)
    if args.seed is not None:
        values["seed"] = args.seed
    cfg = TrainConfig.from_dict(values)
    if args.edges:
        cfg = with_edges(cfg, args.edges)
    data = Path(args.data)
    bundle, report, _ = load_bundle(data)
    if report.total_dropped:
        log.warning("ingestion dropped %d records: %s", report.total_dropped, report)
    t1 = time.perf_counter()
    result = run_training(bundle, cfg)
    t2 = time.perf_counter()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_embeddings(result.state.embeddings, out / EMBEDDINGS)
    export_embeddings(EmbeddingTable(list(bundle.ids), result.initial_embeddings), out / EMBEDDINGS_INIT)
    write_loss_history(result.history, out / LOSS_HISTORY)
    outputs = [out / EMBEDDINGS, out / EMBEDDINGS_INIT, out / LOSS_HISTORY]
    write_manifest(out, "train", cfg.as_dict(), {"master": cfg.seed},
                   _data_files(data) + ([Path(args.config)] if args.config else []), outputs,
                   {"load": t1 - t0, "train": t2 - t1, "total": time.perf_counter() - t0})
    print(f"trained {len(bundle.ids)} embeddings (d={cfg.d}, edges={'+'.join(cfg.edges) or 'none'}) -> {out}")
    return 0


EVAL_KEYS = {"clusters": 6, "pair_frac": 0.1}


def _eval_settings(values: dict[str, str]) -> tuple[DownstreamProtocol, int, float]:
    proto_fields = DownstreamProtocol.__dataclass_fields__
    kw, extra = {}, dict(EVAL_KEYS)
    for key, raw in values.items():
        key = key.strip().lower()
        try:
            if key in EVAL_KEYS:
                extra[key] = type(EVAL_KEYS[key])(raw)
            elif key == "models":
                kw[key] = tuple(s.strip() for s in str(raw).split(",") if s.strip())
            elif key in proto_fields:
                kw[key] = type(getattr(DownstreamProtocol(), key))(raw)
            else:
                raise ConfigError(f"unknown eval config key {key!r}")
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return DownstreamProtocol(**kw), int(extra["clusters"]), float(extra["pair_frac"])


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    values = read_kv_config(args.config)
    if args.seed is not None:
        values["seed"] = args.seed
    protocol, k, pair_frac = _eval_settings(values)
    emb = read_embeddings(args.embeddings)
    data = Path(args.data)
    attrs_path = Path(args.attributes) if args.attributes else data / ATTRIBUTES
    attrs = AttributeTable.from_csv(attrs_path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs: list[Path] = []
    timings = {}

    # cluster labels first: a bad k should fail before the long regression loop
    km = kmeans(emb.matrix, k, seed=protocol.seed)
    with open(out / CLUSTERS, "w", encoding="utf-8", newline="") as fh:
        fh.write("id,cluster\n")
        for id_, lab in zip(emb.ids, km.labels):
            fh.write(f"{id_},{int(lab)}\n")
    outputs.append(out / CLUSTERS)

    groups = None
    raw = read_data_dir(data)
    if args.by_city:
        groups = city_of(raw.neighborhoods)
    t1 = time.perf_counter()
    report = run_downstream(emb, attrs, protocol, groups=groups)
    report.to_csv(out / REPORT)
    outputs.append(out / REPORT)
    timings["downstream"] = time.perf_counter() - t1

    graph = load_graph(data)
    pos = {id_: i for i, id_ in enumerate(emb.ids)}
    missing = [nb.id for nb in graph.neighborhoods if nb.id not in pos]
    if missing:
        raise M3GError(f"graph neighborhoods missing from embeddings: {missing[:5]}")
    Z = emb.matrix[[pos[nb.id] for nb in graph.neighborhoods]]
    spearmans = {}
    for m in (Modality.DIST, Modality.MOB):
        if m not in graph.edges:
            log.warning("no %s edges; skipping proximity correlation", m.value)
            continue
        res = proximity_correlation(Z, graph, m, pair_frac, seed=protocol.seed)
        path = out / f"proximity_{m.value.lower()}.csv"
        res.to_csv(path)
        outputs.append(path)
        spearmans[m.value] = res.spearman

    cfg = dict(report.protocol)
    cfg.update(clusters=k, pair_frac=pair_frac, by_city=bool(args.by_city))
    write_manifest(out, "eval", cfg, {"master": protocol.seed, "reshuffle": report.seeds},
                   [Path(args.embeddings), attrs_path] + _data_files(data) + ([Path(args.config)] if args.config else []),
                   outputs, dict(timings, total=time.perf_counter() - t0))
    for model in protocol.models:
        print(f"{model}: mean R2 over {len(attrs.names)} attributes = {report.mean_over_attributes(model, 'r2'):.4f}")
    for name, rho in spearmans.items():
        print(f"spearman(embedding distance, {name} proximity) = {rho:.4f}")
    return 0


def cmd_merge(args) -> int:
    t0 = time.perf_counter()
    out = Path(args.out)
    merged = merge_data_dirs(args.dirs, out)
    inputs = [p for d in args.dirs for p in _data_files(Path(d))]
    write_manifest(out, "merge", {"dirs": [str(d) for d in args.dirs]}, {}, inputs, _data_files(out),
                   {"total": time.perf_counter() - t0})
    print(f"merged {len(args.dirs)} dir(s): {len(merged.neighborhoods)} neighborhoods -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="m3g", description="Multimodal neighborhood embeddings.")
    p.add_argument("--version", action="version", version=f"m3g {__version__} ({BACKEND})")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic city")
    s.add_argument("--config", help="key = value file with SynthConfig fields")
    s.add_argument("--seed", type=int, help="master seed (overrides the config)")
    s.add_argument("--out", required=True, help="output data directory")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train neighborhood embeddings")
    t.add_argument("--data", required=True, help="data directory")
    t.add_argument("--config", help="key = value file with TrainConfig fields")
    t.add_argument("--edges", help="edge modalities for the last stage: dist, mob or dist,mob")
    t.add_argument("--seed", type=int, help="master seed (overrides the config)")
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="attribute prediction, clustering and proximity correlation")
    e.add_argument("--embeddings", required=True, help="embeddings CSV from train")
    e.add_argument("--data", required=True, help="data directory (graph and default attributes)")
    e.add_argument("--attributes", help="attribute CSV (default: <data>/attributes.csv)")
    e.add_argument("--config", help="key = value file: rounds, test_frac, pca_dims, models, ridge, forest_*, "
                                    "seed, clusters, pair_frac")
    e.add_argument("--seed", type=int, help="master seed (overrides the config)")
    e.add_argument("--by-city", action="store_true", help="also report test metrics per city")
    e.add_argument("--out", required=True, help="output directory")
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("merge", help="merge data directories of several cities")
    m.add_argument("dirs", nargs="+", help="data directories")
    m.add_argument("--out", required=True, help="merged data directory")
    m.set_defaults(func=cmd_merge)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="m3g: %(message)s")
    try:
        return args.func(args)
    except M3GError as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"m3g: error[{exc.code}]: {msg}", file=sys.stderr)
    except OSError as exc:
        print(f"m3g: error[E_IO]: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), file=sys.stderr)
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"m3g: error[E_INTERNAL]: {str(exc).splitlines()[0] if str(exc) else type(exc).__name__}",
              file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``digraph-flow {dataset,train,sample,eval,posenc}``.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.
Every command validates its inputs before writing anything.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .errors import DigraphFlowError, InvalidParam, ParseError

log = logging.getLogger("digraph_flow")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
THREADS_ENV = "DIGRAPH_FLOW_THREADS"
CHECKPOINT_NAME = "model.ckpt"


class ConfigError(Exception):
    """Raised for invalid user input; maps to exit code 2."""


# helpers ---------------------------------------------------------------------


def _load_json(path, what: str) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{what} not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _guard(paths, force: bool) -> None:
    """Refuse to overwrite existing outputs unless ``--force`` is given."""
    existing = [str(p) for p in paths if Path(p).exists()]
    if existing and not force:
        raise ConfigError(f"refusing to overwrite {existing[0]} (use --force)")


def _config(build, *args, **kwargs):
    try:
        return build(*args, **kwargs)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def _load_graphs(path, what: str):
    from .io import read_graphs

    if not Path(path).is_file():
        raise ConfigError(f"{what} not found: {path}")
    try:
        return read_graphs(path)
    except ParseError as exc:
        raise ConfigError(f"{what} {path}: {exc}") from exc


def _read_manifest(path) -> dict:
    from .io import read_manifest

    if not Path(path).is_file():
        raise ConfigError(f"manifest not found: {path}")
    try:
        manifest = read_manifest(path)
    except ParseError as exc:
        raise ConfigError(f"manifest {path}: {exc}") from exc
    from .io import resolve_split

    for split in manifest["splits"]:
        if not resolve_split(manifest, path, split).is_file():
            raise ConfigError(f"manifest {path}: split file for {split!r} is missing")
    return manifest


def _split(manifest, manifest_path, split):
    from .io import read_graphs, resolve_split

    if split not in manifest["splits"]:
        raise ConfigError(f"manifest has no {split!r} split")
    return read_graphs(resolve_split(manifest, manifest_path, split), manifest["E"])


# dataset -----------------------------------------------------------------------


def cmd_dataset(args) -> int:
    from .synth import DatasetSpec, make_dataset

    spec = _config(DatasetSpec.from_dict, _load_json(args.spec, "dataset spec"))
    out = Path(args.out)
    _guard([out / "manifest.json"], args.force)
    manifest = make_dataset(spec, out)
    _dump_json({"dataset": spec.to_dict()}, out / "resolved_config.json")
    print(out / "manifest.json")
    stats = manifest["meta"]["stats"]
    print("nodes min/max/avg: {min_nodes}/{max_nodes}/{avg_nodes:.1f}  "
          "edges min/max/avg: {min_edges}/{max_edges}/{avg_edges:.1f}".format(**stats))
    return EXIT_OK


# train -------------------------------------------------------------------------


def build_run(cfg: dict, manifest: dict):
    """Model, PE and training configs; PE and class widths come from the data."""
    from .denoiser import TrainConfig
    from .model import ModelConfig
    from .posenc import PEConfig

    pe = _config(PEConfig.from_dict, cfg.get("pe", {"kind": "rrwp"}))
    dn, de, dg = pe.dims()
    model_d = dict(cfg.get("model", {}))
    model_d.update(num_node_classes=manifest["X"], num_edge_classes=manifest["E"],
                   pe_node=dn, pe_edge=de, pe_graph=dg)
    model = _config(ModelConfig.from_dict, model_d)
    tc = _config(TrainConfig.from_dict, cfg.get("train", {}))
    return model, pe, tc


def _write_trace(trace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "step", "train_loss", "val_loss"])
        for row in trace:
            w.writerow(list(row) + [""] * (4 - len(row)))


def cmd_train(args) -> int:
    from .denoiser import load_checkpoint, noise_model_for, restore_state, save_checkpoint, state_tensors, train
    from .errors import CheckpointError
    from .synth import empirical_stats

    cfg = _load_json(args.config, "train config")
    if args.manifest:
        manifest_path = Path(args.manifest)
    elif cfg.get("manifest"):
        # Paths inside a config are relative to the config file.
        manifest_path = Path(cfg["manifest"])
        if not manifest_path.is_absolute():
            manifest_path = Path(args.config).resolve().parent / manifest_path
    else:
        raise ConfigError("config lacks a manifest path")
    manifest = _read_manifest(manifest_path)
    if args.epochs is not None:
        cfg.setdefault("train", {})["epochs"] = args.epochs
    if args.seed is not None:
        cfg.setdefault("train", {})["seed"] = args.seed
    model, pe, tc = build_run(cfg, manifest)
    out = Path(args.out)
    ckpt = out / CHECKPOINT_NAME
    if not args.resume:
        _guard([ckpt], args.force)
    state = None
    if args.resume:
        try:
            header, tensors = load_checkpoint(args.resume)
            state = restore_state(header, tensors, model, tc)
        except CheckpointError as exc:
            raise ConfigError(f"cannot resume: {exc}") from exc

    out.mkdir(parents=True, exist_ok=True)
    graphs = _split(manifest, manifest_path, "train")
    val = _split(manifest, manifest_path, "val") if "val" in manifest["splits"] and not args.no_val else None
    stats = empirical_stats(graphs, manifest["X"], manifest["E"])
    nm = noise_model_for(graphs, model, tc.noise)
    resolved = {"manifest": str(manifest_path), "model": model.to_dict(), "pe": pe.to_dict(), "train": tc.to_dict()}
    _dump_json(resolved, out / "resolved_config.json")

    def header(st, complete):
        return {**resolved, "noise": nm.to_dict(), "node_counts": {str(k): v for k, v in stats.node_counts.items()},
                "seed": tc.seed, "step": st.step, "epoch": st.epoch, "trace": [list(r) for r in st.trace],
                "complete": complete}

    def checkpoint(st):
        if args.checkpoint_every and st.epoch % args.checkpoint_every == 0 and st.epoch < tc.epochs:
            save_checkpoint(ckpt, header(st, False), state_tensors(st, model))

    state = train(graphs, model, pe, tc, nm, state, val, checkpoint)
    complete = state.epoch >= tc.epochs
    save_checkpoint(ckpt, header(state, complete), state_tensors(state, model))
    _write_trace(state.trace, out / "loss_trace.csv")
    if not complete:
        log.warning("checkpoint is partial: %d of %d epochs", state.epoch, tc.epochs)
    print(ckpt)
    return EXIT_OK


# sample ------------------------------------------------------------------------


def _knobs_from_args(args, header: dict):
    from .dfm import SamplingKnobs

    d = {"steps": args.steps}
    for key in ("distortion", "omega", "eta", "pe_every"):
        val = getattr(args, key)
        if val is not None:
            d[key] = val
    if args.no_final_argmax:
        d["final_argmax"] = False
    return _config(SamplingKnobs.from_dict, d)


def cmd_sample(args) -> int:
    from .denoiser import NeuralDenoiser, load_checkpoint, mle_fit, mle_sample
    from .dfm import NoiseModel, sample
    from .diffusion import DiffusionSchedule, dd_sample
    from .errors import CheckpointError
    from .io import write_graphs
    from .model import ModelConfig, param_names
    from .posenc import PEConfig
    from .synth import EmpiricalStats

    out = Path(args.out)
    sidecar = Path(str(out) + ".meta.json")
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    rng = np.random.default_rng(args.seed)
    meta = {"count": args.count, "seed": args.seed}

    if args.baseline == "mle":
        if not args.manifest:
            raise ConfigError("--baseline mle needs --manifest")
        manifest = _read_manifest(args.manifest)
        _guard([out, sidecar], args.force)
        model = mle_fit(_split(manifest, args.manifest, "train"), manifest["X"], manifest["E"])
        graphs = [mle_sample(model, rng) for _ in range(args.count)]
        meta.update(baseline="mle", manifest=str(args.manifest))
    else:
        if not args.checkpoint:
            raise ConfigError("sampling needs --checkpoint (or --baseline mle)")
        try:
            header, tensors = load_checkpoint(args.checkpoint)
        except CheckpointError as exc:
            raise ConfigError(str(exc)) from exc
        cfg = _config(ModelConfig.from_dict, header["model"])
        pe = _config(PEConfig.from_dict, header["pe"])
        engine = header["train"]["engine"]
        knobs = _knobs_from_args(args, header)
        _guard([out, sidecar], args.force)
        params = {k: tensors[k] for k in param_names(cfg)}
        nm = NoiseModel.from_dict(header["noise"])
        counts = {int(k): v for k, v in header["node_counts"].items()}
        source = EmpiricalStats(nm.node, nm.edge, counts)
        den = NeuralDenoiser(params, cfg, pe, knobs.pe_every)
        if engine == "dd":
            ignored = [k for k in ("distortion", "omega", "eta") if getattr(args, k) is not None]
            if ignored:
                log.warning("discrete diffusion ignores %s", ", ".join(ignored))
            schedule = DiffusionSchedule(T=args.T or header["train"]["T"], s=header["train"]["s"],
                                         final_argmax=knobs.final_argmax)
            graphs = dd_sample(den, nm, schedule, source, rng, args.count, args.batch_size)
            meta.update(engine="dd", schedule=schedule.to_dict())
        else:
            graphs = sample(den, nm, knobs, source, rng, args.count, args.batch_size)
            meta.update(engine="dfm", knobs=knobs.to_dict())
        meta.update(checkpoint=str(args.checkpoint), step=header["step"], complete=header.get("complete", True))
    out.parent.mkdir(parents=True, exist_ok=True)
    write_graphs(graphs, out)
    _dump_json(meta, sidecar)
    print(out)
    return EXIT_OK


# eval --------------------------------------------------------------------------


def cmd_eval(args) -> int:
    from .metrics import METRIC_GROUPS, evaluate, validity_fn_for

    metrics = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    unknown = set(metrics) - set(METRIC_GROUPS)
    if unknown:
        raise ConfigError(f"unknown metric groups: {sorted(unknown)}")
    gen = _load_graphs(args.gen, "generated graphs")
    X, E, family, params = 1, 2, args.family, None
    if args.manifest:
        manifest = _read_manifest(args.manifest)
        test = _split(manifest, args.manifest, "test")
        train = _split(manifest, args.manifest, "train")
        X, E = manifest["X"], manifest["E"]
        meta = manifest.get("meta", {})
        family = family or meta.get("family")
        params = meta.get("params")
    else:
        if not (args.test and args.train):
            raise ConfigError("pass --manifest or both --test and --train")
        test = _load_graphs(args.test, "test graphs")
        train = _load_graphs(args.train, "train graphs")
    if args.params:
        params = json.loads(args.params)
    validity = None
    if "vun" in metrics:
        if family is None:
            raise ConfigError("V.U.N. needs a dataset family (--family or manifest meta)")
        try:
            validity = validity_fn_for(family, params or {}, seed=args.seed)
        except (InvalidParam, KeyError) as exc:
            raise ConfigError(f"validity test: {exc}") from exc
    prefix = Path(args.out)
    _guard([Path(str(prefix) + ".json"), Path(str(prefix) + ".csv")], args.force)
    if not gen or not test or not train:
        raise ConfigError("generated, test and train sets must be non-empty")
    report = evaluate(gen, test, train, metrics, validity, X, E, timeout=args.timeout, seed=args.seed)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    Path(str(prefix) + ".json").write_text(report.to_json() + "\n", encoding="utf-8")
    Path(str(prefix) + ".csv").write_text(report.to_csv(), encoding="utf-8")
    print(report.to_json())
    return EXIT_OK


# posenc ------------------------------------------------------------------------


def cmd_posenc(args) -> int:
    from .posenc import PEConfig, compute_pe

    d = _load_json(args.config, "PE config") if args.config else {}
    if args.kind:
        d["kind"] = args.kind
    if args.q is not None:
        d["q_list"] = args.q
    pe = _config(PEConfig.from_dict, d)
    graphs = _load_graphs(args.graphs, "graph file")
    if not 0 <= args.index < len(graphs):
        raise ConfigError(f"--index {args.index} out of range for {len(graphs)} graphs")
    feats = compute_pe(graphs[args.index], pe)

    def enc(a):
        a = np.asarray(a)
        if np.iscomplexobj(a):
            return {"real": a.real.tolist(), "imag": a.imag.tolist()}
        return a.tolist()

    payload = {"config": pe.to_dict(), "node": enc(feats.node), "edge": enc(feats.edge), "graph": enc(feats.graph)}
    text = json.dumps(payload, sort_keys=True)
    if args.out:
        _guard([args.out], args.force)
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


# parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="digraph-flow", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None,
                   help=f"cap on numerical worker threads (default: ${THREADS_ENV} or library default)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("dataset", help="generate a synthetic dataset")
    d.add_argument("--spec", required=True, help="dataset spec JSON")
    d.add_argument("--out", required=True, help="output directory")
    d.add_argument("--force", action="store_true")
    d.set_defaults(func=cmd_dataset)

    t = sub.add_parser("train", help="train a denoiser")
    t.add_argument("--config", required=True, help="run config JSON")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--manifest", help="override the config's manifest path")
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--checkpoint-every", type=int, default=0, help="write a partial checkpoint every N epochs")
    t.add_argument("--no-val", action="store_true", help="skip validation loss")
    t.add_argument("--force", action="store_true")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="sample graphs from a checkpoint or the MLE baseline")
    s.add_argument("--checkpoint")
    s.add_argument("--baseline", choices=["mle"])
    s.add_argument("--manifest", help="dataset for --baseline mle")
    s.add_argument("--out", required=True, help="output JSON-lines file")
    s.add_argument("--count", type=int, default=40)
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--T", type=int, help="reverse steps for discrete diffusion")
    s.add_argument("--distortion")
    s.add_argument("--omega", type=float)
    s.add_argument("--eta", type=float)
    s.add_argument("--pe-every", dest="pe_every", type=int)
    s.add_argument("--no-final-argmax", action="store_true")
    s.add_argument("--batch-size", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("eval", help="evaluate generated graphs")
    e.add_argument("--gen", required=True)
    e.add_argument("--manifest", help="dataset manifest supplying test/train and the validity test")
    e.add_argument("--test")
    e.add_argument("--train")
    e.add_argument("--family", help="validity family: ER, ER_DAG, SBM, PRICE or DAG")
    e.add_argument("--params", help="JSON of family parameters")
    e.add_argument("--metrics", default="mmd,vun,joint")
    e.add_argument("--timeout", type=float, default=5.0)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True, help="report path prefix (.json and .csv are appended)")
    e.add_argument("--force", action="store_true")
    e.set_defaults(func=cmd_eval)

    q = sub.add_parser("posenc", help="print positional encodings of one graph")
    q.add_argument("--graphs", required=True, help="JSON-lines graph file")
    q.add_argument("--index", type=int, default=0)
    q.add_argument("--config", help="PE config JSON")
    q.add_argument("--kind")
    q.add_argument("--q", type=float, nargs="+")
    q.add_argument("--out")
    q.add_argument("--force", action="store_true")
    q.set_defaults(func=cmd_posenc)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    threads = args.threads
    if threads is None and os.environ.get(THREADS_ENV):
        try:
            threads = int(os.environ[THREADS_ENV])
        except ValueError:
            print(f"error: {THREADS_ENV} must be an integer", file=sys.stderr)
            return EXIT_CONFIG
    try:
        if threads is not None:
            if threads < 1:
                raise ConfigError("--threads must be >= 1")
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=threads):
                return args.func(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DigraphFlowError, OSError, ValueError, FloatingPointError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

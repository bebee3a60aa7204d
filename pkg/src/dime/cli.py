"""Command-line driver: ``dime generate | proximity | embed | eval link | eval community | replay``.

Settings resolve in three layers: built-in defaults, then a flat
``key = value`` config file (``--config``), then explicit command-line flags.
Every command writes ``<command>.manifest.json`` into ``--out-dir`` holding the
resolved arguments, input and output SHA-256 digests, derived seeds, the tool
version and wall-clock time per stage.  ``dime replay`` re-runs a manifest.
"""

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import deepalign as da
from . import evalkit as ek
from .metaprox import load_bundle, proximity_bundle, save_bundle
from .netcore import AlignedPair, TIME_BUCKETINGS, load_anchors, load_network
from .seeding import derive_seed
from .synthgen import SynthConfig, generate_pair, write_pair

__all__ = ["main", "build_parser", "read_config", "ConfigError"]


class ConfigError(ValueError):
    pass


# config files ---------------------------------------------------------------


def read_config(path):
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key.replace("-", "_")] = value
    return out


def _int_list(text):
    text = str(text).strip()
    if text in ("", "none"):
        return ()
    return tuple(int(v) for v in text.split(","))


def _float_list(text):
    return tuple(float(v) for v in str(text).split(","))


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _coerce(value, default):
    if isinstance(value, str):
        if isinstance(default, bool):
            return _bool(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            return _int_list(value)
    return value


# the train / architecture keys shared by embed and eval
TRAIN_KEYS = {f.name: f.default for f in fields(da.TrainConfig)}
ARCH_KEYS = {f.name: f.default for f in fields(da.ArchitectureSpec)}
MODEL_KEYS = {**ARCH_KEYS, **TRAIN_KEYS}
MODEL_KEYS.pop("seed")


def _model_configs(args, cfg):
    values = {}
    for key, default in MODEL_KEYS.items():
        flag = getattr(args, key, None)
        raw = flag if flag is not None else cfg.get(key, default)
        try:
            values[key] = _coerce(raw, default)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
    arch = da.ArchitectureSpec(**{k: values[k] for k in ARCH_KEYS})
    train = da.TrainConfig(**{k: values[k] for k in TRAIN_KEYS if k != "seed"})
    return arch, train


def _check_unknown(cfg, allowed):
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")


# manifests ------------------------------------------------------------------


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects manifest fields while a command executes."""

    def __init__(self, args):
        self.args = args
        self.out_dir = Path(args.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.inputs, self.outputs, self.seeds, self.timings = {}, {}, {}, {}
        self.config = {}

    def input(self, path):
        if path is not None:
            self.inputs[str(Path(path).resolve())] = sha256(path)
        return path

    def output(self, path):
        path = Path(path).resolve()
        try:
            key = str(path.relative_to(self.out_dir.resolve()))
        except ValueError:
            key = str(path)
        self.outputs[key] = sha256(path)

    def stage(self, name):
        run = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[name] = run.timings.get(name, 0.0) + time.perf_counter() - self.t0

        return _Timer()

    def write_manifest(self):
        args = {k: v for k, v in vars(self.args).items() if k != "func"}
        for key in ("config", "out_dir"):
            if args.get(key) is not None:
                args[key] = str(Path(args[key]).resolve())
        manifest = {
            "tool": "dime",
            "version": __version__,
            "command": self.args.command_name,
            "args": args,
            "config": self.config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_clock_seconds": {k: round(v, 6) for k, v in self.timings.items()},
        }
        path = self.out_dir / f"{self.args.command_name.replace(' ', '-')}.manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _abs(path):
    return None if path is None else str(Path(path).resolve())


# commands -------------------------------------------------------------------


def cmd_generate(args, run):
    names = [n for n in SynthConfig.field_names() if n != "seed"]
    values = {}
    if args.config:
        cfg = read_config(args.config)
        _check_unknown(cfg, SynthConfig.field_names())
        for name in names:
            if name not in cfg:
                raise ConfigError(f"missing config key {name!r}")
        values = {n: cfg[n] for n in names}
    defaults = SynthConfig()
    kwargs = {}
    for n in names:
        default = getattr(defaults, n)
        try:
            kwargs[n] = _coerce(values.get(n, default), default)
        except ValueError as exc:
            raise ConfigError(f"bad value for {n}: {exc}") from None
    seed = derive_seed(args.seed, "generate")
    synth_cfg = SynthConfig(seed=seed, **kwargs)
    run.seeds["generate"] = seed
    run.config = asdict(synth_cfg)
    with run.stage("generate"):
        synth = generate_pair(synth_cfg)
    with run.stage("write"):
        paths = write_pair(synth, run.out_dir)
    for p in paths.values():
        run.output(p)


def cmd_proximity(args, run):
    net = load_network(run.input(args.network), time_bucketing=args.time_bucketing)
    paths = _int_list(args.paths) if args.paths is not None else None
    run.config = {"paths": list(paths) if paths is not None else "all",
                  "time_bucketing": args.time_bucketing,
                  "include_self": args.include_self, "top_n": args.top_n,
                  "block_rows": args.block_rows}
    with run.stage("proximity"):
        bundle = proximity_bundle(net, paths, args.include_self, args.block_rows, args.top_n)
    # a relative --output lands inside --out-dir, so replays can redirect it
    out = run.out_dir / (args.output or Path(args.network).stem + ".prox")
    out.parent.mkdir(parents=True, exist_ok=True)
    with run.stage("write"):
        save_bundle(bundle, out)
    run.output(out)


def _load_pair(args, run, need_mature):
    g1 = load_network(run.input(args.emerging), time_bucketing=args.time_bucketing)
    if not need_mature:
        # single-network methods never look at the partner
        return AlignedPair(g1, g1, []), g1
    if args.mature is None or args.anchors is None:
        raise ConfigError("--mature and --anchors are required for this mode")
    g2 = load_network(run.input(args.mature), time_bucketing=args.time_bucketing)
    pair = AlignedPair(g1, g2, load_anchors(run.input(args.anchors), g1, g2).anchors)
    return pair, g1


def _bundle_for(net, path, paths, run):
    if path is not None:
        bundle = load_bundle(run.input(path))
        have = [pm.path_id for pm in bundle]
        missing = [p for p in paths if p not in have]
        if missing:
            raise ConfigError(f"bundle {path} lacks meta path {missing[0]}")
        return [pm for pm in bundle if pm.path_id in paths]
    return proximity_bundle(net, paths)


def cmd_embed(args, run):
    cfg = read_config(args.config) if args.config else {}
    _check_unknown(cfg, list(MODEL_KEYS) + ["mode"])
    mode = args.mode or cfg.get("mode", "dime")
    if mode not in ("dime", "dime-sh", "auto"):
        raise ConfigError(f"unknown mode {mode!r}")
    if mode == "auto":
        args.paths = "0"
        mode = "dime-sh"
    arch, train = _model_configs(args, cfg)
    seed = derive_seed(args.seed, "train")
    train = replace(train, seed=seed)
    run.seeds["train"] = seed
    run.config = {"mode": mode, "arch": asdict(arch), "train": asdict(train)}
    joint = mode == "dime"
    with run.stage("load"):
        if joint:
            pair, g1 = _load_pair(args, run, True)
        else:
            g1 = load_network(run.input(args.emerging), time_bucketing=args.time_bucketing)
    with run.stage("proximity"):
        b1 = _bundle_for(g1, args.bundle1, arch.paths, run)
        if joint:
            b2 = _bundle_for(pair.net_mature, args.bundle2, arch.paths, run)
    with run.stage("train"):
        if joint:
            result = da.train(pair, (b1, b2), arch, train)
        else:
            result = da.embed_single(g1, b1, arch, train)
    with run.stage("write"):
        out = run.out_dir
        da.write_embeddings_csv(result.Z1, g1.user_ids, out / "embeddings.csv")
        run.output(out / "embeddings.csv")
        if joint:
            da.write_embeddings_csv(result.Z2, pair.net_mature.user_ids, out / "embeddings_mature.csv")
            run.output(out / "embeddings_mature.csv")
        da.save_checkpoint(result.params, out / "model.dime")
        run.output(out / "model.dime")
        with open(out / "loss_trace.csv", "w", encoding="utf-8") as fh:
            fh.write("epoch,mean_batch_loss,full_loss\n")
            for e, loss in enumerate(result.loss_trace, 1):
                full = result.full_loss_trace[e - 1] if result.full_loss_trace else ""
                fh.write(f"{e},{loss!r},{full!r}\n" if full != "" else f"{e},{loss!r},\n")
        run.output(out / "loss_trace.csv")


def _grid_job(job):
    kind, pair, arch, train, lam, param, seed, method, repeats, bundle2 = job
    if kind == "link":
        return ek.run_link_experiment(pair, arch, train, lam, param, seed, method,
                                      n_folds=repeats, bundle_mature=bundle2)
    return ek.run_community_experiment(pair, arch, train, lam, param, seed, method,
                                       n_runs=repeats, bundle_mature=bundle2)


def cmd_eval(args, run):
    kind = args.kind
    cfg = read_config(args.config) if args.config else {}
    _check_unknown(cfg, list(MODEL_KEYS) + ["methods", "lambdas", "thetas", "ks", "folds", "runs"])
    arch, train = _model_configs(args, cfg)
    methods = tuple((args.methods or cfg.get("methods", "dime,dime-sh,autoencoder")).split(","))
    for m in methods:
        if m not in ek.METHODS:
            raise ConfigError(f"unknown method {m!r}")
    lambdas = _float_list(args.lambdas or cfg.get("lambdas", "1.0"))
    if kind == "link":
        params = _int_list(args.thetas or cfg.get("thetas", "1"))
        repeats = int(args.folds or cfg.get("folds", 10))
    else:
        params = _int_list(args.ks or cfg.get("ks", "4"))
        repeats = int(args.runs or cfg.get("runs", 5))
    run.config = {"arch": asdict(arch), "train": asdict(train), "methods": list(methods),
                  "lambdas": list(lambdas), "thetas" if kind == "link" else "ks": list(params),
                  "folds" if kind == "link" else "runs": repeats}
    with run.stage("load"):
        pair, _ = _load_pair(args, run, any(m in ("dime", "dime-anchor") for m in methods))
    with run.stage("proximity"):
        bundle2 = proximity_bundle(pair.net_mature) if any(
            m in ("dime", "dime-anchor") for m in methods) else None
    jobs = []
    for method in methods:
        for lam in lambdas:
            for param in params:
                seed = derive_seed(args.seed, kind, repr(lam), param)
                run.seeds[f"{kind}/lambda={lam!r}/{'theta' if kind == 'link' else 'k'}={param}"] = seed
                jobs.append((kind, pair, arch, train, lam, param, seed, method, repeats, bundle2))
    with run.stage("experiments"):
        if args.threads > 1:
            with ProcessPoolExecutor(max_workers=args.threads) as pool:
                results = list(pool.map(_grid_job, jobs))
        else:
            results = [_grid_job(j) for j in jobs]
    out = run.out_dir / f"{kind}.csv"
    ek.write_metric_csv(results, out)
    run.output(out)
    for res in results:
        summary = ", ".join(f"{m} {v}" for m, v in res.table().items())
        print(f"{res.method} lambda={res.lam:g} {res.param_name}={res.param}: {summary}")


def cmd_replay(args, _run=None):
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    saved = dict(manifest["args"])
    if args.out_dir_override:
        saved["out_dir"] = args.out_dir_override
    parser = build_parser()
    ns = parser.parse_args(saved["argv"])
    for k, v in saved.items():
        setattr(ns, k, v)
    code = _execute(ns)
    if code:
        return code
    out_dir = Path(saved["out_dir"])
    mismatched = [name for name, digest in manifest["outputs"].items()
                  if sha256(out_dir / name) != digest]  # absolute names ignore out_dir
    for name in mismatched:
        print(f"replay: {name} differs from the manifest", file=sys.stderr)
    if mismatched:
        return 3
    print(f"replay: {len(manifest['outputs'])} outputs reproduced byte-identically")
    return 0


# argument parsing -----------------------------------------------------------


def _add_model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--encoder-widths", dest="encoder_widths", help="comma list, e.g. 500,50")
    g.add_argument("--fusion-width", dest="fusion_width", type=int)
    g.add_argument("--embed-dim", dest="embed_dim", type=int)
    g.add_argument("--paths", help="comma list of meta path ids (default all)")
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", dest="batch_size", type=int)
    g.add_argument("--lr", "--learning-rate", dest="learning_rate", type=float)
    g.add_argument("--init-gain", dest="init_gain", type=float)
    g.add_argument("--clip-norm", dest="clip_norm", type=float)
    g.add_argument("--anchor-rows-only", dest="anchor_rows_only", action="store_const", const="true")
    g.add_argument("--track-full-loss", dest="track_full_loss", choices=("true", "false"))


def _add_pair_flags(p, mature_required):
    p.add_argument("--emerging", required=True, help="emerging network (edge-list-v1)")
    p.add_argument("--mature", required=mature_required, help="mature network (edge-list-v1)")
    p.add_argument("--anchors", required=mature_required, help="anchor file (anchors-v1)")
    p.add_argument("--time-bucketing", choices=sorted(TIME_BUCKETINGS), default="hour-of-week")


def _global_flags(defaults):
    p = argparse.ArgumentParser(add_help=False)
    d = defaults or {}
    sup = argparse.SUPPRESS
    p.add_argument("--seed", type=int, default=d.get("seed", sup))
    p.add_argument("--config", default=d.get("config", sup),
                   help="flat key = value file; flags take precedence")
    p.add_argument("--out-dir", dest="out_dir", default=d.get("out_dir", sup))
    p.add_argument("--threads", type=int, default=d.get("threads", sup),
                   help="worker processes for grid points")
    return p


def build_parser():
    top = _global_flags({"seed": 0, "config": None, "out_dir": ".", "threads": 1})
    # subcommands accept the same flags but must not reset values given earlier
    common = _global_flags(None)

    parser = argparse.ArgumentParser(prog="dime", parents=[top],
                                     description="Aligned heterogeneous network embedding.")
    parser.add_argument("--version", action="version", version=f"dime {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a synthetic aligned pair")
    p.set_defaults(func=cmd_generate, command_name="generate")

    p = sub.add_parser("proximity", parents=[common], help="compute a proximity bundle")
    p.add_argument("network")
    p.add_argument("-o", "--output", help="bundle path, relative to --out-dir unless absolute")
    p.add_argument("--paths")
    p.add_argument("--include-self", action="store_true")
    p.add_argument("--top-n", type=int)
    p.add_argument("--block-rows", type=int)
    p.add_argument("--time-bucketing", choices=sorted(TIME_BUCKETINGS), default="hour-of-week")
    p.set_defaults(func=cmd_proximity, command_name="proximity")

    p = sub.add_parser("embed", parents=[common], help="train and export embeddings")
    _add_pair_flags(p, False)
    p.add_argument("--bundle1", help="precomputed bundle for the emerging network")
    p.add_argument("--bundle2", help="precomputed bundle for the mature network")
    p.add_argument("--mode", choices=("dime", "dime-sh", "auto"))
    _add_model_flags(p)
    p.set_defaults(func=cmd_embed, command_name="embed")

    p = sub.add_parser("eval", parents=[common], help="run an evaluation grid")
    esub = p.add_subparsers(dest="kind", required=True)
    for kind in ("link", "community"):
        q = esub.add_parser(kind, parents=[common])
        _add_pair_flags(q, False)
        q.add_argument("--methods", help=f"comma list from {','.join(ek.METHODS)}")
        q.add_argument("--lambdas", help="comma list of sampling ratios")
        if kind == "link":
            q.add_argument("--thetas", help="comma list of negative/positive ratios")
            q.add_argument("--folds", type=int)
        else:
            q.add_argument("--ks", help="comma list of cluster counts")
            q.add_argument("--runs", type=int)
        _add_model_flags(q)
        q.set_defaults(func=cmd_eval, command_name=f"eval {kind}")

    p = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    p.add_argument("manifest")
    p.add_argument("--out-dir", dest="out_dir_override")
    p.set_defaults(func=cmd_replay, command_name="replay")
    return parser


def _resolve_paths(args):
    for key in ("network", "emerging", "mature", "anchors", "bundle1", "bundle2", "config"):
        if getattr(args, key, None) is not None:
            setattr(args, key, _abs(getattr(args, key)))


def _execute(args):
    try:
        if args.func is cmd_replay:
            return cmd_replay(args)
        _resolve_paths(args)
        args.out_dir = _abs(args.out_dir)
        run = Run(args)
        args.func(args, run)
        run.write_manifest()
        return 0
    except (ConfigError, ValueError, OSError, da.DivergenceError) as exc:
        print(f"dime: error: {exc}", file=sys.stderr)
        return 2


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    return _execute(args)


if __name__ == "__main__":
    sys.exit(main())

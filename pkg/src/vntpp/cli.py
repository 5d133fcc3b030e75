"""``tpp`` command line: generate, train, evaluate, predict, analyze.

Every command writes into an output directory (``--out``, default
``$VNTPP_OUT_ROOT/<command>`` or ``runs/<command>``): its artifacts, the
resolved configuration and a ``manifest.json`` listing sha256 hashes.
Configuration comes from an optional JSON file (``--config``); flags win.

Exit codes: 0 success, 1 user or configuration error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

log = logging.getLogger("vntpp.cli")

EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 1, 2
VARIANTS = {"linear": "linear", "exponential": "exponential", "vntpp-l": "linear", "vntpp-e": "exponential",
            "hp-ek": "hp-ek", "hp-gk": "hp-gk"}


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ plumbing
def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _out_dir(args) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        out = Path(os.environ.get("VNTPP_OUT_ROOT", "runs")) / args.command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(out: Path, command: str, resolved: dict, artifacts: list[Path]) -> None:
    from . import __version__

    cfg_path = out / "resolved_config.json"
    cfg_path.write_text(json.dumps(resolved, indent=2, sort_keys=True, default=str))
    entries = []
    for p in [*artifacts, cfg_path]:
        entries.append({"path": p.name if p.parent == out else str(p), "sha256": _sha256(p), "bytes": p.stat().st_size})
    manifest = {"command": command, "version": __version__, "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                "artifacts": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def _pick(flag, cfg: dict, key: str, default=None):
    """Flag value if given, else the config value, else the default."""
    if flag is not None:
        return flag
    return cfg.get(key, default)


def _require_file(path, what: str) -> Path:
    if not path:
        raise UsageError(f"missing {what}")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {path}")
    return p


def _dataset(path, what="dataset", num_types=None):
    from .data import load_dataset

    return load_dataset(_require_file(path, what), num_types=num_types)


def _set_threads(n: int | None) -> None:
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    try:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    except Exception:  # noqa: BLE001 - thread capping is best effort
        pass


# ------------------------------------------------------------------ commands
def cmd_generate(args) -> int:
    from .data import save_dataset
    from .hawkes import generate_dataset, load_spec

    cfg = _load_config(args.config)
    spec_path = _pick(args.spec, cfg, "spec")
    if not spec_path:
        raise UsageError("generate needs --spec")
    n = int(_pick(args.n, cfg, "n_sequences", 0))
    if n < 1:
        raise UsageError("--n must be >= 1")
    spec = load_spec(spec_path)
    horizon = _pick(args.horizon, cfg, "horizon", spec.horizon)
    if horizon is None:
        raise UsageError("no --horizon given and the spec has none")
    seed = int(_pick(args.seed, cfg, "seed", 0))
    name = _pick(args.name, cfg, "name", Path(spec_path).stem)
    out = _out_dir(args)
    ds = generate_dataset(spec, n, float(horizon), seed, name)
    data_path = save_dataset(ds, out / f"{name}.jsonl")
    summary = {"sequences": len(ds), "events": ds.n_events, "mean_length": ds.mean_length(), "mean_gap": ds.mean_gap(),
               "K": ds.num_types}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(f"wrote {len(ds)} sequences to {data_path} (mean length {ds.mean_length():.2f}, K={ds.num_types})")
    resolved = {"spec": str(spec_path), "spec_json": spec.to_json(), "n_sequences": n, "horizon": float(horizon),
                "seed": seed, "name": name}
    _finish(out, "generate", resolved, [data_path, out / "summary.json"])
    return EXIT_OK


def _train_data(args, cfg):
    from .data import split

    data_cfg = cfg.get("data", {})
    train_p = _pick(args.train, data_cfg, "train")
    val_p = _pick(args.val, data_cfg, "val")
    data_p = _pick(args.data, data_cfg, "path")
    K = _pick(args.num_types, data_cfg, "num_types")
    if train_p:
        tr = _dataset(train_p, "training dataset", K)
        if not val_p:
            raise UsageError("--train needs a matching --val")
        va = _dataset(val_p, "validation dataset", K)
        if tr.num_types != va.num_types:
            raise UsageError(f"train has K={tr.num_types} but val has K={va.num_types}; pass --num-types")
        return tr, va, {"train": str(train_p), "val": str(val_p)}
    if not data_p:
        raise UsageError("missing dataset path: pass --data (split automatically) or --train/--val")
    ds = _dataset(data_p, "dataset", K)
    fractions = tuple(data_cfg.get("split", (0.8, 0.1, 0.1)))
    split_seed = int(data_cfg.get("split_seed", 0))
    tr, va, _ = split(ds, fractions, seed=split_seed)
    return tr, va, {"path": str(data_p), "split": list(fractions), "split_seed": split_seed}


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    variant = VARIANTS.get(str(_pick(args.variant, cfg, "variant", "exponential")).lower())
    if variant is None:
        raise UsageError(f"unknown variant; choose from {sorted(VARIANTS)}")
    tr, va, data_resolved = _train_data(args, cfg)
    out = _out_dir(args)
    if variant in ("hp-ek", "hp-gk"):
        return _train_baseline(args, cfg, variant, tr, va, out, data_resolved)

    from .model import VNTPP, ModelConfig
    from .objective import TrainConfig, train

    tcfg_raw = dict(cfg.get("train", {}))
    overrides = {"epochs": args.epochs, "batch_size": args.batch_size, "learning_rate": args.lr,
                 "mc_samples": args.mc_samples, "seed": args.seed, "latent_dim": args.latent_dim}
    tcfg_raw.update({k: v for k, v in overrides.items() if v is not None})
    tcfg_raw["variant"] = variant
    tcfg_raw.update(log_path=str(out / "train_log.jsonl"), checkpoint_path=str(out / "last.npz"),
                    best_path=str(out / "model.npz"))
    try:
        tcfg = TrainConfig(**tcfg_raw)
    except TypeError as exc:
        raise UsageError(f"bad train config: {exc}") from None
    mcfg_raw = dict(cfg.get("model", {}))
    mcfg_raw.update(K=tr.num_types, variant=variant, J=tcfg.latent_dim, seed=mcfg_raw.get("seed", tcfg.seed))
    try:
        mcfg = ModelConfig.from_json(mcfg_raw)
    except TypeError as exc:
        raise UsageError(f"bad model config: {exc}") from None
    model = VNTPP(mcfg, mean_gap=tr.mean_gap())
    resume = args.resume
    if resume:
        _require_file(resume, "resume checkpoint")
    elif Path(tcfg.log_path).exists():
        Path(tcfg.log_path).unlink()

    def progress(epoch, rec, _m):
        v = rec.get("val", {}).get("total", float("nan"))
        print(f"epoch {epoch}/{tcfg.epochs}  train {rec['train']['total']:.4f}  val {v:.4f}  ({rec['wall_ms'] / 1000:.1f}s)",
              flush=True)

    res = train(model, tr, va, tcfg, resume=resume, callback=progress if not args.quiet else None)
    model.save(out / "model.npz", extra_meta={"epoch": res.best_epoch, "val_total": res.best_val})
    print(f"best epoch {res.best_epoch} (val {res.best_val:.4f}); model written to {out / 'model.npz'}")
    resolved = {"variant": variant, "data": data_resolved, "train": tcfg.to_json(), "model": mcfg.to_json(),
                "resume": resume}
    arts = [out / "model.npz", out / "last.npz", out / "train_log.jsonl"]
    _finish(out, "train", resolved, [p for p in arts if p.exists()])
    return EXIT_OK


def _train_baseline(args, cfg, variant, tr, va, out, data_resolved) -> int:
    from .baselines import FitOptions, fit_hawkes, loglik

    opts_raw = dict(cfg.get("baseline", {}))
    if args.seed is not None:
        opts_raw["seed"] = args.seed
    if args.epochs is not None:
        opts_raw["max_iter"] = args.epochs
    if args.lr is not None:
        opts_raw["lr"] = args.lr
    try:
        opts = FitOptions(**opts_raw)
    except TypeError as exc:
        raise UsageError(f"bad baseline config: {exc}") from None
    kernel = "exponential" if variant == "hp-ek" else "gaussian"
    fit = fit_hawkes(tr, kernel, opts)
    val_ll = loglik(fit.spec, va, opts.mc_samples, opts.seed)
    fit.spec.meta["mean_gap"] = tr.mean_gap()
    fit.spec.meta["val_loglik"] = val_ll
    path = fit.save(out / "fit.json")
    print(f"{variant}: train loglik {fit.train_loglik:.3f}, val loglik {val_ll:.3f}, "
          f"{fit.iterations} iterations (converged={fit.converged})")
    resolved = {"variant": variant, "data": data_resolved, "baseline": {k: (v.tolist() if hasattr(v, "tolist") else v)
                                                                       for k, v in vars(opts).items()}}
    _finish(out, "train", resolved, [path])
    return EXIT_OK


def _load_predictor(path):
    """A trained model (``.npz``) or a fitted/true Hawkes spec (``.json``)."""
    from .hawkes import load_spec
    from .model import VNTPP

    p = _require_file(path, "checkpoint")
    if p.suffix == ".npz":
        return VNTPP.load(p)
    return load_spec(p)


def _num_types(pred) -> int:
    from .model import VNTPP

    return pred.cfg.K if isinstance(pred, VNTPP) else pred.K


def _predictions(pred, ds, args):
    from .model import VNTPP
    from .predict import hawkes_predict_sequences, predict_sequences

    if isinstance(pred, VNTPP):
        return predict_sequences(pred, ds, n_points=args.n_points, scheme=args.scheme)
    mean_gap = float(pred.meta.get("mean_gap", ds.mean_gap()))
    return hawkes_predict_sequences(pred, ds, mean_gap, n_points=args.n_points, scheme=args.scheme)


def _checked_inputs(args):
    cfg = _load_config(args.config)
    pred = _load_predictor(_pick(args.checkpoint, cfg, "checkpoint"))
    K = _num_types(pred)
    ds = _dataset(_pick(args.data, cfg, "data"), "dataset")
    if ds.num_types > K:
        raise UsageError(f"dataset has K={ds.num_types} types but the checkpoint was built for K={K}")
    from .data import Dataset

    ds = Dataset(ds.sequences, K, ds.name)
    return cfg, pred, K, ds


def cmd_evaluate(args) -> int:
    from .evaluation import compute_metrics, intensity_error
    from .hawkes import load_spec

    cfg, pred, K, ds = _checked_inputs(args)
    preds = _predictions(pred, ds, args)
    scale = 1.0
    if args.normalize:
        scale = float(getattr(pred, "mean_gap", None) or pred.meta.get("mean_gap", ds.mean_gap()))
    report = compute_metrics(preds, K, average=args.average, time_scale=scale)
    truth = _pick(args.truth_spec, cfg, "truth_spec")
    if truth:
        spec = load_spec(truth)
        if spec.K != K:
            raise UsageError(f"truth spec has K={spec.K}, checkpoint K={K}")
        report.intensity_rmse, report.intensity_mae = intensity_error(pred, spec, list(ds), args.resolution)
    out = _out_dir(args)
    path = report.save(out / "metrics.json")
    print(json.dumps({k: report.to_json()[k] for k in ("f1", "time_rmse", "time_mae", "intensity_rmse", "intensity_mae")}))
    resolved = {"checkpoint": str(args.checkpoint), "data": str(args.data), "truth_spec": truth,
                "average": args.average, "normalize": args.normalize, "n_points": args.n_points,
                "scheme": args.scheme, "resolution": args.resolution}
    _finish(out, "evaluate", resolved, [path])
    return EXIT_OK


def cmd_predict(args) -> int:
    _, pred, _, ds = _checked_inputs(args)
    preds = _predictions(pred, ds, args)
    out = _out_dir(args)
    path = out / "predictions.jsonl"
    with path.open("w") as fh:
        for p in preds:
            fh.write(json.dumps(p.to_json()) + "\n")
    print(f"wrote {len(preds)} predictions to {path}")
    resolved = {"checkpoint": str(args.checkpoint), "data": str(args.data), "n_points": args.n_points,
                "scheme": args.scheme}
    _finish(out, "predict", resolved, [path])
    return EXIT_OK


def cmd_analyze(args) -> int:
    from .evaluation import latent_svd, rescaling_gof
    from .hawkes import IntensityTrace, intensity_trace, load_spec
    from .model import VNTPP

    cfg, pred, K, ds = _checked_inputs(args)
    out = _out_dir(args)
    mode = args.mode
    arts = []
    resolved = {"checkpoint": str(args.checkpoint), "data": str(args.data), "mode": mode}
    if mode == "svd":
        if not isinstance(pred, VNTPP):
            raise UsageError("svd analysis needs a trained model checkpoint (.npz)")
        rep = latent_svd(pred, list(ds), args.max_points, args.seed or 0)
        arts.append(rep.to_csv(out / "svd_projections.csv"))
        p = out / "svd.json"
        p.write_text(json.dumps(rep.to_json(), indent=2))
        arts.append(p)
        print(f"top-3 spectral energy {rep.energy_top3:.3f} over {len(rep.labels)} points")
    elif mode == "trace":
        idx = args.seq_index
        if not 0 <= idx < len(ds):
            raise UsageError(f"--seq-index {idx} out of range (dataset has {len(ds)} sequences)")
        seq = ds[idx]
        grid = __import__("numpy").linspace(0.0, seq.horizon, args.resolution)
        if isinstance(pred, VNTPP):
            learned = IntensityTrace(grid, pred.intensity_on_grid(seq, grid).T.copy())
        else:
            learned = intensity_trace(pred, seq, args.resolution)
        truth = _pick(args.truth_spec, cfg, "truth_spec")
        extra = intensity_trace(load_spec(truth), seq, args.resolution) if truth else None
        arts.append(learned.to_csv(out / f"trace_{idx}.csv", prefix="lambda_hat", extra=extra))
        resolved.update(seq_index=idx, resolution=args.resolution, truth_spec=truth)
        print(f"wrote intensity trace of sequence {idx} to {arts[-1]}")
    else:
        rep = rescaling_gof(pred, list(ds), pooling=args.pooling)
        p = out / "gof.json"
        p.write_text(json.dumps(rep.to_json(), indent=2))
        arts.append(p)
        resolved["pooling"] = args.pooling
        print(json.dumps(rep.to_json()))
    _finish(out, "analyze", resolved, arts)
    return EXIT_OK


# ------------------------------------------------------------------ parser
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (flags override its values)")
    common.add_argument("--out", help="output directory (default $VNTPP_OUT_ROOT/<command> or runs/<command>)")
    common.add_argument("--threads", type=int, help="cap on worker threads")
    common.add_argument("--seed", type=int)
    common.add_argument("-q", "--quiet", action="store_true")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="tpp", description="Variational neural temporal point process toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="simulate a Hawkes dataset to JSONL")
    g.add_argument("--spec", help="Hawkes spec JSON (or bundled name synthetic1/synthetic2)")
    g.add_argument("--n", type=int, help="number of sequences")
    g.add_argument("--horizon", type=float, help="observation horizon (default: the spec's)")
    g.add_argument("--name", help="dataset name / output file stem")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", parents=[common], help="train VNTPP-L/E or fit a Hawkes baseline")
    t.add_argument("--variant", help="linear | exponential | hp-ek | hp-gk")
    t.add_argument("--data", help="dataset to split 80/10/10 (or as configured)")
    t.add_argument("--train", help="training dataset (with --val)")
    t.add_argument("--val", help="validation dataset")
    t.add_argument("--num-types", type=int, help="declare K when the data may not show every type")
    t.add_argument("--epochs", type=int, help="epochs (baselines: Adam iterations)")
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--mc-samples", type=int)
    t.add_argument("--latent-dim", type=int)
    t.add_argument("--resume", help="checkpoint (last.npz) to continue from")
    t.set_defaults(func=cmd_train)

    def pred_args(sp):
        sp.add_argument("--checkpoint", help="model .npz or Hawkes spec/fit .json")
        sp.add_argument("--data", help="dataset JSONL")
        sp.add_argument("--n-points", type=int, default=1000)
        sp.add_argument("--scheme", choices=["right_riemann", "trapezoid"], default="right_riemann")

    e = sub.add_parser("evaluate", parents=[common], help="score next-event predictions (and intensities)")
    pred_args(e)
    e.add_argument("--truth-spec", help="generating spec, enables intensity errors")
    e.add_argument("--average", choices=["micro", "macro", "weighted"], default="micro")
    e.add_argument("--normalize", action="store_true", help="divide time errors by the training mean gap")
    e.add_argument("--resolution", type=int, default=500)
    e.set_defaults(func=cmd_evaluate)

    pr = sub.add_parser("predict", parents=[common], help="write per-position predictions as JSONL")
    pred_args(pr)
    pr.set_defaults(func=cmd_predict)

    a = sub.add_parser("analyze", parents=[common], help="latent SVD, intensity traces or goodness of fit")
    pred_args(a)
    a.add_argument("--mode", choices=["svd", "trace", "gof"], required=True)
    a.add_argument("--truth-spec", help="add the true intensity to traces")
    a.add_argument("--seq-index", type=int, default=0)
    a.add_argument("--resolution", type=int, default=500)
    a.add_argument("--max-points", type=int)
    a.add_argument("--pooling", choices=["concat", "per_sequence"], default="concat")
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; this tool reserves 2 for numeric failures
        return EXIT_USER if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else (logging.WARNING if args.quiet else logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    _set_threads(args.threads)
    from .errors import ExplosionGuard, NonFiniteError, VntppError

    try:
        return args.func(args)
    except (NonFiniteError, ExplosionGuard, FloatingPointError) as exc:
        print(f"tpp {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, VntppError, ValueError, KeyError, OSError) as exc:
        print(f"tpp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

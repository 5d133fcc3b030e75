"""Desk-scale Synthetic-2 analog shared by the acceptance tests.

Training takes most of an hour on one core, so the trained checkpoint is
cached under ``.cache/`` keyed by a hash of the full configuration; delete
the directory (or set ``VNTPP_RETRAIN=1``) to retrain from scratch.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from pathlib import Path

from vntpp.data import split
from vntpp.encoder import EncoderConfig
from vntpp.hawkes import generate_dataset, load_spec
from vntpp.model import VNTPP, ModelConfig
from vntpp.objective import TrainConfig, train

ROOT = Path(__file__).resolve().parents[1]
CACHE = Path(os.environ.get("VNTPP_CACHE", ROOT / ".cache"))

DESK = {
    "spec": "synthetic2",
    "n_sequences": 2500,
    "data_seed": 2024,
    "split": [0.8, 0.1, 0.1],
    "split_seed": 0,
    "model": ModelConfig(K=3, variant="exponential", J=20, encoder=EncoderConfig(), seed=0).to_json(),
    "train": {"epochs": 100, "batch_size": 32, "learning_rate": 1e-3, "mc_samples": 20, "seed": 0},
}


def desk_data():
    spec = load_spec(DESK["spec"])
    ds = generate_dataset(spec, DESK["n_sequences"], seed=DESK["data_seed"], name="synthetic2-desk")
    tr, va, te = split(ds, tuple(DESK["split"]), seed=DESK["split_seed"])
    return spec, tr, va, te


def _key() -> str:
    return hashlib.sha256(json.dumps(DESK, sort_keys=True).encode()).hexdigest()[:16]


def desk_model(log=print):
    """Return ``(model, untrained_model, spec, train, val, test, info)``, training if not cached."""
    spec, tr, va, te = desk_data()
    cfg = ModelConfig.from_json(DESK["model"])
    untrained = VNTPP(cfg, mean_gap=tr.mean_gap())
    out = CACHE / f"desk-{_key()}"
    ckpt = out / "best.npz"
    info_path = out / "info.json"
    if ckpt.exists() and info_path.exists() and not os.environ.get("VNTPP_RETRAIN"):
        return VNTPP.load(ckpt), untrained, spec, tr, va, te, json.loads(info_path.read_text())
    out.mkdir(parents=True, exist_ok=True)
    lock = out / "training.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError(f"{lock} exists: another process is training this model (remove the file if it is stale)")
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    try:
        return _train_desk(out, cfg, ckpt, info_path, spec, tr, va, te, untrained, log)
    finally:
        lock.unlink(missing_ok=True)


def _train_desk(out, cfg, ckpt, info_path, spec, tr, va, te, untrained, log):
    tcfg = TrainConfig(**DESK["train"], log_path=str(out / "train_log.jsonl"), best_path=str(ckpt),
                       checkpoint_path=str(out / "last.npz"))
    (out / "train_log.jsonl").unlink(missing_ok=True)
    model = VNTPP(cfg, mean_gap=tr.mean_gap())
    t0 = time.perf_counter()
    res = train(model, tr, va, tcfg, callback=lambda e, rec, m: log(
        f"epoch {e}: train {rec['train']['total']:.3f} val {rec['val']['total']:.3f} ({rec['wall_ms'] / 1000:.1f}s)"))
    info = {"train_seconds": time.perf_counter() - t0, "best_epoch": res.best_epoch, "best_val": res.best_val}
    model.save(ckpt, extra_meta={"epoch": res.best_epoch})
    info_path.write_text(json.dumps(info, indent=2))
    return model, untrained, spec, tr, va, te, info


if __name__ == "__main__":
    m, *_, info = desk_model()
    print(info)

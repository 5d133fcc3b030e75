"""Parameter checkpoints: one ``.npz`` file, names mapped to arrays, tagged with a format version."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from .optim import AdamState
from .tensor import Tensor

FORMAT_TAG = "vntpp-checkpoint-v1"


def save_checkpoint(path: str | Path, params: dict[str, Tensor], meta: dict | None = None,
                    adam: AdamState | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {"__format__": np.array(FORMAT_TAG), "__meta__": np.array(json.dumps(meta or {}))}
    for name, p in params.items():
        arrays[f"param/{name}"] = p.data
    if adam is not None:
        hyper = {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps, "step": adam.step}
        arrays["__adam__"] = np.array(json.dumps(hyper))
        for name in adam.m:
            arrays[f"adam_m/{name}"] = adam.m[name]
            arrays[f"adam_v/{name}"] = adam.v[name]
    with path.open("wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict, AdamState | None]:
    """Returns ``(arrays by parameter name, meta, adam state or None)``."""
    with np.load(path, allow_pickle=False) as z:
        if "__format__" not in z.files or str(z["__format__"]) != FORMAT_TAG:
            raise ValidationError(f"{path} is not a {FORMAT_TAG} file")
        meta = json.loads(str(z["__meta__"]))
        params = {k[len("param/"):]: z[k].copy() for k in z.files if k.startswith("param/")}
        adam = None
        if "__adam__" in z.files:
            adam = AdamState(**json.loads(str(z["__adam__"])))
            for k in z.files:
                if k.startswith("adam_m/"):
                    name = k[len("adam_m/"):]
                    adam.m[name] = z[k].copy()
                    adam.v[name] = z[f"adam_v/{name}"].copy()
    return params, meta, adam

"""Event sequences, JSONL dataset I/O, splitting and padded batching."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateSplit, ParseError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EventSequence:
    """An ordered run of marked events observed on ``[0, horizon]``.

    ``types`` and ``times`` are stored as read-only arrays. Timestamps are
    absolute; gaps are derived on demand.
    """

    types: np.ndarray
    times: np.ndarray
    horizon: float

    def __post_init__(self):
        types = np.asarray(self.types, dtype=np.int64).copy()
        times = np.asarray(self.times, dtype=np.float64).copy()
        if types.ndim != 1 or times.ndim != 1 or len(types) != len(times):
            raise ValidationError("types and times must be 1-d arrays of equal length")
        if len(types) < 1:
            raise ValidationError("a sequence needs at least one event")
        if not np.all(np.isfinite(times)):
            raise ValidationError("timestamps must be finite")
        if times[0] < 0:
            raise ValidationError(f"negative timestamp {times[0]!r}")
        if np.any(np.diff(times) <= 0):
            i = int(np.argmax(np.diff(times) <= 0))
            raise ValidationError(
                f"timestamps must be strictly increasing (t[{i}]={times[i]!r}, t[{i + 1}]={times[i + 1]!r})"
            )
        if np.any(types < 0):
            raise ValidationError("type ids must be non-negative")
        horizon = float(times[-1]) if self.horizon is None else float(self.horizon)
        if horizon < times[-1]:
            raise ValidationError(f"horizon {horizon!r} precedes last event {times[-1]!r}")
        types.flags.writeable = False
        times.flags.writeable = False
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "horizon", horizon)

    def __len__(self) -> int:
        return len(self.times)

    def gaps(self) -> np.ndarray:
        """Inter-event gaps with ``t_0 := 0`` (first entry is the first arrival time)."""
        return np.diff(self.times, prepend=0.0)

    def prefix(self, n: int) -> "EventSequence":
        """First ``n`` events, with the horizon cut to the last kept event."""
        return EventSequence(self.types[:n], self.times[:n], float(self.times[n - 1]))

    def __eq__(self, other):
        if not isinstance(other, EventSequence):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and np.array_equal(self.types, other.types)
            and np.array_equal(self.times, other.times)
        )

    __hash__ = None


@dataclass(frozen=True)
class Dataset:
    sequences: tuple[EventSequence, ...]
    num_types: int
    name: str = ""

    def __post_init__(self):
        seqs = tuple(self.sequences)
        object.__setattr__(self, "sequences", seqs)
        top = max((int(s.types.max()) for s in seqs), default=-1)
        if self.num_types < 1:
            raise ValidationError("num_types must be >= 1")
        if top >= self.num_types:
            raise ValidationError(f"type id {top} out of range for K={self.num_types}")

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    def __getitem__(self, i):
        return self.sequences[i]

    @property
    def n_events(self) -> int:
        return sum(len(s) for s in self.sequences)

    def mean_length(self) -> float:
        return self.n_events / max(len(self), 1)

    def mean_gap(self) -> float:
        """Mean inter-event gap over all within-sequence consecutive pairs."""
        total, count = 0.0, 0
        for s in self.sequences:
            if len(s) > 1:
                total += float(s.times[-1] - s.times[0])
                count += len(s) - 1
        if count == 0:
            return float(np.mean([s.times[0] for s in self.sequences]))
        return total / count

    def type_counts(self) -> np.ndarray:
        counts = np.zeros(self.num_types, dtype=np.int64)
        for s in self.sequences:
            counts += np.bincount(s.types, minlength=self.num_types)
        return counts

    def subset(self, indices: Iterable[int], name: str | None = None) -> "Dataset":
        return Dataset(tuple(self.sequences[i] for i in indices), self.num_types, name or self.name)


@dataclass(frozen=True)
class Batch:
    """Padded batch. Padding carries type ``K`` and time 0; ``mask`` is True on real events."""

    types: np.ndarray
    times: np.ndarray
    mask: np.ndarray
    horizons: np.ndarray = field(default=None)

    @property
    def size(self) -> int:
        return self.types.shape[0]

    @property
    def max_len(self) -> int:
        return self.types.shape[1]

    @property
    def lengths(self) -> np.ndarray:
        return self.mask.sum(axis=1)


def sequence_from_record(rec: dict, line: int | None = None) -> EventSequence:
    if not isinstance(rec, dict) or "seq" not in rec:
        raise ParseError("expected an object with a 'seq' field", line)
    try:
        types = [int(e["k"]) for e in rec["seq"]]
        times = [float(e["t"]) for e in rec["seq"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad event entry ({exc})", line) from exc
    horizon = rec.get("T")
    try:
        return EventSequence(types, times, None if horizon is None else float(horizon))
    except ValidationError as exc:
        where = f"line {line}: " if line is not None else ""
        raise ValidationError(f"{where}{exc}") from exc


def load_dataset(path: str | Path, num_types: int | None = None, name: str | None = None) -> Dataset:
    """Read a JSONL file with one ``{"seq": [{"k", "t"}, ...], "T": ...}`` per line."""
    path = Path(path)
    seqs = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from exc
            seqs.append(sequence_from_record(rec, lineno))
    if not seqs:
        raise ParseError(f"{path} contains no sequences")
    top = max(int(s.types.max()) for s in seqs) + 1
    if num_types is not None and top > num_types:
        raise ValidationError(f"type id {top - 1} >= declared K={num_types}")
    return Dataset(tuple(seqs), num_types or top, name or path.stem)


def sequence_to_json(seq: EventSequence) -> str:
    events = ",".join(f'{{"k":{int(k)},"t":{t:.17g}}}' for k, t in zip(seq.types, seq.times))
    return f'{{"seq":[{events}],"T":{seq.horizon:.17g}}}'


def save_dataset(dataset: Dataset | Sequence[EventSequence], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for seq in dataset:
            fh.write(sequence_to_json(seq))
            fh.write("\n")
    return path


def split(
    dataset: Dataset, fractions: tuple[float, float, float] = (0.8, 0.1, 0.1), seed: int = 0
) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded shuffle then partition into train/val/test by rounded fractions."""
    fr = np.asarray(fractions, dtype=float)
    if fr.shape != (3,) or np.any(fr <= 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    n = len(dataset)
    n_train = int(round(fr[0] * n))
    n_val = int(round(fr[1] * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise DegenerateSplit(f"split of {n} sequences gives sizes ({n_train}, {n_val}, {n_test})")
    order = np.random.Generator(np.random.Philox(seed)).permutation(n)
    parts = np.split(order, [n_train, n_train + n_val])
    names = ("train", "val", "test")
    return tuple(dataset.subset(p.tolist(), f"{dataset.name}-{nm}") for p, nm in zip(parts, names))


def make_batch(seqs: Sequence[EventSequence], num_types: int, extra: int = 0) -> Batch:
    """Pad ``seqs`` into a Batch. ``extra`` appends that many padded columns."""
    L = max(len(s) for s in seqs) + extra
    B = len(seqs)
    types = np.full((B, L), num_types, dtype=np.int64)
    times = np.zeros((B, L), dtype=np.float64)
    mask = np.zeros((B, L), dtype=bool)
    for b, s in enumerate(seqs):
        n = len(s)
        types[b, :n] = s.types
        times[b, :n] = s.times
        mask[b, :n] = True
    horizons = np.array([s.horizon for s in seqs], dtype=np.float64)
    return Batch(types, times, mask, horizons)


def batchify(dataset: Dataset | Sequence[EventSequence], batch_size: int, num_types: int | None = None) -> list[Batch]:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    seqs = list(dataset)
    if num_types is None:
        num_types = dataset.num_types
    return [make_batch(seqs[i : i + batch_size], num_types) for i in range(0, len(seqs), batch_size)]


def trainable(dataset: Dataset) -> Dataset:
    """Drop length-1 sequences (no inter-event interval); logs how many were skipped."""
    keep = [s for s in dataset if len(s) > 1]
    skipped = len(dataset) - len(keep)
    if skipped:
        log.info("skipping %d single-event sequences in %s", skipped, dataset.name)
    return Dataset(tuple(keep), dataset.num_types, dataset.name)

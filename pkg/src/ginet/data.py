"""Battery telemetry ingestion, labelling, normalisation, windowing and splits.

Cycle CSVs use the header ``timestamp_s,voltage_V,current_A,temperature_C,
amp_hours_Ah`` with one row per raw measurement; one file holds one cycle.
All transforms after parsing are pure functions of their inputs, and the
prepared-dataset container is byte-identical for identical inputs and seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, InsufficientCyclesError, ParseError

REQUIRED_COLUMNS = ("timestamp_s", "voltage_V", "current_A", "temperature_C",
                    "amp_hours_Ah")

# window feature order: current, voltage, temperature
FEATURE_NAMES = ("current_A", "voltage_V", "temperature_C")


@dataclass
class BatteryRecord:
    """One aggregated time slot of battery telemetry."""

    timestamp: float
    current: float
    voltage: float
    temperature: float
    amp_hours: float
    soc: float = float("nan")


@dataclass
class Cycle:
    """One charge/discharge cycle stored as column arrays."""

    id: str
    ambient_temperature: float
    profile: str
    timestamps: np.ndarray
    current: np.ndarray
    voltage: np.ndarray
    temperature: np.ndarray
    amp_hours: np.ndarray
    soc: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def records(self) -> list[BatteryRecord]:
        soc = self.soc if self.soc is not None else np.full(len(self), np.nan)
        return [BatteryRecord(*vals) for vals in zip(
            self.timestamps, self.current, self.voltage, self.temperature,
            self.amp_hours, soc)]

    def features(self) -> np.ndarray:
        """(length, 3) matrix in (current, voltage, temperature) order."""
        return np.stack([self.current, self.voltage, self.temperature], axis=1)


@dataclass
class WindowSample:
    """Supervised sample: an input window and the following horizon labels.

    `input` covers slots [t - t_in, t - 1] and `target` covers
    [t, t + t_out - 1] where t = t_origin; the two ranges never overlap and
    the target is never part of the model input.
    """

    input: np.ndarray   # (t_in, 3), normalised features
    target: np.ndarray  # (t_out,), raw state-of-charge fractions
    t_origin: int
    cycle_id: str = ""


@dataclass
class NormStats:
    """Per-feature min/max fitted on the training split only."""

    minimum: np.ndarray
    maximum: np.ndarray

    def to_dict(self) -> dict:
        return {"feature_names": list(FEATURE_NAMES),
                "min": [float(v) for v in self.minimum],
                "max": [float(v) for v in self.maximum]}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["min"], dtype=np.float64),
                   np.asarray(d["max"], dtype=np.float64))


_AMBIENT_RE = re.compile(r"(-?\d+)\s*degC", re.IGNORECASE)
_PROFILE_TAGS = ("US06", "HWFET", "UDDS", "LA92", "NN", "Cycle")


def parse_cycle_csv(path: str | Path, slot_seconds: float = 1.0) -> Cycle:
    """Read one raw cycle CSV and aggregate rows to one record per slot.

    Rows are grouped by floor(timestamp / slot_seconds) and averaged; the
    aggregated record's timestamp is the slot start.  Raises ParseError for a
    missing column and DataError when timestamps are not strictly increasing.
    """
    path = Path(path)
    if slot_seconds <= 0:
        raise DataError(f"slot_seconds must be positive, got {slot_seconds}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise ParseError(f"{path}: missing column {col!r}")
        cols = {name: header.index(name) for name in REQUIRED_COLUMNS}
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                rows.append([float(row[cols[name]]) for name in REQUIRED_COLUMNS])
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{path}:{lineno}: bad row: {exc}") from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    raw = np.asarray(rows, dtype=np.float64)
    ts = raw[:, 0]
    if np.any(np.diff(ts) <= 0):
        bad = int(np.argmax(np.diff(ts) <= 0)) + 1
        raise DataError(f"{path}: timestamps not strictly increasing at row {bad + 1}")

    slot_ids = np.floor(ts / slot_seconds).astype(np.int64)
    uniq, inverse, counts = np.unique(slot_ids, return_inverse=True, return_counts=True)
    sums = np.zeros((len(uniq), raw.shape[1]))
    np.add.at(sums, inverse, raw)
    means = sums / counts[:, None]

    stem = path.stem
    m = _AMBIENT_RE.search(stem)
    ambient = float(m.group(1)) if m else float(np.round(means[:, 3].mean(), 1))
    profile = next((tag for tag in _PROFILE_TAGS if tag.lower() in stem.lower()), stem)

    return Cycle(
        id=stem,
        ambient_temperature=ambient,
        profile=profile,
        timestamps=uniq * slot_seconds,
        voltage=means[:, 1],
        current=means[:, 2],
        temperature=means[:, 3],
        amp_hours=means[:, 4],
    )


def parse_dataset(path: str | Path, slot_seconds: float = 1.0) -> list[Cycle]:
    """Parse every cycle CSV under `path` (or a single file), sorted by id."""
    path = Path(path)
    files = [path] if path.is_file() else sorted(path.glob("*.csv"))
    if not files:
        raise DataError(f"no cycle CSV files found in {path}")
    return [parse_cycle_csv(f, slot_seconds) for f in files]


def write_cycle_csv(cycle: Cycle, path: str | Path) -> None:
    """Write a cycle back out in the raw CSV format (one row per slot)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REQUIRED_COLUMNS)
        for t, v, i, temp, ah in zip(cycle.timestamps, cycle.voltage, cycle.current,
                                     cycle.temperature, cycle.amp_hours):
            writer.writerow([repr(float(x)) for x in (t, v, i, temp, ah)])


def derive_soc(cycle: Cycle, nominal_capacity_ah: float) -> Cycle:
    """Label each slot with soc = clamp(1 + amp_hours / capacity, 0, 1).

    Assumes the amp-hour counter reads 0 at full charge and goes negative as
    the cell discharges.
    """
    if nominal_capacity_ah <= 0:
        raise DataError(f"nominal capacity must be positive, got {nominal_capacity_ah}")
    soc = np.clip(1.0 + cycle.amp_hours / nominal_capacity_ah, 0.0, 1.0)
    return Cycle(cycle.id, cycle.ambient_temperature, cycle.profile,
                 cycle.timestamps, cycle.current, cycle.voltage,
                 cycle.temperature, cycle.amp_hours, soc)


def fit_normalize(train_cycles: list[Cycle]) -> NormStats:
    """Per-feature min/max over the training cycles' (I, V, T) features."""
    if not train_cycles:
        raise DataError("cannot fit normalisation on an empty training split")
    feats = np.concatenate([c.features() for c in train_cycles], axis=0)
    return NormStats(feats.min(axis=0), feats.max(axis=0))


def apply_normalize(stats: NormStats, cycles: list[Cycle]) -> list[Cycle]:
    """Scale features to (x - min) / (max - min); soc labels stay untouched.

    A feature with max == min maps to 0 everywhere.  Values outside the
    training range may land outside [0, 1]; that is intended.
    """
    span = stats.maximum - stats.minimum
    safe = np.where(span == 0.0, 1.0, span)
    out = []
    for c in cycles:
        scaled = (c.features() - stats.minimum) / safe
        scaled[:, span == 0.0] = 0.0
        out.append(Cycle(c.id, c.ambient_temperature, c.profile, c.timestamps,
                         scaled[:, 0], scaled[:, 1], scaled[:, 2],
                         c.amp_hours, c.soc))
    return out


def make_windows(cycle: Cycle, t_in: int, t_out: int, stride: int = 1) -> list[WindowSample]:
    """Overlapping windows over one cycle; never spans cycle boundaries.

    Yields floor((L - t_in - t_out) / stride) + 1 windows for a cycle of
    length L >= t_in + t_out, else an empty list with a warning.
    """
    if min(t_in, t_out, stride) < 1:
        raise DataError(f"t_in, t_out and stride must be positive, got "
                        f"({t_in}, {t_out}, {stride})")
    if cycle.soc is None:
        raise DataError(f"cycle {cycle.id}: soc labels missing; derive them first")
    length = len(cycle)
    if length < t_in + t_out:
        warnings.warn(f"cycle {cycle.id}: length {length} < t_in + t_out = "
                      f"{t_in + t_out}; no windows produced")
        return []
    feats = cycle.features()
    windows = []
    for t in range(t_in, length - t_out + 1, stride):
        windows.append(WindowSample(
            input=feats[t - t_in:t].copy(),
            target=cycle.soc[t:t + t_out].copy(),
            t_origin=t,
            cycle_id=cycle.id,
        ))
    return windows


def split_cycles(cycles: list[Cycle], ratio: tuple[int, int, int] = (10, 2, 5),
                 seed: int = 0) -> tuple[list[Cycle], list[Cycle], list[Cycle]]:
    """Deterministic whole-cycle split into train/validation/test.

    Cycles are sorted by id, shuffled with the seed, then divided in
    proportion to `ratio` by largest remainder, with every part kept
    non-empty.
    """
    parts = len(ratio)
    if len(cycles) < parts:
        raise InsufficientCyclesError(
            f"need at least {parts} cycles to split, got {len(cycles)}")
    ordered = sorted(cycles, key=lambda c: c.id)
    perm = np.random.default_rng(seed).permutation(len(ordered))
    shuffled = [ordered[i] for i in perm]

    total = sum(ratio)
    exact = [len(cycles) * r / total for r in ratio]
    counts = [int(np.floor(e)) for e in exact]
    remainders = sorted(range(parts), key=lambda i: exact[i] - counts[i], reverse=True)
    for i in remainders[:len(cycles) - sum(counts)]:
        counts[i] += 1
    # every split must see at least one cycle
    for i in range(parts):
        if counts[i] == 0:
            donor = int(np.argmax(counts))
            counts[donor] -= 1
            counts[i] += 1

    bounds = np.cumsum([0] + counts)
    return tuple(shuffled[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))


# ---------------------------------------------------------------------------
# prepared-dataset container

_MAGIC_DATASET = b"GINETDS1"
SPLIT_NAMES = ("train", "val", "test")


@dataclass
class PreparedDataset:
    """Windowed splits plus the statistics and provenance that produced them."""

    t_in: int
    t_out: int
    slot_seconds: float
    stride: int
    seed: int
    norm_stats: NormStats
    provenance: dict
    config_digest: str
    split_cycle_ids: dict[str, list[str]]
    # per split: x (n, t_in, 3), y (n, t_out), t0 (n,), cycle (n,) index into cycle_ids
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def n_windows(self, split: str) -> int:
        return len(self.arrays[f"{split}_t0"])

    def windows(self, split: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.arrays[f"{split}_x"], self.arrays[f"{split}_y"],
                self.arrays[f"{split}_t0"])


def build_prepared_dataset(cycles: list[Cycle], t_in: int, t_out: int, *,
                           slot_seconds: float, stride: int = 1,
                           ratio: tuple[int, int, int] = (10, 2, 5), seed: int = 0,
                           provenance: dict | None = None,
                           config_digest: str = "") -> PreparedDataset:
    """Split labelled cycles, fit normalisation on train, window every split."""
    train_c, val_c, test_c = split_cycles(cycles, ratio=ratio, seed=seed)
    stats = fit_normalize(train_c)
    arrays: dict[str, np.ndarray] = {}
    split_ids: dict[str, list[str]] = {}
    for name, subset in zip(SPLIT_NAMES, (train_c, val_c, test_c)):
        normed = apply_normalize(stats, subset)
        wins = [w for c in normed for w in make_windows(c, t_in, t_out, stride)]
        ids = [c.id for c in subset]
        id_index = {cid: k for k, cid in enumerate(ids)}
        split_ids[name] = ids
        if wins:
            arrays[f"{name}_x"] = np.stack([w.input for w in wins])
            arrays[f"{name}_y"] = np.stack([w.target for w in wins])
            arrays[f"{name}_t0"] = np.asarray([w.t_origin for w in wins], dtype=np.int64)
            arrays[f"{name}_cycle"] = np.asarray([id_index[w.cycle_id] for w in wins],
                                                 dtype=np.int64)
        else:
            arrays[f"{name}_x"] = np.zeros((0, t_in, 3))
            arrays[f"{name}_y"] = np.zeros((0, t_out))
            arrays[f"{name}_t0"] = np.zeros(0, dtype=np.int64)
            arrays[f"{name}_cycle"] = np.zeros(0, dtype=np.int64)
    return PreparedDataset(
        t_in=t_in, t_out=t_out, slot_seconds=slot_seconds, stride=stride, seed=seed,
        norm_stats=stats, provenance=provenance or {}, config_digest=config_digest,
        split_cycle_ids=split_ids, arrays=arrays)


def config_digest(config: dict) -> str:
    """Stable hex digest of a configuration mapping."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _write_container(path: Path, magic: bytes, header: dict,
                     arrays: list[tuple[str, np.ndarray]]) -> None:
    header = dict(header)
    header["arrays"] = [{"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)}
                        for name, arr in arrays]
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr).tobytes())


def _read_container(path: Path, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        got = fh.read(len(magic))
        if got != magic:
            raise ParseError(f"{path}: bad magic {got!r}, expected {magic!r}")
        (blob_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(blob_len).decode("utf-8"))
        arrays = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape, dtype=np.int64))
            dtype = np.dtype(spec["dtype"])
            buf = fh.read(count * dtype.itemsize)
            arrays[spec["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
    return header, arrays


def save_dataset(dataset: PreparedDataset, path: str | Path) -> None:
    header = {
        "format": "ginet-dataset",
        "version": 1,
        "config_digest": dataset.config_digest,
        "t_in": dataset.t_in,
        "t_out": dataset.t_out,
        "slot_seconds": dataset.slot_seconds,
        "stride": dataset.stride,
        "seed": dataset.seed,
        "norm_stats": dataset.norm_stats.to_dict(),
        "provenance": dataset.provenance,
        "split_cycle_ids": dataset.split_cycle_ids,
    }
    names = sorted(dataset.arrays)
    _write_container(Path(path), _MAGIC_DATASET, header,
                     [(n, dataset.arrays[n]) for n in names])


def load_dataset(path: str | Path) -> PreparedDataset:
    header, arrays = _read_container(Path(path), _MAGIC_DATASET)
    return PreparedDataset(
        t_in=header["t_in"], t_out=header["t_out"],
        slot_seconds=header["slot_seconds"], stride=header["stride"],
        seed=header["seed"], norm_stats=NormStats.from_dict(header["norm_stats"]),
        provenance=header["provenance"], config_digest=header["config_digest"],
        split_cycle_ids=header["split_cycle_ids"], arrays=arrays)

"""Landmark trial tables: parsing, validation, outlier removal and half splits."""
from __future__ import annotations

import csv
import io
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

MAD_EPSILON = 1e-9

DEFAULT_SCHEMA = {
    "trial_id": "trial_id",
    "speaker": "speaker",
    "vowel": "vowel",
    "repetition": "repetition",
    "block": "block",
}


class DatasetError(ValueError):
    """Base class for malformed or unusable landmark data."""


class SchemaError(DatasetError):
    pass


class ParseError(DatasetError):
    pass


class StructureError(DatasetError):
    pass


@dataclass(frozen=True)
class TrialRecord:
    trial_id: str
    speaker_id: str
    vowel: str
    repetition: int
    block: int
    config: np.ndarray  # (k, 2), mm

    def __post_init__(self):
        if not self.speaker_id or not self.vowel:
            raise StructureError(f"trial {self.trial_id!r}: empty speaker or vowel label")
        if self.repetition < 1 or self.block < 1:
            raise StructureError(f"trial {self.trial_id!r}: repetition and block must be >= 1")
        cfg = np.asarray(self.config, dtype=float)
        if cfg.ndim != 2 or cfg.shape[1] != 2 or cfg.shape[0] < 3:
            raise StructureError(f"trial {self.trial_id!r}: config must be k x 2 with k >= 3")
        if not np.all(np.isfinite(cfg)):
            raise StructureError(f"trial {self.trial_id!r}: non-finite coordinate")
        cfg.setflags(write=False)
        object.__setattr__(self, "config", cfg)

    def __eq__(self, other):
        if not isinstance(other, TrialRecord):
            return NotImplemented
        return (
            self.trial_id == other.trial_id
            and self.speaker_id == other.speaker_id
            and self.vowel == other.vowel
            and self.repetition == other.repetition
            and self.block == other.block
            and np.array_equal(self.config, other.config)
        )

    __hash__ = None


@dataclass
class SpeakerDataset:
    trials: list[TrialRecord]
    landmark_count: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for t in self.trials:
            if t.config.shape[0] != self.landmark_count:
                raise StructureError(
                    f"trial {t.trial_id!r} has {t.config.shape[0]} landmarks, "
                    f"expected {self.landmark_count}"
                )
            if t.trial_id in seen:
                raise StructureError(f"duplicate trial_id {t.trial_id!r}")
            seen.add(t.trial_id)

    def __len__(self):
        return len(self.trials)

    @property
    def speakers(self) -> list[str]:
        """Speaker ids in order of first appearance."""
        return list(dict.fromkeys(t.speaker_id for t in self.trials))

    @property
    def configs(self) -> np.ndarray:
        if not self.trials:
            return np.empty((0, self.landmark_count, 2))
        return np.stack([t.config for t in self.trials])

    @property
    def speaker_labels(self) -> list[str]:
        return [t.speaker_id for t in self.trials]

    def by_speaker(self) -> dict[str, list[TrialRecord]]:
        groups: dict[str, list[TrialRecord]] = defaultdict(list)
        for t in self.trials:
            groups[t.speaker_id].append(t)
        return dict(groups)

    def subset(self, trial_ids, **provenance) -> "SpeakerDataset":
        keep = set(trial_ids)
        prov = dict(self.provenance)
        prov.update(provenance)
        return SpeakerDataset(
            [t for t in self.trials if t.trial_id in keep], self.landmark_count, prov
        )

    def __eq__(self, other):
        if not isinstance(other, SpeakerDataset):
            return NotImplemented
        return self.landmark_count == other.landmark_count and self.trials == other.trials


@dataclass(frozen=True)
class HalfSplit:
    speaker_id: str
    first_half: frozenset
    second_half: frozenset


@dataclass
class RemovalReport:
    removed: list[str]
    per_speaker: dict[str, int]
    n_total: int

    @property
    def fraction(self) -> float:
        return len(self.removed) / self.n_total if self.n_total else 0.0

    def to_json_dict(self) -> dict:
        return {
            "removed": list(self.removed),
            "fraction": self.fraction,
            "per_speaker": dict(self.per_speaker),
        }


_COORD = re.compile(r"^([xy])(\d+)$")


def parse_landmark_table(text_table, schema: dict | None = None, source: str = "<stream>") -> SpeakerDataset:
    """Parse a comma-delimited wide landmark table.

    Parameters
    ----------
    text_table : str or file-like
        Header row followed by one trial per row. Coordinates are in columns
        ``x1, y1, ..., xk, yk``; label columns are named by `schema`.
    schema : dict, optional
        Maps the logical fields ``trial_id, speaker, vowel, repetition, block``
        to column names. Missing keys fall back to the logical name.

    Returns
    -------
    SpeakerDataset
        One trial per row, in row order.
    """
    names = dict(DEFAULT_SCHEMA)
    if schema:
        names.update(schema)
    stream = io.StringIO(text_table) if isinstance(text_table, str) else text_table
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("empty table: no header row") from None

    for logical, col in names.items():
        if col not in header:
            raise SchemaError(f"missing column {col!r} (for {logical})")

    xs, ys = {}, {}
    for pos, name in enumerate(header):
        m = _COORD.match(name)
        if m:
            (xs if m.group(1) == "x" else ys)[int(m.group(2))] = pos
    if not xs and not ys:
        raise SchemaError("missing column 'x1'")
    k = max(max(xs, default=0), max(ys, default=0))
    for j in range(1, k + 1):
        for axis, cols in (("x", xs), ("y", ys)):
            if j not in cols:
                raise SchemaError(f"missing column '{axis}{j}'")
    if k < 3:
        raise StructureError(f"need at least 3 landmarks, header has {k}")

    idx = {logical: header.index(col) for logical, col in names.items()}
    trials = []
    for rownum, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise StructureError(
                f"row {rownum}: {len(row)} fields, header has {len(header)}"
            )
        try:
            coords = np.array(
                [[float(row[xs[j]]), float(row[ys[j]])] for j in range(1, k + 1)]
            )
        except ValueError as exc:
            raise ParseError(f"row {rownum}: non-numeric coordinate ({exc})") from None
        try:
            rep = int(row[idx["repetition"]])
            block = int(row[idx["block"]])
        except ValueError as exc:
            raise ParseError(f"row {rownum}: non-integer repetition/block ({exc})") from None
        try:
            trials.append(
                TrialRecord(
                    trial_id=row[idx["trial_id"]].strip(),
                    speaker_id=row[idx["speaker"]].strip(),
                    vowel=row[idx["vowel"]].strip(),
                    repetition=rep,
                    block=block,
                    config=coords,
                )
            )
        except StructureError as exc:
            raise StructureError(f"row {rownum}: {exc}") from None
    return SpeakerDataset(trials, k, {"source": source})


def read_landmark_csv(path, schema: dict | None = None) -> SpeakerDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_landmark_table(fh, schema, source=str(path))


def format_float(v: float) -> str:
    """Shortest round-tripping decimal form; stable across runs."""
    return repr(float(v))


def serialize_landmark_table(ds: SpeakerDataset) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    k = ds.landmark_count
    coord_cols = [f"{a}{j}" for j in range(1, k + 1) for a in "xy"]
    w.writerow(["trial_id", "speaker", "vowel", "repetition", "block", *coord_cols])
    for t in ds.trials:
        w.writerow(
            [t.trial_id, t.speaker_id, t.vowel, t.repetition, t.block]
            + [format_float(v) for v in t.config.ravel()]
        )
    return out.getvalue()


def write_landmark_csv(ds: SpeakerDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(serialize_landmark_table(ds))


def mad_outlier_filter(ds: SpeakerDataset, threshold: float = 3.5):
    """Drop trials whose landmarks stray too far from the speaker's median shape.

    For each speaker and landmark ``j`` the coordinate-wise median position is
    taken over that speaker's trials, each trial's Euclidean distance to it is
    measured, and the median of those distances (the MAD) sets the scale. A
    trial is dropped if any landmark lies more than ``threshold * MAD`` away.
    Medians are computed once, before any removal.

    Where a landmark's MAD is exactly zero the comparison is against
    ``MAD_EPSILON`` instead, so exact duplicates survive.

    Returns
    -------
    (SpeakerDataset, RemovalReport)
    """
    if not threshold > 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    groups = ds.by_speaker()
    removed = set()
    per_speaker = {}
    for spk, trials in groups.items():
        if len(trials) < 2:
            raise StructureError(f"speaker {spk!r} has {len(trials)} trial(s); need >= 2")
        X = np.stack([t.config for t in trials])  # (n, k, 2)
        med = np.median(X, axis=0)
        d = np.linalg.norm(X - med, axis=2)  # (n, k)
        mad = np.median(d, axis=0)
        if math.isinf(threshold):
            limit = np.full_like(mad, np.inf)
        else:
            limit = np.where(mad > 0, threshold * mad, MAD_EPSILON)
        bad = np.any(d > limit, axis=1)
        per_speaker[spk] = int(bad.sum())
        removed.update(t.trial_id for t, b in zip(trials, bad) if b)

    order = [t.trial_id for t in ds.trials if t.trial_id in removed]
    kept = [t.trial_id for t in ds.trials if t.trial_id not in removed]
    out = ds.subset(kept, mad_threshold=threshold)
    return out, RemovalReport(order, per_speaker, len(ds))


def split_halves(ds: SpeakerDataset, seed: int = 0) -> list[HalfSplit]:
    """Partition each speaker's trials into two vowel-balanced halves.

    Within each (speaker, vowel) cell trials are ordered by
    ``(block, repetition, trial_id)`` and dealt alternately. Cells with an odd
    count alternate which half receives the extra trial, so half sizes also
    differ by at most one; the seed picks the half that gets the first extra.
    """
    rng = np.random.default_rng(seed)
    splits = []
    for spk, trials in ds.by_speaker().items():
        if len(trials) < 2:
            raise StructureError(f"speaker {spk!r} has {len(trials)} trial(s); need >= 2")
        cells = defaultdict(list)
        for t in trials:
            cells[t.vowel].append(t)
        odd_start = int(rng.integers(2))
        halves = ([], [])
        for vowel in sorted(cells):
            cell = sorted(cells[vowel], key=lambda t: (t.block, t.repetition, t.trial_id))
            start = 0
            if len(cell) % 2:
                start = odd_start
                odd_start ^= 1
            for i, t in enumerate(cell):
                halves[(start + i) % 2].append(t.trial_id)
        splits.append(HalfSplit(spk, frozenset(halves[0]), frozenset(halves[1])))
    return splits

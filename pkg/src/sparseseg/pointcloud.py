"""Point-cloud data model, label taxonomy, CSV I/O and Gauss-similarity weights."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

CSV_HEADER = ("subject_id", "frame_idx", "x", "y", "z", "fine_label", "coarse_label")


class DataError(ValueError):
    """Base class for malformed point-cloud data."""


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.line = line


class StructureError(DataError):
    pass


class FineLabel(enum.IntEnum):
    HEAD = 0
    CHEST = 1
    LEFT_ARM = 2
    RIGHT_ARM = 3
    LEFT_LEG = 4
    RIGHT_LEG = 5

    @property
    def token(self) -> str:
        return self.name.lower()


class CoarseLabel(enum.IntEnum):
    HEAD_TORSO = 0
    ARM = 1
    LEG = 2

    @property
    def token(self) -> str:
        return self.name.lower()


FINE_NAMES = ("Head", "Chest", "LeftArm", "RightArm", "LeftLeg", "RightLeg")
COARSE_NAMES = ("HeadTorso", "Arm", "Leg")

# fine class index -> coarse class index
COARSE_OF_FINE = np.array([0, 0, 1, 1, 2, 2], dtype=np.intp)

_FINE_BY_TOKEN = {lab.token: lab for lab in FineLabel}
_COARSE_BY_TOKEN = {lab.token: lab for lab in CoarseLabel}


def coarsen(fine) -> CoarseLabel:
    """Map a fine body-part label onto head+torso / arm / leg."""
    return CoarseLabel(int(COARSE_OF_FINE[int(fine)]))


def coarsen_array(fine: np.ndarray) -> np.ndarray:
    return COARSE_OF_FINE[np.asarray(fine, dtype=np.intp)]


@dataclass(frozen=True)
class LabeledPoint:
    position: tuple[float, float, float]
    fine_label: FineLabel

    @property
    def coarse_label(self) -> CoarseLabel:
        return coarsen(self.fine_label)


class Frame:
    """One capture: n labeled 3-D points in file order."""

    __slots__ = ("positions", "fine_labels", "frame_index")

    def __init__(self, positions, fine_labels, frame_index: int):
        pos = np.array(positions, dtype=np.float64, copy=True).reshape(-1, 3)
        lab = np.array(fine_labels, dtype=np.intp, copy=True).reshape(-1)
        if pos.shape[0] < 1:
            raise StructureError("a frame needs at least one point")
        if lab.shape[0] != pos.shape[0]:
            raise StructureError(f"{pos.shape[0]} positions but {lab.shape[0]} labels")
        if not np.all(np.isfinite(pos)):
            raise DataError(f"frame {frame_index}: non-finite coordinate")
        if lab.min() < 0 or lab.max() >= len(FineLabel):
            raise DataError(f"frame {frame_index}: fine label out of range")
        if int(frame_index) < 0:
            raise StructureError(f"negative frame index {frame_index}")
        pos.setflags(write=False)
        lab.setflags(write=False)
        self.positions = pos
        self.fine_labels = lab
        self.frame_index = int(frame_index)

    @classmethod
    def from_points(cls, points: Iterable[LabeledPoint], frame_index: int) -> "Frame":
        points = list(points)
        return cls([p.position for p in points], [int(p.fine_label) for p in points], frame_index)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def coarse_labels(self) -> np.ndarray:
        return COARSE_OF_FINE[self.fine_labels]

    @property
    def points(self) -> list[LabeledPoint]:
        return [
            LabeledPoint(tuple(float(c) for c in p), FineLabel(int(l)))
            for p, l in zip(self.positions, self.fine_labels)
        ]

    def permuted(self, perm) -> "Frame":
        perm = np.asarray(perm)
        return Frame(self.positions[perm], self.fine_labels[perm], self.frame_index)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.frame_index == other.frame_index
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.fine_labels, other.fine_labels)
        )

    def __repr__(self) -> str:
        return f"Frame(index={self.frame_index}, n={self.n})"


class Sequence:
    """Frames of one subject ordered by strictly increasing frame index."""

    __slots__ = ("frames", "subject_id")

    def __init__(self, frames: Iterable[Frame], subject_id: str = "s0"):
        frames = tuple(frames)
        if not frames:
            raise StructureError("a sequence needs at least one frame")
        for prev, cur in zip(frames, frames[1:]):
            if cur.frame_index <= prev.frame_index:
                raise StructureError(
                    f"subject {subject_id}: frame index {cur.frame_index} does not increase after {prev.frame_index}"
                )
        self.frames = frames
        self.subject_id = str(subject_id)

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    @property
    def n_points(self) -> int:
        return sum(f.n for f in self.frames)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Sequence):
            return NotImplemented
        return self.subject_id == other.subject_id and self.frames == other.frames

    def __repr__(self) -> str:
        return f"Sequence(subject={self.subject_id!r}, frames={len(self.frames)})"


class AdjacencyWeights:
    """Symmetric Gauss-similarity matrix with unit diagonal."""

    __slots__ = ("w",)

    def __init__(self, w: np.ndarray):
        w = np.asarray(w, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"adjacency must be square, got {w.shape}")
        w.setflags(write=False)
        self.w = w

    @property
    def n(self) -> int:
        return self.w.shape[0]


def gauss_weights(points) -> AdjacencyWeights:
    """w[i, j] = exp(-||p_i - p_j||^2) over rows of ``points`` (n × d)."""
    p = np.asarray(points, dtype=np.float64)
    if p.ndim == 1:
        p = p.reshape(1, -1)
    if p.shape[0] < 1:
        raise DataError("gauss_weights needs at least one point")
    if not np.all(np.isfinite(p)):
        raise DataError("gauss_weights: non-finite coordinate")
    diff = p[:, None, :] - p[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    w = np.exp(-sq)
    # diff is exactly antisymmetric, so sq and w are exactly symmetric
    np.fill_diagonal(w, 1.0)
    return AdjacencyWeights(w)


def _format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_dataset(sequences: Iterable[Sequence], path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for seq in sequences:
            for frame in seq.frames:
                for pos, lab in zip(frame.positions, frame.fine_labels):
                    fine = FineLabel(int(lab))
                    writer.writerow(
                        (
                            seq.subject_id,
                            frame.frame_index,
                            _format_float(pos[0]),
                            _format_float(pos[1]),
                            _format_float(pos[2]),
                            fine.token,
                            coarsen(fine).token,
                        )
                    )


def write_sequence(seq: Sequence, path) -> None:
    write_dataset([seq], path)


def read_dataset(path) -> list[Sequence]:
    """Read every subject in a CSV file, in order of first appearance."""
    path = Path(path)
    try:
        fh = path.open("r", newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc

    # subject -> list of (frame_idx, positions, labels)
    subjects: dict[str, list[tuple[int, list, list]]] = {}
    last_subject: str | None = None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file, header row required", 1, str(path)) from None
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise ParseError(f"bad header {header!r}, expected {','.join(CSV_HEADER)}", 1, str(path))
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ParseError(f"expected {len(CSV_HEADER)} columns, got {len(row)}", line, str(path))
            subject, fidx, xs, ys, zs, fine_tok, coarse_tok = (c.strip() for c in row)
            try:
                frame_idx = int(fidx)
            except ValueError:
                raise ParseError(f"frame_idx {fidx!r} is not an integer", line, str(path)) from None
            if frame_idx < 0:
                raise ParseError(f"negative frame_idx {frame_idx}", line, str(path))
            try:
                xyz = [float(xs), float(ys), float(zs)]
            except ValueError:
                raise ParseError(f"non-numeric coordinate in {row[2:5]!r}", line, str(path)) from None
            if not all(math.isfinite(v) for v in xyz):
                raise ParseError("non-finite coordinate", line, str(path))
            fine = _FINE_BY_TOKEN.get(fine_tok)
            if fine is None:
                raise ParseError(f"unknown fine_label {fine_tok!r}", line, str(path))
            coarse = _COARSE_BY_TOKEN.get(coarse_tok)
            if coarse is None:
                raise ParseError(f"unknown coarse_label {coarse_tok!r}", line, str(path))
            if coarse != coarsen(fine):
                raise ParseError(
                    f"coarse_label {coarse_tok!r} inconsistent with fine_label {fine_tok!r}", line, str(path)
                )

            if subject != last_subject and subject in subjects:
                raise StructureError(f"{path}: line {line}: rows of subject {subject!r} are not contiguous")
            frames = subjects.setdefault(subject, [])
            last_subject = subject
            if frames and frames[-1][0] == frame_idx:
                frames[-1][1].append(xyz)
                frames[-1][2].append(int(fine))
            elif frames and frame_idx < frames[-1][0]:
                raise StructureError(
                    f"{path}: line {line}: frame_idx {frame_idx} after {frames[-1][0]} for subject {subject!r}"
                )
            else:
                frames.append((frame_idx, [xyz], [int(fine)]))

    if not subjects:
        raise StructureError(f"{path}: no data rows")
    return [
        Sequence((Frame(pos, lab, idx) for idx, pos, lab in frames), subject_id=sid)
        for sid, frames in subjects.items()
    ]


def read_sequence(path) -> Sequence:
    seqs = read_dataset(path)
    if len(seqs) != 1:
        raise StructureError(f"{path}: expected one subject, found {len(seqs)}")
    return seqs[0]


def _largest_remainder(total: int, fractions) -> list[int]:
    quotas = [total * f for f in fractions]
    counts = [math.floor(q) for q in quotas]
    leftover = total - sum(counts)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def split(seq: Sequence, train_frac: float, test_frac: float, val_frac: float, rng_seed: int):
    """Partition frames into (train, test, val) sequences by a seeded shuffle.

    Sizes use largest-remainder rounding so they always sum to the frame count.
    A part that receives no frames is returned as ``None``.
    """
    fracs = (train_frac, test_frac, val_frac)
    if any(f < 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be non-negative and sum to 1, got {fracs}")
    counts = _largest_remainder(len(seq.frames), fracs)
    order = np.random.default_rng(rng_seed).permutation(len(seq.frames))
    parts = []
    start = 0
    for c in counts:
        idx = sorted(order[start : start + c].tolist())
        start += c
        parts.append(Sequence([seq.frames[i] for i in idx], seq.subject_id) if idx else None)
    return tuple(parts)

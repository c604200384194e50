"""BVH motion-capture text files.

Joint rotations use each joint's listed channel order, composed left to right
(``Zrotation Xrotation Yrotation`` means ``Rz @ Rx @ Ry``). Position channels
are only accepted on the root; the root's world position is its OFFSET plus
its position channels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import MotionSequence
from .kinematics import Skeleton
from .rotation import euler_to_matrix, matrix_to_euler

_POS = {"Xposition": 0, "Yposition": 1, "Zposition": 2}
_ROT = {"Xrotation": "X", "Yrotation": "Y", "Zrotation": "Z"}


class BVHParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class BVHMotion:
    skeleton: Skeleton
    root_positions: np.ndarray  # (n, 3), position channels only
    rotations: np.ndarray  # (n, J, 3, 3) local
    fps: float
    channels: list[list[str]] = field(default_factory=list)
    end_sites: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def num_frames(self) -> int:
        return len(self.rotations)

    def to_sequence(self) -> MotionSequence:
        return MotionSequence.from_rotations(self.root_positions, self.rotations, self.fps, self.skeleton)


class _Tokens:
    def __init__(self, lines: list[str]):
        self.items: list[tuple[str, int]] = []
        self.lines = lines
        self.pos = 0

    def peek(self):
        return self.items[self.pos] if self.pos < len(self.items) else (None, len(self.lines))

    def next(self, expected: str | None = None) -> tuple[str, int]:
        tok, line = self.peek()
        if tok is None:
            raise BVHParseError("unexpected end of file", line)
        if expected is not None and tok != expected:
            raise BVHParseError(f"expected {expected!r}, found {tok!r}", line)
        self.pos += 1
        return tok, line

    def number(self) -> float:
        tok, line = self.next()
        try:
            return float(tok)
        except ValueError:
            raise BVHParseError(f"expected a number, found {tok!r}", line) from None


def parse_bvh(text: str, scale: float = 1.0) -> BVHMotion:
    """Parse BVH text; ``scale`` converts file units to metres (0.01 for centimetres)."""
    lines = text.splitlines()
    try:
        motion_line = next(i for i, ln in enumerate(lines) if ln.strip().upper().startswith("MOTION"))
    except StopIteration:
        raise BVHParseError("missing MOTION section") from None
    toks = _Tokens(lines)
    for i in range(motion_line):
        toks.items.extend((t, i + 1) for t in lines[i].split())

    toks.next("HIERARCHY")
    names: list[str] = []
    parents: list[int] = []
    offsets: list[np.ndarray] = []
    channels: list[list[str]] = []
    end_sites: dict[int, np.ndarray] = {}

    def joint(parent: int, line: int):
        name_tok, _ = toks.next()
        idx = len(names)
        names.append(name_tok)
        parents.append(parent)
        toks.next("{")
        toks.next("OFFSET")
        offsets.append(np.array([toks.number() for _ in range(3)]) * scale)
        chans: list[str] = []
        tok, ln = toks.peek()
        if tok == "CHANNELS":
            toks.next()
            count_tok, ln = toks.next()
            try:
                count = int(count_tok)
            except ValueError:
                raise BVHParseError(f"bad channel count {count_tok!r}", ln) from None
            for _ in range(count):
                c, cl = toks.next()
                if c not in _POS and c not in _ROT:
                    raise BVHParseError(f"unsupported channel {c!r}", cl)
                chans.append(c)
            rots = [c for c in chans if c in _ROT]
            if parent >= 0 and any(c in _POS for c in chans):
                raise BVHParseError(f"position channels on non-root joint {name_tok!r}", ln)
            if len(rots) not in (0, 3) or len(set(rots)) != len(rots):
                raise BVHParseError(f"joint {name_tok!r} needs zero or three distinct rotation channels", ln)
        channels.append(chans)
        while True:
            tok, ln = toks.next()
            if tok == "}":
                return
            if tok == "JOINT":
                joint(idx, ln)
            elif tok == "End":
                toks.next("Site")
                toks.next("{")
                toks.next("OFFSET")
                end_sites[idx] = np.array([toks.number() for _ in range(3)]) * scale
                toks.next("}")
            else:
                raise BVHParseError(f"unexpected token {tok!r} in joint {name_tok!r}", ln)

    _, ln = toks.next("ROOT")
    joint(-1, ln)
    if toks.peek()[0] is not None:
        tok, ln = toks.peek()
        raise BVHParseError(f"unexpected token {tok!r} after hierarchy", ln)

    # motion section
    body = [(i + 1, lines[i].strip()) for i in range(motion_line + 1, len(lines)) if lines[i].strip()]
    if len(body) < 2:
        raise BVHParseError("MOTION section lacks Frames/Frame Time", motion_line + 1)
    n_frames = _header_value(body[0], "Frames:", int)
    frame_time = _header_value(body[1], "Frame Time:", float)
    if frame_time <= 0:
        raise BVHParseError("frame time must be positive", body[1][0])
    n_chan = sum(len(c) for c in channels)
    rows = body[2:]
    if len(rows) != n_frames:
        line = rows[-1][0] if rows else body[1][0]
        raise BVHParseError(f"header declares {n_frames} frames, found {len(rows)}", line)
    data = np.zeros((n_frames, n_chan))
    for r, (line, text_row) in enumerate(rows):
        vals = text_row.split()
        if len(vals) != n_chan:
            raise BVHParseError(f"expected {n_chan} channel values, found {len(vals)}", line)
        try:
            data[r] = [float(v) for v in vals]
        except ValueError:
            raise BVHParseError("non-numeric channel value", line) from None

    J = len(names)
    root_positions = np.zeros((n_frames, 3))
    rotations = np.broadcast_to(np.eye(3), (n_frames, J, 3, 3)).copy()
    col = 0
    for j, chans in enumerate(channels):
        angles, order = [], ""
        for c in chans:
            if c in _POS:
                root_positions[:, _POS[c]] = data[:, col] * scale
            else:
                angles.append(data[:, col])
                order += _ROT[c]
            col += 1
        if order:
            rotations[:, j] = euler_to_matrix(np.stack(angles, -1), order)

    absolute = np.array(offsets)
    for j in range(1, J):
        absolute[j] = absolute[parents[j]] + offsets[j]
    skeleton = Skeleton(np.array(parents), absolute, names)
    fps = 1.0 / frame_time
    if abs(fps - round(fps, 3)) < 1e-7 * fps:  # undo the rounding of a printed frame time
        fps = round(fps, 3)
    return BVHMotion(skeleton, root_positions, rotations, fps, channels, end_sites)


def _header_value(row: tuple[int, str], key: str, kind):
    line, text = row
    if not text.startswith(key):
        raise BVHParseError(f"expected {key!r}", line)
    try:
        return kind(text[len(key) :].strip())
    except ValueError:
        raise BVHParseError(f"bad value for {key!r}", line) from None


def serialize_bvh(motion: BVHMotion, scale: float = 1.0) -> str:
    """Inverse of :func:`parse_bvh`; ``scale`` must match the one used for parsing."""
    sk = motion.skeleton
    J = sk.num_joints
    chans = motion.channels or default_channels(J)
    bones = sk.bone_offsets() / scale
    out = ["HIERARCHY"]
    order: list[int] = []

    def emit(j: int, depth: int):
        order.append(j)
        pad = "\t" * depth
        kind = "ROOT" if sk.parent[j] < 0 else "JOINT"
        out.append(f"{pad}{kind} {sk.names[j]}")
        out.append(f"{pad}{{")
        out.append(f"{pad}\tOFFSET {_fmt(bones[j])}")
        if chans[j]:
            out.append(f"{pad}\tCHANNELS {len(chans[j])} {' '.join(chans[j])}")
        kids = sk.children(j)
        for c in kids:
            emit(c, depth + 1)
        if j in motion.end_sites or not kids:
            site = motion.end_sites.get(j, np.zeros(3)) / scale
            out.extend([f"{pad}\tEnd Site", f"{pad}\t{{", f"{pad}\t\tOFFSET {_fmt(site)}", f"{pad}\t}}"])
        out.append(f"{pad}}}")

    emit(0, 0)
    n = motion.num_frames
    out += ["MOTION", f"Frames: {n}", f"Frame Time: {1.0 / motion.fps:.10g}"]
    columns = []
    for j in order:
        cj = chans[j]
        axes = "".join(_ROT[c] for c in cj if c in _ROT)
        euler = matrix_to_euler(motion.rotations[:, j], axes) if axes else None
        k = 0
        for c in cj:
            if c in _POS:
                columns.append(motion.root_positions[:, _POS[c]] / scale)
            else:
                columns.append(euler[:, k])
                k += 1
    table = np.stack(columns, axis=-1) if columns else np.zeros((n, 0))
    out.extend(_fmt(row) for row in table)
    return "\n".join(out) + "\n"


def _fmt(values) -> str:
    return " ".join(f"{v:.8f}" for v in np.asarray(values, dtype=np.float64) + 0.0)


def default_channels(num_joints: int) -> list[list[str]]:
    rot = ["Zrotation", "Xrotation", "Yrotation"]
    return [["Xposition", "Yposition", "Zposition", *rot]] + [list(rot) for _ in range(num_joints - 1)]


def sequence_to_bvh(seq: MotionSequence) -> BVHMotion:
    """Wrap a frame array for BVH export with ZXY channels.

    The file lists joints depth-first, so reading it back yields that joint
    order, which differs from the sequence's own when its parents are not
    already depth-first.
    """
    return BVHMotion(seq.skeleton, seq.root_positions.copy(), seq.rotations(), seq.fps, default_channels(seq.skeleton.num_joints))


def read_bvh(path, scale: float = 1.0) -> BVHMotion:
    return parse_bvh(Path(path).read_text(), scale)


def write_bvh(path, motion: BVHMotion, scale: float = 1.0) -> None:
    Path(path).write_text(serialize_bvh(motion, scale))

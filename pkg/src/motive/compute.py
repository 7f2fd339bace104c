"""Named-function offloading with probe-based verification.

The consumer hides ``k`` subtasks with known outputs (probes) among the real
ones and checks only those positions when results come back. Probe
positions never leave the consumer: the task bytes sent to a provider have
the same layout whether or not probes are embedded.
"""

from __future__ import annotations

import hashlib
import math
import operator
import random
import struct
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Mapping

from motive.errors import ComputeError, EmptyProbeBank, LengthMismatch, UnknownFunction

RefFunction = Callable[[bytes], bytes]

# output of a subtask the executor did not compute; never a valid label
SKIPPED = b""

_LABELS = (b"none", b"car", b"pedestrian", b"cyclist", b"truck", b"sign")


def hash_classifier(frame: bytes) -> bytes:
    """Deterministic stand-in for object detection over an opaque frame."""
    h = hashlib.blake2b(frame, digest_size=8).digest()
    return _LABELS[h[0] % len(_LABELS)]


def digest_function(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()[:8]


BUILTINS: dict[str, RefFunction] = {
    "hash_classifier": hash_classifier,
    "digest": digest_function,
}


class FunctionRegistry:
    """Maps catalog function names to builtin reference implementations."""

    def __init__(self, bindings: Mapping[str, str] | None = None):
        self._fns: dict[str, RefFunction] = {}
        self._ids: dict[str, str] = {}
        for name, builtin in (bindings or {"objectDetection": "hash_classifier"}).items():
            self.register(name, builtin)

    def register(self, name: str, builtin_id: str) -> None:
        if builtin_id not in BUILTINS:
            raise UnknownFunction(f"no builtin reference function {builtin_id!r}")
        self._fns[name] = BUILTINS[builtin_id]
        self._ids[name] = builtin_id

    def __contains__(self, name: str) -> bool:
        return name in self._fns

    def get(self, name: str) -> RefFunction:
        try:
            return self._fns[name]
        except KeyError:
            raise UnknownFunction(f"function {name!r} is not registered") from None

    def bindings(self) -> dict[str, str]:
        return dict(self._ids)


@dataclass(frozen=True)
class ComputeTask:
    function_name: str
    subtasks: tuple[bytes, ...]

    def __post_init__(self):
        if not self.subtasks:
            raise ComputeError("a task needs at least one subtask")

    @property
    def n(self) -> int:
        return len(self.subtasks)


@dataclass(frozen=True)
class ProbeBank:
    function_name: str
    items: tuple[tuple[bytes, bytes], ...]

    @classmethod
    def build(cls, function_name: str, fn: RefFunction, size: int, seed: int,
              input_size: int = 16) -> ProbeBank:
        rng = random.Random(seed)
        inputs = [rng.randbytes(input_size) for _ in range(size)]
        return cls(function_name, tuple((x, fn(x)) for x in inputs))


@dataclass(frozen=True)
class ProbeSet:
    positions: tuple[int, ...]
    expected: Mapping[int, bytes]
    n_total: int

    @property
    def k(self) -> int:
        return len(self.positions)

    def real_positions(self) -> list[int]:
        probes = set(self.positions)
        return [i for i in range(self.n_total) if i not in probes]


class Verdict(str, Enum):
    UNVERIFIED = "Unverified"
    VERIFIED = "Verified"
    CHEAT_DETECTED = "CheatDetected"


@dataclass(frozen=True)
class TaskResult:
    outputs: tuple[bytes, ...]
    verdict: Verdict = field(default=Verdict.UNVERIFIED)


def default_probe_count(n_real: int, fraction: float = 0.1) -> int:
    return math.ceil(Fraction(str(fraction)) * n_real)


def embed_probes(task: ComputeTask, k: int, rng_seed, bank: ProbeBank | None) -> tuple[ComputeTask, ProbeSet]:
    """Insert ``k`` probes at uniformly random positions of the task."""
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        return task, ProbeSet((), {}, task.n)
    if bank is None or not bank.items:
        raise EmptyProbeBank(f"no probes available for {task.function_name!r}")
    rng = rng_seed if isinstance(rng_seed, random.Random) else random.Random(rng_seed)
    n_total = task.n + k
    positions = sorted(rng.sample(range(n_total), k))
    if k <= len(bank.items):
        chosen = rng.sample(bank.items, k)
    else:
        chosen = rng.choices(bank.items, k=k)
    slots = dict(zip(positions, chosen))
    real = iter(task.subtasks)
    subtasks = tuple(slots[i][0] if i in slots else next(real) for i in range(n_total))
    expected = {i: slots[i][1] for i in positions}
    return ComputeTask(task.function_name, subtasks), ProbeSet(tuple(positions), expected, n_total)


def verify(result: TaskResult, probes: ProbeSet,
           equality: Callable[[bytes, bytes], bool] = operator.eq) -> Verdict:
    """Check only the probe positions of ``result``."""
    if len(result.outputs) != probes.n_total:
        raise LengthMismatch(f"got {len(result.outputs)} outputs for a task of {probes.n_total}")
    for i in probes.positions:
        if not equality(result.outputs[i], probes.expected[i]):
            return Verdict.CHEAT_DETECTED
    return Verdict.VERIFIED


def execute_honest(task: ComputeTask, fn: RefFunction) -> TaskResult:
    return TaskResult(tuple(fn(x) for x in task.subtasks))


def execute_lazy(task: ComputeTask, fn: RefFunction, skip: int, rng: random.Random) -> TaskResult:
    """Skip ``skip`` uniformly chosen subtasks, returning SKIPPED for them."""
    skipped = set(rng.sample(range(task.n), min(skip, task.n)))
    return TaskResult(tuple(SKIPPED if i in skipped else fn(x) for i, x in enumerate(task.subtasks)))


def skip_count(n: int, skip_fraction: float) -> int:
    """Subtasks a lazy executor skips out of ``n`` (round half up)."""
    return int(Fraction(str(skip_fraction)) * n + Fraction(1, 2))


def detection_probability(n: int, k: int, m: int) -> Fraction:
    """Chance that skipping ``m`` of ``n`` subtasks hits at least one of ``k`` probes."""
    if not 0 <= k <= n or not 0 <= m <= n:
        raise ValueError("need 0 <= k, m <= n")
    return 1 - Fraction(math.comb(n - k, m), math.comb(n, m))


# -- task codec ------------------------------------------------------------

_TASK_MAGIC = b"CT"
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")


def encode_task(task: ComputeTask) -> bytes:
    """Wire form of a task: magic, name, count, length-prefixed inputs."""
    name = task.function_name.encode("utf-8")
    out = bytearray(_TASK_MAGIC)
    out += _U16.pack(len(name)) + name
    out += _U32.pack(task.n)
    for x in task.subtasks:
        out += _U32.pack(len(x)) + x
    return bytes(out)


def decode_task(data: bytes) -> ComputeTask:
    try:
        if data[:2] != _TASK_MAGIC:
            raise ComputeError("bad task magic")
        pos = 2
        (nlen,) = _U16.unpack_from(data, pos)
        pos += 2
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (count,) = _U32.unpack_from(data, pos)
        pos += 4
        subs: list[bytes] = []
        for _ in range(count):
            (ln,) = _U32.unpack_from(data, pos)
            pos += 4
            if pos + ln > len(data):
                raise ComputeError("truncated subtask")
            subs.append(bytes(data[pos:pos + ln]))
            pos += ln
        if pos != len(data):
            raise ComputeError("trailing bytes after task")
        return ComputeTask(name, tuple(subs))
    except (struct.error, UnicodeDecodeError) as e:
        raise ComputeError(f"malformed task: {e}") from None


def task_layout(encoded: bytes) -> list[int]:
    """Field lengths of an encoded task, for indistinguishability checks."""
    t = decode_task(encoded)
    return [len(t.function_name.encode("utf-8")), t.n, *(len(x) for x in t.subtasks)]


def real_outputs(result: TaskResult, probes: ProbeSet) -> list[bytes]:
    return [result.outputs[i] for i in probes.real_positions()]


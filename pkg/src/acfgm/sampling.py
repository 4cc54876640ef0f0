"""Seeded, mutually independent sampling streams.

Every mini-batch in a run belongs to exactly one of six stream kinds and one
iteration.  Each (kind, iteration) pair gets its own keyed substream of a
counter-based generator, so batches stay independent even though their sizes
are data-dependent, and a run replays bit-identically from its master seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import ContractViolationError


class StreamKind(IntEnum):
    """Roles a batch can play; the integer codes key the substreams."""

    MAIN_UPDATE = 0      # gradient average for the iterate update
    STEP_GRAD_DIFF = 1   # paired gradient differences for the smoothness numerator
    STEP_TAYLOR = 2      # Taylor-remainder samples for the smoothness denominator
    VAR_MAIN = 3         # pairwise variance batch tied to the main slot
    VAR_GRAD_DIFF = 4    # pairwise variance batch tied to the grad-diff slot
    VAR_TAYLOR = 5       # pairwise variance batch tied to the Taylor slot


# slot ordering inside one iteration; variance batches share their slot with
# the batch they accompany
_SLOT = {
    StreamKind.MAIN_UPDATE: 0,
    StreamKind.VAR_MAIN: 0,
    StreamKind.STEP_GRAD_DIFF: 1,
    StreamKind.VAR_GRAD_DIFF: 1,
    StreamKind.STEP_TAYLOR: 2,
    StreamKind.VAR_TAYLOR: 2,
}


@dataclass
class BatchDraw:
    """A tagged batch of component indices drawn with replacement."""

    kind: StreamKind
    iteration: int
    size: int
    indices: np.ndarray


@dataclass
class FiltrationLog:
    """Ordered record of every batch drawn during a run."""

    entries: list[tuple[int, StreamKind, int]] = field(default_factory=list)
    totals: dict[StreamKind, int] = field(default_factory=dict)

    def record(self, draw: BatchDraw) -> None:
        self.entries.append((draw.iteration, draw.kind, draw.size))
        self.totals[draw.kind] = self.totals.get(draw.kind, 0) + draw.size

    @property
    def total_calls(self) -> int:
        return sum(self.totals.values())

    def calls_by_kind(self) -> dict[str, int]:
        return {k.name: self.totals.get(k, 0) for k in StreamKind}

    def to_csv(self, path: str | Path) -> None:
        lines = ["iteration,kind,size,cumulative_calls"]
        cum = 0
        for it, kind, size in self.entries:
            cum += size
            lines.append(f"{it},{kind.name},{size},{cum}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def draw_batch(
    master_seed: int,
    kind: StreamKind,
    iteration: int,
    size: int,
    n_components: int,
    log: FiltrationLog | None = None,
) -> BatchDraw:
    """Draw `size` i.i.d. uniform component indices for one (kind, iteration).

    The substream key is derived from (master_seed, kind, iteration) through a
    seed sequence feeding a Philox counter generator, so streams with distinct
    keys are computationally independent and a given position in a stream
    never depends on how many indices other streams consumed.
    """
    if size < 1:
        raise ContractViolationError("batch size must be at least 1")
    if n_components < 1:
        raise ContractViolationError("need at least one component")
    ss = np.random.SeedSequence(entropy=int(master_seed) & (2**64 - 1),
                                spawn_key=(int(kind), int(iteration)))
    gen = np.random.Generator(np.random.Philox(ss))
    idx = gen.integers(0, n_components, size=size, dtype=np.int64)
    draw = BatchDraw(kind=kind, iteration=iteration, size=size, indices=idx)
    if log is not None:
        log.record(draw)
    return draw


@dataclass
class AuditResult:
    passed: bool
    violations: list[str]


def audit_filtration(log: FiltrationLog) -> AuditResult:
    """Check the batch-ordering discipline and the call-counter identity.

    Within one iteration the slots must appear in order (main, grad-diff,
    Taylor, with each variance batch sharing its companion's slot), iteration
    numbers must be nondecreasing, no (kind, iteration) pair may repeat, and
    the per-kind running totals must equal the sum of recorded sizes.
    """
    violations: list[str] = []
    seen: set[tuple[int, StreamKind]] = set()
    last_iter = None
    last_slot = -1
    recomputed: dict[StreamKind, int] = {}
    for pos, (it, kind, size) in enumerate(log.entries):
        key = (it, kind)
        if key in seen:
            violations.append(f"entry {pos}: kind {kind.name} reused at iteration {it}")
        seen.add(key)
        if last_iter is not None and it < last_iter:
            violations.append(f"entry {pos}: iteration {it} after iteration {last_iter}")
        slot = _SLOT[kind]
        if last_iter == it and slot < last_slot:
            violations.append(
                f"entry {pos}: {kind.name} drawn out of slot order at iteration {it}"
            )
        if last_iter != it:
            last_slot = slot
        else:
            last_slot = max(last_slot, slot)
        last_iter = it
        recomputed[kind] = recomputed.get(kind, 0) + size
    for kind in StreamKind:
        want = recomputed.get(kind, 0)
        have = log.totals.get(kind, 0)
        if want != have:
            violations.append(f"counter mismatch for {kind.name}: {have} recorded vs {want} summed")
    return AuditResult(passed=not violations, violations=violations)

"""
PrimExp - Segmented Scan Engine
Fast evaluation of M(n), m(n), omega_k(n) and omega_S/E/O(n) over a range by
dividing out every base prime segment by segment. Segments are independent
work units that can run on a process pool; results fold into exact integer
accumulators.
"""

import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from src.core.exponents import ExponentSummary
from src.core.primes import cached_primes

logger = logging.getLogger(__name__)

DEFAULT_SEGMENT_LENGTH = 2 ** 20
SCAN_SEQUENCES = ("S", "E", "O")
CHECKPOINT_VERSION = 1


@dataclass
class ExponentBlock:
    """Per-n statistics for the contiguous range [lo, lo + len - 1]"""
    lo: int
    max_exp: np.ndarray
    min_exp: np.ndarray
    omega: Dict[int, np.ndarray]
    omega_a: Dict[str, np.ndarray]

    @property
    def hi(self) -> int:
        return self.lo + len(self.max_exp) - 1


def scan_block(lo: int, hi: int, ks: Sequence[int], base_primes: np.ndarray) -> ExponentBlock:
    """
    Factor-scan every n in [lo, hi].

    For each prime p <= sqrt(hi) the multiples of p form a strided view; the
    exponent of p is 1 plus the number of j with p^j dividing n/p. A residual
    greater than 1 after all base primes is a single prime with exponent 1.
    """
    length = hi - lo + 1
    rem = np.arange(lo, hi + 1, dtype=np.int64)
    max_e = np.zeros(length, dtype=np.int8)
    min_e = np.full(length, 127, dtype=np.int8)
    omega = {k: np.zeros(length, dtype=np.int8) for k in ks}
    squares = np.zeros(length, dtype=np.int8)
    evens = np.zeros(length, dtype=np.int8)
    odds = np.zeros(length, dtype=np.int8)

    cutoff = int(np.searchsorted(base_primes, math.isqrt(hi), side="right"))
    for p in base_primes[:cutoff].tolist():
        first = -(-lo // p) * p
        if first > hi:
            continue
        off = first - lo
        count = (length - 1 - off) // p + 1
        q = first // p
        e = np.ones(count, dtype=np.int8)
        pj = p
        while pj * p <= hi:
            start = (-q) % pj
            if start < count:
                e[start::pj] += 1
            pj *= p

        view = slice(off, None, p)
        rem[view] //= np.power(np.int64(p), e.astype(np.int64))
        max_e[view] = np.maximum(max_e[view], e)
        min_e[view] = np.minimum(min_e[view], e)
        for k in ks:
            omega[k][view] += (e == k).astype(np.int8)
        squares[view] += (e >= 2).astype(np.int8)
        evens[view] += (e % 2 == 0).astype(np.int8)
        odds[view] += ((e >= 3) & (e % 2 == 1)).astype(np.int8)

    residual = rem > 1
    max_e = np.where(residual, np.maximum(max_e, 1), max_e).astype(np.int8)
    min_e = np.where(residual, np.minimum(min_e, 1), min_e).astype(np.int8)

    # only n = 1 has no prime factor; M(1) = m(1) = 1
    unit = min_e == 127
    max_e[unit] = 1
    min_e[unit] = 1

    return ExponentBlock(lo, max_e, min_e, omega, {"S": squares, "E": evens, "O": odds})


def _add_histogram(target: Dict[int, int], values: np.ndarray):
    counts = np.bincount(values.astype(np.int64))
    for value in np.flatnonzero(counts).tolist():
        target[value] = target.get(value, 0) + int(counts[value])


def _merge_histogram(target: Dict[int, int], other: Dict[int, int]):
    for value, count in other.items():
        target[value] = target.get(value, 0) + count


@dataclass
class ScanAccumulator:
    """
    Exact integer aggregates over every n folded so far. Merging is
    commutative and associative, so any segment schedule gives the same state.
    """
    ks: Tuple[int, ...] = ()
    count: int = 0
    sum_max: int = 0
    sum_max_sq: int = 0
    sum_min: int = 0
    sum_min_sq: int = 0
    hist_max: Dict[int, int] = field(default_factory=dict)
    hist_min: Dict[int, int] = field(default_factory=dict)
    hist_omega: Dict[int, Dict[int, int]] = field(default_factory=dict)
    hist_omega_a: Dict[str, Dict[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        self.ks = tuple(sorted(set(self.ks)))
        for k in self.ks:
            self.hist_omega.setdefault(k, {})
        for label in SCAN_SEQUENCES:
            self.hist_omega_a.setdefault(label, {})

    def consume(self, block: ExponentBlock):
        big = block.max_exp.astype(np.int64)
        small = block.min_exp.astype(np.int64)
        self.count += len(big)
        self.sum_max += int(big.sum())
        self.sum_max_sq += int((big * big).sum())
        self.sum_min += int(small.sum())
        self.sum_min_sq += int((small * small).sum())
        _add_histogram(self.hist_max, block.max_exp)
        _add_histogram(self.hist_min, block.min_exp)
        for k in self.ks:
            _add_histogram(self.hist_omega[k], block.omega[k])
        for label in SCAN_SEQUENCES:
            _add_histogram(self.hist_omega_a[label], block.omega_a[label])

    def merge(self, other: "ScanAccumulator"):
        if other.ks != self.ks:
            raise ValueError(f"Cannot merge accumulators with ks {self.ks} and {other.ks}")
        self.count += other.count
        self.sum_max += other.sum_max
        self.sum_max_sq += other.sum_max_sq
        self.sum_min += other.sum_min
        self.sum_min_sq += other.sum_min_sq
        _merge_histogram(self.hist_max, other.hist_max)
        _merge_histogram(self.hist_min, other.hist_min)
        for k in self.ks:
            _merge_histogram(self.hist_omega[k], other.hist_omega[k])
        for label in SCAN_SEQUENCES:
            _merge_histogram(self.hist_omega_a[label], other.hist_omega_a[label])

    def copy(self) -> "ScanAccumulator":
        return ScanAccumulator.from_dict(self.to_dict())

    def result(self) -> "ScanAccumulator":
        return self

    def to_dict(self) -> Dict[str, Any]:
        """Plain-JSON state with sorted keys (histogram keys become strings)"""
        def hist(h: Dict[int, int]) -> Dict[str, int]:
            return {str(key): h[key] for key in sorted(h)}

        return {
            "ks": list(self.ks),
            "count": self.count,
            "sum_max": self.sum_max,
            "sum_max_sq": self.sum_max_sq,
            "sum_min": self.sum_min,
            "sum_min_sq": self.sum_min_sq,
            "hist_max": hist(self.hist_max),
            "hist_min": hist(self.hist_min),
            "hist_omega": {str(k): hist(self.hist_omega[k]) for k in self.ks},
            "hist_omega_a": {label: hist(self.hist_omega_a[label]) for label in SCAN_SEQUENCES},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScanAccumulator":
        def hist(h: Dict[str, int]) -> Dict[int, int]:
            return {int(key): int(value) for key, value in h.items()}

        return cls(
            ks=tuple(data["ks"]),
            count=int(data["count"]),
            sum_max=int(data["sum_max"]),
            sum_max_sq=int(data["sum_max_sq"]),
            sum_min=int(data["sum_min"]),
            sum_min_sq=int(data["sum_min_sq"]),
            hist_max=hist(data["hist_max"]),
            hist_min=hist(data["hist_min"]),
            hist_omega={int(k): hist(h) for k, h in data["hist_omega"].items()},
            hist_omega_a={label: hist(h) for label, h in data["hist_omega_a"].items()},
        )


class SummaryCollector:
    """
    Per-n consumer: one ExponentSummary per integer, either collected or
    handed to a callback. Single-threaded only.
    """

    def __init__(self, callback: Optional[Callable[[ExponentSummary], None]] = None):
        self.callback = callback
        self.summaries: List[ExponentSummary] = []

    def consume(self, block: ExponentBlock):
        big = block.max_exp.tolist()
        small = block.min_exp.tolist()
        omega = {k: arr.tolist() for k, arr in block.omega.items()}
        omega_a = {label: arr.tolist() for label, arr in block.omega_a.items()}
        for i in range(len(big)):
            summary = ExponentSummary(
                block.lo + i,
                big[i],
                small[i],
                {k: values[i] for k, values in omega.items()},
                {label: values[i] for label, values in omega_a.items()},
            )
            if self.callback:
                self.callback(summary)
            else:
                self.summaries.append(summary)

    def result(self) -> List[ExponentSummary]:
        return self.summaries


def _scan_segment_worker(task: Tuple[int, int, Tuple[int, ...], int]) -> ScanAccumulator:
    lo, hi, ks, prime_limit = task
    block = scan_block(lo, hi, ks, cached_primes(prime_limit))
    acc = ScanAccumulator(ks=ks)
    acc.consume(block)
    return acc


class ScanEngine:
    """
    Drives segmented scans: plans segments, dispatches them inline or on a
    process pool, takes snapshots at checkpoints and persists resumable state.
    """

    def __init__(
        self,
        segment_length: int = DEFAULT_SEGMENT_LENGTH,
        workers: int = 1,
        progress: bool = False,
        checkpoint_every: int = 16,
    ):
        if segment_length < 1:
            raise ValueError(f"segment_length must be positive, got {segment_length}")
        if workers < 1:
            raise ValueError(f"workers must be positive, got {workers}")
        self.segment_length = segment_length
        self.workers = workers
        self.progress = progress
        self.checkpoint_every = max(1, checkpoint_every)
        self.logger = logging.getLogger(__name__)

    def plan_segments(self, lo: int, hi: int, cuts: Iterable[int] = ()) -> List[Tuple[int, int]]:
        """Split [lo, hi] into segments of at most segment_length, ending at every cut."""
        boundaries = sorted({c for c in cuts if lo <= c < hi} | {hi})
        segments = []
        start = lo
        for end in boundaries:
            while start <= end:
                stop = min(end, start + self.segment_length - 1)
                segments.append((start, stop))
                start = stop + 1
        return segments

    def run(
        self,
        lo: int,
        hi: int,
        ks: Iterable[int] = (),
        consumer: Optional[Any] = None,
        checkpoints: Iterable[int] = (),
        checkpoint_path: Optional[Path] = None,
    ) -> Tuple[Any, Dict[int, ScanAccumulator]]:
        """
        Scan [lo, hi] into consumer (a fresh ScanAccumulator by default).

        Returns:
            (consumer.result(), {x: accumulator snapshot after n = x})
            Snapshots are only taken for accumulator consumers.
        """
        if lo < 1 or hi < lo:
            raise ValueError(f"Scan range must satisfy 1 <= lo <= hi, got [{lo}, {hi}]")
        ks = tuple(sorted(set(ks)))
        if any(k < 2 for k in ks):
            raise ValueError(f"omega_k needs k >= 2, got {ks}")
        checkpoints = sorted(set(checkpoints))
        bad = [x for x in checkpoints if not lo <= x <= hi]
        if bad:
            raise ValueError(f"Checkpoints outside [{lo}, {hi}]: {bad}")

        consumer = consumer if consumer is not None else ScanAccumulator(ks=ks)
        is_accumulator = isinstance(consumer, ScanAccumulator)
        if is_accumulator and consumer.ks != ks:
            raise ValueError(f"Accumulator ks {consumer.ks} do not match scan ks {ks}")

        segments = self.plan_segments(lo, hi, checkpoints)
        snapshots: Dict[int, ScanAccumulator] = {}
        next_start = lo

        if checkpoint_path is not None:
            if not is_accumulator:
                raise ValueError("Checkpoint files need an accumulator consumer")
            state = self._load_checkpoint(Path(checkpoint_path), lo, hi, ks, checkpoints)
            if state is not None:
                restored = ScanAccumulator.from_dict(state["accumulator"])
                consumer.merge(restored)
                snapshots = {int(x): ScanAccumulator.from_dict(s) for x, s in state["snapshots"].items()}
                next_start = int(state["next"])
                self.logger.info(f"♻️  Resuming scan of [{lo}, {hi}] at n = {next_start}")

        pending = [seg for seg in segments if seg[0] >= next_start]
        checkpoint_set = set(checkpoints)
        prime_limit = math.isqrt(hi)
        parallel = self.workers > 1 and hasattr(consumer, "merge") and len(pending) > 1
        if self.workers > 1 and not parallel:
            self.logger.debug("Running scan inline (per-n consumer or single segment)")

        self.logger.info(f"Scanning [{lo}, {hi}] in {len(pending)} segments with {self.workers if parallel else 1} worker(s)")
        bar = tqdm(total=len(pending), disable=not self.progress, file=sys.stderr, unit="seg")

        def fold(index: int, segment: Tuple[int, int], partial: Optional[ScanAccumulator]):
            if partial is not None:
                consumer.merge(partial)
            if is_accumulator and segment[1] in checkpoint_set:
                snapshots[segment[1]] = consumer.copy()
            bar.update(1)
            if checkpoint_path is not None and (index + 1) % self.checkpoint_every == 0:
                self._write_checkpoint(Path(checkpoint_path), lo, hi, ks, checkpoints, segment[1] + 1, consumer, snapshots, False)

        try:
            if parallel:
                tasks = [(a, b, ks, prime_limit) for a, b in pending]
                with ProcessPoolExecutor(max_workers=self.workers) as pool:
                    for index, (segment, partial) in enumerate(zip(pending, pool.map(_scan_segment_worker, tasks))):
                        fold(index, segment, partial)
            else:
                base = cached_primes(prime_limit)
                for index, (a, b) in enumerate(pending):
                    consumer.consume(scan_block(a, b, ks, base))
                    fold(index, (a, b), None)
        finally:
            bar.close()

        if checkpoint_path is not None:
            self._write_checkpoint(Path(checkpoint_path), lo, hi, ks, checkpoints, hi + 1, consumer, snapshots, True)
        self.logger.info(f"✅ Scan of [{lo}, {hi}] complete")
        return consumer.result(), snapshots

    def _write_checkpoint(self, path: Path, lo, hi, ks, checkpoints, next_start, acc, snapshots, complete: bool):
        payload = {
            "version": CHECKPOINT_VERSION,
            "lo": lo,
            "hi": hi,
            "ks": list(ks),
            "checkpoints": list(checkpoints),
            "segment_length": self.segment_length,
            "next": next_start,
            "complete": complete,
            "accumulator": acc.to_dict(),
            "snapshots": {str(x): snapshots[x].to_dict() for x in sorted(snapshots)},
        }
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(payload, f, sort_keys=True)
        os.replace(tmp, path)
        self.logger.debug(f"Checkpoint written: next n = {next_start}")

    def _load_checkpoint(self, path: Path, lo, hi, ks, checkpoints) -> Optional[Dict[str, Any]]:
        if not path.exists():
            return None
        with open(path, "r", encoding="utf-8") as f:
            state = json.load(f)
        expected = {
            "lo": lo,
            "hi": hi,
            "ks": list(ks),
            "checkpoints": list(checkpoints),
            "segment_length": self.segment_length,
        }
        for key, value in expected.items():
            if state.get(key) != value:
                raise ValueError(f"Checkpoint {path} was written for {key}={state.get(key)}, not {value}")
        return state


def create_scan_engine(config: Optional[Dict[str, Any]] = None) -> ScanEngine:
    config = config or {}
    scan = config.get("scan", {})
    return ScanEngine(
        segment_length=int(scan.get("segment_length", DEFAULT_SEGMENT_LENGTH)),
        workers=int(config.get("workers", scan.get("workers", 1))),
        progress=bool(config.get("verbose", False)),
        checkpoint_every=int(scan.get("checkpoint_every", 16)),
    )


def segmented_scan(
    lo: int,
    hi: int,
    ks: Iterable[int] = (),
    consumer: Optional[Any] = None,
    segment_length: int = DEFAULT_SEGMENT_LENGTH,
    workers: int = 1,
) -> Any:
    """Scan [lo, hi] into consumer and return its aggregate state."""
    engine = ScanEngine(segment_length=segment_length, workers=workers)
    result, _ = engine.run(lo, hi, ks, consumer)
    return result


def scan_checkpoints(
    xs: Iterable[int],
    ks: Iterable[int] = (),
    segment_length: int = DEFAULT_SEGMENT_LENGTH,
    workers: int = 1,
    progress: bool = False,
    checkpoint_path: Optional[Path] = None,
) -> Dict[int, ScanAccumulator]:
    """One pass over [1, max(xs)] with an accumulator snapshot at every x."""
    xs = sorted(set(xs))
    if not xs:
        raise ValueError("Need at least one checkpoint")
    engine = ScanEngine(segment_length=segment_length, workers=workers, progress=progress)
    _, snapshots = engine.run(1, xs[-1], ks, None, checkpoints=xs, checkpoint_path=checkpoint_path)
    return snapshots

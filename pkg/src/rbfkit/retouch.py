"""Bit clearing procedures that turn a Bloom filter into a retouched one.

Randomized clearing resets uniformly chosen set bits.  The selective
procedures walk an ordered set of troublesome keys (false positives to
remove) and clear one of each key's own cells, choosing it either at
random, by minimum member count (fewest false negatives), by maximum
troublesome count (most false positives), or by the minimum ratio of the
two.  The standard variants deliberately keep their counting vectors stale
between clearings; the improved variants track exact residual contents
with per-cell element lists and so make better-informed choices.

Every selection call rebuilds its vectors from scratch (nothing is cached
across calls), so with B troublesome keys, A members and k hash functions
the running costs are O(k*|B|) for random and max-FP selection, O(k*(|A| +
|B|)) for min-FN selection, and O(k*(|A| + |B|) + m) for ratio selection;
the improved variants match their standard counterparts, except improved
ratio selection, which refreshes its m-cell ratio vector after each
clearing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .filters import BloomFilter, HashFamily


class InsufficientSetBitsError(ValueError):
    """Asked to clear more random bits than the filter has set."""


@dataclass(frozen=True)
class TroublesomeSet:
    """Ordered distinct keys targeted for removal; order drives clearing."""

    keys: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.keys)) != len(self.keys):
            raise ValueError("troublesome keys must be distinct")

    @classmethod
    def from_keys(cls, keys, sort: bool = True) -> "TroublesomeSet":
        keys = [int(k) for k in keys]
        if sort:
            keys.sort()
        return cls(keys=tuple(keys))

    def __len__(self) -> int:
        return len(self.keys)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.keys, dtype=np.uint64)


@dataclass(frozen=True)
class ClearingOutcome:
    """Counts produced by one clearing run.

    side_removed (false positives outside the target set that also died)
    and generated_fn (members turned false negative) need the false
    positive set and member set to compute, so they start as None and are
    filled by resolve_outcome.
    """

    bits_reset: int
    removed_troublesome: int
    side_removed: Optional[int] = None
    generated_fn: Optional[int] = None


def _as_troublesome(troublesome) -> TroublesomeSet:
    if isinstance(troublesome, TroublesomeSet):
        return troublesome
    return TroublesomeSet.from_keys(troublesome)


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def counting_vector(family: HashFamily, keys, m: int) -> np.ndarray:
    """Per-cell counts of how many of the keys hash into each cell."""
    keys = np.asarray(keys, dtype=np.uint64)
    if keys.size == 0:
        return np.zeros(m, dtype=np.int64)
    return np.bincount(family.positions_many(keys).ravel(), minlength=m)


class ElementListVector:
    """Per-cell lists of the keys recorded there, with cascading removal.

    Clearing a cell removes every key listed in it from all of that key's
    cells, so later size queries reflect true residual contents.  Duplicate
    entries (a key hashing twice into one cell) are kept, matching the
    counting vector a fresh build would produce.
    """

    __slots__ = ("m", "cells", "sizes", "_cell_map")

    def __init__(self, family: HashFamily, keys, m: int):
        self.m = m
        self.cells: list[list[int]] = [[] for _ in range(m)]
        self._cell_map: dict[int, tuple[int, ...]] = {}
        keys = np.asarray(keys, dtype=np.uint64)
        if keys.size:
            rows = family.positions_many(keys)
            for key, row in zip(keys.tolist(), rows.tolist()):
                self._cell_map[key] = tuple(row)
                for cell in row:
                    self.cells[cell].append(key)
        self.sizes = np.array([len(c) for c in self.cells], dtype=np.int64)

    def bit_clearing(self, index: int) -> None:
        """Remove every key listed at `index` from all of its cells."""
        for key in list(self.cells[index]):
            cells = self._cell_map.pop(key, None)
            if cells is None:
                continue  # duplicate entry of a key already removed
            for cell in set(cells):
                lst = self.cells[cell]
                before = len(lst)
                lst[:] = [other for other in lst if other != key]
                self.sizes[cell] -= before - len(lst)

    def occupancy(self) -> float:
        """Fraction of cells holding at least one key."""
        return float((self.sizes > 0).sum()) / self.m

    def mean_list_length(self) -> float:
        """Average entries per nonempty cell (0 for an all-empty vector)."""
        filled = int((self.sizes > 0).sum())
        return float(self.sizes.sum()) / filled if filled else 0.0


def compute_ratio_vector(
    bits: np.ndarray, v_a: np.ndarray, v_b: np.ndarray, out: np.ndarray | None = None
) -> np.ndarray:
    """Ratio v_a/v_b where the bit is set and v_b is positive; NaN elsewhere.

    When `out` is given, cells failing the guard keep their previous value
    (they go stale rather than being reset), matching the update discipline
    of the ratio-driven procedures.
    """
    if out is None:
        out = np.full(bits.shape[0], np.nan)
    mask = bits & (v_b > 0)
    out[mask] = v_a[mask] / v_b[mask]
    return out


def _positive_rows(filt: BloomFilter, keys: np.ndarray):
    """Yield (index, position row) for keys still testing positive, in order."""
    if keys.size == 0:
        return
    rows = filt.positions_many(keys)
    bits = filt.bits
    for i in range(keys.shape[0]):
        row = rows[i]
        if bits[row].all():
            yield i, row


def _run_selective(filt: BloomFilter, keys: np.ndarray, step) -> ClearingOutcome:
    """Drive one selective pass; `step(i, row)` clears a cell for key i.

    removed_troublesome counts targeted keys that flipped from positive to
    negative over the whole pass, whether cleared at their own turn or as a
    side effect of an earlier clearing.
    """
    pre = int(filt.contains_many(keys).sum()) if keys.size else 0
    bits_reset = 0
    for i, row in _positive_rows(filt, keys):
        step(i, row)
        bits_reset += 1
    post = int(filt.contains_many(keys).sum()) if keys.size else 0
    return ClearingOutcome(bits_reset=bits_reset, removed_troublesome=pre - post)


def _weight_keys(troublesome: TroublesomeSet, fp_universe) -> np.ndarray:
    """Keys feeding the false positive counting vector.

    The selection heuristics weight cells by the false positives recorded
    there.  By default that is the troublesome set itself; callers that
    know the full false positive set pass it here, which multiplies the
    side-removal yield of the max-FP and ratio heuristics when the
    troublesome set is a small sample (the chosen cells then drag down
    dense clusters of untargeted false positives too).
    """
    if fp_universe is None:
        return troublesome.as_array()
    return np.asarray(fp_universe, dtype=np.uint64)


def _argmin_cell(values: np.ndarray, row: np.ndarray, m: int) -> int:
    # Encode (value, cell) so ties break toward the lowest cell index.
    enc = values.astype(np.int64) * (m + 1) + row
    return int(enc.min() % (m + 1))


def _argmax_cell(values: np.ndarray, row: np.ndarray, m: int) -> int:
    enc = values.astype(np.int64) * (m + 1) + (m - row)
    return m - int(enc.max() % (m + 1))


def _min_ratio_cell(ratio: np.ndarray, row, bits: np.ndarray) -> int:
    """Lowest-ratio cell of `row` whose bit is set and ratio is defined.

    Falls back to the lowest-index set cell when every candidate ratio is
    undefined (unreachable for keys that still test positive, but kept
    deterministic regardless).
    """
    best_cell = -1
    best = math.inf
    fallback = -1
    for cell in sorted({int(c) for c in row}):
        if not bits[cell]:
            continue
        if fallback < 0:
            fallback = cell
        val = ratio[cell]
        if not math.isnan(val) and val < best:
            best = val
            best_cell = cell
    return best_cell if best_cell >= 0 else fallback


def randomized_clearing(filt: BloomFilter, s: int, rng) -> ClearingOutcome:
    """Reset s distinct set bits chosen uniformly without replacement."""
    rng = _as_rng(rng)
    set_indices = np.flatnonzero(filt.bits)
    if s > set_indices.size:
        raise InsufficientSetBitsError(
            f"cannot clear {s} bits, only {set_indices.size} are set"
        )
    if s > 0:
        chosen = rng.choice(set_indices, size=s, replace=False)
        filt.bits[chosen] = False
    return ClearingOutcome(bits_reset=int(s), removed_troublesome=0)


def random_selection(filt: BloomFilter, troublesome, rng) -> ClearingOutcome:
    """Clear one uniformly chosen cell of each still-positive troublesome key.

    One uniform slot in [0, k) is pre-drawn per key (a single generator
    call), so duplicate positions carry double weight, as k independent
    uniform hashes imply.
    """
    troublesome = _as_troublesome(troublesome)
    rng = _as_rng(rng)
    keys = troublesome.as_array()
    slots = rng.integers(0, filt.k, size=keys.shape[0]) if keys.size else []
    bits = filt.bits

    def step(i, row):
        bits[int(row[slots[i]])] = False

    return _run_selective(filt, keys, step)


def min_fn_selection(filt: BloomFilter, members, troublesome) -> ClearingOutcome:
    """Clear the cell holding the fewest members among each key's k cells.

    The member counting vector is built once and only zeroed at cleared
    cells, never globally refreshed, so later choices see increasingly
    stale counts.  That staleness is part of the procedure's contract; see
    improved_min_fn_selection for the live-updated variant.
    """
    troublesome = _as_troublesome(troublesome)
    keys = troublesome.as_array()
    v_a = counting_vector(filt.family, members, filt.m)
    bits = filt.bits
    m = filt.m

    def step(_, row):
        cell = _argmin_cell(v_a[row], row, m)
        bits[cell] = False
        v_a[cell] = 0

    return _run_selective(filt, keys, step)


def max_fp_selection(
    filt: BloomFilter, troublesome, fp_universe=None
) -> ClearingOutcome:
    """Clear the cell recording the most false positives at each step."""
    troublesome = _as_troublesome(troublesome)
    keys = troublesome.as_array()
    v_b = counting_vector(filt.family, _weight_keys(troublesome, fp_universe), filt.m)
    bits = filt.bits
    m = filt.m

    def step(_, row):
        cell = _argmax_cell(v_b[row], row, m)
        bits[cell] = False
        v_b[cell] = 0

    return _run_selective(filt, keys, step)


def ratio_selection(
    filt: BloomFilter, members, troublesome, fp_universe=None
) -> ClearingOutcome:
    """Clear the cell minimizing the members-per-false-positive ratio.

    Combines the two counting heuristics: the ratio vector r = v_a/v_b is
    computed once up front, and cleared cells are zeroed in all three
    vectors without a global recompute.
    """
    troublesome = _as_troublesome(troublesome)
    keys = troublesome.as_array()
    v_a = counting_vector(filt.family, members, filt.m)
    v_b = counting_vector(filt.family, _weight_keys(troublesome, fp_universe), filt.m)
    bits = filt.bits
    ratio = compute_ratio_vector(bits, v_a, v_b)

    def step(_, row):
        cell = _min_ratio_cell(ratio, row, bits)
        bits[cell] = False
        v_a[cell] = 0
        v_b[cell] = 0
        ratio[cell] = 0.0

    return _run_selective(filt, keys, step)


def improved_min_fn_selection(
    filt: BloomFilter, members, troublesome
) -> ClearingOutcome:
    """min_fn_selection with exact bookkeeping via an element-list vector.

    Clearing a cell removes every member recorded there from all of its
    cells, so later argmin decisions count only members that would newly
    become false negatives.
    """
    troublesome = _as_troublesome(troublesome)
    keys = troublesome.as_array()
    v_a = ElementListVector(filt.family, members, filt.m)
    bits = filt.bits
    m = filt.m

    def step(_, row):
        cell = _argmin_cell(v_a.sizes[row], row, m)
        v_a.bit_clearing(cell)
        bits[cell] = False

    return _run_selective(filt, keys, step)


def improved_max_fp_selection(
    filt: BloomFilter, troublesome, fp_universe=None
) -> ClearingOutcome:
    """max_fp_selection with exact bookkeeping via an element-list vector."""
    troublesome = _as_troublesome(troublesome)
    keys = troublesome.as_array()
    v_b = ElementListVector(
        filt.family, _weight_keys(troublesome, fp_universe), filt.m
    )
    bits = filt.bits
    m = filt.m

    def step(_, row):
        cell = _argmax_cell(v_b.sizes[row], row, m)
        v_b.bit_clearing(cell)
        bits[cell] = False

    return _run_selective(filt, keys, step)


def improved_ratio_selection(
    filt: BloomFilter, members, troublesome, fp_universe=None
) -> ClearingOutcome:
    """ratio_selection with live element-list vectors.

    Both vectors are updated after every clearing and the ratio vector is
    recomputed each time; cells failing the recompute guard keep their
    previous (stale) value rather than being unset.
    """
    troublesome = _as_troublesome(troublesome)
    keys = troublesome.as_array()
    v_a = ElementListVector(filt.family, members, filt.m)
    v_b = ElementListVector(
        filt.family, _weight_keys(troublesome, fp_universe), filt.m
    )
    bits = filt.bits
    ratio = compute_ratio_vector(bits, v_a.sizes, v_b.sizes)

    def step(_, row):
        cell = _min_ratio_cell(ratio, row, bits)
        v_a.bit_clearing(cell)
        v_b.bit_clearing(cell)
        bits[cell] = False
        ratio[cell] = 0.0
        compute_ratio_vector(bits, v_a.sizes, v_b.sizes, out=ratio)

    return _run_selective(filt, keys, step)


def resolve_outcome(
    outcome: ClearingOutcome,
    after: BloomFilter,
    troublesome,
    fp_keys,
    members,
) -> ClearingOutcome:
    """Fill in side_removed and generated_fn by rescanning the cleared filter."""
    troublesome = _as_troublesome(troublesome)
    fp_keys = np.asarray(fp_keys, dtype=np.uint64)
    members = np.asarray(members, dtype=np.uint64)
    if fp_keys.size and len(troublesome):
        others = fp_keys[~np.isin(fp_keys, troublesome.as_array())]
    else:
        others = fp_keys
    side = (
        int(others.size) - int(after.contains_many(others).sum())
        if others.size
        else 0
    )
    gen_fn = (
        int(members.size) - int(after.contains_many(members).sum())
        if members.size
        else 0
    )
    return replace(outcome, side_removed=side, generated_fn=gen_fn)


ALGORITHMS = {
    "randomized": randomized_clearing,
    "random_sel": random_selection,
    "min_fn": min_fn_selection,
    "max_fp": max_fp_selection,
    "ratio": ratio_selection,
    "improved_min_fn": improved_min_fn_selection,
    "improved_max_fp": improved_max_fp_selection,
    "improved_ratio": improved_ratio_selection,
}

SELECTIVE_ALGORITHMS = tuple(a for a in ALGORITHMS if a != "randomized")
_NEEDS_MEMBERS = frozenset({"min_fn", "ratio", "improved_min_fn", "improved_ratio"})
_TAKES_FP_UNIVERSE = frozenset(
    {"max_fp", "ratio", "improved_max_fp", "improved_ratio"}
)


def run_clearing(
    algorithm: str,
    filt: BloomFilter,
    troublesome=None,
    members: Sequence[int] | np.ndarray | None = None,
    rng=None,
    s: int | None = None,
    fp_universe=None,
) -> ClearingOutcome:
    """Dispatch a clearing procedure by name with the arguments it needs."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if algorithm == "randomized":
        if s is None:
            raise ValueError("randomized clearing needs s")
        return randomized_clearing(filt, s, rng)
    if algorithm == "random_sel":
        return random_selection(filt, troublesome, rng)
    args = [filt]
    if algorithm in _NEEDS_MEMBERS:
        if members is None:
            raise ValueError(f"{algorithm} needs the member set")
        args.append(members)
    args.append(troublesome)
    if algorithm in _TAKES_FP_UNIVERSE:
        return ALGORITHMS[algorithm](*args, fp_universe=fp_universe)
    return ALGORITHMS[algorithm](*args)

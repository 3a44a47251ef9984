"""Two-level tile cache: per-device residency with LRU eviction, a global
directory for peer (L2) hits, host fallback, and transfer statistics.

Input tiles are immutable, so there is nothing to invalidate; "coherence"
reduces to a residency directory.  The directory is one logically shared
structure; a single lock makes every public operation atomic with respect
to every other, which is all the runtime's correctness argument needs.

Hit taxonomy for a requesting accelerator:

* L1 hit  -- tile already resident locally; free.
* L2 hit  -- tile resident on a peer; copied from the closest peer by hop
  count into the requester's cache (peer bytes).
* miss    -- tile resident nowhere; fetched from host memory (host bytes).

Host workers never appear in the directory: their tiles are host tiles,
so every request they make is a free host fetch.  With ``enabled=False``
the directory degrades to "always fetch from host", which is the
baseline for measuring how much traffic the protocol removes.
"""

from __future__ import annotations

import threading
from collections import Counter, OrderedDict, defaultdict
from dataclasses import dataclass, field, fields
from enum import Enum

from .devices import HOST, Machine, closest_owner
from .tiles import TileKey


class CapacityError(RuntimeError):
    """A device cannot hold a task's working set (everything is pinned)."""


class HitLevel(Enum):
    L1 = "l1"
    L2 = "l2"
    MISS = "miss"


@dataclass(frozen=True)
class LookupResult:
    level: HitLevel
    owner: int | None = None  # set for L2 hits only


@dataclass(frozen=True)
class AcquireResult:
    """Outcome of resolving one input tile for one device."""

    level: HitLevel
    source: object  # device id the bytes came from, or HOST
    nbytes_moved: int
    evicted: tuple = ()


@dataclass
class CacheStats:
    l1_hits: int = 0
    l2_hits: int = 0
    host_fetches: int = 0
    bytes_host: int = 0
    bytes_peer: int = 0
    evictions: int = 0
    writebacks: int = 0
    bytes_writeback: int = 0

    def copy(self) -> "CacheStats":
        return CacheStats(**self.as_dict())

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def __sub__(self, other: "CacheStats") -> "CacheStats":
        return CacheStats(
            **{f.name: getattr(self, f.name) - getattr(other, f.name) for f in fields(self)}
        )

    @property
    def input_requests(self) -> int:
        return self.l1_hits + self.l2_hits + self.host_fetches


class CacheDirectory:
    """Global tile residency map plus per-device LRU order and pin counts.

    ``policy`` picks the eviction victim order: ``"lru"`` (default,
    recency refreshed on every hit) or ``"fifo"`` (insertion order).
    ``debug=True`` re-checks the structural invariants after every
    mutating operation.
    """

    def __init__(self, machine: Machine, enabled: bool = True, policy: str = "lru",
                 debug: bool = False):
        if policy not in ("lru", "fifo"):
            raise ValueError(f"unknown eviction policy {policy!r}")
        self.machine = machine
        self.enabled = enabled
        self.policy = policy
        self.debug = debug
        self._lock = threading.Lock()
        self._residency: dict[TileKey, set[int]] = defaultdict(set)
        self._order: dict[int, OrderedDict] = {}   # per device: key -> None, LRU last
        self._pins: dict[int, Counter] = {}
        self._capacity: dict[int, int | None] = {}
        self._stats = CacheStats()
        self._dev_stats: dict[int, CacheStats] = {}
        for d in machine.devices:
            self._order[d.device_id] = OrderedDict()
            self._pins[d.device_id] = Counter()
            self._capacity[d.device_id] = d.capacity_tiles
            self._dev_stats[d.device_id] = CacheStats()

    # -- directory primitives -------------------------------------------

    def lookup(self, requester: int, key: TileKey) -> LookupResult:
        """Classify a request without moving anything.  Refreshes LRU
        recency on an L1 hit; never mutates residency."""
        with self._lock:
            return self._lookup_locked(requester, key)

    def _lookup_locked(self, requester: int, key: TileKey) -> LookupResult:
        owners = self._residency.get(key)
        if owners and requester in owners:
            if self.policy == "lru":
                self._order[requester].move_to_end(key)
            return LookupResult(HitLevel.L1)
        if owners:
            return LookupResult(
                HitLevel.L2, closest_owner(requester, owners, self.machine.proximity)
            )
        return LookupResult(HitLevel.MISS)

    def admit(self, device: int, key: TileKey) -> list[TileKey]:
        """Make ``key`` resident on ``device``; returns the evicted keys.

        Evictions follow the configured policy, never touch pinned tiles,
        and remove exactly enough to respect the device's capacity.
        Raises :class:`CapacityError` (leaving the directory unchanged)
        when every resident tile is pinned.
        """
        with self._lock:
            return self._admit_locked(device, key)

    def _admit_locked(self, device: int, key: TileKey) -> list[TileKey]:
        order = self._order[device]
        if key in order:
            raise ValueError(f"{key} already resident on device {device}")
        cap = self._capacity[device]
        evicted: list[TileKey] = []
        if cap is not None and len(order) >= cap:
            pins = self._pins[device]
            need = len(order) + 1 - cap
            victims = [k for k in order if pins[k] == 0][:need]
            if len(victims) < need:
                raise CapacityError(
                    f"device {device}: capacity {cap} exhausted and all resident "
                    f"tiles pinned; working set does not fit"
                )
            for v in victims:
                del order[v]
                self._residency[v].discard(device)
                if not self._residency[v]:
                    del self._residency[v]
                evicted.append(v)
            self._stats.evictions += len(victims)
            self._dev_stats[device].evictions += len(victims)
        order[key] = None
        self._residency[key].add(device)
        if self.debug:
            self._check_invariants_locked()
        return evicted

    def pin(self, device: int, key: TileKey) -> None:
        with self._lock:
            if key not in self._order[device]:
                raise ValueError(f"cannot pin {key}: not resident on device {device}")
            self._pins[device][key] += 1

    def unpin(self, device: int, key: TileKey) -> None:
        with self._lock:
            self._unpin_locked(device, key)

    def _unpin_locked(self, device: int, key: TileKey) -> None:
        pins = self._pins[device]
        if pins[key] < 1:
            raise ValueError(f"unpin below zero for {key} on device {device}")
        pins[key] -= 1
        if pins[key] == 0:
            del pins[key]

    def is_pinned(self, device: int, key: TileKey) -> bool:
        with self._lock:
            return self._pins[device][key] > 0

    def residents(self, device: int) -> list[TileKey]:
        with self._lock:
            return list(self._order[device])

    # -- the runtime-facing composite operations ------------------------
    #
    # Resolving an input tile is lookup + transfer accounting + admit +
    # pin.  Doing it under one lock acquisition makes the whole step
    # linearizable, which is what keeps the hit counters exact even with
    # racing worker threads (e.g. two devices missing on the same tile at
    # the same instant still produce exactly one host fetch).

    def acquire_input(self, requester: int, key: TileKey, nbytes: int) -> AcquireResult:
        dev = self.machine.device(requester)
        with self._lock:
            gs, ds = self._stats, self._dev_stats[requester]
            if dev.is_host_worker:
                # host tiles are already local: a fetch in name only,
                # coherence on or off
                gs.host_fetches += 1
                ds.host_fetches += 1
                return AcquireResult(HitLevel.MISS, HOST, 0)
            if not self.enabled:
                gs.host_fetches += 1
                ds.host_fetches += 1
                gs.bytes_host += nbytes
                ds.bytes_host += nbytes
                return AcquireResult(HitLevel.MISS, HOST, nbytes)
            res = self._lookup_locked(requester, key)
            if res.level is HitLevel.L1:
                gs.l1_hits += 1
                ds.l1_hits += 1
                self._pins[requester][key] += 1
                return AcquireResult(HitLevel.L1, requester, 0)
            if res.level is HitLevel.L2:
                gs.l2_hits += 1
                ds.l2_hits += 1
                gs.bytes_peer += nbytes
                ds.bytes_peer += nbytes
                evicted = self._admit_locked(requester, key)
                self._pins[requester][key] += 1
                return AcquireResult(HitLevel.L2, res.owner, nbytes, tuple(evicted))
            gs.host_fetches += 1
            ds.host_fetches += 1
            gs.bytes_host += nbytes
            ds.bytes_host += nbytes
            evicted = self._admit_locked(requester, key)
            self._pins[requester][key] += 1
            return AcquireResult(HitLevel.MISS, HOST, nbytes, tuple(evicted))

    def release_input(self, device: int, key: TileKey) -> None:
        if not self.enabled or self.machine.device(device).is_host_worker:
            return
        with self._lock:
            self._unpin_locked(device, key)

    def admit_output(self, device: int, key: TileKey) -> list[TileKey]:
        """Reserve a pinned residency slot for an output tile being built."""
        if not self.enabled or self.machine.device(device).is_host_worker:
            return []
        with self._lock:
            evicted = self._admit_locked(device, key)
            self._pins[device][key] += 1
            return evicted

    def release_output(self, device: int, key: TileKey, nbytes: int) -> None:
        """Output tile written back to host: unpin, drop residency, count
        the writeback traffic.  Not an eviction (it is a completion)."""
        if not self.enabled or self.machine.device(device).is_host_worker:
            return
        with self._lock:
            self._unpin_locked(device, key)
            del self._order[device][key]
            self._residency[key].discard(device)
            if not self._residency[key]:
                del self._residency[key]
            self._stats.writebacks += 1
            self._stats.bytes_writeback += nbytes
            ds = self._dev_stats[device]
            ds.writebacks += 1
            ds.bytes_writeback += nbytes
            if self.debug:
                self._check_invariants_locked()

    # -- observability ---------------------------------------------------

    def stats(self) -> CacheStats:
        with self._lock:
            return self._stats.copy()

    def stats_per_device(self) -> dict[int, CacheStats]:
        with self._lock:
            return {d: s.copy() for d, s in self._dev_stats.items()}

    def used_tiles(self, device: int) -> int:
        with self._lock:
            return len(self._order[device])

    def check_invariants(self) -> None:
        with self._lock:
            self._check_invariants_locked()

    def _check_invariants_locked(self) -> None:
        per_dev = Counter()
        for key, owners in self._residency.items():
            assert owners, f"{key} has an empty owner set"
            for d in owners:
                per_dev[d] += 1
                assert key in self._order[d], f"{key} in residency but not in order[{d}]"
        for d, order in self._order.items():
            assert len(order) == per_dev[d], f"order/residency disagree on device {d}"
            cap = self._capacity[d]
            assert cap is None or len(order) <= cap, f"device {d} over capacity"
            for key, count in self._pins[d].items():
                assert count > 0, f"non-positive pin count for {key} on {d}"
                assert key in order, f"pinned tile {key} not resident on {d}"

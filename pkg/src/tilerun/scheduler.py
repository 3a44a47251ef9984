"""Task planning and the two execution engines.

One task per output tile; the task's inner loop walks the contraction
dimension in ascending order, resolving each input tile through the
cache directory and accumulating with the fixed-order kernel.  Because
every output tile has exactly one owner and the accumulation order is
fixed, the numerical result is bit-identical across device counts,
steal interleavings, and engine choice.

Engines:

* ``sim`` -- deterministic discrete-event replay.  Each device has a
  compute engine and a transfer engine; within a task the fetch for the
  next contraction step overlaps the current compute.  The device whose
  compute engine frees earliest claims the next task (demand-driven
  work sharing), so faster devices naturally pull more work.
* ``threaded`` -- one real worker thread per device, sharing the global
  queue, the directory, and each other's reservation stations.  Wall
  clock replaces simulated time; all counters stay exact because the
  shared structures are linearizable.

Work stealing in both engines: a device whose station is empty and who
has just observed an empty global queue removes one reserved task from
the most-loaded peer station (ties to the lowest device id).
"""

from __future__ import annotations

import csv
import heapq
import json
import threading
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .coherence import AcquireResult, CacheDirectory, CacheStats
from .devices import HOST, DeviceSpec, Machine, compute_cost, transfer_cost
from .msqueue import MichaelScottQueue
from .tiles import (
    TiledMatrix,
    TileKey,
    accumulate_product,
    decode_task,
    partition,
    reassemble,
)

SCHEMA_VERSION = 1


class TaskState(Enum):
    QUEUED = "queued"
    RESERVED = "reserved"
    RUNNING = "running"
    DONE = "done"


@dataclass
class Task:
    task_id: int
    row: int
    col: int
    k_steps: int
    state: TaskState = TaskState.QUEUED


class Completion:
    """Exactly-once execution bitmap; marking a task twice is an error."""

    def __init__(self, n_tasks: int):
        self._done = [False] * n_tasks
        self._count = 0
        self._lock = threading.Lock()

    def mark(self, task_id: int) -> None:
        with self._lock:
            if self._done[task_id]:
                raise RuntimeError(f"task {task_id} executed twice")
            self._done[task_id] = True
            self._count += 1

    def all_done(self) -> bool:
        with self._lock:
            return self._count == len(self._done)

    @property
    def done_count(self) -> int:
        with self._lock:
            return self._count

    def snapshot(self) -> list[bool]:
        with self._lock:
            return list(self._done)


@dataclass
class Operand:
    """A tiled matrix as seen by the planner, optionally transposed.

    Transposition is a view mapping: tile (i, k) of the transposed
    operand is tile (k, i) of the stored one, and the cache key names the
    stored coordinates.  The same tiles therefore keep the same identity
    whether a pass reads the matrix straight or transposed, which is what
    lets the cache see reuse between the two.
    """

    tiled: TiledMatrix
    uid: str
    transposed: bool = False

    @property
    def grid_rows(self) -> int:
        return self.tiled.grid_cols if self.transposed else self.tiled.grid_rows

    @property
    def grid_cols(self) -> int:
        return self.tiled.grid_rows if self.transposed else self.tiled.grid_cols

    @property
    def element_shape(self) -> tuple[int, int]:
        r, c = self.tiled.shape
        return (c, r) if self.transposed else (r, c)

    def tile_view(self, i: int, j: int) -> np.ndarray:
        if self.transposed:
            return self.tiled.tile(j, i).T
        return self.tiled.tile(i, j)

    def key(self, i: int, j: int) -> TileKey:
        r, c = (j, i) if self.transposed else (i, j)
        return TileKey(self.uid, r, c)

    def tile_nbytes(self, i: int, j: int, element_bytes: int) -> int:
        r, c = self.tile_view(i, j).shape
        return r * c * element_bytes


def _as_operand(x, uid: str) -> Operand:
    if isinstance(x, Operand):
        return x
    return Operand(x, uid)


@dataclass
class Plan:
    a: Operand
    b: Operand
    c: Operand
    tile_size: int
    grid_rows: int
    grid_cols: int
    k_steps: int
    tasks: list[Task]
    queue: MichaelScottQueue
    completion: Completion

    @property
    def total_tasks(self) -> int:
        return len(self.tasks)


def plan(a, b, a_uid: str = "A", b_uid: str = "B", c_uid: str = "C") -> Plan:
    """Build one task per output tile and enqueue them all (row-major).

    The output is allocated as zeros and partitioned with the operands'
    tile size.
    """
    a = _as_operand(a, a_uid)
    b = _as_operand(b, b_uid)
    if a.tiled.tile_size != b.tiled.tile_size:
        raise ValueError(
            f"tile sizes differ: {a.tiled.tile_size} vs {b.tiled.tile_size}"
        )
    am, ak = a.element_shape
    bk, bn = b.element_shape
    if ak != bk:
        raise ValueError(f"inner dimensions differ: {a.element_shape} x {b.element_shape}")
    t = a.tiled.tile_size
    out = partition(np.zeros((am, bn), dtype=a.tiled.base.dtype), t)
    c = Operand(out, c_uid)
    grid_rows, grid_cols = c.grid_rows, c.grid_cols
    k_steps = a.grid_cols
    assert k_steps == b.grid_rows  # forced by equal element dims and tile size
    queue = MichaelScottQueue()
    tasks = []
    for tid in range(grid_rows * grid_cols):
        i, j = decode_task(tid, grid_cols, grid_rows)
        tasks.append(Task(tid, i, j, k_steps))
        queue.enqueue(tid)
    return Plan(
        a=a, b=b, c=c, tile_size=t,
        grid_rows=grid_rows, grid_cols=grid_cols, k_steps=k_steps,
        tasks=tasks, queue=queue, completion=Completion(len(tasks)),
    )


class ReservationStation:
    """Fixed-width buffer of upcoming task ids for one device.

    The owner serves slots FIFO; a thief removes from the opposite end.
    One lock serializes owner, thieves, and refills, so a task is
    obtained by exactly one of them.
    """

    def __init__(self, owner: int, width: int):
        self.owner = owner
        self.width = width
        self._slots: list[int] = []
        self._lock = threading.Lock()

    def refill(self, queue: MichaelScottQueue) -> list[int]:
        """Fill empty slots from the global queue; returns the ids taken."""
        pulled = []
        with self._lock:
            while len(self._slots) < self.width:
                tid = queue.dequeue()
                if tid is None:
                    break
                self._slots.append(tid)
                pulled.append(tid)
        return pulled

    def pop_for_run(self) -> int | None:
        with self._lock:
            return self._slots.pop(0) if self._slots else None

    def try_steal(self) -> int | None:
        with self._lock:
            return self._slots.pop() if self._slots else None

    def reserved_count(self) -> int:
        with self._lock:
            return len(self._slots)


def steal_task(thief: int, stations: dict[int, ReservationStation]) -> tuple[int | None, int | None]:
    """Steal one reserved task: victim is the most-loaded station, ties to
    the lowest device id.  Returns (task_id, victim) or (None, None)."""
    counts = [(s.reserved_count(), did) for did, s in stations.items() if did != thief]
    for count, victim in sorted(counts, key=lambda cv: (-cv[0], cv[1])):
        if count == 0:
            break
        tid = stations[victim].try_steal()
        if tid is not None:
            return tid, victim
    return None, None


@dataclass
class StealEvent:
    thief: int
    victim: int
    task_id: int
    queue_empty_observed: bool
    time: float | None = None


@dataclass
class DeviceStats:
    device_id: int
    kind: str
    tasks_completed: int = 0
    steals_performed: int = 0
    steals_suffered: int = 0


@dataclass
class RunStats:
    mode: str
    tile_size: int
    grid_rows: int
    grid_cols: int
    k_steps: int
    total_tasks: int
    steal_enabled: bool
    coherence_enabled: bool
    seed: int | None
    devices: dict[int, DeviceStats]
    cache: CacheStats
    cache_per_device: dict[int, CacheStats]
    makespan: float | None
    wall_elapsed: float
    steal_events: list[StealEvent] = field(default_factory=list)

    @property
    def tasks_by_device(self) -> dict[int, int]:
        return {d: s.tasks_completed for d, s in self.devices.items()}

    def to_report_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "mode": self.mode,
            "tile_size": self.tile_size,
            "grid": {
                "rows": self.grid_rows,
                "cols": self.grid_cols,
                "k_steps": self.k_steps,
            },
            "total_tasks": self.total_tasks,
            "steal": self.steal_enabled,
            "coherence": self.coherence_enabled,
            "seed": self.seed,
            "makespan": self.makespan,
            "wall_elapsed": self.wall_elapsed,
            "steals": len(self.steal_events),
            "devices": [
                {
                    "device_id": s.device_id,
                    "kind": s.kind,
                    "tasks_completed": s.tasks_completed,
                    "steals_performed": s.steals_performed,
                    "steals_suffered": s.steals_suffered,
                }
                for s in self.devices.values()
            ],
            "cache": {
                **self.cache.as_dict(),
                "per_device": {
                    str(d): s.as_dict() for d, s in self.cache_per_device.items()
                },
            },
        }


def write_report_json(stats: RunStats, path) -> None:
    with open(path, "w") as f:
        json.dump(stats.to_report_dict(), f, indent=2)
        f.write("\n")


_CSV_FIELDS = [
    "device_id", "kind", "tasks_completed", "steals_performed", "steals_suffered",
    "l1_hits", "l2_hits", "host_fetches", "bytes_host", "bytes_peer",
    "evictions", "writebacks", "bytes_writeback",
]


def write_report_csv(stats: RunStats, path) -> None:
    """One row per device plus a summary row."""
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=_CSV_FIELDS)
        w.writeheader()
        for did, ds in sorted(stats.devices.items()):
            cs = stats.cache_per_device.get(did, CacheStats())
            w.writerow({
                "device_id": did, "kind": ds.kind,
                "tasks_completed": ds.tasks_completed,
                "steals_performed": ds.steals_performed,
                "steals_suffered": ds.steals_suffered,
                **{k: v for k, v in cs.as_dict().items() if k in _CSV_FIELDS},
            })
        w.writerow({
            "device_id": "total", "kind": "",
            "tasks_completed": sum(d.tasks_completed for d in stats.devices.values()),
            "steals_performed": sum(d.steals_performed for d in stats.devices.values()),
            "steals_suffered": sum(d.steals_suffered for d in stats.devices.values()),
            **{k: v for k, v in stats.cache.as_dict().items() if k in _CSV_FIELDS},
        })


# -- task execution ------------------------------------------------------


def _fetch_time(machine: Machine, device: int, res: AcquireResult) -> float:
    return transfer_cost(machine, res.source, device, res.nbytes_moved)


def _execute_task(machine: Machine, plan_: Plan, directory: CacheDirectory,
                  dev: DeviceSpec, task: Task):
    """Run one task to completion on ``dev``.

    Per contraction step: resolve both input tiles through the directory
    (pinning them for the duration of the step), accumulate into the
    output tile, unpin.  The output tile stays pinned on the device for
    the whole task, then is written back to host and released.

    Returns ``(steps, writeback)`` where ``steps`` is a list of
    (fetch_time, compute_time) pairs and ``writeback`` the final
    transfer time, all in simulated units.
    """
    did = dev.device_id
    eb = machine.element_bytes
    task.state = TaskState.RUNNING
    i, j = task.row, task.col
    c_key = plan_.c.key(i, j)
    c_view = plan_.c.tile_view(i, j)
    directory.admit_output(did, c_key)
    sub = dev.subtile_factor if dev.is_host_worker else 1
    steps = []
    for k in range(task.k_steps):
        a_key, b_key = plan_.a.key(i, k), plan_.b.key(k, j)
        ra = directory.acquire_input(did, a_key, plan_.a.tile_nbytes(i, k, eb))
        rb = directory.acquire_input(did, b_key, plan_.b.tile_nbytes(k, j, eb))
        fetch = _fetch_time(machine, did, ra) + _fetch_time(machine, did, rb)
        a_view = plan_.a.tile_view(i, k)
        b_view = plan_.b.tile_view(k, j)
        accumulate_product(a_view, b_view, c_view, sub_blocks=sub)
        compute = compute_cost(dev, a_view.shape, b_view.shape)
        directory.release_input(did, a_key)
        directory.release_input(did, b_key)
        steps.append((fetch, compute))
    wb_bytes = c_view.size * eb
    writeback = transfer_cost(machine, did, HOST, wb_bytes)
    directory.release_output(did, c_key, wb_bytes)
    plan_.completion.mark(task.task_id)
    task.state = TaskState.DONE
    return steps, writeback


# -- engines --------------------------------------------------------------


class _Engines:
    """Per-device compute and transfer timelines for the sim engine."""

    __slots__ = ("compute", "transfer")

    def __init__(self):
        from .devices import Clock

        self.compute = Clock()
        self.transfer = Clock()

    @property
    def now(self) -> float:
        return max(self.compute.now, self.transfer.now)


def _run_sim(machine, plan_, directory, engines, dstats, events, steal_enabled):
    stations = {d.device_id: ReservationStation(d.device_id, d.slots)
                for d in machine.devices}
    heap = [(engines[d.device_id].compute.now, d.device_id) for d in machine.devices]
    heapq.heapify(heap)
    while heap:
        t, did = heapq.heappop(heap)
        st = stations[did]
        for tid in st.refill(plan_.queue):
            plan_.tasks[tid].state = TaskState.RESERVED
        tid = st.pop_for_run()
        if tid is None:
            if steal_enabled and plan_.queue.is_empty():
                tid, victim = steal_task(did, stations)
                if tid is not None:
                    events.append(StealEvent(did, victim, tid, True, time=t))
                    dstats[did].steals_performed += 1
                    dstats[victim].steals_suffered += 1
            if tid is None:
                continue  # queue drained, nothing stealable: device retires
        task = plan_.tasks[tid]
        steps, wb = _execute_task(machine, plan_, directory, machine.device(did), task)
        eng = engines[did]
        tr, co = eng.transfer.now, eng.compute.now
        tr = max(tr, t)  # transfers for this task cannot predate claiming it
        for fetch, compute in steps:
            tr += fetch
            co = max(co, tr) + compute  # fetch k+1 overlaps compute k
        tr = max(tr, co) + wb  # writeback waits for the last accumulate
        eng.transfer.advance_to(tr)
        eng.compute.advance_to(co)
        dstats[did].tasks_completed += 1
        heapq.heappush(heap, (co, did))


def _run_threaded(machine, plan_, directory, dstats, events, steal_enabled,
                  poll_sleep=50e-6):
    stations = {d.device_id: ReservationStation(d.device_id, d.slots)
                for d in machine.devices}
    shared_lock = threading.Lock()
    abort = threading.Event()
    errors: list[BaseException] = []

    def worker(dev: DeviceSpec):
        did = dev.device_id
        st = stations[did]
        while not abort.is_set():
            for tid in st.refill(plan_.queue):
                plan_.tasks[tid].state = TaskState.RESERVED
            tid = st.pop_for_run()
            victim = None
            if tid is None:
                if not plan_.queue.is_empty():
                    continue  # raced with producers of nothing; re-refill
                if steal_enabled:
                    tid, victim = steal_task(did, stations)
                if tid is None:
                    if plan_.completion.all_done():
                        return
                    time.sleep(poll_sleep)
                    continue
            if victim is not None:
                with shared_lock:
                    events.append(StealEvent(did, victim, tid, True))
                    dstats[did].steals_performed += 1
                    dstats[victim].steals_suffered += 1
            try:
                _execute_task(machine, plan_, directory, dev, plan_.tasks[tid])
            except BaseException as exc:  # surface worker failures to the caller
                with shared_lock:
                    errors.append(exc)
                abort.set()
                return
            dstats[did].tasks_completed += 1

    threads = [
        threading.Thread(target=worker, args=(d,), name=f"device-{d.device_id}")
        for d in machine.devices
    ]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if errors:
        raise errors[0]


# -- the runtime ----------------------------------------------------------


class Runtime:
    """A session: one machine, one directory, any number of products.

    Device clocks and cache residency persist across ``multiply`` calls,
    so back-to-back products (e.g. the passes of a training step) see
    each other's cached tiles.  Per-call statistics are deltas against
    the session counters.
    """

    def __init__(self, machine: Machine, tile_size: int, mode: str = "sim",
                 steal: bool = True, coherence: bool = True, seed: int | None = None,
                 directory_debug: bool = False):
        if mode not in ("sim", "threaded"):
            raise ValueError(f"unknown mode {mode!r}")
        if tile_size < 1:
            raise ValueError(f"tile_size must be >= 1, got {tile_size}")
        self.machine = machine
        self.tile_size = tile_size
        self.mode = mode
        self.steal = steal
        self.coherence = coherence
        self.seed = seed
        self.directory = CacheDirectory(machine, enabled=coherence, debug=directory_debug)
        self.engines = {d.device_id: _Engines() for d in machine.devices}
        self._uid_n = 0

    def fresh_uid(self, prefix: str = "m") -> str:
        self._uid_n += 1
        return f"{prefix}#{self._uid_n}"

    def sim_now(self) -> float:
        return max(e.now for e in self.engines.values())

    def operand(self, m, uid: str | None = None, transposed: bool = False) -> Operand:
        tiled = m if isinstance(m, TiledMatrix) else partition(m, self.tile_size)
        return Operand(tiled, uid or self.fresh_uid(), transposed)

    def multiply(self, a, b, transpose_a: bool = False, transpose_b: bool = False,
                 a_uid: str | None = None, b_uid: str | None = None,
                 c_uid: str | None = None):
        """Full scheduled product; returns ``(result, RunStats)``.

        Operands may be dense arrays, :class:`TiledMatrix`, or prebuilt
        :class:`Operand` values (which already carry their transposition).
        """
        if isinstance(a, Operand) and transpose_a or isinstance(b, Operand) and transpose_b:
            raise ValueError("transposition of an Operand is fixed at construction")
        a_op = a if isinstance(a, Operand) else self.operand(a, a_uid, transpose_a)
        b_op = b if isinstance(b, Operand) else self.operand(b, b_uid, transpose_b)
        plan_ = plan(a_op, b_op, c_uid=c_uid or self.fresh_uid("c"))
        dstats = {
            d.device_id: DeviceStats(d.device_id, d.kind) for d in self.machine.devices
        }
        events: list[StealEvent] = []
        cache_before = self.directory.stats()
        dev_cache_before = self.directory.stats_per_device()
        sim_before = self.sim_now()
        t0 = time.perf_counter()
        if self.mode == "sim":
            _run_sim(self.machine, plan_, self.directory, self.engines,
                     dstats, events, self.steal)
        else:
            _run_threaded(self.machine, plan_, self.directory,
                          dstats, events, self.steal)
        wall = time.perf_counter() - t0
        if not plan_.completion.all_done():
            raise RuntimeError(
                f"run incomplete: {plan_.completion.done_count}/{plan_.total_tasks} tasks"
            )
        cache_after = self.directory.stats()
        dev_cache_after = self.directory.stats_per_device()
        stats = RunStats(
            mode=self.mode,
            tile_size=self.tile_size,
            grid_rows=plan_.grid_rows,
            grid_cols=plan_.grid_cols,
            k_steps=plan_.k_steps,
            total_tasks=plan_.total_tasks,
            steal_enabled=self.steal,
            coherence_enabled=self.coherence,
            seed=self.seed,
            devices=dstats,
            cache=cache_after - cache_before,
            cache_per_device={
                d: dev_cache_after[d] - dev_cache_before[d] for d in dev_cache_after
            },
            makespan=(self.sim_now() - sim_before) if self.mode == "sim" else None,
            wall_elapsed=wall,
            steal_events=events,
        )
        return reassemble(plan_.c.tiled), stats


def run(machine: Machine, a, b, tile_size: int, mode: str = "sim",
        steal: bool = True, coherence: bool = True, seed: int | None = None,
        directory_debug: bool = False):
    """One-shot product of two dense matrices through the full runtime."""
    rt = Runtime(machine, tile_size, mode=mode, steal=steal, coherence=coherence,
                 seed=seed, directory_debug=directory_debug)
    return rt.multiply(a, b, a_uid="A", b_uid="B", c_uid="C")

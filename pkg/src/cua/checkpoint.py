"""Trace-driven cluster simulator for comparing checkpointing models.

A workload of batch tasks runs FCFS (first fit, no backfilling) on a
homogeneous cluster. Each failure event in a CUA trace takes down
``floor(severity * hosts)`` hosts for its duration; tasks on those hosts roll
back to their last completed snapshot and are requeued. A task that fails
more than ``max_failures`` times is terminated.

Snapshots are taken after every ``interval`` seconds of work since the last
saved position (never at completion). A snapshot occupies the task for
``snapshot_cost`` seconds and saves the position at which it began; a failure
during a snapshot discards it.
"""
from __future__ import annotations

import enum
import heapq
import math
import statistics
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .traceio import CuaTrace, FailureEvent

MAX_FAILURES = 10
J_PER_KWH = 3.6e6

# event priorities at equal timestamps
_RECOVER, _TASK, _FAIL, _ARRIVE = range(4)


class SimulationHorizonError(RuntimeError):
    pass


class InvariantViolation(RuntimeError):
    pass


class CarbonCoverageError(ValueError):
    pass


@dataclass(frozen=True)
class Task:
    id: str
    submit_time: float
    duration: float
    cores: int = 1

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError(f"task {self.id}: duration must be positive")
        if self.cores < 1:
            raise ValueError(f"task {self.id}: cores must be >= 1")
        if self.submit_time < 0:
            raise ValueError(f"task {self.id}: submit_time must be >= 0")


@dataclass(frozen=True)
class ClusterConfig:
    hosts: int
    cores_per_host: int
    idle_watts: float = 100.0
    max_watts: float = 250.0

    def __post_init__(self):
        if self.hosts < 1 or self.cores_per_host < 1:
            raise ValueError("hosts and cores_per_host must be >= 1")
        if not 0 <= self.idle_watts <= self.max_watts:
            raise ValueError("require 0 <= idle_watts <= max_watts")


class ModelKind(enum.Enum):
    NONE = "none"
    FIXED = "fixed"
    ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class CheckpointModel:
    kind: ModelKind = ModelKind.NONE
    interval: float | None = None  # fixed interval, or the initial adaptive interval
    growth: float = 1.0
    snapshot_cost: float = 60.0
    max_interval: float | None = None

    def __post_init__(self):
        if self.kind is not ModelKind.NONE and not (self.interval and self.interval > 0):
            raise ValueError(f"{self.kind.value} model needs a positive interval")
        if self.growth < 1:
            raise ValueError("growth must be >= 1")
        if self.snapshot_cost < 0:
            raise ValueError("snapshot_cost must be >= 0")

    @classmethod
    def none(cls, snapshot_cost: float = 60.0) -> "CheckpointModel":
        return cls(ModelKind.NONE, snapshot_cost=snapshot_cost)

    @classmethod
    def fixed(cls, interval: float, snapshot_cost: float = 60.0) -> "CheckpointModel":
        return cls(ModelKind.FIXED, interval, snapshot_cost=snapshot_cost)

    @classmethod
    def adaptive(
        cls, initial: float = 600.0, growth: float = 1.5, snapshot_cost: float = 60.0, max_interval=None
    ) -> "CheckpointModel":
        return cls(ModelKind.ADAPTIVE, initial, growth, snapshot_cost, max_interval)

    @classmethod
    def parse(cls, text: str, snapshot_cost: float = 60.0) -> "CheckpointModel":
        """``none``, ``fixed:<seconds>`` or ``adaptive:<initial>[:<growth>[:<cap>]]``."""
        parts = text.strip().lower().split(":")
        try:
            if parts[0] == "none" and len(parts) == 1:
                return cls.none(snapshot_cost)
            if parts[0] == "fixed" and len(parts) == 2:
                return cls.fixed(float(parts[1]), snapshot_cost)
            if parts[0] == "adaptive" and 1 <= len(parts) <= 4:
                nums = [float(p) for p in parts[1:]]
                initial = nums[0] if nums else 600.0
                growth = nums[1] if len(nums) > 1 else 1.5
                cap = nums[2] if len(nums) > 2 else None
                return cls.adaptive(initial, growth, snapshot_cost, cap)
        except ValueError as exc:
            raise ValueError(f"invalid checkpoint model {text!r}: {exc}") from None
        raise ValueError(f"invalid checkpoint model {text!r}")

    @property
    def name(self) -> str:
        if self.kind is ModelKind.NONE:
            return "none"
        if self.kind is ModelKind.FIXED:
            return f"fixed:{self.interval:g}"
        name = f"adaptive:{self.interval:g}:{self.growth:g}"
        return name + (f":{self.max_interval:g}" if self.max_interval else "")


DEFAULT_MODELS = (
    CheckpointModel.none(),
    CheckpointModel.fixed(600),
    CheckpointModel.fixed(3600),
    CheckpointModel.fixed(36000),
    CheckpointModel.fixed(86400),
    CheckpointModel.adaptive(600, 1.5),
)


@dataclass(frozen=True)
class FailureInjection:
    """Failure events relative to the first failure, replayed cyclically.

    ``period`` is the wrap-around length; by default the trace span plus the
    mean gap between failures (no wrap-around for single-event traces).
    """

    events: tuple[FailureEvent, ...]
    period: float | None = None

    @classmethod
    def from_trace(cls, trace: CuaTrace | list, period: float | None = None) -> "FailureInjection":
        events = tuple(trace.events if isinstance(trace, CuaTrace) else trace)
        if period is None and len(events) >= 2:
            span = events[-1].end - events[0].start
            gaps = [b.start - a.end for a, b in zip(events, events[1:])]
            period = span + sum(gaps) / len(gaps)
            if period <= span:
                period = span + max(1.0, span / len(events))
        return cls(events, period)

    @property
    def span(self) -> float:
        if not self.events:
            return 0.0
        return float(self.events[-1].end - self.events[0].start)

    def offsets(self, count: int = 5) -> list[float]:
        """``count`` evenly spaced starting points within one trace cycle."""
        length = self.period or self.span
        return [i * length / count for i in range(count)]

    def schedule(self, offset: float, horizon: float) -> list[tuple[float, float, float]]:
        """Failures in simulation time overlapping ``[0, horizon]``, clipped at 0."""
        if not self.events:
            return []
        t0 = self.events[0].start
        rel = [(e.start - t0, e.end - t0, e.severity) for e in self.events]
        out = []
        cycles = 1 if not self.period else int(math.ceil((horizon + offset) / self.period)) + 1
        for c in range(cycles):
            shift = c * (self.period or 0.0) - offset
            for s, e, sev in rel:
                s, e = s + shift, e + shift
                if e <= 0:
                    continue
                if s > horizon:
                    break
                out.append((max(0.0, s), e, sev))
        return out


@dataclass(frozen=True)
class CarbonTrace:
    """Piecewise-constant grid intensity (gCO2/kWh) starting at each epoch."""

    epochs: tuple[int, ...]
    intensity: tuple[float, ...]

    def __post_init__(self):
        if not self.epochs or len(self.epochs) != len(self.intensity):
            raise ValueError("carbon trace needs matching, non-empty epochs and intensities")
        if any(b <= a for a, b in zip(self.epochs, self.epochs[1:])):
            raise ValueError("carbon trace epochs must be strictly increasing")

    @property
    def end(self) -> float:
        if len(self.epochs) == 1:
            return self.epochs[0] + 3600
        return self.epochs[-1] + (self.epochs[-1] - self.epochs[-2])


class _CarbonIntegrator:
    def __init__(self, trace: CarbonTrace | None, constant: float | None, origin: float | None):
        self.constant = constant
        self.trace = trace
        if trace is not None:
            self.origin = float(trace.epochs[0] if origin is None else origin)
            edges = np.array(trace.epochs + (trace.end,), dtype=float) - self.origin
            self.edges = edges
            self.values = np.array(trace.intensity, dtype=float)
            self.cum = np.concatenate([[0.0], np.cumsum(np.diff(edges) * self.values)])
        self.missing = []

    def _cumulative(self, t):
        e = self.edges
        if t < e[0]:
            return (t - e[0]) * self._outside(t)
        if t > e[-1]:
            return self.cum[-1] + (t - e[-1]) * self._outside(t)
        k = min(int(np.searchsorted(e, t, side="right")) - 1, self.values.size - 1)
        return self.cum[k] + (t - e[k]) * self.values[k]

    def _outside(self, t):
        if self.constant is None:
            self.missing.append(t)
            return 0.0
        return self.constant

    def integral(self, t0, t1) -> float:
        """Integral of intensity over [t0, t1) in (gCO2/kWh) * s."""
        if t1 <= t0:
            return 0.0
        if self.trace is None:
            return (self.constant or 0.0) * (t1 - t0)
        return self._cumulative(t1) - self._cumulative(t0)


@dataclass(frozen=True)
class FailureRecord:
    task_id: str
    time: float
    host: int
    progress: float
    saved: float
    partial_snapshot: float
    lost: float
    interval: float | None
    failure_number: int


@dataclass
class TaskRecord:
    id: str
    submit_time: float
    duration: float
    cores: int
    completion: float | None = None
    terminated: bool = False
    failures: int = 0
    snapshots: int = 0
    compute_time: float = 0.0
    lost_work: float = 0.0
    saved: float = 0.0
    first_start: float | None = None


@dataclass
class SimLog:
    model: CheckpointModel
    tasks: dict[str, TaskRecord] = field(default_factory=dict)
    failures: list[FailureRecord] = field(default_factory=list)
    host_failures: list[tuple[float, float, tuple[int, ...]]] = field(default_factory=list)


@dataclass(frozen=True)
class SimReport:
    runtime: float
    mean_task_delay: float
    tasks_terminated: int
    energy: float
    carbon: float
    tasks_completed: int = 0
    task_failures: int = 0
    log: SimLog | None = field(default=None, compare=False, repr=False)

    def metrics(self) -> dict:
        return {
            "runtime": self.runtime,
            "mean_task_delay": self.mean_task_delay,
            "tasks_terminated": self.tasks_terminated,
            "energy": self.energy,
            "carbon": self.carbon,
        }


@dataclass
class _Run:
    task: Task
    host: int
    seg_start: float
    phase: str  # "work" or "snap"
    phase_start: float
    progress: float
    next_snap: float
    interval: float | None
    token: int


def theoretical_makespan(workload, cluster: ClusterConfig) -> float:
    if not workload:
        return 0.0
    latest = max(t.submit_time + t.duration for t in workload)
    first = min(t.submit_time for t in workload)
    work = sum(t.duration * t.cores for t in workload) / (cluster.hosts * cluster.cores_per_host)
    return max(latest, first + work)


class _Simulator:
    def __init__(self, workload, cluster, failures, model, carbon, seed, offset,
                 horizon_factor, max_failures, requeue_front):
        self.tasks = sorted(workload, key=lambda t: t.submit_time)
        for t in self.tasks:
            if t.cores > cluster.cores_per_host:
                raise ValueError(
                    f"task {t.id} needs {t.cores} cores but hosts have {cluster.cores_per_host}"
                )
        self.cluster = cluster
        self.model = model
        self.carbon = carbon
        self.max_failures = max_failures
        self.requeue_front = requeue_front
        self.horizon = horizon_factor * theoretical_makespan(self.tasks, cluster)
        self.failures = failures.schedule(offset, self.horizon) if failures else []
        self.rng = np.random.default_rng(seed)

        self.free = [cluster.cores_per_host] * cluster.hosts
        self.down = [0] * cluster.hosts
        self.on_host: list[set[str]] = [set() for _ in range(cluster.hosts)]
        self.queue: deque[Task] = deque()
        self.running: dict[str, _Run] = {}
        self.log = SimLog(model)
        self.heap = []
        self.seq = 0
        self.tokens = 0
        self.busy = 0
        self.now = 0.0
        self.energy = 0.0
        self.carbon_g = 0.0
        self.resolved = 0
        self._intervals: dict[str, float | None] = {}

    def push(self, time, prio, kind, payload):
        self.seq += 1
        heapq.heappush(self.heap, (time, prio, self.seq, kind, payload))

    # power and carbon -------------------------------------------------
    def advance(self, t):
        if t <= self.now:
            return
        c = self.cluster
        power = c.hosts * c.idle_watts + (c.max_watts - c.idle_watts) * self.busy / c.cores_per_host
        dt = t - self.now
        self.energy += power * dt
        self.carbon_g += power * self.carbon.integral(self.now, t) / J_PER_KWH
        self.now = t

    # task progress ----------------------------------------------------
    def _initial_interval(self):
        return None if self.model.kind is ModelKind.NONE else float(self.model.interval)

    def start(self, task, host, t):
        rec = self.log.tasks[task.id]
        if rec.first_start is None:
            rec.first_start = t
        interval = self._intervals.get(task.id, self._initial_interval())
        next_snap = math.inf if interval is None else rec.saved + interval
        run = _Run(task, host, t, "work", t, rec.saved, next_snap, interval, 0)
        self.running[task.id] = run
        self.on_host[host].add(task.id)
        self.free[host] -= task.cores
        self.busy += task.cores
        self._schedule_boundary(run, t)

    def _next_token(self, run):
        # simulator-wide so a killed run's pending events never match its restart
        self.tokens += 1
        run.token = self.tokens
        return run.token

    def _schedule_boundary(self, run, t):
        self._next_token(run)
        target = min(run.task.duration, run.next_snap)
        self.push(t + (target - run.progress), _TASK, "boundary", (run.task.id, run.token, target))

    def on_boundary(self, t, payload):
        tid, token, target = payload
        run = self.running.get(tid)
        if run is None or run.token != token:
            return
        rec = self.log.tasks[tid]
        if run.phase == "work":
            run.progress = target
            if target >= run.task.duration:
                self._release(run)
                rec.compute_time += t - run.seg_start
                rec.saved = run.task.duration
                rec.completion = t
                self.resolved += 1
                return
            run.phase = "snap"
            run.phase_start = t
            self.push(t + self.model.snapshot_cost, _TASK, "boundary", (tid, self._next_token(run), target))
        else:
            rec.saved = run.progress
            rec.snapshots += 1
            if self.model.kind is ModelKind.ADAPTIVE:
                run.interval *= self.model.growth
                if self.model.max_interval:
                    run.interval = min(run.interval, self.model.max_interval)
            self._intervals[tid] = run.interval
            run.next_snap = rec.saved + run.interval
            run.phase = "work"
            run.phase_start = t
            self._schedule_boundary(run, t)

    def _release(self, run):
        del self.running[run.task.id]
        self.on_host[run.host].discard(run.task.id)
        self.free[run.host] += run.task.cores
        self.busy -= run.task.cores

    def kill(self, tid, t):
        run = self.running[tid]
        rec = self.log.tasks[tid]
        if run.phase == "work":
            progress = run.progress + (t - run.phase_start)
            partial = 0.0
        else:
            progress = run.progress
            partial = t - run.phase_start
        lost = (progress - rec.saved) + partial
        self._release(run)
        rec.compute_time += t - run.seg_start
        rec.lost_work += lost
        rec.failures += 1
        self.log.failures.append(
            FailureRecord(tid, t, run.host, progress, rec.saved, partial, lost,
                          run.interval, rec.failures)
        )
        if self.model.kind is ModelKind.ADAPTIVE:
            self._intervals[tid] = float(self.model.interval)
        if rec.failures > self.max_failures:
            rec.terminated = True
            self.resolved += 1
        elif self.requeue_front:
            self.queue.appendleft(run.task)
        else:
            self.queue.append(run.task)

    # cluster ----------------------------------------------------------
    def schedule(self, t):
        while self.queue:
            task = self.queue[0]
            host = next(
                (h for h in range(self.cluster.hosts)
                 if not self.down[h] and self.free[h] >= task.cores),
                None,
            )
            if host is None:
                return
            self.queue.popleft()
            self.start(task, host, t)

    def run(self) -> SimReport:
        for task in self.tasks:
            self.log.tasks[task.id] = TaskRecord(task.id, task.submit_time, task.duration, task.cores)
            self.push(task.submit_time, _ARRIVE, "arrive", task)
        hosts = np.arange(self.cluster.hosts)
        for start, end, sev in self.failures:
            k = int(math.floor(sev * self.cluster.hosts))
            if k == 0:
                continue
            chosen = tuple(int(h) for h in np.sort(self.rng.choice(hosts, size=k, replace=False)))
            self.log.host_failures.append((start, end, chosen))
            self.push(start, _FAIL, "fail", chosen)
            self.push(end, _RECOVER, "recover", chosen)

        n = len(self.tasks)
        while self.resolved < n:
            if not self.heap:
                raise SimulationHorizonError("no pending events but tasks remain unfinished")
            t = self.heap[0][0]
            if t > self.horizon:
                raise SimulationHorizonError(
                    f"{n - self.resolved} of {n} tasks unfinished at the horizon cap "
                    f"t={self.horizon:g}s"
                )
            self.advance(t)
            while self.heap and self.heap[0][0] == t:
                _, _, _, kind, payload = heapq.heappop(self.heap)
                if kind == "arrive":
                    self.queue.append(payload)
                elif kind == "boundary":
                    self.on_boundary(t, payload)
                elif kind == "fail":
                    for h in payload:
                        self.down[h] += 1
                        for tid in sorted(self.on_host[h]):
                            self.kill(tid, t)
                elif kind == "recover":
                    for h in payload:
                        self.down[h] -= 1
            if self.resolved < n:
                self.schedule(t)

        runtime = self.now
        if self.carbon.missing:
            raise CarbonCoverageError(
                f"carbon trace does not cover the simulated horizon (0, {runtime:g}]s; "
                "pass a constant intensity to extend it"
            )
        done = [r for r in self.log.tasks.values() if r.completion is not None]
        delays = [r.completion - r.submit_time - r.duration for r in done]
        return SimReport(
            runtime=runtime,
            mean_task_delay=sum(delays) / len(delays) if delays else 0.0,
            tasks_terminated=sum(r.terminated for r in self.log.tasks.values()),
            energy=self.energy,
            carbon=self.carbon_g,
            tasks_completed=len(done),
            task_failures=len(self.log.failures),
            log=self.log,
        )


def simulate(
    workload,
    cluster: ClusterConfig,
    failures: FailureInjection | CuaTrace | None = None,
    model: CheckpointModel | None = None,
    carbon_trace: CarbonTrace | None = None,
    seed: int = 0,
    trace_offset: float = 0.0,
    constant_intensity: float | None = None,
    carbon_origin: float | None = None,
    horizon_factor: float = 10.0,
    max_failures: int = MAX_FAILURES,
    requeue_front: bool = False,
) -> SimReport:
    """Replay ``workload`` against a failure trace under one checkpointing model.

    Simulation time 0 is aligned with the first failure of the trace shifted
    by ``trace_offset``. Carbon is accounted from ``carbon_trace`` (epoch
    ``carbon_origin`` at time 0, its first epoch by default); beyond its end
    ``constant_intensity`` is used, and without it the run is rejected. With
    neither, carbon is not accounted and reported as 0.
    """
    if isinstance(failures, CuaTrace):
        failures = FailureInjection.from_trace(failures)
    model = model or CheckpointModel.none()
    carbon = _CarbonIntegrator(carbon_trace, constant_intensity, carbon_origin)
    sim = _Simulator(list(workload), cluster, failures, model, carbon, seed, trace_offset,
                     horizon_factor, max_failures, requeue_front)
    return sim.run()


@dataclass(frozen=True)
class BoundReport:
    n_failures: int
    violations: tuple[FailureRecord, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def lost_work_bound_check(log: SimLog) -> BoundReport:
    """Lost work per failure: <= interval + snapshot cost, or the full progress without checkpoints."""
    m = log.model
    bad = []
    for f in log.failures:
        if m.kind is ModelKind.NONE:
            ok = f.lost == f.progress and f.saved == 0
        else:
            ok = f.lost <= f.interval + m.snapshot_cost
        if not ok:
            bad.append(f)
    return BoundReport(len(log.failures), tuple(bad))


def conservation_violations(log: SimLog) -> list[str]:
    """Tasks whose compute time differs from saved work + snapshot time + lost work."""
    cost = log.model.snapshot_cost
    out = []
    for r in log.tasks.values():
        expected = r.saved + r.snapshots * cost + r.lost_work
        if r.completion is not None and r.saved != r.duration:
            out.append(f"{r.id}: completed with saved position {r.saved} != {r.duration}")
        if r.compute_time != expected:
            out.append(f"{r.id}: compute {r.compute_time} != {expected}")
    return out


@dataclass(frozen=True)
class SweepCell:
    workload: str
    trace: str
    model: str
    offsets: tuple[float, ...]
    reports: tuple[SimReport, ...]

    def mean(self) -> dict:
        return {k: statistics.fmean(r.metrics()[k] for r in self.reports) for k in self.reports[0].metrics()}

    def std(self) -> dict:
        if len(self.reports) < 2:
            return {k: 0.0 for k in self.reports[0].metrics()}
        return {k: statistics.stdev(r.metrics()[k] for r in self.reports) for k in self.reports[0].metrics()}


def audit(report: SimReport) -> None:
    """Raise :class:`InvariantViolation` if the run's log breaks conservation or the loss bound."""
    problems = conservation_violations(report.log)
    bound = lost_work_bound_check(report.log)
    problems += [f"{f.task_id}: lost {f.lost}s at t={f.time}" for f in bound.violations]
    if problems:
        raise InvariantViolation("; ".join(problems[:5]))


def _run_cell(args):
    wname, tname, mname, workload, cluster, injection, model, offsets, kwargs = args
    reports = []
    for o in offsets:
        rep = simulate(workload, cluster, injection, model, trace_offset=o, **kwargs)
        audit(rep)
        reports.append(replace(rep, log=None))
    return SweepCell(wname, tname, mname, tuple(offsets), tuple(reports))


def sweep(
    workloads: dict,
    failure_traces: dict,
    models,
    cluster: ClusterConfig,
    offsets: int | list = 5,
    max_workers: int | None = None,
    **kwargs,
) -> list[SweepCell]:
    """Every workload x trace x model, each run from several trace offsets.

    All cells share the seed, so models are compared on identical host
    failures. ``max_workers`` > 1 runs cells in separate processes.
    """
    models = {m.name: m for m in models} if not isinstance(models, dict) else models
    jobs = []
    for wname, workload in workloads.items():
        for tname, trace in failure_traces.items():
            inj = trace if isinstance(trace, FailureInjection) else FailureInjection.from_trace(trace)
            offs = inj.offsets(offsets) if isinstance(offsets, int) else list(offsets)
            for mname, model in models.items():
                jobs.append((wname, tname, mname, list(workload), cluster, inj, model, offs, kwargs))
    if max_workers and max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(_run_cell, jobs))
    return [_run_cell(j) for j in jobs]

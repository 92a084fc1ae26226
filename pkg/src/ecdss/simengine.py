"""Discrete-event simulator of the heterogeneous fork-join storage system.

A class-i job arriving at time t is forked to r_i servers; each sub-task's
service requirement is drawn from that server's own stream.  The job finishes
when its k_i-th sub-task completes, and every other sub-task of the job is
removed on the spot: queued copies are dropped, copies in service are aborted
(the work done so far is lost but still counted as busy time).

Each server runs a power-state machine::

    busy --(queue empty)--> linger --(d_l elapsed)--> low --(work)--> wake --(w_l)--> busy
                              \\--(work)--> busy

Event ties are broken by (time, type rank, server id, sequence number) with
completions first and arrivals last.  Everything random comes from per-purpose
streams keyed by (replication, purpose, index), so a run is a pure function of
(config, seed, replication).

``split_merge=True`` runs the blocking variant used for the upper bound: only
one job is in service system-wide and servers that finished their copy wait
until the job's k-th copy is done.
"""
from __future__ import annotations

import heapq
import json
import math
from array import array
from collections import deque
from dataclasses import dataclass, field
from itertools import count

import numpy as np

from .distributions import Deterministic, Exponential, Pareto, RngStream
from .model import Policy, ValidatedConfig, validate

__all__ = [
    "BUSY",
    "LINGER",
    "LOW",
    "WAKE",
    "PHASE_NAMES",
    "Divergence",
    "PhaseLog",
    "Job",
    "SubTask",
    "RawTrace",
    "Simulator",
    "run",
    "write_trace",
    "read_trace",
]

BUSY, LINGER, LOW, WAKE = 0, 1, 2, 3
PHASE_NAMES = ("busy", "linger", "low", "wake")

# event type ranks, lowest first on ties
EV_COMPLETE, EV_WAKE, EV_LINGER, EV_ARRIVAL = 0, 1, 2, 3

# sub-task states
QUEUED, SERVING, DONE, CANCELLED, HELD = 0, 1, 2, 3, 4

# stream purposes
_SERVICE, _ARRIVAL, _FORK = 0, 1, 2

TRACE_FORMAT = "ecdss-trace"
TRACE_VERSION = 1


class Divergence(RuntimeError):
    """The run outgrew the guard (queue size or simulated time) before finishing."""

    def __init__(self, reason: str, time: float, queued: int, completed: int):
        self.reason, self.time, self.queued, self.completed = reason, time, queued, completed
        super().__init__(f"divergence: {reason} at t={time:.6g} ({queued} sub-tasks queued, {completed} jobs done)")


class PhaseLog:
    """Append-only (phase, start, end) records for one server.

    Adjacent intervals of the same phase are merged and zero-length intervals
    dropped, so a long busy period is one record however many sub-tasks it
    contains.
    """

    __slots__ = ("phases", "starts", "ends")

    def __init__(self):
        self.phases = array("b")
        self.starts = array("d")
        self.ends = array("d")

    def append(self, phase: int, start: float, end: float) -> None:
        if end <= start:
            return
        if self.phases and self.phases[-1] == phase and self.ends[-1] == start:
            self.ends[-1] = end
            return
        self.phases.append(phase)
        self.starts.append(start)
        self.ends.append(end)

    def __len__(self) -> int:
        return len(self.phases)

    def __iter__(self):
        for p, a, b in zip(self.phases, self.starts, self.ends):
            yield PHASE_NAMES[p], a, b

    def as_arrays(self):
        return (
            np.frombuffer(self.phases, dtype=np.int8) if len(self) else np.zeros(0, np.int8),
            np.frombuffer(self.starts, dtype=float) if len(self) else np.zeros(0),
            np.frombuffer(self.ends, dtype=float) if len(self) else np.zeros(0),
        )


class Job:
    __slots__ = ("id", "cls", "arrival", "k", "level", "done", "cancelled", "finish", "tasks")

    def __init__(self, jid, cls, arrival, k, level):
        self.id = jid
        self.cls = cls
        self.arrival = arrival
        self.k = k
        self.level = level
        self.done = 0
        self.cancelled = 0
        self.finish = None
        self.tasks = []


class SubTask:
    __slots__ = ("job", "server", "level", "work", "state", "enqueued")

    def __init__(self, job, server, level, work):
        self.job = job
        self.server = server
        self.level = level
        self.work = work  # remaining service requirement
        self.state = HELD
        self.enqueued = None


class _Server:
    __slots__ = ("id", "levels", "cur", "start", "token", "ltoken", "phase", "since", "log", "rng")

    def __init__(self, sid, nlevels, rng, record):
        self.id = sid
        self.levels = [deque() for _ in range(nlevels)]
        self.cur = None
        self.start = 0.0
        self.token = 0
        self.ltoken = 0
        self.phase = LOW
        self.since = 0.0
        self.log = PhaseLog() if record else None
        self.rng = rng

    def queued_live(self):
        return [st for dq in self.levels for st in dq if st.state == QUEUED]


@dataclass
class RawTrace:
    job_id: np.ndarray
    class_id: np.ndarray
    arrival: np.ndarray
    finish: np.ndarray
    phase_logs: list
    window: tuple  # (start, end) of the measurement window
    arrived: int
    completed: int
    cancelled_subtasks: int
    replication: int = 0
    seed: int = 0
    split_merge: bool = False
    class_ids: tuple = field(default=())

    @property
    def latency(self) -> np.ndarray:
        return self.finish - self.arrival

    def completed_per_class(self) -> dict:
        ids, counts = np.unique(self.class_id, return_counts=True)
        out = {c: 0 for c in self.class_ids}
        out.update({int(i): int(c) for i, c in zip(ids, counts)})
        return out


def _sampler(dist):
    if isinstance(dist, Exponential):
        scale = 1.0 / dist.rate
        return lambda rng: rng.standard_exponential() * scale
    if isinstance(dist, Pareto):
        s_m, inv_a, exp = dist.s_m, 1.0 / dist.alpha, math.exp
        return lambda rng: s_m * exp(rng.standard_exponential() * inv_a)
    if isinstance(dist, Deterministic):
        v = dist.value
        return lambda rng: v
    raise TypeError(f"unsupported distribution {dist!r}")


class Simulator:
    """One replication of one configuration.

    ``arrivals`` replaces the stochastic arrival processes with an explicit
    list of ``(time, class_id)``; the run then ends when all of them have
    finished (or at ``horizon`` if that is later) and no warm-up is dropped.
    ``preemption`` selects how a preempted sub-task continues: ``"resume"``
    keeps its remaining work, ``"restart"`` redraws a fresh requirement.
    """

    def __init__(
        self,
        cfg,
        replication: int = 0,
        *,
        arrivals=None,
        horizon: float | None = None,
        split_merge: bool | None = None,
        preemption: str = "resume",
        record_phases: bool = True,
    ):
        cfg = validate(cfg)
        self.cfg: ValidatedConfig = cfg
        self.replication = replication
        self.split_merge = cfg.sim.split_merge if split_merge is None else split_merge
        if preemption not in ("resume", "restart"):
            raise ValueError(f"unknown preemption mode {preemption!r}")
        self.restart = preemption == "restart"
        self.policy = cfg.policy
        self.preemptive = cfg.policy is Policy.PQ
        n, seed = cfg.n, cfg.sim.seed
        self.n = n
        self.d_l = cfg.power.d_l
        self.w_l = cfg.power.w_l
        self.max_queued = cfg.sim.max_queued
        self.max_time = cfg.sim.max_time

        nlevels = 1 if cfg.policy is Policy.FCFS else cfg.R
        level_of = {ci: (0 if nlevels == 1 else pos) for pos, ci in enumerate(cfg.priority_order)}
        self.cls_k = [c.k for c in cfg.classes]
        self.cls_r = [c.r for c in cfg.classes]
        self.cls_level = [level_of[i] for i in range(cfg.R)]
        self.cls_id = [c.id for c in cfg.classes]
        self.cls_draw = [_sampler(cfg.service_dist(i)) for i in range(cfg.R)]
        self.servers = [_Server(s, nlevels, RngStream(seed, (replication, _SERVICE, s)), record_phases) for s in range(n)]
        self.fork_rng = RngStream(seed, (replication, _FORK, 0))

        self.heap: list = []
        self.seq = count()
        self.now = 0.0
        self.queued = 0
        self.arrived = 0
        self.completed = 0
        self.cancelled = 0
        self.live: dict[int, Job] = {}
        self.central = [deque() for _ in range(nlevels)]  # split-merge job queue
        self.sm_current: Job | None = None

        self.trace_mode = arrivals is not None
        self.horizon = horizon
        if self.trace_mode:
            self.target = len(arrivals)
            self.warmup = 0
            idx = {cid: i for i, cid in enumerate(self.cls_id)}
            for t, cid in sorted(arrivals, key=lambda a: a[0]):
                heapq.heappush(self.heap, (float(t), EV_ARRIVAL, n + idx[cid], next(self.seq), 0))
        else:
            self.target = cfg.sim.horizon_jobs
            self.warmup = cfg.sim.warmup
            self.arr_rng = [RngStream(seed, (replication, _ARRIVAL, i)) for i in range(cfg.R)]
            self.arr_draw = [_sampler(cfg.arrival_dist(i)) for i in range(cfg.R)]
            for i in range(cfg.R):
                self._push(self.arr_draw[i](self.arr_rng[i]), EV_ARRIVAL, n + i, 0)

        for srv in self.servers:
            self._go_idle(srv, 0.0)

        self.window_start = 0.0
        self._rec_id = array("q")
        self._rec_cls = array("q")
        self._rec_arr = array("d")
        self._rec_fin = array("d")

    # -- event plumbing ---------------------------------------------------

    def _push(self, t, kind, sid, tok):
        heapq.heappush(self.heap, (t, kind, sid, next(self.seq), tok))

    def _phase(self, srv, phase, t):
        if srv.log is not None:
            srv.log.append(srv.phase, srv.since, t)
        srv.phase = phase
        srv.since = t

    @property
    def finished(self) -> bool:
        return self.completed >= self.target

    def step(self) -> bool:
        """Process one event; False once the run is over."""
        if self.finished or not self.heap:
            return False
        t, kind, sid, _, tok = heapq.heappop(self.heap)
        if t > self.max_time:
            raise Divergence("simulated time limit", t, self.queued, self.completed)
        self.now = t
        if kind == EV_COMPLETE:
            srv = self.servers[sid]
            if tok == srv.token:
                self.complete_subtask(srv, t)
        elif kind == EV_ARRIVAL:
            self._arrive(sid - self.n, t)
        elif kind == EV_LINGER:
            srv = self.servers[sid]
            if tok == srv.ltoken and srv.phase == LINGER:
                self._phase(srv, LOW, t)
        else:
            self.schedule_next(self.servers[sid], t)
        return True

    def run(self) -> RawTrace:
        step = self.step
        while step():
            pass
        if not self.finished:
            raise RuntimeError("event queue drained before all jobs finished")
        end = self.now
        if self.trace_mode and self.horizon is not None and self.horizon > end:
            # let idle timers play out up to the requested horizon
            while self.heap and self.heap[0][0] <= self.horizon:
                t, kind, sid, _, tok = heapq.heappop(self.heap)
                srv = self.servers[sid]
                if kind == EV_LINGER and tok == srv.ltoken and srv.phase == LINGER:
                    self._phase(srv, LOW, t)
                elif kind == EV_WAKE:
                    self.schedule_next(srv, t)
            end = self.horizon
        for srv in self.servers:
            self._phase(srv, srv.phase, end)
        return RawTrace(
            job_id=np.frombuffer(self._rec_id, dtype=np.int64).copy() if self._rec_id else np.zeros(0, np.int64),
            class_id=np.frombuffer(self._rec_cls, dtype=np.int64).copy() if self._rec_cls else np.zeros(0, np.int64),
            arrival=np.frombuffer(self._rec_arr, dtype=float).copy() if self._rec_arr else np.zeros(0),
            finish=np.frombuffer(self._rec_fin, dtype=float).copy() if self._rec_fin else np.zeros(0),
            phase_logs=[s.log for s in self.servers],
            window=(self.window_start, end),
            arrived=self.arrived,
            completed=self.completed,
            cancelled_subtasks=self.cancelled,
            replication=self.replication,
            seed=self.cfg.sim.seed,
            split_merge=self.split_merge,
            class_ids=tuple(self.cls_id),
        )

    # -- arrivals and forking ---------------------------------------------

    def _arrive(self, ci, t):
        if not self.trace_mode:
            self._push(t + self.arr_draw[ci](self.arr_rng[ci]), EV_ARRIVAL, self.n + ci, 0)
        job = Job(self.arrived, ci, t, self.cls_k[ci], self.cls_level[ci])
        self.arrived += 1
        self.live[job.id] = job
        self.fork(job, t)

    def fork(self, job, t):
        """Create the job's r_i sub-tasks on distinct servers and hand them out."""
        ci = job.cls
        r = self.cls_r[ci]
        targets = range(self.n) if r >= self.n else self.fork_rng.choose(self.n, r)
        draw, servers, level = self.cls_draw[ci], self.servers, job.level
        tasks = job.tasks
        for sid in targets:
            tasks.append(SubTask(job, sid, level, draw(servers[sid].rng)))
        if self.split_merge:
            self._sm_arrive(job, t)
        else:
            for st in tasks:
                self._offer(servers[st.server], st, t)

    def _offer(self, srv, st, t):
        st.state = QUEUED
        st.enqueued = t
        srv.levels[st.level].append(st)
        self.queued += 1
        if self.queued > self.max_queued:
            raise Divergence("queued sub-task limit", t, self.queued, self.completed)
        phase = srv.phase
        if phase == BUSY:
            cur = srv.cur
            if self.preemptive and cur is not None and st.level < cur.level:
                self._suspend(srv, cur, t)
                cur.state = QUEUED
                srv.levels[cur.level].appendleft(cur)
                self.queued += 1
                self.schedule_next(srv, t)
            # an in-service task (or a pending schedule_next) will pick it up
        elif phase == LINGER:
            srv.ltoken += 1
            self.schedule_next(srv, t)
        elif phase == LOW:
            if self.w_l > 0:
                self._phase(srv, WAKE, t)
                self._push(t + self.w_l, EV_WAKE, srv.id, 0)
            else:
                self.schedule_next(srv, t)
        # WAKE: served once the wake-up completes

    def _suspend(self, srv, st, t):
        if self.restart:
            st.work = self.cls_draw[st.job.cls](srv.rng)
        else:
            st.work = max(st.work - (t - srv.start), 0.0)
        srv.cur = None
        srv.token += 1

    # -- service ------------------------------------------------------------

    def schedule_next(self, srv, t):
        """Start the next live sub-task per policy, or begin the idle sequence."""
        for dq in srv.levels:
            while dq:
                st = dq.popleft()
                if st.state != QUEUED:
                    continue  # cancelled while queued
                self.queued -= 1
                st.state = SERVING
                srv.cur = st
                srv.start = t
                srv.token += 1
                heapq.heappush(self.heap, (t + st.work, EV_COMPLETE, srv.id, next(self.seq), srv.token))
                if srv.phase != BUSY:
                    self._phase(srv, BUSY, t)
                return st
        self._go_idle(srv, t)
        return None

    def _go_idle(self, srv, t):
        if self.d_l > 0:
            self._phase(srv, LINGER, t)
            srv.ltoken += 1
            self._push(t + self.d_l, EV_LINGER, srv.id, srv.ltoken)
        else:
            self._phase(srv, LOW, t)

    def complete_subtask(self, srv, t):
        st = srv.cur
        srv.cur = None
        st.state = DONE
        job = st.job
        job.done += 1
        if job.done == job.k:
            self._finish(job, t)
        if srv.cur is None:
            self.schedule_next(srv, t)

    def _finish(self, job, t):
        job.finish = t
        del self.live[job.id]
        self.completed += 1
        c = self.completed
        if c > self.warmup:
            self._rec_id.append(job.id)
            self._rec_cls.append(self.cls_id[job.cls])
            self._rec_arr.append(job.arrival)
            self._rec_fin.append(t)
        elif c == self.warmup:
            self.window_start = t
        aborted = []
        servers = self.servers
        for st in job.tasks:
            s = st.state
            if s == QUEUED:
                st.state = CANCELLED
                self.queued -= 1
            elif s == SERVING:
                st.state = CANCELLED
                srv = servers[st.server]
                srv.cur = None
                srv.token += 1
                aborted.append(srv)
            elif s == HELD:
                st.state = CANCELLED
            else:
                continue
            job.cancelled += 1
            self.cancelled += 1
        if self.split_merge:
            self.sm_current = None
            for dq in self.central:
                if dq:
                    self._sm_dispatch(dq.popleft(), t)
                    break
        for srv in aborted:
            if srv.cur is None:
                self.schedule_next(srv, t)

    # -- split-merge --------------------------------------------------------

    def _sm_arrive(self, job, t):
        cur = self.sm_current
        if cur is None:
            self._sm_dispatch(job, t)
        elif self.preemptive and job.level < cur.level:
            touched = []
            for st in cur.tasks:
                srv = self.servers[st.server]
                if st.state == SERVING:
                    self._suspend(srv, st, t)
                    touched.append(srv)
                elif st.state == QUEUED:
                    srv.levels[st.level].remove(st)
                    self.queued -= 1
                else:
                    continue
                st.state = HELD
            self.central[cur.level].appendleft(cur)
            self._sm_dispatch(job, t)
            for srv in touched:
                if srv.cur is None:
                    self.schedule_next(srv, t)
        else:
            self.central[job.level].append(job)

    def _sm_dispatch(self, job, t):
        self.sm_current = job
        for st in job.tasks:
            if st.state == HELD:
                self._offer(self.servers[st.server], st, t)


def run(cfg, replication: int = 0, **kwargs) -> RawTrace:
    return Simulator(cfg, replication, **kwargs).run()


def write_trace(trace: RawTrace, path) -> None:
    """JSON-lines record file: a header object, then one object per completed job."""
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "format": TRACE_FORMAT,
            "version": TRACE_VERSION,
            "seed": trace.seed,
            "replication": trace.replication,
            "window": list(trace.window),
            "fields": ["job_id", "class_id", "arrival", "finish"],
        }
        fh.write(json.dumps(header) + "\n")
        for rec in zip(trace.job_id.tolist(), trace.class_id.tolist(), trace.arrival.tolist(), trace.finish.tolist()):
            fh.write(json.dumps(rec) + "\n")


def read_trace(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != TRACE_FORMAT or header.get("version") != TRACE_VERSION:
            raise ValueError(f"{path}: not an {TRACE_FORMAT} v{TRACE_VERSION} file")
        rows = [json.loads(line) for line in fh if line.strip()]
    arr = np.array(rows, dtype=float).reshape(-1, 4)
    return {
        "header": header,
        "job_id": arr[:, 0].astype(np.int64),
        "class_id": arr[:, 1].astype(np.int64),
        "arrival": arr[:, 2],
        "finish": arr[:, 3],
    }

"""Controller decision study: two single-hook variants over one web workload.

Each study run executes a fixed episode count through a pool of simulated
actor lanes sharing one verifier queue. The two variants consume the same
telemetry substrate:

* ``hook_a_only`` filters verification samples by validity and staleness at
  first delivery (it never retries); dropped samples terminate their episode
  as failures.
* ``hook_b_only`` keeps every sample, pays the harness retry policy for
  invalid or fault-hit samples, and adapts lane concurrency from queue-wait
  telemetry.

Sample-channel draws (invalid markers, transient missing-terminal faults) and
episode bodies come from substreams keyed by (seed, budget, setting, episode)
only, so the two variants and both backends see paired workloads; outcomes
differ only through hook behavior. Staleness is a version-drift marker set
when a sample's queue wait exceeds the staleness bound, and drift can only
occur under fault-injecting settings, so clean runs never go stale.

All constants here are synthetic calibration, chosen so the stressed surface
weights queue- and tail-sensitive costs; they are not measured claims.
"""

from __future__ import annotations

import heapq
import random
import tempfile
from dataclasses import dataclass, field, replace as dataclasses_replace
from pathlib import Path
from typing import TYPE_CHECKING, Any, Final

from .drivers import (
    DriverRecord,
    HookBConfig,
    SampleMeta,
    SyntheticLlmProfile,
    TelemetryWindow,
    draw_lognormal,
    hook_a_filter,
    hook_b_adjust,
    synthetic_llm_call,
)
from .gate import GateDecision, decide_runset, gate_report, save_gate_outputs
from .manifest import (
    ManifestStore,
    ReleaseRoot,
    TaskManifest,
    freeze_run,
    make_manifest,
    publish_release,
    resolve_manifest,
)
from .report import DecisionStudyReport, StudyGrid, decision_study, save_report_outputs
from .runner import (
    EpisodeSummary,
    EventBuilder,
    RunRecord,
    RunSet,
    build_reward_trajectory,
    make_run_id,
    provenance_for,
    save_runset,
)
from .schema import TimingFields, write_event_log
from .simenv import (
    OperatingSetting,
    TerminalOutcome,
    VerifierQueue,
    env_step,
    init_env,
    setting_for_label,
)

if TYPE_CHECKING:  # pragma: no cover
    from .runner import DriverSpec as DriverSpecLike

STUDY_TASK_ID: Final = "study-web-001"
STUDY_ROOT_ID: Final = "study-root"


@dataclass(frozen=True, slots=True)
class StudyConfig:
    """Default desk-scale grid: 2 backends x 2 seeds x 3 budgets x 2 settings
    x 2 variants = 48 runs."""

    backends: tuple[str, ...] = ("vllm", "sglang")
    backend_latency_scale: dict[str, float] = field(
        default_factory=lambda: {"vllm": 1.0, "sglang": 0.96}
    )
    seeds: tuple[int, ...] = (0, 1)
    budgets: tuple[int, ...] = (5, 7, 9)
    setting_labels: tuple[str, ...] = ("clean", "medium_live_stressed")
    variants: tuple[str, ...] = ("hook_a_only", "hook_b_only")
    episodes_per_run: int = 8
    goal: int = 3
    lanes: int = 4
    lane_stagger_ms: float = 400.0
    hook_b: HookBConfig = field(
        default_factory=lambda: HookBConfig(
            pressure_threshold_ms=50.0, min_conc=2, max_conc=4, step=1
        )
    )
    window_capacity: int = 12
    profile: SyntheticLlmProfile = field(
        default_factory=lambda: SyntheticLlmProfile(
            mean_model_latency_ms=150.0,
            latency_cv=0.3,
            invalid_action_prob=0.08,
            success_bias=0.75,
        )
    )
    verify_base_ms: float = 400.0
    verify_cv: float = 0.2
    verify_servers: int = 2
    sample_invalid_prob: float = 0.15
    stale_after_ms: float = 300.0
    sample_retry_budget: int = 2
    horizons_ms: dict[str, float] = field(
        default_factory=lambda: {"clean": 30_000.0, "medium_live_stressed": 120_000.0}
    )

    def run_retry_budget(self) -> int:
        """Run-level retry allowance the gate checks aggregate retries against."""

        return self.episodes_per_run * (self.sample_retry_budget + 1)

    def grid(self) -> StudyGrid:
        return StudyGrid(
            backends=self.backends,
            seeds=self.seeds,
            budgets=self.budgets,
            settings=self.setting_labels,
            variants=self.variants,
            horizons_ms=dict(self.horizons_ms),
        )


def _substream(*parts: Any) -> random.Random:
    return random.Random(":".join(str(part) for part in parts))


@dataclass(slots=True)
class _Sample:
    episode_id: str
    episode_index: int
    env_status: str
    invalid: bool
    missing_first: bool
    demand_rng: random.Random
    start_ms: float
    steps: int
    attempts: int = 0


@dataclass(slots=True)
class _TimedEvent:
    """Event payload collected during simulation, ordered later by (time, seq)."""

    time_ms: float
    order: int
    kind: str
    episode_id: str
    step_index: int
    timing: TimingFields | None
    payload: dict[str, Any]


class _ControllerRunSim:
    """Discrete-event simulation of one controller run."""

    def __init__(
        self,
        cfg: StudyConfig,
        manifest: TaskManifest,
        setting: OperatingSetting,
        backend: str,
        seed: int,
        budget: int,
        variant: str,
        run_id: str,
    ) -> None:
        self.cfg = cfg
        self.manifest = manifest
        self.setting = setting
        self.backend = backend
        self.seed = seed
        self.budget = budget
        self.variant = variant
        self.run_id = run_id
        self.queue = VerifierQueue(servers=cfg.verify_servers)
        self.window = TelemetryWindow(capacity=cfg.window_capacity)
        self.target = cfg.lanes
        self.idle_lanes: set[int] = set()
        self.pending = list(range(cfg.episodes_per_run))
        self.records: list[_TimedEvent] = []
        self.retry_events = 0
        self._order = 0
        self._heap: list[tuple[float, int, str, tuple]] = []
        self._heap_seq = 0
        self.end_ms = 0.0

    # -- event collection ---------------------------------------------------

    def _record(
        self,
        time_ms: float,
        kind: str,
        episode_id: str = "",
        step_index: int = 0,
        timing: TimingFields | None = None,
        payload: dict[str, Any] | None = None,
    ) -> None:
        self.records.append(
            _TimedEvent(
                time_ms=time_ms,
                order=self._order,
                kind=kind,
                episode_id=episode_id,
                step_index=step_index,
                timing=timing,
                payload=dict(payload or {}),
            )
        )
        self._order += 1
        self.end_ms = max(self.end_ms, time_ms)

    def _schedule(self, time_ms: float, kind: str, args: tuple) -> None:
        heapq.heappush(self._heap, (time_ms, self._heap_seq, kind, args))
        self._heap_seq += 1

    # -- episode body ---------------------------------------------------------

    def _simulate_body(self, episode_index: int, start_ms: float) -> tuple[float, str | None, int]:
        """Steps of one episode starting at ``start_ms``; returns
        (end time, env terminal status or None, steps taken)."""

        cfg = self.cfg
        episode_id = f"{self.run_id}-ep{episode_index:03d}"
        rng = _substream("study-body", self.seed, self.budget, self.setting.label, episode_index)
        env = init_env(self.manifest, self.setting, seed=0, budget=self.budget)
        clock = start_ms
        self._record(
            clock,
            "episode_start",
            episode_id=episode_id,
            payload={"episode_index": episode_index, "goal": env.goal},
        )
        scale = cfg.backend_latency_scale.get(self.backend, 1.0)
        request_index = 0
        retries = 0
        while env.terminal is None and env.step_count < self.budget:
            step_index = env.step_count
            obs = {"task_id": self.manifest.task_id, "step": step_index, "progress": env.solved_progress}
            record, action = synthetic_llm_call(
                obs, cfg.profile, rng, backend_engine=self.backend, policy_version=self.variant
            )
            model_ms = record.model_latency_ms * scale
            self._record(
                clock,
                "model_request_start",
                episode_id=episode_id,
                step_index=step_index,
                payload={"request_index": request_index},
            )
            clock += model_ms
            self._record(
                clock,
                "model_request_end",
                episode_id=episode_id,
                step_index=step_index,
                timing=TimingFields(model_latency_ms=model_ms),
                payload={"request_index": request_index, "model_latency_ms": model_ms},
            )
            request_index += 1
            payload = record.to_payload()
            payload["model_latency_ms"] = model_ms
            self._record(
                clock,
                "action_parsed",
                episode_id=episode_id,
                step_index=step_index,
                timing=TimingFields(model_latency_ms=model_ms),
                payload=payload,
            )
            self._record(
                clock,
                "env_step_start",
                episode_id=episode_id,
                step_index=step_index,
                payload={"action_kind": action.kind},
            )
            outcome = env_step(env, action, self.setting, rng)
            clock += outcome.timing.service_time_ms
            self._record(
                clock,
                "env_step_end",
                episode_id=episode_id,
                step_index=step_index,
                timing=outcome.timing,
                payload={
                    "service_time_ms": outcome.timing.service_time_ms,
                    "progress": env.solved_progress,
                    "fault": outcome.fault,
                },
            )
            if outcome.fault:
                retries += 1
                self.retry_events += 1
                if env.step_count >= self.budget:
                    break
                self._record(
                    clock,
                    "retry",
                    episode_id=episode_id,
                    step_index=step_index,
                    payload={"attempt": retries, "reason": "env_fault", "scope": "step"},
                )
        status = env.terminal.status if env.terminal is not None else None
        return clock, status, env.step_count

    # -- verification lifecycle ----------------------------------------------

    def _submit(self, time_ms: float, lane: int, sample: _Sample) -> None:
        demand = draw_lognormal(
            sample.demand_rng,
            self.cfg.verify_base_ms
            * self.setting.env_latency_multiplier
            * self.setting.verifier_arrival_rate_boost,
            self.cfg.verify_cv,
        )
        if self.setting.tail_inflation > 1.0 and sample.demand_rng.random() > 0.9:
            demand *= self.setting.tail_inflation
        ticket = self.queue.submit(time_ms, demand)
        sample.attempts += 1
        info = self.queue.ticket(ticket)
        self._schedule(info.completion_ms, "deliver", (lane, sample, ticket))

    def _finalize(
        self, time_ms: float, sample: _Sample, status: str, detail: str, drop_reason: str | None
    ) -> None:
        payload: dict[str, Any] = {
            "status": status,
            "evaluator_id": self.manifest.verifier_id,
            "detail": detail,
            "sample_retry_count": sample.attempts - 1,
        }
        if drop_reason is not None:
            payload["drop_reason"] = drop_reason
        self._record(
            time_ms,
            "terminal_result",
            episode_id=sample.episode_id,
            step_index=0,
            payload=payload,
        )
        self._record(
            time_ms,
            "episode_end",
            episode_id=sample.episode_id,
            payload={
                "status": status,
                "steps": sample.steps,
                "wall_ms": time_ms - sample.start_ms,
            },
        )

    def _deliver(self, time_ms: float, lane: int, sample: _Sample, ticket: int) -> None:
        cfg = self.cfg
        info = self.queue.ticket(ticket)
        wait = info.queue_wait_ms
        stale = (
            self.setting.fault_injection_prob > 0.0 and wait > cfg.stale_after_ms
        )
        missing = sample.missing_first and sample.attempts == 1
        attempt_status = "error" if missing else ("failure" if sample.invalid else sample.env_status)
        self._record(
            time_ms,
            "verifier_outcome",
            episode_id=sample.episode_id,
            step_index=0,
            timing=TimingFields(
                queue_wait_ms=wait,
                service_time_ms=info.service_demand_ms,
                verifier_latency_ms=info.completion_ms - info.submit_time_ms,
            ),
            payload={
                "status": attempt_status,
                "queue_wait_ms": wait,
                "verifier_latency_ms": info.completion_ms - info.submit_time_ms,
                "evaluator_id": self.manifest.verifier_id,
                "ticket_id": ticket,
                "detail": "sample_attempt",
            },
        )

        if self.variant == "hook_a_only":
            meta = SampleMeta(
                has_terminal_outcome=not missing,
                invalid_sample_marker=sample.invalid,
                version_fields_present=True,
                version_mismatch=stale,
                snapshot_mismatch=False,
                retry_count=sample.attempts - 1,
                retry_budget=cfg.sample_retry_budget,
            )
            decision = hook_a_filter(meta)
            if decision.keep:
                self._finalize(time_ms, sample, sample.env_status, "verified", None)
            else:
                self._finalize(
                    time_ms, sample, "failure", "filtered_sample", decision.reason
                )
            self._lane_done(time_ms, lane)
            return

        # hook_b_only: keep everything, pay the harness retry policy, adapt lanes.
        needs_retry = (missing or sample.invalid) and (
            sample.attempts <= cfg.sample_retry_budget
        )
        if needs_retry:
            self.retry_events += 1
            self._record(
                time_ms,
                "retry",
                episode_id=sample.episode_id,
                step_index=0,
                payload={
                    "attempt": sample.attempts,
                    "reason": "missing_terminal" if missing else "invalid_sample",
                    "scope": "sample",
                },
            )
            self._submit(time_ms, lane, sample)
            return
        if sample.invalid:
            self._finalize(time_ms, sample, "failure", "invalid_sample_exhausted", None)
        else:
            self._finalize(time_ms, sample, sample.env_status, "verified", None)

        self.window.push(time_ms, self.queue.depth_at(time_ms), wait)
        new_target = hook_b_adjust(self.window, cfg.hook_b, self.target)
        if new_target > self.target:
            revived = [l for l in sorted(self.idle_lanes) if l < new_target]
            for lane_id in revived:
                self.idle_lanes.discard(lane_id)
                self._schedule(time_ms, "assign", (lane_id,))
        self.target = new_target
        self._lane_done(time_ms, lane)

    def _lane_done(self, time_ms: float, lane: int) -> None:
        self._schedule(time_ms, "assign", (lane,))

    def _assign(self, time_ms: float, lane: int) -> None:
        if lane >= self.target:
            self.idle_lanes.add(lane)
            return
        if not self.pending:
            return
        episode_index = self.pending.pop(0)
        episode_id = f"{self.run_id}-ep{episode_index:03d}"
        body_end, env_status, steps = self._simulate_body(episode_index, time_ms)
        rng = _substream(
            "study-sample", self.seed, self.budget, self.setting.label, episode_index
        )
        invalid = rng.random() < self.cfg.sample_invalid_prob
        missing = rng.random() < self.setting.fault_injection_prob
        sample = _Sample(
            episode_id=episode_id,
            episode_index=episode_index,
            env_status=env_status if env_status is not None else "failure",
            invalid=invalid,
            missing_first=missing or env_status is None,
            demand_rng=rng,
            start_ms=time_ms,
            steps=steps,
        )
        self._schedule(body_end, "submit", (lane, sample))

    # -- main loop -------------------------------------------------------------

    def run(self) -> list[_TimedEvent]:
        for lane in range(self.cfg.lanes):
            start = lane * self.cfg.lane_stagger_ms
            if lane < self.target:
                self._schedule(start, "assign", (lane,))
            else:
                self.idle_lanes.add(lane)
        while self._heap:
            time_ms, _, kind, args = heapq.heappop(self._heap)
            if kind == "assign":
                self._assign(time_ms, *args)
            elif kind == "submit":
                self._submit(time_ms, *args)
            elif kind == "deliver":
                self._deliver(time_ms, *args)
        return self.records


def simulate_controller_run(
    cfg: StudyConfig,
    manifest: TaskManifest,
    setting: OperatingSetting,
    backend: str,
    seed: int,
    budget: int,
    variant: str,
    repetition: int = 0,
    driver_id: str | None = None,
) -> tuple[RunRecord, list]:
    """One controller run; returns its record and validated event stream."""

    driver = DriverRecord(
        driver_id=driver_id or f"controller-{variant}-{backend}-b{budget}",
        driver_type="controller",
        driver_version="1.0.0",
        parser_version="1.0.0",
        budget=budget,
        seed=seed,
        setting_label=setting.label,
        evidence_status="paper_facing",
        model_backend_id=f"{backend}:synthetic",
        backend_engine=backend,
    )
    run_id = make_run_id(
        manifest.manifest_hash(), driver.driver_id, setting.label, seed, repetition
    )
    sim = _ControllerRunSim(cfg, manifest, setting, backend, seed, budget, variant, run_id)
    timed = sim.run()
    timed.sort(key=lambda item: (item.time_ms, item.order))

    builder = EventBuilder(run_id, provenance_for(manifest, driver, seed), run_seed=seed)
    builder.emit(
        "run_start",
        0.0,
        payload={
            "setting_label": setting.label,
            "planned_episodes": cfg.episodes_per_run,
            "driver_type": "controller",
            "variant": variant,
            "backend": backend,
        },
    )
    for item in timed:
        builder.emit(
            item.kind,
            item.time_ms,
            episode_id=item.episode_id,
            step_index=item.step_index,
            timing=item.timing,
            payload=item.payload,
        )
    statuses: dict[str, str] = {}
    for item in timed:
        if item.kind == "terminal_result":
            statuses[item.episode_id] = str(item.payload["status"])
    successes = sum(1 for status in statuses.values() if status == "success")
    builder.emit(
        "run_end",
        sim.end_ms,
        payload={
            "status": "success",
            "successes": successes,
            "episodes_completed": len(statuses),
        },
    )
    trace_complete = builder.finalize()

    summaries = []
    for item in timed:
        if item.kind == "episode_end":
            summaries.append(
                EpisodeSummary(
                    episode_id=item.episode_id,
                    status=str(item.payload["status"]),
                    steps=int(item.payload["steps"]),
                    wall_ms=float(item.payload["wall_ms"]),
                )
            )
    terminal = TerminalOutcome(
        status="success",
        evaluator_id="harness",
        detail=f"{successes}/{cfg.episodes_per_run}",
    )
    record = RunRecord(
        run_id=run_id,
        task_id=manifest.task_id,
        family=manifest.family,
        manifest_hash=manifest.manifest_hash(),
        driver=driver,
        setting_label=setting.label,
        seed=seed,
        repetition=repetition,
        event_log_ref=f"logs/{run_id}.log",
        trace_complete=trace_complete,
        freeze=freeze_run(manifest, driver, setting.label),
        terminal=terminal,
        episode_summaries=tuple(summaries),
        reward_trajectory=tuple(build_reward_trajectory(builder.events)),
        retry_count=sim.retry_events,
        retry_budget=cfg.run_retry_budget(),
        concurrency=cfg.lanes,
        backend=backend,
        variant=variant,
        horizon_ms=cfg.horizons_ms[setting.label],
    )
    return record, builder.events


def controller_run_for_plan(
    manifest: TaskManifest,
    setting: OperatingSetting,
    spec: "DriverSpecLike",
    seed: int,
    budget: int,
    episodes: int,
    repetition: int = 0,
) -> tuple[RunRecord, list]:
    """Controller run driven from a run-plan driver configuration.

    The variant comes from the driver's hooks_enabled field; the backend label
    from its backend_engine; everything else uses the study defaults.
    """

    cfg = dataclasses_replace(StudyConfig(), episodes_per_run=episodes)
    return simulate_controller_run(
        cfg,
        manifest,
        setting,
        backend=spec.backend_engine or "vllm",
        seed=seed,
        budget=budget,
        variant=spec.hooks_enabled,
        repetition=repetition,
        driver_id=spec.name,
    )


def build_study_release(store: ManifestStore, cfg: StudyConfig | None = None) -> ReleaseRoot:
    """Publish the single-task study release used by the default grid."""

    cfg = cfg or StudyConfig()
    manifest = make_manifest(
        "web",
        STUDY_TASK_ID,
        release_binding=STUDY_ROOT_ID,
        family_params={"goal": cfg.goal, "session_config": "study-session",
                       "evaluator_semantics": "final_state", "exec_mode": "live"},
    )
    return publish_release(store, STUDY_ROOT_ID, [manifest])


def run_study(
    cfg: StudyConfig | None = None,
    out_dir: Path | str | None = None,
) -> tuple[RunSet, list[GateDecision], DecisionStudyReport]:
    """Execute the full grid, gate it with the decision gate, and aggregate.

    Deterministic: identical configuration yields byte-identical artifacts.
    """

    cfg = cfg or StudyConfig()
    base = Path(out_dir) if out_dir is not None else None
    tmp: tempfile.TemporaryDirectory[str] | None = None
    if base is not None:
        store = ManifestStore(base / "release")
    else:
        tmp = tempfile.TemporaryDirectory()
        store = ManifestStore(Path(tmp.name))
    root = build_study_release(store, cfg)
    manifest = resolve_manifest(STUDY_TASK_ID, root, store)

    runs: list[RunRecord] = []
    events_by_run: dict[str, list] = {}
    for backend in cfg.backends:
        for seed in cfg.seeds:
            for budget in cfg.budgets:
                for label in cfg.setting_labels:
                    setting = setting_for_label(label)
                    for variant in cfg.variants:
                        record, events = simulate_controller_run(
                            cfg, manifest, setting, backend, seed, budget, variant
                        )
                        runs.append(record)
                        events_by_run[record.run_id] = events

    runset = RunSet(runs=runs)
    decisions = decide_runset(runset, root)
    study_report = decision_study(runset, decisions, cfg.grid())

    if base is not None:
        (base / "logs").mkdir(parents=True, exist_ok=True)
        for record in runs:
            write_event_log(base / record.event_log_ref, events_by_run[record.run_id])
        save_runset(runset, base)
        runset.base_dir = base
        decision_scope = gate_report(runset, decisions, scope="decision_study")
        canonical_scope = gate_report(runset, decisions, scope="canonical")
        save_gate_outputs(base, canonical_scope, decisions, decision_report=decision_scope)
        save_report_outputs(base, study=study_report)
    if tmp is not None:
        tmp.cleanup()
    return runset, decisions, study_report


__all__ = [
    "STUDY_ROOT_ID",
    "STUDY_TASK_ID",
    "StudyConfig",
    "build_study_release",
    "controller_run_for_plan",
    "run_study",
    "simulate_controller_run",
]

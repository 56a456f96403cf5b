"""Shipped demo release and run plan.

One release root covering all three families plus a plan that exercises the
whole pipeline: scripted anchors, synthetic-LLM traffic, oracle/noop verifier
controls on the five-instance code slice, a fixture-backed smoke run, an
unsupported stressed row, and one entry pointing at an unregistered task so
the gate has something to exclude.
"""

from __future__ import annotations

from .drivers import SyntheticLlmProfile
from .manifest import ManifestStore, ReleaseRoot, TaskManifest, make_manifest, publish_release
from .runner import DriverSpec, PlanEntry, RunPlan

DEMO_ROOT_ID = "demo-root"
CODE_TASKS = tuple(f"code-{index:03d}" for index in range(1, 6))


def demo_manifests(root_id: str = DEMO_ROOT_ID) -> list[TaskManifest]:
    manifests = [
        make_manifest("micro", "micro-001", root_id),
        make_manifest("micro", "micro-002", root_id, family_params={"goal": 4}),
        make_manifest("web", "web-001", root_id),
    ]
    manifests.extend(make_manifest("code", task_id, root_id) for task_id in CODE_TASKS)
    return manifests


def build_demo_release(
    store: ManifestStore, root_id: str = DEMO_ROOT_ID, created_at: str | None = None
) -> ReleaseRoot:
    manifests = demo_manifests(root_id)
    if created_at is None:
        return publish_release(store, root_id, manifests)
    return publish_release(store, root_id, manifests, created_at=created_at)


def demo_drivers() -> dict[str, DriverSpec]:
    return {
        "scripted-anchor": DriverSpec(
            name="scripted-anchor", driver_type="scripted", evidence_status="paper_facing"
        ),
        "synthetic-llm": DriverSpec(
            name="synthetic-llm",
            driver_type="llm",
            evidence_status="paper_facing",
            model_family="sim-7b",
            backend_engine="vllm",
            model_backend_id="vllm:sim-7b",
            profile=SyntheticLlmProfile(
                mean_model_latency_ms=150.0,
                latency_cv=0.3,
                invalid_action_prob=0.05,
                success_bias=0.8,
            ),
        ),
        "oracle-control": DriverSpec(
            name="oracle-control",
            driver_type="calibration",
            evidence_status="diagnostic",
            mode="oracle",
        ),
        "noop-control": DriverSpec(
            name="noop-control",
            driver_type="calibration",
            evidence_status="diagnostic",
            mode="noop",
        ),
        "sanity-strong": DriverSpec(
            name="sanity-strong", driver_type="sanity", evidence_status="diagnostic"
        ),
        "fixture-smoke": DriverSpec(
            name="fixture-smoke", driver_type="scripted", evidence_status="fixture_backed"
        ),
    }


def build_demo_plan(root_id: str = DEMO_ROOT_ID, concurrency: int = 2) -> RunPlan:
    entries = [
        PlanEntry("micro-001", "scripted-anchor", "clean", seed=11, budget=6),
        PlanEntry("micro-002", "scripted-anchor", "clean", seed=12, budget=6),
        PlanEntry("micro-001", "synthetic-llm", "clean", seed=21, budget=8),
        PlanEntry("web-001", "synthetic-llm", "clean", seed=22, budget=10),
        PlanEntry("web-001", "sanity-strong", "clean", seed=31, budget=8),
        # Unsupported stress row: stressed paper-facing traffic without the
        # decision-study label; the gate rejects it.
        PlanEntry("web-001", "synthetic-llm", "medium_live_stressed", seed=23, budget=10),
        PlanEntry("micro-001", "fixture-smoke", "clean", seed=41, budget=4),
        PlanEntry("ghost-task", "scripted-anchor", "clean", seed=51, budget=4),
    ]
    entries.extend(
        PlanEntry(task_id, "oracle-control", "clean", seed=60 + i, budget=2, episodes=1)
        for i, task_id in enumerate(CODE_TASKS)
    )
    entries.extend(
        PlanEntry(task_id, "noop-control", "clean", seed=70 + i, budget=2, episodes=1)
        for i, task_id in enumerate(CODE_TASKS)
    )
    return RunPlan(
        entries=tuple(entries),
        drivers=demo_drivers(),
        release_root=root_id,
        concurrency=concurrency,
        episodes_per_run=4,
    )


__all__ = [
    "CODE_TASKS",
    "DEMO_ROOT_ID",
    "build_demo_plan",
    "build_demo_release",
    "demo_drivers",
    "demo_manifests",
]

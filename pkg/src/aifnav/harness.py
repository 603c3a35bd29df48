"""Experiment harness: explore, goal, drift and obstacle demos, and replay.

A run is driven by a single JSON config (CLI flags can override fields) and
emits, under its output directory: the step trace (JSON lines), periodic map
snapshots, a model checkpoint, a metrics CSV, coverage-curve data, and
rendered coverage / trajectory / planning-heatmap images. Fixed seeds give
byte-identical trace logs.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import cogmap, perception
from .agent import NavigationAgent
from .evaluation import (RunTrace, TraceRecord, astar_shortest,
                         coverage_efficiency, nauc, FrontierExplorer)
from .inference import LocalisationOutcome
from .model import HyperParams, Preferences
from .simulator import DriftModel, World, edit_world, load_world

EXIT_OK = 0
EXIT_TASK_FAILED = 1
EXIT_CONFIG_ERROR = 2

MODES = ("explore", "goal", "drift_demo", "obstacle_demo", "replay")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    mode: str = "explore"
    world: str = "mini_warehouse"
    spawn: str = "start"
    hyperparams: HyperParams = field(default_factory=HyperParams)
    drift: DriftModel = field(default_factory=DriftModel)
    goal_observation: str | None = None
    step_budget: int = 100
    coverage_target: float = 0.95
    seed: int = 0
    output_dir: str = "runs/out"
    snapshot_interval: int = 25
    drift_branch: int = 1
    pragmatic_weight: float = 10.0
    resume_from: str | None = None
    plots: bool = True

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; options: {MODES}")
        if self.step_budget <= 0:
            raise ConfigError("step_budget must be positive")
        if self.mode == "goal" and not self.goal_observation:
            raise ConfigError("goal mode requires goal_observation")
        if self.mode == "drift_demo" and self.drift_branch not in (1, 2, 3, 4):
            raise ConfigError("drift_branch must be 1..4")
        self.hyperparams.validate()
        return self

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"config parse error in {path}: {err}") from None
        return cls.from_dict(raw, overrides)

    @classmethod
    def from_dict(cls, raw: dict, overrides: dict | None = None) -> "RunConfig":
        raw = dict(raw)
        raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
        hp = raw.pop("hyperparams", {})
        drift = raw.pop("drift", {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            cfg = cls(**raw)
            cfg.hyperparams = HyperParams(**hp) if isinstance(hp, dict) else hp
            cfg.drift = DriftModel(**drift) if isinstance(drift, dict) else drift
        except TypeError as err:
            raise ConfigError(str(err)) from None
        return cfg.validate()

    def to_dict(self) -> dict:
        d = asdict(self)
        return d


@dataclass
class RunReport:
    exit_code: int
    steps: int
    metrics: dict
    trace_path: str | None = None
    agent: NavigationAgent | None = None


def output_root() -> Path:
    return Path(os.environ.get("AIFNAV_OUTPUT_ROOT", "."))


def run(config: RunConfig) -> RunReport:
    config.validate()
    out = output_root() / config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    if config.mode == "explore":
        return _run_explore(config, out)
    if config.mode == "goal":
        return _run_goal(config, out)
    if config.mode == "drift_demo":
        return _run_drift_demo(config, out)
    if config.mode == "obstacle_demo":
        return _run_obstacle_demo(config, out)
    raise ConfigError(f"mode {config.mode} is not runnable; use replay()")


def _make_agent(config: RunConfig, world: World) -> NavigationAgent:
    if config.resume_from:
        return NavigationAgent.load_checkpoint(config.resume_from, world)
    spawn = world.spawns.get(config.spawn)
    if spawn is None:
        raise ConfigError(f"world has no spawn {config.spawn!r}")
    return NavigationAgent(world, config.hyperparams, config.drift,
                           spawn, seed=config.seed)


def _record(agent: NavigationAgent, t: int, action: int,
            reported_pose, extra: dict) -> TraceRecord:
    bp = agent.believed_position()
    return TraceRecord(
        t=t, true_pose=agent.true_pose, reported_pose=tuple(reported_pose),
        believed_pose=(float(bp[0]), float(bp[1])), action=action,
        covered_area=agent.coverage_area(), traveled=agent.traveled,
        extra=extra)


def _loop(agent: NavigationAgent, config: RunConfig, out: Path,
          stop_fn) -> tuple[RunTrace, list[dict], bool]:
    trace = RunTrace()
    plan_rows: list[dict] = []
    trace.append(_record(agent, 0, agent.actions.stay, agent.true_pose, {}))
    done = False
    for t in range(1, config.step_budget + 1):
        outcome = agent.step()
        plan = getattr(agent, "_last_plan", None)
        if plan is not None:
            plan_rows.append({
                "t": t,
                "children": [{
                    "action": c.action, "visits": c.visits,
                    "g_avg": round(c.g_avg, 6), "h": round(c.h, 6),
                    "prob": round(c.prob, 6),
                    "g_terms": {
                        "state_info_gain": round(c.breakdown.state_info_gain, 6),
                        "param_info_gain": round(c.breakdown.param_info_gain, 6),
                        "expected_collision": round(c.breakdown.expected_collision, 6),
                        "utility_o": round(c.breakdown.utility_o, 6),
                        "utility_p": round(c.breakdown.utility_p, 6),
                        "utility_s": round(c.breakdown.utility_s, 6),
                    },
                } for c in plan.children],
            })
        trace.append(_record(agent, t, outcome.action, outcome.result.reported_pose, {
            "outcome": outcome.localisation.value,
            "vfe": round(outcome.vfe, 9) if np.isfinite(outcome.vfe) else None,
            "believed_state": outcome.believed_state,
            "n_states": agent.model.n_states,
            "collided": outcome.result.collided,
        }))
        if t % config.snapshot_interval == 0:
            cogmap.save_snapshot(agent.topo, agent.model, out / f"map_{t:05d}.txt")
        if stop_fn(agent):
            done = True
            break
    return trace, plan_rows, done


def _emit_artifacts(agent: NavigationAgent, config: RunConfig, out: Path,
                    trace: RunTrace, plan_rows: list[dict],
                    metrics: dict) -> None:
    trace.save_jsonl(out / "trace.jsonl", header={
        "mode": config.mode, "world": config.world, "seed": config.seed})
    with open(out / "planning.jsonl", "w") as fh:
        for row in plan_rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    cogmap.save_snapshot(agent.topo, agent.model, out / "map_final.txt")
    agent.save_checkpoint(out / "checkpoint.npz")
    _write_metrics_csv(out / "metrics.csv", config, metrics)
    _write_coverage_csv(out / "coverage_curve.csv", trace,
                        agent.world.free_area())
    if config.plots:
        _emit_plots(agent, out, trace, plan_rows)


def _write_metrics_csv(path, config: RunConfig, metrics: dict) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run_id", "mode", "world", "seed"]
                        + sorted(metrics))
        writer.writerow([config.output_dir, config.mode, config.world,
                         config.seed]
                        + [metrics[k] for k in sorted(metrics)])


def _write_coverage_csv(path, trace: RunTrace, free_area: float) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["distance_m", "coverage_fraction"])
        for rec in trace.records:
            writer.writerow([f"{rec.traveled:.6f}",
                             f"{rec.covered_area / free_area:.6f}"])


def _metrics_from_trace(trace: RunTrace, free_area: float) -> dict:
    metrics = {}
    if trace.records and trace.records[-1].traveled > 0:
        metrics["coverage_efficiency"] = round(coverage_efficiency(trace), 6)
        metrics["nauc"] = round(nauc(trace, free_area), 6)
    final = trace.records[-1] if trace.records else None
    if final is not None:
        metrics["traveled_m"] = round(final.traveled, 6)
        metrics["covered_m2"] = round(final.covered_area, 6)
        metrics["coverage_fraction"] = round(final.covered_area / free_area, 6)
        est = [r.believed_pose for r in trace.records]
        gt = [r.true_pose[:2] for r in trace.records]
        from .evaluation import rmse_xy
        metrics["rmse_xy"] = round(rmse_xy(est, gt), 6)
    return metrics


# ---------------------------------------------------------------------------
# modes


def _run_explore(config: RunConfig, out: Path) -> RunReport:
    world = load_world(config.world)
    agent = _make_agent(config, world)
    target = config.coverage_target

    trace, plan_rows, _done = _loop(
        agent, config, out, lambda a: a.coverage_fraction() >= target)
    metrics = _metrics_from_trace(trace, world.free_area())
    metrics["n_states"] = agent.model.n_states
    metrics["n_observations"] = agent.model.n_obs
    _emit_artifacts(agent, config, out, trace, plan_rows, metrics)
    return RunReport(EXIT_OK, len(trace) - 1, metrics,
                     str(out / "trace.jsonl"), agent)


def _run_goal(config: RunConfig, out: Path) -> RunReport:
    world = load_world(config.world)
    agent = _make_agent(config, world)
    goal_pano = perception.load_pgm(config.goal_observation)
    n_matches = agent.set_goal_panorama(goal_pano, config.pragmatic_weight)
    start_state = agent.believed_state()

    trace, plan_rows, done = _loop(agent, config, out,
                                   lambda a: a.goal_reached())
    metrics = _metrics_from_trace(trace, world.free_area())
    metrics["goal_matches"] = n_matches
    metrics["goal_reached"] = int(done)
    goal_states = {n.state_id for n in agent.topo.nodes
                   if set(n.observation_ids) & agent.goal_obs_ids}
    oracle = astar_shortest(agent.topo, agent.model, start_state, goal_states)
    if oracle is not None and oracle > 0:
        metrics["astar_m"] = round(oracle, 6)
        metrics["path_ratio"] = round(agent.traveled / oracle, 6)
    _emit_artifacts(agent, config, out, trace, plan_rows, metrics)
    return RunReport(EXIT_OK if done else EXIT_TASK_FAILED,
                     len(trace) - 1, metrics, str(out / "trace.jsonl"), agent)


def _run_drift_demo(config: RunConfig, out: Path) -> RunReport:
    """Replay the two-move drift scenario and assert the configured outcome.

    The agent is told to move one influence radius east and then back west.
    Depending on the drift and the world's visual structure, the return step
    resolves to one of the four localisation outcomes (branch 1..4).
    """
    from .scenarios import drift_scenario
    outcome, expected, agent, trace = drift_scenario(config)
    metrics = {"branch": config.drift_branch,
               "outcome": outcome.value, "expected": expected.value,
               "matched": int(outcome is expected)}
    _emit_artifacts(agent, config, out, trace, [], metrics)
    return RunReport(EXIT_OK if outcome is expected else EXIT_TASK_FAILED,
                     len(trace) - 1, metrics, str(out / "trace.jsonl"), agent)


def _run_obstacle_demo(config: RunConfig, out: Path) -> RunReport:
    from .scenarios import obstacle_scenario
    report = obstacle_scenario(config, out)
    return report


def replay(trace_path) -> dict:
    """Recompute metrics from a stored trace; identical to the live values."""
    trace, header = RunTrace.load_jsonl(trace_path)
    world = load_world(header.get("world", "mini_warehouse"))
    return _metrics_from_trace(trace, world.free_area())


# ---------------------------------------------------------------------------
# plots


def _emit_plots(agent: NavigationAgent, out: Path, trace: RunTrace,
                plan_rows: list[dict]) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    free_area = agent.world.free_area()
    dist = [r.traveled for r in trace.records]
    frac = [r.covered_area / free_area for r in trace.records]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(dist, frac)
    ax.set_xlabel("distance travelled (m)")
    ax.set_ylabel("coverage fraction")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out / "coverage_curve.png", dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 5))
    grid = agent.world.grid
    ax.imshow(grid, origin="lower", cmap="gray_r",
              extent=(0, agent.world.width, 0, agent.world.height))
    tx = [r.true_pose[0] for r in trace.records]
    ty = [r.true_pose[1] for r in trace.records]
    bx = [r.believed_pose[0] for r in trace.records]
    by = [r.believed_pose[1] for r in trace.records]
    ax.plot(tx, ty, "-", color="tab:green", label="true")
    ax.plot(bx, by, "--", color="tab:orange", label="believed")
    pos = agent.topo.positions()
    if pos.size:
        visited = np.array([n.visited for n in agent.topo.nodes])
        ax.scatter(pos[visited, 0], pos[visited, 1], s=18, c="tab:blue",
                   label="visited nodes")
        if (~visited).any():
            ax.scatter(pos[~visited, 0], pos[~visited, 1], s=10,
                       facecolors="none", edgecolors="tab:blue",
                       label="hypothesised")
    ax.legend(loc="upper right", fontsize=7)
    ax.set_title("trajectory and map")
    fig.tight_layout()
    fig.savefig(out / "trajectory.png", dpi=120)
    plt.close(fig)

    if plan_rows:
        last = plan_rows[-1]["children"]
        fig, ax = plt.subplots(figsize=(5, 5))
        ax.imshow(grid, origin="lower", cmap="gray_r",
                  extent=(0, agent.world.width, 0, agent.world.height))
        if pos.size:
            values = np.zeros(len(pos))
            counts = np.zeros(len(pos))
            b_norm = agent.model.b_s_norm()
            s_here = agent.believed_state()
            for child in last:
                a = child["action"]
                if a == agent.actions.stay:
                    continue
                target = int(np.argmax(b_norm[:, s_here, a]))
                values[target] += -child["g_avg"]
                counts[target] += 1
            shown = counts > 0
            sc = ax.scatter(pos[shown, 0], pos[shown, 1],
                            c=values[shown] / np.maximum(counts[shown], 1),
                            s=60, cmap="viridis")
            fig.colorbar(sc, ax=ax, label="attractivity (-G)")
        ax.set_title("root action values at final step")
        fig.tight_layout()
        fig.savefig(out / "g_heatmap.png", dpi=120)
        plt.close(fig)


def run_frontier_baseline(world_name: str, hp: HyperParams, drift: DriftModel,
                          seed: int, step_budget: int,
                          coverage_target: float = 0.95,
                          spawn: str = "start") -> RunTrace:
    """The comparison explorer, sharing motion primitives and sensing."""
    world = load_world(world_name)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    explorer = FrontierExplorer(world, hp, drift, rng)
    return explorer.run(world.spawns[spawn], step_budget, coverage_target)

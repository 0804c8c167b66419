"""Run drivers.

Everything here is plumbing around the trainer: deterministic CSV/JSON
outputs for a training run, frozen-actor evaluation, side-by-side policy
comparison under demand scaling, and the numeric self-check suite.  File
contents depend only on the run config (no wall-clock anywhere), so two
runs with the same seed produce byte-identical artifacts.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import os

from . import nn, oracles
from .config import RunConfig, save_config
from .marl import Trainer, TrainResult


def format_cell(value) -> str:
    """Stable scalar formatting: floats via repr (shortest round-trip),
    everything else via str."""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return repr(float(value))  # plain repr even for numpy scalars
    return str(value)


class CsvSink:
    """Collects per-slot rows into metrics.csv and per-episode rows into
    episodes.csv under one output directory.  Headers come from the first
    row of each stream; later rows must use the same keys."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self._files = {}
        self._writers = {}
        self._headers = {}

    def _write(self, stream: str, row: dict) -> None:
        if stream not in self._writers:
            fh = open(os.path.join(self.out_dir, stream), "w",
                      encoding="utf-8", newline="")
            writer = csv.writer(fh, lineterminator="\n")
            header = list(row.keys())
            writer.writerow(header)
            self._files[stream] = fh
            self._writers[stream] = writer
            self._headers[stream] = header
        header = self._headers[stream]
        if list(row.keys()) != header:
            raise ValueError(f"{stream}: row keys changed mid-stream")
        self._writers[stream].writerow([format_cell(row[k]) for k in header])

    def slot_row(self, row: dict) -> None:
        self._write("metrics.csv", row)

    def episode_row(self, row: dict) -> None:
        self._write("episodes.csv", row)

    def close(self) -> None:
        for fh in self._files.values():
            fh.close()
        self._files.clear()
        self._writers.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def _json_dump(path: str, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _checkpoint_nets(agents) -> dict:
    nets = {}
    for i, a in enumerate(agents, start=1):
        nets[f"actor_{i}"] = a.actor
        nets[f"critic_{i}"] = a.critic
        nets[f"target_actor_{i}"] = a.target_actor
        nets[f"target_critic_{i}"] = a.target_critic
    return nets


def save_agents(path: str, agents) -> None:
    nn.save_checkpoint(path, _checkpoint_nets(agents))


def load_agents_into(path: str, agents) -> None:
    """Restore networks saved by save_agents into an existing agent list
    (optimizer state starts fresh)."""
    nets = nn.load_checkpoint(path)
    for i, a in enumerate(agents, start=1):
        try:
            a.actor = nets[f"actor_{i}"]
            a.critic = nets[f"critic_{i}"]
            a.target_actor = nets[f"target_actor_{i}"]
            a.target_critic = nets[f"target_critic_{i}"]
        except KeyError as exc:
            raise ValueError(f"checkpoint {path} lacks networks for agent {i}") from exc


def _stats_row(stats) -> dict:
    return {
        "reward_mean": float(stats.rewards.mean()),
        "sensed_bits": stats.sensed,
        "delivered_bits": stats.delivered,
        "energy_j": stats.energy,
        "slots": stats.slots,
        "completion_slot": -1 if stats.completion_slot is None else stats.completion_slot,
        "max_buffer_bits": stats.max_buffer,
    }


def write_trajectory(path: str, trainer: Trainer, horizon: int | None = None) -> None:
    """One deterministic greedy rollout as JSON lines: a header with the
    scenario layout followed by one line per slot, enough to replay or
    plot the flight."""
    scen = trainer.scenario
    with open(path, "w", encoding="utf-8") as fh:
        def emit(obj):
            fh.write(json.dumps(obj, sort_keys=True) + "\n")

        header = {
            "type": "header",
            "seed": trainer.cfg.seed,
            "gu_seed": scen.gu_seed,
            "n_uavs": scen.n_uavs,
            "half_width_m": scen.half_width_m,
            "demand_bits": scen.demand_bits,
            "buffer_capacity_bits": scen.buffer_capacity_bits,
        }

        def on_slot(w, slot, acts, report):
            if slot == 0:
                header["gu_xy"] = [[g.pos.x, g.pos.y] for g in w.gus]
                emit(header)
            emit({
                "type": "slot",
                "slot": slot,
                "actions": [list(map(float, a)) for a in acts],
                "uav_xy": [[u.pos.x, u.pos.y] for u in w.uavs],
                "buffers": [u.buffer for u in w.uavs],
                "formation": [[int(tx), int(rx), int(ch)]
                              for tx, rx, ch in w.formation.links()],
                "gu_remaining": [g.remaining for g in w.gus],
                "sensed": list(map(float, report.sensed)),
                "delivered_bs": list(map(float, report.delivered_bs)),
            })

        trainer.evaluate(1, horizon=horizon, slot_cb=on_slot)


def run_train(cfg: RunConfig, out_dir: str, episodes: int | None = None) -> dict:
    """Full training run: metrics/episodes CSVs, network checkpoint, one
    replayable trajectory, and summary.json.  Returns the summary."""
    os.makedirs(out_dir, exist_ok=True)
    save_config(cfg, os.path.join(out_dir, "config.json"))
    trainer = Trainer(cfg)
    with CsvSink(out_dir) as sink:
        result: TrainResult = trainer.run(episodes=episodes, sink=sink)
    save_agents(os.path.join(out_dir, "checkpoint.json"), result.agents)
    write_trajectory(os.path.join(out_dir, "trajectory.jsonl"), trainer)
    eval_stats = trainer.evaluate(trainer.train_cfg.eval_episodes)
    eval_rows = [_stats_row(s) for s in eval_stats]
    summary = {
        "episodes_run": result.episodes_run,
        "early_stopped": result.early_stopped,
        "final_smoothed": result.final_smoothed,
        "eval": {
            "episodes": len(eval_rows),
            "reward_mean": sum(r["reward_mean"] for r in eval_rows) / len(eval_rows),
            "sensed_bits_mean": sum(r["sensed_bits"] for r in eval_rows) / len(eval_rows),
            "delivered_bits_mean": sum(r["delivered_bits"] for r in eval_rows) / len(eval_rows),
            "rows": eval_rows,
        },
    }
    _json_dump(os.path.join(out_dir, "summary.json"), summary)
    return summary


def run_eval(cfg: RunConfig, out_dir: str, checkpoint: str,
             episodes: int | None = None) -> dict:
    """Frozen-policy evaluation of a saved checkpoint."""
    os.makedirs(out_dir, exist_ok=True)
    trainer = Trainer(cfg)
    load_agents_into(checkpoint, trainer.agents)
    n_eval = cfg.training.eval_episodes if episodes is None else episodes
    rows = [_stats_row(s) for s in trainer.evaluate(n_eval)]
    summary = {
        "checkpoint": os.path.basename(checkpoint),
        "episodes": len(rows),
        "reward_mean": sum(r["reward_mean"] for r in rows) / len(rows),
        "rows": rows,
    }
    _json_dump(os.path.join(out_dir, "eval.json"), summary)
    return summary


POLICY_KINDS = ("eda_nf", "dynamic_nf", "buffer_threshold", "non_cooperative")


def _aggregate(stats_list, horizon: int) -> dict:
    n = len(stats_list)
    completed = sum(1 for s in stats_list if s.completion_slot is not None)
    comp = [s.completion_slot if s.completion_slot is not None else horizon
            for s in stats_list]
    out = {
        "episodes": n,
        "completed": completed,
        "completion_slot_mean": sum(comp) / n,
        "max_buffer_mean": sum(s.max_buffer for s in stats_list) / n,
        "reward_mean": sum(float(s.rewards.mean()) for s in stats_list) / n,
        "sensed_mean": sum(s.sensed for s in stats_list) / n,
        "delivered_mean": sum(s.delivered for s in stats_list) / n,
        "energy_mean": sum(s.energy for s in stats_list) / n,
        "remaining_final_mean": sum(s.remaining_curve[-1] for s in stats_list) / n,
    }
    return out


def run_compare(cfg: RunConfig, out_dir: str, episodes: int | None = None,
                policies=POLICY_KINDS, demand_scales=(1.0, 2.0, 3.0),
                eval_episodes: int | None = None) -> dict:
    """Train once under the configured policy, then sweep the frozen
    actors across formation policies and demand scales on identical
    worlds.  Writes comparison.json."""
    os.makedirs(out_dir, exist_ok=True)
    save_config(cfg, os.path.join(out_dir, "config.json"))
    trainer = Trainer(cfg)
    with CsvSink(out_dir) as sink:
        result = trainer.run(episodes=episodes, sink=sink)
    save_agents(os.path.join(out_dir, "checkpoint.json"), result.agents)
    n_eval = cfg.training.eval_episodes if eval_episodes is None else eval_episodes
    horizon = cfg.training.completion_cap
    rows = []
    for kind in policies:
        policy = dataclasses.replace(cfg.formation, kind=kind)
        for scale in demand_scales:
            stats = trainer.evaluate(n_eval, policy=policy, demand_scale=scale,
                                     horizon=horizon, collect_curve=True)
            row = {"policy": kind, "demand_scale": scale}
            row.update(_aggregate(stats, horizon))
            rows.append(row)
    payload = {
        "train_episodes": result.episodes_run,
        "eval_horizon": horizon,
        "rows": rows,
    }
    _json_dump(os.path.join(out_dir, "comparison.json"), payload)
    return payload


def run_oracle_checks(seed: int = 0, stream=None) -> list:
    """Run every numeric self-check, print one line per check, and return
    the CheckResult rows."""
    results = oracles.run_all(seed)
    for res in results:
        status = "ok" if res.ok else "FAIL"
        line = (f"[{status}] {res.name}: max_err={res.max_err:.3g} "
                f"tol={res.tol:.3g}")
        if res.detail:
            line += f" ({res.detail})"
        print(line, file=stream)
    return results

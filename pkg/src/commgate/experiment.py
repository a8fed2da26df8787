"""Run, evaluate, audit and sweep experiments; every artifact lands in the run directory."""
from __future__ import annotations

import csv
import json
import math
import subprocess
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .agent import PolicyNet
from .config import ExperimentConfig
from .envs import make_env
from .metrics import EpisodeRecord, evaluate, summarize
from .trainer import NonFiniteLoss, Trainer

METRIC_COLUMNS = ("return", "sender_return", "receiver_return", "success", "comms", "sender_comms",
                  "receiver_comms", "length", "msg_prob", "partner_fraction")
TRAIN_COLUMNS = ("train_return", "loss", "grad_norm")


class RunAborted(RuntimeError):
    pass


def _seeds(seed: int) -> dict[str, int]:
    """Disjoint seed ranges for initialisation, rollout workers and evaluation."""
    base = 1_000_003 * seed
    return {"init": base, "train": base + 1, "eval": base + 500_000}


def build_net(cfg: ExperimentConfig, rng: np.random.Generator | None = None) -> PolicyNet:
    spec = make_env(cfg.env, 1, **cfg.env_params).spec
    if rng is None:
        rng = np.random.default_rng(_seeds(cfg.seed)["init"])
    return PolicyNet(spec.obs_dim, spec.n_agents, spec.n_actions, rng, arch=cfg.arch,
                     pairwise=cfg.is_pairwise, peer_dim=spec.peer_dim, masked_softmax=cfg.masked_softmax)


def run_evaluation(net: PolicyNet, cfg: ExperimentConfig, episodes: int, seed: int):
    env = make_env(cfg.env, episodes, **cfg.env_params)
    return evaluate(net, env, cfg.train_config(), seed=seed)


def _row_values(summary: dict, columns) -> list[float]:
    return [summary[c]["mean"] if c in summary else float("nan") for c in columns]


def _metric_columns(cfg: ExperimentConfig) -> list[str]:
    probe = run_evaluation(build_net(cfg, np.random.default_rng(0)), cfg, 2, seed=0).summary
    return [c for c in METRIC_COLUMNS if c in probe]


def _fmt(v: float) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


@dataclass
class RunResult:
    out: Path
    summary: dict
    updates: int
    env_steps: int


def run(cfg: ExperimentConfig, log=None) -> RunResult:
    """Train to ``cfg.steps`` environment steps, evaluating and checkpointing along the way.

    metrics.csv holds only seeded, reproducible numbers; wall-clock times go
    to timing.csv.
    """
    out = Path(cfg.out)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.ini")
    seeds = _seeds(cfg.seed)
    net = build_net(cfg)
    trainer = Trainer(net, lambda n: make_env(cfg.env, n, **cfg.env_params), cfg.train_config(), seed=seeds["train"])
    columns = _metric_columns(cfg)
    header = ["update", "env_steps", "episodes"] + columns + list(TRAIN_COLUMNS)
    t0 = time.perf_counter()
    recent: list[dict] = []

    with open(out / "metrics.csv", "w", newline="") as mf, open(out / "timing.csv", "w", newline="") as tf:
        metrics_w, timing_w = csv.writer(mf), csv.writer(tf)
        metrics_w.writerow(header)
        timing_w.writerow(["update", "env_steps", "wall_clock"])

        def emit():
            ev = run_evaluation(net, cfg, cfg.eval_episodes, seeds["eval"] + trainer.updates).summary
            train = {k: float(np.mean([r[k] for r in recent])) for k in ("train_return", "total", "grad_norm")}
            row = [trainer.updates, trainer.env_steps, trainer.episodes] + _row_values(ev, columns) + \
                  [train["train_return"], train["total"], train["grad_norm"]]
            metrics_w.writerow([_fmt(v) for v in row])
            timing_w.writerow([trainer.updates, trainer.env_steps, f"{time.perf_counter() - t0:.3f}"])
            mf.flush()
            tf.flush()
            recent.clear()
            if log:
                shown = " ".join(f"{c}={v:.3f}" for c, v in zip(columns, _row_values(ev, columns)))
                log(f"update {trainer.updates} steps {trainer.env_steps} {shown}")

        while trainer.env_steps < cfg.steps:
            try:
                stats = trainer.update()
            except (NonFiniteLoss, FloatingPointError) as exc:
                _abort(net, trainer, out, exc)
            except ValueError as exc:
                if "NaN" not in str(exc):
                    raise
                _abort(net, trainer, out, exc)
            recent.append(stats)
            if trainer.updates % cfg.eval_every == 0:
                emit()
            if trainer.updates % cfg.checkpoint_every == 0:
                save_model(net, out / "checkpoints" / f"update_{trainer.updates:07d}.ckpt", trainer)
        if recent:
            emit()

    save_model(net, out / "checkpoints" / "final.ckpt", trainer)
    summary = final_evaluation(net, cfg, out, trainer.updates, trainer.env_steps)
    emit_plotdata(out / "metrics.csv", out / "plotdata")
    return RunResult(out, summary, trainer.updates, trainer.env_steps)


def _abort(net, trainer, out: Path, exc: Exception):
    path = out / "checkpoints" / "diagnostic.ckpt"
    save_model(net, path, trainer, reason=str(exc).replace(" ", "_"))
    raise RunAborted(f"training aborted at update {trainer.updates}: {exc}; parameters saved to {path}") from exc


def save_model(net: PolicyNet, path, trainer: Trainer | None = None, **meta) -> None:
    if trainer is not None:
        meta.update(updates=trainer.updates, env_steps=trainer.env_steps)
    T.save_checkpoint(path, net.state_dict(), meta)


def final_evaluation(net: PolicyNet, cfg: ExperimentConfig, out: Path, updates: int, env_steps: int) -> dict:
    """Evaluate, write episodes.jsonl and summary.json, return the summary."""
    ev = run_evaluation(net, cfg, cfg.final_eval_episodes, _seeds(cfg.seed)["eval"] - 1)
    with open(out / "episodes.jsonl", "w") as fh:
        for rec in ev.records:
            fh.write(rec.to_json() + "\n")
    summary = {
        "config": cfg.to_dict(),
        "updates": updates,
        "env_steps": env_steps,
        "eval_episodes": len(ev.records),
        "metrics": ev.summary,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary


def eval_checkpoint(run_dir, checkpoint=None, episodes: int | None = None, out_name: str = "eval_summary.json") -> dict:
    """Reload a run's config and parameters and evaluate without training."""
    run_dir = Path(run_dir)
    cfg = ExperimentConfig.load(run_dir / "config.ini")
    net = build_net(cfg)
    ckpt = Path(checkpoint) if checkpoint else run_dir / "checkpoints" / "final.ckpt"
    meta = T.load_checkpoint(ckpt, net.state_dict())
    ev = run_evaluation(net, cfg, episodes or cfg.final_eval_episodes, _seeds(cfg.seed)["eval"] - 1)
    summary = {"checkpoint": str(ckpt), "meta": meta, "eval_episodes": len(ev.records), "metrics": ev.summary}
    (run_dir / out_name).write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary


def audit(run_dir) -> list[str]:
    """Re-derive summary.json metrics from episodes.jsonl; returns a list of mismatches."""
    run_dir = Path(run_dir)
    summary = json.loads((run_dir / "summary.json").read_text())
    records = [EpisodeRecord.from_json(line) for line in (run_dir / "episodes.jsonl").read_text().splitlines() if line]
    recomputed = summarize(records)
    problems = []
    if len(records) != summary["eval_episodes"]:
        problems.append(f"eval_episodes: summary says {summary['eval_episodes']}, log has {len(records)}")
    stored = summary["metrics"]
    for key in sorted(set(stored) | set(recomputed)):
        if key not in stored or key not in recomputed:
            problems.append(f"{key}: present in only one of summary and log")
            continue
        for stat in ("mean", "std"):
            a, b = stored[key][stat], recomputed[key][stat]
            if not math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12):
                problems.append(f"{key}.{stat}: summary {a!r} != recomputed {b!r}")
    return problems


# ------------------------------------------------------------------- plotdata

def _read_metrics(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: no metric rows")
    return rows[0], rows[1:]


def emit_plotdata(source, out_dir, x: str = "env_steps") -> list[Path]:
    """One ``<metric>.csv`` per metric with columns run, x, value.

    ``source`` is a metrics.csv file, or a directory whose subdirectories each
    hold one; series from several runs are aligned on ``x`` and tagged by run.
    """
    source = Path(source)
    if source.is_dir():
        files = sorted(source.glob("*/metrics.csv"))
        if not files and (source / "metrics.csv").exists():
            files = [source / "metrics.csv"]
        if not files:
            raise ValueError(f"{source}: no metrics.csv found")
    else:
        files = [source]
    series: dict[str, list[tuple[str, str, str]]] = {}
    for f in files:
        header, rows = _read_metrics(f)
        if x not in header:
            raise ValueError(f"{f}: missing columns: {x}")
        xi = header.index(x)
        run_id = f.parent.name
        for j, name in enumerate(header):
            if name == x:
                continue
            series.setdefault(name, []).extend((run_id, r[xi], r[j]) for r in rows)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, points in series.items():
        points.sort(key=lambda p: (float(p[1]), p[0]))
        path = out_dir / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["run", x, name])
            w.writerows(points)
        written.append(path)
    return written


# ---------------------------------------------------------------------- sweep

def pool_summaries(summaries: list[dict]) -> dict:
    """Mean and std across seeds of each per-seed mean."""
    keys = sorted(set.intersection(*(set(s["metrics"]) for s in summaries)))
    pooled = {}
    for k in keys:
        vals = np.array([s["metrics"][k]["mean"] for s in summaries])
        pooled[k] = {"mean": float(vals.mean()), "std": float(vals.std()), "per_seed": vals.tolist()}
    return {"seeds": [s["config"]["seed"] for s in summaries], "metrics": pooled}


def sweep(cfg: ExperimentConfig, seeds, jobs: int = 1, log=None) -> dict:
    """Train one independent process per seed, then write a pooled summary."""
    root = Path(cfg.out)
    root.mkdir(parents=True, exist_ok=True)
    pending = []
    for s in seeds:
        run_cfg = cfg.replace(seed=int(s), out=str(root / f"seed_{s}"))
        Path(run_cfg.out).mkdir(parents=True, exist_ok=True)
        path = Path(run_cfg.out) / "config.ini"
        run_cfg.save(path)
        pending.append([sys.executable, "-m", "commgate", "run", "--config", str(path)])
    running: list[subprocess.Popen] = []
    failed = []
    while pending or running:
        while pending and len(running) < max(1, jobs):
            cmd = pending.pop(0)
            if log:
                log("launch " + " ".join(cmd))
            running.append(subprocess.Popen(cmd))
        time.sleep(0.5)
        for p in list(running):
            if p.poll() is not None:
                running.remove(p)
                if p.returncode != 0:
                    failed.append(" ".join(p.args))
    if failed:
        raise RunAborted(f"sweep runs failed: {failed}")
    summaries = [json.loads((root / f"seed_{s}" / "summary.json").read_text()) for s in seeds]
    pooled = pool_summaries(summaries)
    (root / "summary.json").write_text(json.dumps(pooled, indent=2, sort_keys=True))
    emit_plotdata(root, root / "plotdata")
    return pooled

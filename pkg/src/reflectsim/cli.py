"""Command line entry point: ``reflectsim <command> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 bad configuration or degenerate
heatmap grid, 3 checkpoint incompatible with the configuration.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import checkpoint, plotting
from .artifacts import (HEATMAP_HEADER, SUMMARY_HEADER, TRAIN_HEADER, CsvLog, eval_header,
                        eval_rows, write_csv, write_json_atomic, write_manifest, write_ppm)
from .baselines import ALL_KINDS, BaselineKind
from .config import PROFILES, ExperimentConfig, load_config
from .errors import IncompatibleCheckpoint, InvalidConfiguration
from .propagation import heatmap as rssi_grid
from .propagation import flat_configuration, tiles_with_normals
from .runner import (episode_reward_from_rows, evaluate_arm, make_env, new_trainer,
                     settle_focal_points)
from .marl import train

log = logging.getLogger("reflectsim")

OUT_ENV = "REFLECTSIM_OUT"


class DegenerateGrid(ValueError):
    pass


def _out_dir(args, default_name: str) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        out = Path(os.environ.get(OUT_ENV, "runs")) / default_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> ExperimentConfig:
    return load_config(getattr(args, "config", None), getattr(args, "profile", None))


def _config_near(args, ckpt_path: Path | None) -> ExperimentConfig:
    """Explicit --config, else the snapshot beside the checkpoint, else the packaged default."""
    if getattr(args, "config", None) is None and ckpt_path is not None:
        snap = ckpt_path.parent / "config.ini"
        if snap.exists():
            args.config = str(snap)
    return _config(args)


def _snapshot(cfg: ExperimentConfig, out: Path):
    target = out / "config.ini"
    if cfg.source_path is not None and cfg.source_path.resolve() == target.resolve():
        return
    target.write_text(cfg.source_text)


def _fmt(x: float) -> str:
    return repr(float(x))


# -- train ---------------------------------------------------------------

def train_one(cfg: ExperimentConfig, kind: BaselineKind, seed: int, out: Path, tag: str = ""):
    """Train one arm into ``out``; rows reach the CSV as episodes finish."""
    env = make_env(cfg, kind)
    trainer = new_trainer(cfg, kind, seed)
    suffix = f"_{tag}" if tag else ""
    csv_path = out / f"train{suffix}.csv"
    written = 0
    with CsvLog(csv_path, TRAIN_HEADER) as sink:
        def progress(_, tlog):
            nonlocal written
            for ep in range(written, len(tlog)):
                for agent, r in enumerate(tlog.rewards[ep]):
                    sink.write([ep, agent, float(r), float(tlog.actor_loss[ep][agent]),
                                float(tlog.critic_loss[ep])])
            written = len(tlog)

        trainer, tlog = train(env, cfg.ppo, seed, trainer=trainer, progress=progress)
    checkpoint.save(trainer, out / f"checkpoint{suffix}.ckpt")
    plotting.training_curve(tlog.episode_rewards(), out / f"training_curve{suffix}.png",
                            title=f"{kind} seed {seed}")
    return trainer, tlog


def cmd_train(args) -> int:
    cfg = _config(args)
    kind = BaselineKind(args.algo or cfg.algo)
    if not kind.learned:
        raise InvalidConfiguration(f"{kind} is a static arm; use evaluate --static")
    seed = cfg.seeds[0] if args.seed is None else args.seed
    episodes = cfg.ppo.episodes if args.episodes is None else args.episodes
    if episodes < 0:
        raise InvalidConfiguration("--episodes must be non-negative")
    cfg = cfg.with_overrides(episodes=episodes, algo=str(kind))
    out = _out_dir(args, f"train-{kind}-seed{seed}")
    _snapshot(cfg, out)
    t0 = time.perf_counter()
    _, tlog = train_one(cfg, kind, seed, out)
    rewards = tlog.episode_rewards()
    final = float(rewards[-50:].mean()) if len(rewards) else float("nan")
    print(f"algo={kind} seed={seed} episodes={len(tlog)} final_reward={_fmt(final)}")
    write_manifest(out, "train", sys.argv[1:], cfg.content_hash,
                   {"train": time.perf_counter() - t0},
                   {"algo": str(kind), "seed": seed, "episodes": len(tlog), "final_reward": final},
                   {"train.csv": TRAIN_HEADER})
    return 0


# -- evaluate ------------------------------------------------------------

def _trainer_and_kind(args, cfg):
    if args.static:
        return None, BaselineKind(args.static)
    trainer = checkpoint.load(args.checkpoint)
    return trainer, BaselineKind(trainer.algo)


def cmd_evaluate(args) -> int:
    if not (args.checkpoint or args.static):
        raise InvalidConfiguration("give --checkpoint or --static")
    ckpt = Path(args.checkpoint) if args.checkpoint else None
    cfg = _config_near(args, ckpt)
    trainer, kind = _trainer_and_kind(args, cfg)
    seed = cfg.seeds[0] if args.seed is None else args.seed
    steps = cfg.eval_length if args.steps is None else args.steps
    if steps < 1 or args.noise_sigma < 0:
        raise InvalidConfiguration("--steps must be positive and --noise-sigma non-negative")
    out = _out_dir(args, f"eval-{kind}-seed{seed}")
    t0 = time.perf_counter()
    rows = evaluate_arm(cfg, kind, trainer, seed, steps=steps, noise_sigma=args.noise_sigma)
    name = f"eval_sigma{args.noise_sigma:g}_seed{seed}"
    header = eval_header(cfg.env.num_users)
    write_csv(out / f"{name}.csv", header, eval_rows(rows))
    plotting.eval_trace(rows, out / f"{name}.png", title=f"{kind} sigma={args.noise_sigma:g} m")
    mean, std = float(rows[:, -1].mean()), float(rows[:, -1].std())
    print(f"algo={kind} seed={seed} noise_sigma={args.noise_sigma:g} steps={steps} "
          f"mean_rssi_dbm={_fmt(mean)} std_rssi_dbm={_fmt(std)}")
    write_manifest(out, "evaluate", sys.argv[1:], cfg.content_hash,
                   {"evaluate": time.perf_counter() - t0},
                   {"algo": str(kind), "seed": seed, "noise_sigma": args.noise_sigma,
                    "mean_rssi_dbm": mean, "std_rssi_dbm": std},
                   {f"{name}.csv": header})
    return 0


# -- noise sweep ---------------------------------------------------------

def cmd_noise_sweep(args) -> int:
    ckpt = Path(args.checkpoint)
    cfg = _config_near(args, ckpt)
    trainer = checkpoint.load(ckpt)
    kind = BaselineKind(trainer.algo)
    seed = cfg.seeds[0] if args.seed is None else args.seed
    sigmas = cfg.noise_sigmas if args.sigmas is None else tuple(float(s) for s in args.sigmas.split(","))
    if not sigmas or min(sigmas) < 0:
        raise InvalidConfiguration("noise sigmas must be a non-empty list of non-negative values")
    out = _out_dir(args, f"noise-{kind}-seed{seed}")
    t0 = time.perf_counter()
    header = eval_header(cfg.env.num_users)
    summary = []
    for sigma in sigmas:
        rows = evaluate_arm(cfg, kind, trainer, seed, steps=args.steps, noise_sigma=sigma)
        write_csv(out / f"eval_sigma{sigma:g}_seed{seed}.csv", header, eval_rows(rows))
        summary.append((sigma, float(rows[:, -1].mean()), float(rows[:, -1].std())))
    base = summary[0][1]
    sweep_header = ["sigma_m", "mean_rssi_dbm", "std_rssi_dbm", "degradation_db"]
    write_csv(out / "noise_sweep.csv", sweep_header, [[s, m, sd, base - m] for s, m, sd in summary])
    plotting.noise_sweep([s[0] for s in summary], [s[1] for s in summary], out / "noise_sweep.png",
                         title=f"{kind} seed {seed}")
    for s, m, sd in summary:
        print(f"noise_sigma={s:g} mean_rssi_dbm={_fmt(m)} std_rssi_dbm={_fmt(sd)}")
    write_manifest(out, "noise-sweep", sys.argv[1:], cfg.content_hash,
                   {"noise_sweep": time.perf_counter() - t0},
                   {"sigmas": list(sigmas), "mean_rssi_dbm": [s[1] for s in summary]},
                   {"noise_sweep.csv": sweep_header})
    return 0


# -- heatmap -------------------------------------------------------------

def _resolution(text: str) -> tuple[int, int]:
    try:
        parts = [int(p) for p in text.lower().split("x")]
    except ValueError:
        raise DegenerateGrid(f"bad resolution {text!r}") from None
    nx, ny = (parts[0], parts[0]) if len(parts) == 1 else parts
    if len(parts) > 2 or nx < 2 or ny < 2:
        raise DegenerateGrid(f"resolution {text!r} needs at least 2 cells per axis")
    return nx, ny


def heatmap_for(cfg: ExperimentConfig, kind: BaselineKind, trainer, nx: int, ny: int, seed: int,
                users=None):
    """Return ``(grid, extent, focal_points)`` for a checkpoint or a static arm."""
    layout = cfg.layout()
    users = cfg.scene.users if users is None else users
    focal = None
    if kind is BaselineKind.NONE:
        tiles = []
    elif kind is BaselineKind.FLAT:
        tiles = tiles_with_normals(layout, flat_configuration(layout))
    else:
        focal = settle_focal_points(cfg, kind, trainer, users, seed=seed)
        env = make_env(cfg, kind)
        env.reset(0, users=users)
        tiles = tiles_with_normals(layout, getattr(env, "env", env).tile_normals(focal))
    b = cfg.scene.bounds
    extent = (float(b.lo[0]), float(b.hi[0]), float(b.lo[1]), float(b.hi[1]))
    x0, x1, y0, y1 = extent
    grid = rssi_grid(cfg.scene, tiles, (x0, y0, x1, y1, (nx, ny)), cfg.radiation)
    return grid, extent, focal


def cmd_heatmap(args) -> int:
    if bool(args.checkpoint) == bool(args.static):
        raise InvalidConfiguration("give exactly one of --checkpoint or --static")
    nx, ny = _resolution(args.resolution)
    ckpt = Path(args.checkpoint) if args.checkpoint else None
    cfg = _config_near(args, ckpt)
    trainer, kind = _trainer_and_kind(args, cfg)
    seed = cfg.seeds[0] if args.seed is None else args.seed
    out = _out_dir(args, f"heatmap-{kind}")
    t0 = time.perf_counter()
    grid, extent, focal = heatmap_for(cfg, kind, trainer, nx, ny, seed)
    xs = np.linspace(extent[0], extent[1], nx)
    ys = np.linspace(extent[2], extent[3], ny)
    write_csv(out / "heatmap.csv", HEATMAP_HEADER,
              ([r, c, xs[c], ys[r], grid[r, c]] for r in range(ny) for c in range(nx)))
    write_ppm(out / "heatmap.ppm", grid)
    plotting.heatmap(grid, extent, out / "heatmap.png", cfg.scene, cfg.scene.users, title=str(kind))
    sc = cfg.scene
    write_json_atomic(out / "heatmap.json", {
        "algo": str(kind),
        "resolution": [nx, ny],
        "extent_m": list(extent),
        "rx_height_m": sc.rx_height,
        "ramp_dbm": [-110.0, -60.0],
        "users": sc.users.tolist(),
        "focal_points": None if focal is None else focal.tolist(),
        "obstacles": [{"name": c.name, "center": c.base[:2].tolist(), "radius": c.radius,
                       "height": c.height} for c in sc.obstacles],
        "walls": [{"name": w.name, "min": w.lo.tolist(), "max": w.hi.tolist()} for w in sc.walls],
    })
    print(f"algo={kind} resolution={nx}x{ny} max_rssi_dbm={_fmt(grid.max())}")
    write_manifest(out, "heatmap", sys.argv[1:], cfg.content_hash,
                   {"heatmap": time.perf_counter() - t0}, {"algo": str(kind)},
                   {"heatmap.csv": HEATMAP_HEADER})
    return 0


# -- compare -------------------------------------------------------------

def cmd_compare(args) -> int:
    cfg = _config(args)
    if args.episodes is not None:
        cfg = cfg.with_overrides(episodes=args.episodes)
    seeds = cfg.seeds if args.seeds is None else tuple(int(s) for s in args.seeds.split(","))
    if not seeds:
        raise InvalidConfiguration("seed list is empty")
    algos = [BaselineKind(a) for a in args.algos.split(",")] if args.algos else list(ALL_KINDS)
    out = _out_dir(args, "compare")
    _snapshot(cfg, out)
    header = eval_header(cfg.env.num_users)
    table, timings, failed = [], {}, False
    for kind in sorted(algos, key=str):
        for seed in sorted(seeds):
            tag = f"{kind}_seed{seed}"
            t0 = time.perf_counter()
            try:
                if kind.learned:
                    trainer, tlog = train_one(cfg, kind, seed, out, tag)
                    rewards = tlog.episode_rewards()
                    final = float(rewards[-50:].mean()) if len(rewards) else float("nan")
                else:
                    trainer, final = None, None
                rows = evaluate_arm(cfg, kind, trainer, seed)
                if final is None:
                    final = episode_reward_from_rows(cfg, rows)
                write_csv(out / f"eval_{tag}.csv", header, eval_rows(rows))
                table.append([str(kind), seed, float(rows[:, -1].mean()), float(rows[:, -1].std()), final])
            except Exception as exc:  # one failed arm must not sink the table
                log.error("arm %s failed: %s", tag, exc)
                table.append([str(kind), seed, "failed", "failed", "failed"])
                failed = True
            timings[tag] = time.perf_counter() - t0
            print(f"{tag} done in {timings[tag]:.1f} s", file=sys.stderr)
    write_csv(out / "summary.csv", SUMMARY_HEADER, table)
    by_algo = {}
    for algo, _, mean, _, _ in table:
        if mean != "failed":
            by_algo.setdefault(algo, []).append(mean)
    lines = ["| algo | seeds | mean RSSI (dBm) | std over seeds (dB) |", "|---|---|---|---|"]
    for algo, vals in by_algo.items():
        lines.append(f"| {algo} | {len(vals)} | {np.mean(vals):.2f} | {np.std(vals):.2f} |")
    (out / "summary.md").write_text("\n".join(lines) + "\n")
    if by_algo:
        plotting.compare_bars(by_algo, out / "compare.png", title=f"{len(seeds)} seeds")
    print("\n".join(lines))
    write_manifest(out, "compare", sys.argv[1:], cfg.content_hash, timings,
                   {"summary": {a: float(np.mean(v)) for a, v in by_algo.items()}, "failed": failed},
                   {"summary.csv": SUMMARY_HEADER})
    return 1 if failed else 0


# -- parser --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reflectsim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="experiment INI file (default: packaged scene)")
            sp.add_argument("--profile", choices=sorted(PROFILES))
        sp.add_argument("--out", help=f"output directory (default: ${OUT_ENV}/<run> or runs/<run>)")

    sp = sub.add_parser("train", help="train one learned arm")
    common(sp)
    sp.add_argument("--algo", choices=[str(k) for k in ALL_KINDS])
    sp.add_argument("--episodes", type=int)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="evaluate a checkpoint or a static arm")
    common(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--static", choices=["flat", "none"])
    sp.add_argument("--steps", type=int)
    sp.add_argument("--noise-sigma", type=float, default=0.0)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("noise-sweep", help="evaluate one checkpoint across noise levels")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--sigmas", help="comma separated, metres (default: from config)")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_noise_sweep)

    sp = sub.add_parser("heatmap", help="RSSI map at receiver height")
    common(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--static", choices=["flat", "none"])
    sp.add_argument("--resolution", default="100", help="N or NXxNY")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_heatmap)

    sp = sub.add_parser("compare", help="train and evaluate every arm on shared seeds")
    common(sp)
    sp.add_argument("--seeds", help="comma separated (default: from config)")
    sp.add_argument("--episodes", type=int)
    sp.add_argument("--algos", help="comma separated subset (default: all five)")
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidConfiguration, DegenerateGrid) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IncompatibleCheckpoint as exc:
        print(f"error: incompatible checkpoint: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:
        log.debug("run failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: batches, ablations, renders, world validation."""

from __future__ import annotations

import argparse
import dataclasses
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .episode import JsonlTrace, read_trace, run_episode
from .explorer import ExplorerConfig
from .metrics import EpisodeResult, aggregate, format_table, shortest_path_oracle
from .planner import PathError
from .prompts import CoTLevel
from .render import save_gray, save_rgb, trajectory_render
from .scenarios import corridor_world
from .scorer import DEFAULT_API_KEY_ENV, SCORER_KINDS, ScorerSpec
from .simworld import FormatError, World, generate_world, load_world
from .value_map import ValueMap

log = logging.getLogger("cotnav")

ABLATION_AXES = {
    "cot_level": [level.value for level in CoTLevel],
    "use_history": [True, False],
    "use_topdown_map": [True, False],
}
TABLE_COLUMNS = ["setting", "episodes", "sr", "spl", "mean_steps", "fallback_events"]


class ConfigError(ValueError):
    pass


@dataclass
class WorldSource:
    kind: str = "generator"  # generator | file | corridor
    path: str | None = None
    rooms: int = 4
    size: int = 64

    def __post_init__(self):
        if self.kind not in ("generator", "file", "corridor"):
            raise ConfigError(f"unknown world source {self.kind!r}")
        if (self.kind == "file") != (self.path is not None):
            raise ConfigError("a world file path goes with, and only with, the file source")
        if self.rooms < 1 or self.size < 8:
            raise ConfigError("rooms must be >= 1 and size >= 8")

    def build(self, seed: int) -> World:
        if self.kind == "file":
            world = load_world(Path(self.path).read_text())
            return dataclasses.replace(world, seed=seed)
        if self.kind == "corridor":
            return corridor_world(seed)
        return generate_world(seed, rooms=self.rooms, size=self.size)


@dataclass
class RunConfig:
    world: WorldSource = field(default_factory=WorldSource)
    scorer: ScorerSpec = field(default_factory=ScorerSpec)
    explorer: ExplorerConfig = field(default_factory=ExplorerConfig)
    seed: int = 1
    episodes: int = 1
    workers: int = 1
    out: str = "runs/latest"

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError("episode count must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    def to_dict(self, reproducible_only: bool = False) -> dict:
        d = {
            "world": dataclasses.asdict(self.world),
            "scorer": dataclasses.asdict(self.scorer),
            "explorer": self.explorer.to_dict(),
            "seed": self.seed,
            "episodes": self.episodes,
        }
        if not reproducible_only:
            d["workers"] = self.workers
            d["out"] = self.out
        return d

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        d = dict(d)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "world" in d:
                d["world"] = WorldSource(**d["world"])
            if "scorer" in d:
                d["scorer"] = ScorerSpec(**d["scorer"])
            if "explorer" in d:
                d["explorer"] = ExplorerConfig.from_dict(d["explorer"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


# -- batch execution -------------------------------------------------------

def _episode_job(args) -> EpisodeResult:
    config, episode_id, trace_dir, render_dir = args
    world_seed = config.seed + episode_id
    world = config.world.build(world_seed)
    scorer = config.scorer.build(world, config.explorer.cone)
    info = {"kind": config.scorer.kind, "endpoint": config.scorer.endpoint,
            "batch_seed": config.seed, "world_seed": world_seed}
    trace = None
    if trace_dir is not None:
        trace = JsonlTrace(Path(trace_dir) / f"episode_{episode_id:04d}.jsonl")
    try:
        result = run_episode(world, config.explorer, scorer, episode_id, trace, info)
    finally:
        if trace is not None:
            trace.close()
        close = getattr(scorer, "close", None)
        if close is not None:
            close()
    if render_dir is not None:
        render_dir = Path(render_dir)
        img = trajectory_render(world.obstacles, result.trajectory, list(world.targets))
        save_rgb(img, render_dir / f"episode_{episode_id:04d}_trajectory.ppm")
    return result


def run_batch(config: RunConfig, out: Path | None = None) -> list[EpisodeResult]:
    """Run every episode of a batch; results come back sorted by episode id."""
    trace_dir = render_dir = None
    if out is not None:
        trace_dir, render_dir = out / "traces", out / "renders"
        trace_dir.mkdir(parents=True, exist_ok=True)
        render_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(config, i, trace_dir, render_dir) for i in range(config.episodes)]
    if config.workers == 1:
        results = [_episode_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_episode_job, jobs))
    return sorted(results, key=lambda r: r.episode_id)


def batch_report(config: RunConfig, results: list[EpisodeResult]) -> dict:
    summary = aggregate(results)
    summary["warnings"] = summary["fallback_events"]
    return {
        "config": config.to_dict(reproducible_only=True),
        "summary": summary,
        "episodes": [r.to_dict() for r in results],
    }


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _summary_row(setting: str, summary: dict) -> dict:
    return {"setting": setting, "episodes": summary["counted"], "sr": summary["sr"],
            "spl": summary["spl"], "mean_steps": summary["mean_steps"],
            "fallback_events": summary["fallback_events"]}


def cmd_run(config: RunConfig) -> int:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_batch(config, out)
    report = batch_report(config, results)
    write_json(out / "metrics.json", report)
    s = report["summary"]
    (out / "table.txt").write_text(format_table([_summary_row("run", s)], TABLE_COLUMNS))
    if s["warnings"]:
        log.warning("%d scorer fallback warnings over %d calls", s["warnings"], s["scorer_calls"])
    print(f"episodes={s['episodes']} sr={s['sr']} spl={s['spl']} warnings={s['warnings']} -> {out}")
    return 0


def ablation_settings(axes: list[str]) -> list[dict]:
    for a in axes:
        if a not in ABLATION_AXES:
            raise ConfigError(f"unknown ablation axis {a!r}; choose from {', '.join(ABLATION_AXES)}")
    axes = [a for a in ABLATION_AXES if a in axes]  # canonical order
    return [dict(zip(axes, values)) for values in itertools.product(*(ABLATION_AXES[a] for a in axes))]


def setting_label(setting: dict) -> str:
    if not setting:
        return "run"
    return ",".join(f"{k}={v}" for k, v in setting.items())


def cmd_ablate(config: RunConfig, axes: list[str]) -> int:
    settings = ablation_settings(axes)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, reports = [], []
    for setting in settings:
        cfg = dataclasses.replace(config, explorer=dataclasses.replace(config.explorer, **setting))
        label = setting_label(setting)
        sub = out / ("setting_" + label.replace(",", "__").replace("=", "-")) if setting else out
        results = run_batch(cfg, sub)
        report = batch_report(cfg, results)
        reports.append({"setting": setting, **report["summary"]})
        rows.append(_summary_row(label, report["summary"]))
        print(f"{label}: sr={report['summary']['sr']} spl={report['summary']['spl']}")
    write_json(out / "ablation.json", {"axes": [a for a in ABLATION_AXES if a in axes],
                                       "config": config.to_dict(reproducible_only=True),
                                       "rows": reports})
    (out / "table.txt").write_text(format_table(rows, TABLE_COLUMNS))
    return 0


def cmd_render(trace_path: str, out: str | None) -> int:
    records = read_trace(trace_path)
    headers = [r for r in records if r["type"] == "header"]
    summaries = [r for r in records if r["type"] == "summary"]
    if not headers or not summaries:
        raise ValueError(f"{trace_path}: trace needs a header and a summary record")
    header, summary = headers[0], summaries[-1]
    world = load_world("\n".join(header["world"]), header["resolution"], header["category"])
    out_dir = Path(out) if out else Path(trace_path).with_suffix("")
    out_dir.mkdir(parents=True, exist_ok=True)
    occ = np.array([[int(ch) for ch in row] for row in summary["occupancy"]], dtype=np.uint8)
    from .occupancy import OccupancyGrid
    grid = OccupancyGrid(occ.shape[1], occ.shape[0], header["resolution"], occ)
    grid.save_pgm(out_dir / "occupancy.pgm")
    vmap = ValueMap(occ.shape[0], occ.shape[1], np.array(summary["values"], dtype=float),
                    np.array(summary["confidences"], dtype=float))
    save_gray(vmap.value_image(), out_dir / "value.pgm")
    save_gray(vmap.confidence_image(), out_dir / "confidence.pgm")
    traj = summary["result"]["trajectory"]
    save_rgb(trajectory_render(world.obstacles, traj, list(world.targets)), out_dir / "trajectory.ppm")
    print(f"rendered {trace_path} -> {out_dir}")
    return 0


def cmd_validate_world(path: str, success_radius: float) -> int:
    world = load_world(Path(path).read_text())
    h, w = world.shape
    try:
        dist = shortest_path_oracle(world, success_radius=success_radius)
    except PathError as exc:
        print(f"{path}: invalid: {exc}")
        return 1
    print(f"{path}: ok {w}x{h}, {len(world.targets)} target(s), shortest path {dist:.2f} m")
    return 0


# -- argument handling -----------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cotnav", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def batch_flags(sp):
        sp.add_argument("--config", help="JSON config file; flags override its fields")
        sp.add_argument("--seed", type=int, help="batch seed; episode i uses world seed seed+i")
        sp.add_argument("--episodes", type=int)
        sp.add_argument("--workers", type=int, help="parallel episode workers")
        sp.add_argument("--world", help="ASCII world file (instead of generated worlds)")
        sp.add_argument("--world-kind", choices=["generator", "corridor"],
                        help="generated rooms (default) or the scripted corridor junction")
        sp.add_argument("--rooms", type=int)
        sp.add_argument("--size", type=int)
        sp.add_argument("--scorer", choices=SCORER_KINDS)
        sp.add_argument("--endpoint", help="base URL of the chat-completions server")
        sp.add_argument("--model")
        sp.add_argument("--timeout", type=float)
        sp.add_argument("--api-key-env", help=f"env var holding the API key (default {DEFAULT_API_KEY_ENV})")
        sp.add_argument("--cot", choices=[c.value for c in CoTLevel])
        sp.add_argument("--no-history", action="store_true")
        sp.add_argument("--no-topdown", action="store_true")
        sp.add_argument("--max-steps", type=int)
        sp.add_argument("--out")
        sp.add_argument("--print-config", action="store_true", help="print the resolved config and exit")

    batch_flags(sub.add_parser("run", help="run a batch of episodes"))
    ab = sub.add_parser("ablate", help="run the cross-product of ablation settings")
    batch_flags(ab)
    ab.add_argument("--axes", default="", help="comma list from: " + ", ".join(ABLATION_AXES))
    r = sub.add_parser("render", help="render maps and trajectory from a trace")
    r.add_argument("trace")
    r.add_argument("--out")
    v = sub.add_parser("validate-world", help="check an ASCII world file")
    v.add_argument("path")
    v.add_argument("--success-radius", type=float, default=1.0)
    return p


def resolve_config(args) -> RunConfig:
    base: dict = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a JSON object")
    cfg = RunConfig.from_dict(base)
    world = dataclasses.asdict(cfg.world)
    if args.world is not None:
        world.update(kind="file", path=args.world)
    elif args.world_kind is not None:
        world.update(kind=args.world_kind, path=None)
    for key in ("rooms", "size"):
        if getattr(args, key) is not None:
            world[key] = getattr(args, key)
    scorer = dataclasses.asdict(cfg.scorer)
    for flag, key in (("scorer", "kind"), ("endpoint", "endpoint"), ("model", "model"),
                      ("timeout", "timeout"), ("api_key_env", "api_key_env")):
        if getattr(args, flag) is not None:
            scorer[key] = getattr(args, flag)
    explorer = cfg.explorer.to_dict()
    if args.cot is not None:
        explorer["cot_level"] = args.cot
    if args.no_history:
        explorer["use_history"] = False
    if args.no_topdown:
        explorer["use_topdown_map"] = False
    if args.max_steps is not None:
        explorer["max_steps"] = args.max_steps
    top = {"seed": cfg.seed, "episodes": cfg.episodes, "workers": cfg.workers, "out": cfg.out}
    for key in top:
        if getattr(args, key) is not None:
            top[key] = getattr(args, key)
    return RunConfig.from_dict({"world": world, "scorer": scorer, "explorer": explorer, **top})


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        # per-call fallback warnings are summarized at the end of a batch
        logging.getLogger("cotnav.explorer").setLevel(logging.ERROR)
    try:
        if args.command == "render":
            return cmd_render(args.trace, args.out)
        if args.command == "validate-world":
            return cmd_validate_world(args.path, args.success_radius)
        config = resolve_config(args)
        if args.print_config:
            print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
            return 0
        if args.command == "run":
            return cmd_run(config)
        return cmd_ablate(config, [a.strip() for a in args.axes.split(",") if a.strip()])
    except (ConfigError, FormatError, ValueError, OSError) as exc:
        print(f"cotnav: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

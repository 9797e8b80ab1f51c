"""Command-line entry point: synth-traces, train, eval, compare, inspect-trace."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import Config, ConfigError, load_config
from .evaluation import (CONTROLLERS, EpisodeReport, aggregate, load_actors, render_table,
                         run_episode, write_cdfs)
from .neuralnet import load_checkpoint, save_checkpoint
from .traces import (TraceError, load_content_trace, load_network_trace, mixed_content,
                     parse_manifest, save_content_trace, save_network_trace, synthesize_dataset,
                     write_manifest)
from .training import (AGENTS, FOUNDATION, TEAM, CSVLog, Dataset, EpisodeSpec, build_dataset,
                       train_foundation, train_team)


def _overrides(pairs) -> dict:
    out = {}
    for item in pairs or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _config(args) -> Config:
    return load_config(args.config).with_overrides(_overrides(args.set))


def _run_dir(root: Path, kind: str, seed: int) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    path = Path(root) / f"{kind}-{stamp}-seed{seed}"
    n = 1
    while path.exists():
        n += 1
        path = Path(root) / f"{kind}-{stamp}-seed{seed}-{n}"
    path.mkdir(parents=True)
    return path


def cmd_synth_traces(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = args.n or cfg.sim.n_traces
    seconds = args.seconds or cfg.sim.trace_seconds
    traces = synthesize_dataset(n, seconds, args.seed, cfg.sim.granularity)
    names = []
    for tr in traces:
        name = f"{tr.id}.csv"
        save_network_trace(tr, out / name)
        names.append(name)
    write_manifest(out / "manifest.txt", traces, names)
    for j in range(args.content):
        c = mixed_content(seconds, args.seed + j)
        save_content_trace(c, out / f"content-{j}.csv")
    print(f"wrote {len(traces)} network traces and {args.content} content traces to {out}")
    return 0


def _dataset_from_args(args, cfg: Config) -> Dataset:
    ds = build_dataset(cfg)
    if getattr(args, "manifest", None):
        entries = parse_manifest(args.manifest)
        traces = [load_network_trace(e.path, base_rtt_ms=e.base_rtt_ms, loss_rate=e.loss_rate,
                                     family=e.family) for e in entries]
        contents = [load_content_trace(e.content) for e in entries if e.content is not None]
        ds = Dataset(ds.train, traces, ds.train_content, contents or ds.test_content)
    return ds


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _run_dir(Path(args.out_root), "train", args.seed)
    (out / "config.txt").write_text(cfg.dumps())
    (out / "seed.txt").write_text(f"{args.seed}\n")
    ds = build_dataset(cfg)
    log = CSVLog(out / "training_log.csv")
    agents = AGENTS if args.agent == "all" else (args.agent,)
    stage1 = {}
    if args.stage in (FOUNDATION, "all"):
        for k in agents:
            print(f"foundation course: {k}", flush=True)
            res = train_foundation(k, ds, cfg, args.seed, log)
            stage1[k] = res.actor
            save_checkpoint(out / f"foundation_{k}.ckpt", {"actor": res.actor, "critic": res.critic},
                            {"stage": FOUNDATION, "agent": k, "seed": args.seed})
    if args.stage in (TEAM, "all"):
        for k in AGENTS:
            if k in stage1:
                continue
            if not args.init_dir:
                raise ConfigError("team stage needs --init-dir with foundation checkpoints")
            path = Path(args.init_dir) / f"foundation_{k}.ckpt"
            if not path.exists():
                raise FileNotFoundError(f"missing foundation checkpoint: {path}")
            stage1[k] = load_checkpoint(path)[0]["actor"]
        print("team course", flush=True)
        team = train_team(stage1, ds, cfg, args.seed, log)
        nets = dict(team.actors)
        nets["critic"] = team.critic
        save_checkpoint(out / "team.ckpt", nets,
                        {"stage": TEAM, "seed": args.seed, "best_epoch": team.best_epoch})
    print(out)
    return 0


def _episodes(ds: Dataset, n: int | None, seconds: float, seed: int) -> list[EpisodeSpec]:
    n = n or len(ds.test)
    eps = []
    for i in range(n):
        net = ds.test[i % len(ds.test)]
        content = ds.test_content[(i // len(ds.test)) % len(ds.test_content)]
        eps.append(EpisodeSpec(net, content, 0.0, min(seconds, net.duration), seed + i))
    return eps


def cmd_eval(args) -> int:
    cfg = _config(args)
    controllers = [c.strip() for c in args.controllers.split(",") if c.strip()]
    unknown = [c for c in controllers if c not in CONTROLLERS]
    if unknown:
        raise ConfigError(f"unknown controllers: {', '.join(unknown)}")
    actors = None
    if any(c.startswith("mamba") for c in controllers):
        if not args.checkpoint:
            raise ConfigError("mamba controllers need --checkpoint")
        actors = load_actors(args.checkpoint)
    ds = _dataset_from_args(args, cfg)
    out = _run_dir(Path(args.out_root), "eval", args.seed)
    (out / "config.txt").write_text(cfg.dumps())
    (out / "seed.txt").write_text(f"{args.seed}\n")
    seconds = args.seconds or cfg.sim.episode_seconds
    reports = []
    for ctl in controllers:
        for i, ep in enumerate(_episodes(ds, args.episodes, seconds, args.seed)):
            rep, _, events = run_episode(ctl, ep, cfg, actors, record_events=args.event_log)
            reports.append(rep)
            stem = f"report_{ctl}_{i:03d}_{ep.net.id}"
            (out / f"{stem}.json").write_text(rep.to_json())
            if events is not None:
                with open(out / f"events_{ctl}_{i:03d}.csv", "w") as fh:
                    fh.write("tick,queue_bytes,delivered_bytes,dropped_bytes\n")
                    for row in events:
                        fh.write(",".join(str(v) for v in row) + "\n")
    summary = aggregate(reports, reference=controllers[0])
    write_cdfs(summary, out / "cdf")
    table = render_table(summary)
    (out / "table.txt").write_text(table)
    (out / "summary.json").write_text(json.dumps({
        "means": summary.means, "episodes": summary.episodes,
        "deltas": {f"{a} vs {b}": d for (a, b), d in summary.deltas.items()},
    }, sort_keys=True, indent=1))
    print(table, end="")
    print(out)
    return 0


def cmd_compare(args) -> int:
    reports = []
    for d in args.dirs:
        d = Path(d)
        if not d.exists():
            raise FileNotFoundError(f"no such report directory: {d}")
        reports += [EpisodeReport.from_json(p.read_text()) for p in sorted(d.glob("report_*.json"))]
    if not reports:
        raise FileNotFoundError("no report_*.json files found")
    summary = aggregate(reports, reference=args.reference)
    print(render_table(summary), end="")
    return 0


def cmd_inspect_trace(args) -> int:
    tr = load_network_trace(args.path)
    bw = tr.bandwidth
    spacing = np.diff(tr.times)
    print(f"id          {tr.id}")
    print(f"samples     {len(bw)}")
    print(f"duration    {tr.duration:.3f} s")
    print(f"spacing     {spacing.min() if spacing.size else 0:.3f}..{spacing.max() if spacing.size else 0:.3f} s")
    print(f"bandwidth   mean {tr.integral(tr.times[0], tr.times[0] + tr.duration) / tr.duration:.1f} "
          f"min {bw.min():.1f} max {bw.max():.1f} kbps")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mabr", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed_required):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--seed", type=int, required=seed_required)

    p = sub.add_parser("synth-traces", help="write a synthetic network/content trace set")
    common(p, False)
    p.set_defaults(seed=0)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--seconds", type=float)
    p.add_argument("--content", type=int, default=2, help="number of content traces")
    p.set_defaults(func=cmd_synth_traces)

    p = sub.add_parser("train", help="run curriculum stages")
    common(p, True)
    p.add_argument("--stage", choices=(FOUNDATION, TEAM, "all"), default="all")
    p.add_argument("--agent", choices=AGENTS + ("all",), default="all")
    p.add_argument("--init-dir", help="run directory holding foundation_*.ckpt for the team stage")
    p.add_argument("--out-root", default="runs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run controllers over held-out traces")
    common(p, True)
    p.add_argument("--controllers", default="gcc_on,mamba")
    p.add_argument("--checkpoint", help="team.ckpt for mamba controllers")
    p.add_argument("--manifest", help="trace manifest; default is the synthetic test split")
    p.add_argument("--episodes", type=int)
    p.add_argument("--seconds", type=float)
    p.add_argument("--event-log", action="store_true", help="write per-tick queue/delivery CSVs")
    p.add_argument("--out-root", default="runs")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="render the comparison table from eval directories")
    p.add_argument("dirs", nargs="+")
    p.add_argument("--reference", default="gcc_on")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("inspect-trace", help="summarize a network trace file")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect_trace)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TraceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

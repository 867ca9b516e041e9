"""``lovmm`` command line: demos, train, eval, map, viz, parse.

Exit codes: 0 ok, 2 config error, 3 simulation failure, 4 not found,
5 training divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from lovmm.config import RunConfig, apply_ablation
from lovmm.errors import ConfigError, LovmmError

log = logging.getLogger("lovmm")

EXIT_OK, EXIT_CONFIG, EXIT_SIM, EXIT_NOT_FOUND, EXIT_DIVERGED = 0, 2, 3, 4, 5


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True))


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(getattr(args, "config", None), getattr(args, "set", None) or [])
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


# -- demos ------------------------------------------------------------------------------


def cmd_demos(args) -> int:
    from lovmm.sim.dataset import collect_demos
    from lovmm.sim.tasks import get_task

    spec = get_task(args.task)
    out = Path(args.out) if args.out else Path("data") / f"{spec.task_id}_n{args.n}_s{args.seed}"
    collect_demos(spec, args.n, args.seed, out, H=args.H, W=args.W, k=args.k,
                  n_distractors=args.distractors)
    print(out)
    return EXIT_OK


# -- train ------------------------------------------------------------------------------


def cmd_train(args) -> int:
    from lovmm.harness import validation_fn
    from lovmm.sim.dataset import load_dataset
    from lovmm.training import train

    cfg = _run_config(args)
    model_cfg, train_cfg = cfg.model, cfg.train
    if args.seed is not None:
        train_cfg.seed = args.seed
    if args.ablation:
        model_cfg, train_cfg = apply_ablation(model_cfg, train_cfg, args.ablation)
    for d in args.data:
        if not (Path(d) / "dataset.json").exists():
            raise ConfigError(f"no dataset at {d}")
    demos = load_dataset(*args.data)
    if not demos:
        raise ConfigError("dataset is empty")
    sizes = {(d.meta["H"], d.meta["W"], d.meta["k"]) for d in demos}
    if sizes != {(model_cfg.H, model_cfg.W, model_cfg.k)}:
        raise ConfigError(f"dataset observation sizes {sorted(sizes)} do not match the model "
                          f"({model_cfg.H}, {model_cfg.W}, {model_cfg.k})")
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.model, cfg.train = model_cfg, train_cfg
    (out / "config.ini").write_text(cfg.to_ini())
    val_tasks = args.val_task or sorted({d.task_id for d in demos})
    val_fn = None
    if train_cfg.val_episodes > 0:
        val_fn = validation_fn(val_tasks, train_cfg.val_episodes, train_cfg.val_seed)
    res = train(demos, model_cfg, train_cfg, out, val_fn=val_fn, resume=args.resume,
                progress_every=args.progress)
    _print_json({"run_dir": str(out), "best": str(res.best) if res.best else None,
                 "best_val_tsr": res.best_val_tsr, "checkpoints": len(res.checkpoints)})
    return EXIT_OK


# -- eval -------------------------------------------------------------------------------


def _parse_checkpoints(items) -> list[tuple[str, str]]:
    out = []
    for item in items or []:
        label, sep, path = item.partition("=")
        out.append((label, path) if sep else ("-", item))
    return out


def cmd_eval(args) -> int:
    from lovmm.harness import EvalMatrix, LearnedPolicy, OraclePolicy, RandomPolicy, evaluate
    from lovmm.policy import Policy
    from lovmm.sim.tasks import TASKS, get_task

    cfg = _run_config(args)
    tasks = [get_task(t).task_id for t in (args.tasks or list(TASKS))]
    episodes = args.episodes or cfg.eval.episodes
    seed = cfg.eval.seed if args.seed is None else args.seed
    matrix = EvalMatrix()
    kw = dict(slack=cfg.eval.max_steps_slack, snap_threshold=cfg.eval.snap_threshold, map_settings=cfg.map)
    checkpoints = _parse_checkpoints(args.checkpoint)
    if checkpoints:
        for label, path in checkpoints:
            if not Path(path).exists():
                raise ConfigError(f"checkpoint not found: {path}")
            policy, header, _ = Policy.load(path)
            if label == "-":
                label = str(header.get("meta", {}).get("n_demos", "-"))
            m = policy.cfg
            for t in tasks:
                matrix.add(t, label, evaluate(lambda: LearnedPolicy(policy), t, episodes, seed,
                                              H=m.H, W=m.W, k=m.k, **kw))
    else:
        factory = OraclePolicy if args.policy == "oracle" else (lambda: RandomPolicy(seed))
        if args.policy not in ("oracle", "random"):
            raise ConfigError("give --checkpoint or --policy oracle|random")
        for t in tasks:
            matrix.add(t, args.policy, evaluate(factory, t, episodes, seed, **kw))
    out = Path(args.out)
    paths = matrix.write(out, plots=not args.no_plots)
    _print_json({"rows": matrix.rows(), "csv": str(paths["csv"]), "json": str(paths["json"])})
    return EXIT_OK


# -- map --------------------------------------------------------------------------------


def cmd_map(args) -> int:
    from lovmm.encoders import OraclePixelEmbedder
    from lovmm.harness import _map_config
    from lovmm.sim.scene import scene_frames
    from lovmm.sim.tasks import generate_scene
    from lovmm.vlmap import QuerySet, VLMap, build_map, localize, target_position

    cfg = _run_config(args)
    mcfg = _map_config(cfg.map)
    if args.map_cmd == "build":
        scene = generate_scene(args.task, args.seed if args.seed is not None else 0)
        vlmap = build_map(scene_frames(scene), OraclePixelEmbedder(mcfg.embedding_dim), mcfg)
        vlmap.stats["task_id"] = scene.task_id
        vlmap.stats["seed"] = scene.seed
        vlmap.save(args.out)
        print(args.out)
        return EXIT_OK
    if not Path(args.map).exists():
        raise ConfigError(f"map file not found: {args.map}")
    vlmap = VLMap.load(args.map)
    queries = QuerySet.with_background([args.query], dim=vlmap.embedding_dim)
    lmap = localize(vlmap, queries)
    target = target_position(vlmap, lmap, args.query, min_cluster_size=cfg.map.min_cluster_size)
    counts = {}
    for i, name in enumerate(lmap.labels):
        n = int((lmap.M_c == i).sum())
        if n:
            counts[name] = n
    _print_json({"target": target.to_dict(), "label_cells": counts,
                 "unobserved_cells": int((lmap.M_c < 0).sum())})
    return EXIT_OK


# -- viz --------------------------------------------------------------------------------


def cmd_viz(args) -> int:
    from lovmm.policy import Policy
    from lovmm.sim.dataset import load_episode
    from lovmm.viz import dump_affordances

    for p in (args.checkpoint, args.episode):
        if not Path(p).exists():
            raise ConfigError(f"not found: {p}")
    policy, _, _ = Policy.load(args.checkpoint)
    demo = load_episode(args.episode)
    if not 0 <= args.step < len(demo.steps):
        raise ConfigError(f"episode has {len(demo.steps)} steps")
    st = demo.steps[args.step]
    _print_json(dump_affordances(policy, st.obs_pick, st.obs_place, st.lm, args.out))
    return EXIT_OK


# -- parse ------------------------------------------------------------------------------


def cmd_parse(args) -> int:
    from lovmm.parser import GRAMMAR, ParserBackend, parse, parse_with_fallback

    if args.backend == "grammar":
        steps = parse(args.instruction, GRAMMAR)
    else:
        steps = parse_with_fallback(args.instruction, ParserBackend("llm_client"))
    _print_json({"steps": [s.to_dict() for s in steps]})
    return EXIT_OK


# -- entry ------------------------------------------------------------------------------


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI run config")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="config override (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lovmm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("demos", help="collect expert demonstrations")
    p.add_argument("--task", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--H", type=int, default=80)
    p.add_argument("--W", type=int, default=160)
    p.add_argument("--k", type=int, default=36)
    p.add_argument("--distractors", type=int)
    p.set_defaults(fn=cmd_demos)

    p = sub.add_parser("train", help="train a policy")
    p.add_argument("--data", nargs="+", required=True, help="dataset directories")
    p.add_argument("--out", help="run directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--ablation", choices=["none", "no_augmentation", "crop_input", "no_bottleneck", "dof3"])
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--val-task", action="append", help="validation task (default: dataset tasks)")
    p.add_argument("--progress", type=int, default=0, help="log every N steps")
    _config_args(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints or baseline policies")
    p.add_argument("--checkpoint", action="append", metavar="[N=]PATH",
                   help="checkpoint, optionally labeled with its demo count (repeatable)")
    p.add_argument("--policy", choices=["oracle", "random"])
    p.add_argument("--tasks", nargs="+")
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="eval")
    p.add_argument("--no-plots", action="store_true")
    _config_args(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("map", help="build or query a semantic map")
    msub = p.add_subparsers(dest="map_cmd", required=True)
    b = msub.add_parser("build")
    b.add_argument("--task", required=True)
    b.add_argument("--seed", type=int)
    b.add_argument("--out", required=True)
    _config_args(b)
    b.set_defaults(fn=cmd_map)
    q = msub.add_parser("locate")
    q.add_argument("--map", required=True)
    q.add_argument("query")
    _config_args(q)
    q.set_defaults(fn=cmd_map)

    p = sub.add_parser("viz", help="dump affordance heatmaps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episode", required=True, help="episode directory")
    p.add_argument("--step", type=int, default=0)
    p.add_argument("--out", default="viz")
    p.set_defaults(fn=cmd_viz)

    p = sub.add_parser("parse", help="parse an instruction into steps")
    p.add_argument("instruction")
    p.add_argument("--backend", choices=["grammar", "llm"], default="grammar")
    p.set_defaults(fn=cmd_parse)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except LovmmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_FOUND


if __name__ == "__main__":
    sys.exit(main())

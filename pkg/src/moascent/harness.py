"""Experiment harness: configuration, CLI, run directories, and reports.

A run is described by a single YAML file (see ``DEFAULT_CONFIG`` and the
README schema table) and may be tweaked from the command line with dotted
``--override`` paths. Every seed produces one immutable timestamped run
directory containing the resolved config, the per-generation metrics CSV,
the frontier JSON with its checkpoints, and the selection log; reports only
read such directories.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
from datetime import datetime
from pathlib import Path

import numpy as np
import yaml

from .archive import frontier_document, hypervolume, parse_frontier, sparsity
from .evolution import GenerationConfig, Trainer, UpdateConfig
from .momdp import DEFAULT_REFERENCE_POINTS, MOMDPEnv, make_env, mo_return
from .policy import GaussianPolicy, VectorCritic, run_episode

__all__ = [
    "CHECKPOINT_FORMAT_VERSION",
    "ConfigError",
    "METRICS_HEADER",
    "build_trainer",
    "load_checkpoint",
    "load_config",
    "main",
    "resolve_config",
    "run_seed",
    "save_checkpoint",
]

METRICS_HEADER = ["generation", "hv", "sp", "archive_size", "stationary_fallbacks", "seconds"]

CHECKPOINT_FORMAT_VERSION = 1

DEFAULT_CONFIG = {
    "experiment": None,  # required: experiment id, doubles as the method tag
    "env": {
        "name": None,  # required: mo_point | mo_quadratic | mo_quadratic3
        "params": {},
    },
    "policy": {
        "hidden": 32,
        "critic_hidden": 32,
        "lr": 5e-3,
        "clip_eps": 0.2,
        "epochs": 4,
        "gamma": None,  # null: use the environment's discount
        "lam": 0.95,
        "batch_episodes": 32,
        "normalize_advantages": True,
        "optimizer": "adam",
        "init_scale": 0.1,
        "log_std_init": -0.5,
    },
    "evolution": {
        "M": 10,
        "M_ft": None,  # null: max(1, M // 3)
        "m_iters": 20,
        "m_w": 10,
        "p": 8,
        "pgr_regions": None,
        "pgr_top_k": 2,
        "paft_pairs": None,
        "reference_point": None,  # null: per-environment default
        "alpha_recompute_interval": 0,
        "snapshot_every": 1,
    },
    "paft": {"enabled": True},
    "eval": {"episodes": 8},
    "output_dir": "runs",
    "seeds": [0, 1, 2, 3, 4, 5],
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


def load_config(path) -> dict:
    """Read a YAML config file into a plain dict."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a mapping, got {type(raw).__name__}")
    return raw


def _parse_override(text: str) -> tuple[list[str], object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    key, _, value = text.partition("=")
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty path")
    try:
        parsed = yaml.safe_load(value)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {text!r} has an unparsable value: {exc}") from exc
    return key.split("."), parsed


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``section.key=value`` overrides (values parsed as YAML scalars)."""
    cfg = copy.deepcopy(cfg)
    for text in overrides or ():
        path, value = _parse_override(text)
        node = cfg
        for part in path[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"override path {'.'.join(path)} crosses a non-section value")
            node = nxt
        node[path[-1]] = value
    return cfg


def _merge_defaults(defaults: dict, user: dict, prefix: str = "") -> dict:
    merged = {}
    for key, default in defaults.items():
        dotted = f"{prefix}{key}"
        if key in user:
            value = user[key]
            if isinstance(default, dict) and key != "params":
                if not isinstance(value, dict):
                    raise ConfigError(f"{dotted}: expected a mapping")
                merged[key] = _merge_defaults(default, value, prefix=f"{dotted}.")
            else:
                merged[key] = copy.deepcopy(value)
        else:
            merged[key] = copy.deepcopy(default)
    for key in user:
        if key not in defaults:
            raise ConfigError(f"{prefix}{key}: unknown configuration field")
    return merged


def _require(cfg: dict, dotted: str, types, predicate=None, what: str = ""):
    node = cfg
    for part in dotted.split("."):
        node = node[part]
    type_tuple = types if isinstance(types, tuple) else (types,)
    ok = node is not None and isinstance(node, type_tuple)
    if ok and isinstance(node, bool) and bool not in type_tuple:
        ok = False  # bool is an int subclass; reject it where numbers are expected
    if not ok:
        raise ConfigError(f"{dotted}: missing or invalid value ({what or 'required'})")
    if predicate is not None and not predicate(node):
        raise ConfigError(f"{dotted}: invalid value {node!r} ({what})")
    return node


def resolve_config(raw: dict, overrides=()) -> dict:
    """Merge defaults, apply overrides, fill derived values, and validate.

    Returns the fully resolved config dict: writing it back to YAML and
    re-running it reproduces the run bit for bit.
    """
    cfg = _merge_defaults(DEFAULT_CONFIG, apply_overrides(raw, overrides))

    _require(cfg, "experiment", str, lambda s: len(s) > 0, "experiment id")
    env_name = _require(cfg, "env.name", str, lambda s: len(s) > 0, "environment name")
    if not isinstance(cfg["env"]["params"], dict):
        raise ConfigError("env.params: expected a mapping")
    try:
        env = make_env(env_name, **cfg["env"]["params"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"env: {exc}") from exc

    pol = cfg["policy"]
    _require(cfg, "policy.hidden", int, lambda v: v >= 0, "0 for linear, else hidden units")
    _require(cfg, "policy.critic_hidden", int, lambda v: v >= 0, ">= 0")
    _require(cfg, "policy.lr", (int, float), lambda v: v > 0, "positive learning rate")
    _require(cfg, "policy.clip_eps", (int, float), lambda v: 0 < v < 1, "in (0, 1)")
    _require(cfg, "policy.epochs", int, lambda v: v >= 1, ">= 1")
    _require(cfg, "policy.lam", (int, float), lambda v: 0 <= v <= 1, "in [0, 1]")
    _require(cfg, "policy.batch_episodes", int, lambda v: v >= 1, ">= 1")
    _require(cfg, "policy.optimizer", str, lambda v: v in ("adam", "sgd"), "adam or sgd")
    if not isinstance(pol["normalize_advantages"], bool):
        raise ConfigError("policy.normalize_advantages: expected true or false")
    if pol["gamma"] is None:
        pol["gamma"] = float(env.spec.gamma)
    _require(cfg, "policy.gamma", (int, float), lambda v: 0 < v <= 1, "in (0, 1]")

    evo = cfg["evolution"]
    M = _require(cfg, "evolution.M", int, lambda v: v >= 0, ">= 0 generations")
    if evo["M_ft"] is None:
        evo["M_ft"] = max(1, M // 3)
    _require(cfg, "evolution.M_ft", int, lambda v: v >= 1, ">= 1")
    if M >= 1 and evo["M_ft"] > M:
        raise ConfigError(f"evolution.M_ft: must be <= M, got {evo['M_ft']} > {M}")
    _require(cfg, "evolution.m_iters", int, lambda v: v >= 1, ">= 1")
    _require(cfg, "evolution.m_w", int, lambda v: v >= 0, ">= 0")
    p = _require(cfg, "evolution.p", int, lambda v: v >= 2 and v % 2 == 0, "even and >= 2")
    if p < env.spec.num_objectives:
        raise ConfigError(
            f"evolution.p: population {p} cannot cover {env.spec.num_objectives} objectives"
        )
    if evo["pgr_regions"] is not None:
        _require(cfg, "evolution.pgr_regions", int, lambda v: v >= 1, ">= 1")
    _require(cfg, "evolution.pgr_top_k", int, lambda v: v >= 1, ">= 1")
    if evo["paft_pairs"] is not None:
        _require(cfg, "evolution.paft_pairs", int, lambda v: v >= 0, ">= 0")
    _require(cfg, "evolution.alpha_recompute_interval", int, lambda v: v >= 0, ">= 0")
    _require(cfg, "evolution.snapshot_every", int, lambda v: v >= 1, ">= 1")
    if evo["reference_point"] is None:
        default_z = DEFAULT_REFERENCE_POINTS.get(env_name)
        if default_z is None:
            raise ConfigError("evolution.reference_point: required for this environment")
        evo["reference_point"] = list(default_z)
    z = evo["reference_point"]
    if (
        not isinstance(z, (list, tuple))
        or len(z) != env.spec.num_objectives
        or not all(isinstance(v, (int, float)) for v in z)
    ):
        raise ConfigError(
            f"evolution.reference_point: need {env.spec.num_objectives} numbers, got {z!r}"
        )
    evo["reference_point"] = [float(v) for v in z]
    if env.spec.num_objectives > 3:
        raise ConfigError("env: hypervolume metrics support at most 3 objectives")

    if not isinstance(cfg["paft"]["enabled"], bool):
        raise ConfigError("paft.enabled: expected true or false")
    _require(cfg, "eval.episodes", int, lambda v: v >= 1, ">= 1")
    _require(cfg, "output_dir", str, lambda s: len(s) > 0, "output directory")
    seeds = cfg["seeds"]
    if (
        not isinstance(seeds, list)
        or len(seeds) == 0
        or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds)
    ):
        raise ConfigError("seeds: expected a non-empty list of integers")
    return cfg


def build_trainer(cfg: dict, seed: int) -> tuple[Trainer, MOMDPEnv]:
    """Instantiate the environment, networks, and trainer for one seed."""
    env = make_env(cfg["env"]["name"], **cfg["env"]["params"])
    pol = cfg["policy"]
    policy = GaussianPolicy(env.spec.state_dim, env.spec.action_dim, hidden=pol["hidden"])
    critic = VectorCritic(
        env.spec.state_dim, env.spec.num_objectives, hidden=pol["critic_hidden"]
    )
    evo = cfg["evolution"]
    gen_config = GenerationConfig(
        total_generations=evo["M"],
        paft_start=evo["M_ft"],
        iters_per_generation=evo["m_iters"],
        warmup_iters=evo["m_w"],
        population_size=evo["p"],
        reference_point=np.asarray(evo["reference_point"], dtype=float),
        seed=seed,
        pgr_regions=evo["pgr_regions"],
        pgr_top_k=evo["pgr_top_k"],
        paft_pairs=evo["paft_pairs"],
        alpha_recompute_interval=evo["alpha_recompute_interval"],
        snapshot_every=evo["snapshot_every"],
        paft_enabled=cfg["paft"]["enabled"],
    )
    update_config = UpdateConfig(
        lr=float(pol["lr"]),
        clip_eps=float(pol["clip_eps"]),
        epochs=pol["epochs"],
        gamma=float(pol["gamma"]),
        lam=float(pol["lam"]),
        batch_episodes=pol["batch_episodes"],
        normalize_advantages=pol["normalize_advantages"],
        optimizer=pol["optimizer"],
        init_scale=float(pol["init_scale"]),
        log_std_init=float(pol["log_std_init"]),
    )
    trainer = Trainer(env, policy, critic, gen_config, update_config,
                      eval_episodes=cfg["eval"]["episodes"])
    return trainer, env


def save_checkpoint(path: Path, policy: GaussianPolicy, params: np.ndarray,
                    critic: VectorCritic | None = None,
                    critic_params: np.ndarray | None = None) -> None:
    """Write a checkpoint: shape header plus the flat parameter list."""
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "policy": {
            "state_dim": policy.state_dim,
            "action_dim": policy.action_dim,
            "hidden": policy.hidden,
            "log_std_min": policy.log_std_min,
            "log_std_max": policy.log_std_max,
            "values": [float(v) for v in params],
        },
    }
    if critic is not None and critic_params is not None:
        doc["critic"] = {
            "state_dim": critic.state_dim,
            "num_objectives": critic.num_objectives,
            "hidden": critic.hidden,
            "values": [float(v) for v in critic_params],
        }
    path.write_text(json.dumps(doc, sort_keys=True))


def load_checkpoint(path) -> tuple[GaussianPolicy, np.ndarray]:
    """Load the policy part of a checkpoint file."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version: {doc.get('format_version')!r}")
    head = doc["policy"]
    policy = GaussianPolicy(
        head["state_dim"], head["action_dim"], hidden=head["hidden"],
        log_std_min=head["log_std_min"], log_std_max=head["log_std_max"],
    )
    params = np.asarray(head["values"], dtype=float)
    if params.size != policy.num_params:
        raise ValueError(
            f"checkpoint has {params.size} parameters, shape header implies {policy.num_params}"
        )
    return policy, params


def _format_value(value) -> str:
    if value is None:
        return "undefined"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(path: Path, metrics: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for row in metrics:
            writer.writerow([_format_value(row[key]) for key in METRICS_HEADER])


def read_metrics_csv(path) -> list[dict]:
    rows = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header in {path}: {reader.fieldnames}")
        for record in reader:
            rows.append(
                {
                    "generation": int(record["generation"]),
                    "hv": float(record["hv"]),
                    "sp": None if record["sp"] == "undefined" else float(record["sp"]),
                    "archive_size": int(record["archive_size"]),
                    "stationary_fallbacks": int(record["stationary_fallbacks"]),
                    "seconds": float(record["seconds"]),
                }
            )
    return rows


def run_seed(cfg: dict, seed: int) -> Path:
    """Train one seed and write its immutable run directory."""
    trainer, _ = build_trainer(cfg, seed)
    archive, metrics = trainer.run_training()
    state = trainer.state

    stamp = datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    run_dir = Path(cfg["output_dir"]) / f"{cfg['experiment']}_seed{seed}_{stamp}"
    try:
        run_dir.mkdir(parents=True, exist_ok=False)
    except OSError as exc:
        raise RuntimeError(f"cannot create run directory {run_dir}: {exc}") from exc

    resolved = copy.deepcopy(cfg)
    resolved["seeds"] = [seed]
    (run_dir / "config.yaml").write_text(yaml.safe_dump(resolved, sort_keys=True))

    checkpoint_dir = run_dir / "checkpoints"
    checkpoint_dir.mkdir()
    checkpoint_names = {}
    for entry in archive:
        rel = f"checkpoints/{entry.params_ref}.json"
        params, critic_params = state.store.get(entry.params_ref)
        save_checkpoint(run_dir / rel, trainer.policy, params, trainer.critic, critic_params)
        checkpoint_names[entry.params_ref] = rel

    doc = frontier_document(
        archive, cfg["experiment"], cfg["evolution"]["reference_point"], checkpoint_names
    )
    (run_dir / "frontier.json").write_text(json.dumps(doc, sort_keys=True))
    write_metrics_csv(run_dir / "metrics.csv", metrics)
    with (run_dir / "selection.jsonl").open("w") as fh:
        for record in state.selection_log:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return run_dir


def cmd_train(args) -> int:
    cfg = resolve_config(load_config(args.config), args.override)
    seeds = cfg["seeds"]
    if args.seed is not None:
        seeds = args.seed
    for seed in seeds:
        run_dir = run_seed(cfg, seed)
        final = read_metrics_csv(run_dir / "metrics.csv")[-1]
        sp_text = "undefined" if final["sp"] is None else f"{final['sp']:.6g}"
        print(
            f"seed {seed}: hv={final['hv']:.6g} sp={sp_text} "
            f"archive={final['archive_size']} -> {run_dir}"
        )
    return 0


def cmd_eval(args) -> int:
    policy, params = load_checkpoint(args.checkpoint)
    env_params = {}
    for text in args.param or ():
        key, value = _parse_override(text)
        if len(key) != 1:
            raise ConfigError(f"eval --param takes flat keys, got {'.'.join(key)}")
        env_params[key[0]] = value
    env = make_env(args.env, **env_params)
    if policy.state_dim != env.spec.state_dim or policy.action_dim != env.spec.action_dim:
        raise ValueError(
            "checkpoint/environment shape mismatch: checkpoint expects "
            f"state_dim={policy.state_dim}, action_dim={policy.action_dim}; "
            f"environment {args.env} has state_dim={env.spec.state_dim}, "
            f"action_dim={env.spec.action_dim}"
        )
    rows = []
    for episode in range(args.episodes):
        traj, _, _ = run_episode(env, policy, params, deterministic=True, seed=episode)
        rows.append(mo_return(traj, env.spec.gamma))
    mean = np.mean(rows, axis=0)
    print("mean objectives:", " ".join(repr(float(v)) for v in mean))
    if args.out:
        with Path(args.out).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode"] + [f"objective_{i}" for i in range(mean.size)])
            for episode, row in enumerate(rows):
                writer.writerow([episode] + [repr(float(v)) for v in row])
    return 0


def _load_run(run_dir: Path) -> dict:
    cfg = yaml.safe_load((run_dir / "config.yaml").read_text())
    metrics = read_metrics_csv(run_dir / "metrics.csv")
    doc, objectives = parse_frontier(json.loads((run_dir / "frontier.json").read_text()))
    return {
        "dir": run_dir,
        "tag": cfg["experiment"],
        "seed": cfg["seeds"][0],
        "m": doc["m"],
        "metrics": metrics,
        "frontier": doc,
        "objectives": objectives,
    }


def cmd_report(args) -> int:
    runs = [_load_run(Path(d)) for d in args.run_dirs]
    dims = {run["m"] for run in runs}
    if len(dims) > 1:
        raise ValueError(f"inconsistent objective counts across runs: {sorted(dims)}")

    groups: dict[str, list[dict]] = {}
    for run in runs:
        groups.setdefault(run["tag"], []).append(run)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    summary_rows = []
    print(f"{'method':<24}{'runs':>6}{'hv mean':>14}{'hv std':>12}{'sp mean':>14}{'sp std':>12}")
    for tag in sorted(groups):
        members = groups[tag]
        hv = np.array([run["metrics"][-1]["hv"] for run in members])
        sp_values = [run["metrics"][-1]["sp"] for run in members]
        sp = np.array([v for v in sp_values if v is not None])
        hv_mean, hv_std = float(hv.mean()), float(hv.std())
        sp_mean = float(sp.mean()) if sp.size else None
        sp_std = float(sp.std()) if sp.size else None
        sp_mean_text = "undefined" if sp_mean is None else f"{sp_mean:.6g}"
        sp_std_text = "undefined" if sp_std is None else f"{sp_std:.6g}"
        print(
            f"{tag:<24}{len(members):>6}{hv_mean:>14.6g}{hv_std:>12.6g}"
            f"{sp_mean_text:>14}{sp_std_text:>12}"
        )
        summary_rows.append(
            [tag, len(members), repr(hv_mean), repr(hv_std),
             _format_value(sp_mean), _format_value(sp_std)]
        )

    with (out / "summary.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "runs", "hv_mean", "hv_std", "sp_mean", "sp_std"])
        writer.writerows(summary_rows)

    with (out / "curves.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "generation", "hv_mean", "hv_std", "sp_mean", "sp_std"])
        for tag in sorted(groups):
            members = groups[tag]
            horizon = min(len(run["metrics"]) for run in members)
            for g in range(horizon):
                hv = np.array([run["metrics"][g]["hv"] for run in members])
                sp = np.array(
                    [
                        run["metrics"][g]["sp"]
                        for run in members
                        if run["metrics"][g]["sp"] is not None
                    ]
                )
                writer.writerow(
                    [
                        tag,
                        g,
                        repr(float(hv.mean())),
                        repr(float(hv.std())),
                        _format_value(float(sp.mean()) if sp.size else None),
                        _format_value(float(sp.std()) if sp.size else None),
                    ]
                )

    with (out / "frontiers.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        m = runs[0]["m"]
        writer.writerow(
            ["method", "seed", "generation", "source"] + [f"objective_{i}" for i in range(m)]
        )
        for run in runs:
            for entry in run["frontier"]["entries"]:
                writer.writerow(
                    [run["tag"], run["seed"], entry["generation"], entry["source"]]
                    + [repr(float(v)) for v in entry["objectives"]]
                )
    print(f"report written to {out}")
    return 0


def cmd_frontier_export(args) -> int:
    run_dir = Path(args.run_dir)
    doc, objectives = parse_frontier(json.loads((run_dir / "frontier.json").read_text()))
    z = np.asarray(doc["reference_point"], dtype=float)
    hv = hypervolume(objectives, z) if objectives.size else 0.0
    sp = sparsity(objectives) if objectives.size else None
    print(f"entries={len(doc['entries'])} hv={hv!r} sp={_format_value(sp)}")
    text = json.dumps(doc, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moascent",
        description="Multi-objective policy training along common ascent directions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run training for each configured seed")
    train.add_argument("--config", required=True, help="YAML experiment config")
    train.add_argument("--seed", type=int, action="append",
                       help="run only this seed (repeatable)")
    train.add_argument("--override", "-o", action="append", default=[],
                       help="dotted config override, e.g. evolution.M=2")
    train.set_defaults(func=cmd_train)

    evaluate = sub.add_parser("eval", help="evaluate a checkpoint deterministically")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--env", required=True)
    evaluate.add_argument("--episodes", type=int, default=8)
    evaluate.add_argument("--param", action="append", default=[],
                          help="environment parameter, e.g. action_bound=2.0 (repeatable)")
    evaluate.add_argument("--out", help="per-episode CSV path")
    evaluate.set_defaults(func=cmd_eval)

    report = sub.add_parser("report", help="aggregate finished run directories")
    report.add_argument("run_dirs", nargs="+")
    report.add_argument("--out", default="report")
    report.set_defaults(func=cmd_report)

    export = sub.add_parser("frontier-export",
                            help="re-score and emit a run's frontier document")
    export.add_argument("run_dir")
    export.add_argument("--out", help="write the document here instead of stdout")
    export.set_defaults(func=cmd_frontier_export)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

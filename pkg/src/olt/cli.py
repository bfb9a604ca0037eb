"""Command-line experiment runner.

    olt optimize --config exp.json [--out DIR] [--seed N] [--workers N]
    olt sweep    --config exp.json ...
    olt rollout  --config exp.json (--theta best_theta.json | --preset NAME)
    olt verify   --config exp.json [--out DIR]

Exit codes: 0 success, 1 runtime failure, 2 invalid input.
"""
from __future__ import annotations

import argparse
import copy
import dataclasses
import hashlib
import json
import logging
import os
import re
import sys
from pathlib import Path

import jsonschema

from . import harness, optimizers
from .mdp import DOMAINS
from .tree import PRESETS, feature_dimension

log = logging.getLogger("olt")

_NUM = {"type": "number"}
_INT = {"type": "integer"}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["domain", "evaluation"],
    "properties": {
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": sorted(DOMAINS)},
                "params": {"type": "object"},
            },
        },
        "evaluation": {
            "type": "object",
            "additionalProperties": False,
            "required": ["horizon", "budget"],
            "properties": {
                "n_initial": {"type": "integer", "minimum": 1},
                "horizon": {"type": "integer", "minimum": 0},
                "budget": {"type": "integer", "minimum": 1},
                "seed": _INT,
                "holdout_seed": _INT,
                "holdout_count": {"type": "integer", "minimum": 1},
            },
        },
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": sorted(optimizers.OPTIMIZERS)},
                "params": {"type": "object"},
            },
        },
        "theta_box": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"lower": _NUM, "upper": _NUM},
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["budgets"],
            "properties": {
                "budgets": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "integer", "minimum": 1},
                },
            },
        },
        "seed": _INT,
        "output_dir": {"type": "string"},
    },
}


class ConfigError(ValueError):
    pass


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _fail(path, text, key, message):
    line = _line_of(text, key) if key else None
    where = f"{path}:{line}" if line else str(path)
    raise ConfigError(f"{where}: {message}")


def _check_params(path, text, params, cls, section):
    names = {f.name for f in dataclasses.fields(cls)}
    for key in params:
        if key not in names:
            _fail(path, text, key, f"unknown key {key!r} in {section}; allowed: {sorted(names)}")


def load_config(path) -> dict:
    """Read and validate an experiment config; raises ConfigError with a line anchor."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None

    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        section = "/".join(str(p) for p in err.absolute_path) or "top level"
        key = None
        if err.validator == "additionalProperties":
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            key = extra[0] if extra else None
            _fail(path, text, key, f"unknown key {key!r} in {section}")
        for p in reversed(err.absolute_path):
            if isinstance(p, str):
                key = p
                break
        _fail(path, text, key, f"{section}: {err.message}")

    dom = cfg["domain"]
    _check_params(path, text, dom.get("params", {}), DOMAINS[dom["name"]], "domain.params")
    if "optimizer" in cfg:
        kind = cfg["optimizer"]["kind"]
        _check_params(path, text, cfg["optimizer"].get("params", {}),
                      optimizers.OPTIMIZERS[kind][1], "optimizer.params")
    box = cfg.get("theta_box", {})
    if box.get("lower", -10.0) >= box.get("upper", 10.0):
        _fail(path, text, "theta_box", "theta_box needs lower < upper")
    return cfg


def effective_config(cfg: dict, seed: int | None) -> dict:
    cfg = copy.deepcopy(cfg)
    cfg.pop("output_dir", None)
    if seed is not None:
        cfg["seed"] = seed
    return cfg


def config_hash(cfg: dict) -> str:
    return harness.canonical_hash(cfg)


def build_spec(cfg: dict) -> harness.EvaluationSpec:
    ev = cfg["evaluation"]
    return harness.EvaluationSpec(
        domain=cfg["domain"]["name"],
        domain_params=dict(cfg["domain"].get("params", {})),
        n_initial=ev.get("n_initial", 10),
        seed=ev.get("seed", 0),
        horizon=ev["horizon"],
        budget=ev["budget"],
        holdout_seed=ev.get("holdout_seed"),
        holdout_count=ev.get("holdout_count"),
    )


def build_optimizer(cfg: dict):
    sect = cfg.get("optimizer", {"kind": "cem"})
    return sect["kind"], optimizers.make_config(sect["kind"], **sect.get("params", {}))


def build_space(cfg: dict, spec: harness.EvaluationSpec) -> optimizers.SearchSpace:
    box = cfg.get("theta_box", {})
    dim = feature_dimension(spec.model())
    return optimizers.SearchSpace.cube(dim, box.get("lower", -10.0), box.get("upper", 10.0))


def output_dir(args, cfg: dict) -> Path:
    if args.out:
        return Path(args.out)
    if "output_dir" in cfg:
        return Path(cfg["output_dir"])
    root = os.environ.get("OLT_OUT", "olt_out")
    return Path(root) / Path(args.config).stem


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, chash: str, files) -> None:
    """Record digests of ``files``; entries from earlier commands on the same config are kept."""
    path = out / "manifest.json"
    entries = {}
    if path.exists():
        old = json.loads(path.read_text())
        if old.get("config_hash") == chash:
            entries = old.get("files", {})
    entries.update({name: _sha256(out / name) for name in files if (out / name).exists()})
    manifest = {"command": command, "config_hash": chash, "files": entries}
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def cmd_optimize(args, cfg) -> int:
    eff = effective_config(cfg, args.seed)
    chash = config_hash(eff)
    spec = build_spec(cfg)
    kind, opt_cfg = build_optimizer(cfg)
    out = output_dir(args, cfg)
    files = ["trace.csv", "run.json", "best_theta.json", "holdout.json"]
    try:
        res = harness.run_campaign(spec, kind, opt_cfg, build_space(cfg, spec), eff.get("seed", 0),
                                   args.workers, out_dir=out, config_hash=chash)
    finally:
        if out.exists():
            write_manifest(out, "optimize", chash, files)
    print(f"best J={res.train_J:.6g} holdout J={res.holdout_J:.6g} -> {out}")
    return 0


def cmd_sweep(args, cfg) -> int:
    if "sweep" not in cfg:
        raise ConfigError(f"{args.config}: sweep needs a 'sweep' section with a budget list")
    eff = effective_config(cfg, args.seed)
    chash = config_hash(eff)
    spec = build_spec(cfg)
    kind, opt_cfg = build_optimizer(cfg)
    budgets = cfg["sweep"]["budgets"]
    if budgets != sorted(budgets):
        text = Path(args.config).read_text()
        _fail(args.config, text, "budgets", "sweep budgets must be ascending")
    rows = harness.budget_sweep(spec, budgets, kind, opt_cfg, build_space(cfg, spec),
                                eff.get("seed", 0), args.workers)
    out = output_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(harness.sweep_csv(rows))
    write_manifest(out, "sweep", chash, ["sweep.csv"])
    print(f"{len(rows)} budgets -> {out / 'sweep.csv'}")
    return 0


def _load_theta(path):
    try:
        blob = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: cannot read weights ({exc})") from None
    weights = blob["weights"] if isinstance(blob, dict) else blob
    if not isinstance(weights, list) or not all(isinstance(w, (int, float)) for w in weights):
        raise ConfigError(f"{path}: weights must be a list of numbers")
    return [float(w) for w in weights]


def cmd_rollout(args, cfg) -> int:
    eff = effective_config(cfg, args.seed)
    chash = config_hash(eff)
    spec = build_spec(cfg)
    model = spec.model()
    if args.theta:
        policy = _load_theta(args.theta)
        if len(policy) != feature_dimension(model):
            raise ConfigError(
                f"{args.theta}: theta has dimension {len(policy)}, "
                f"{model.name} needs {feature_dimension(model)}")
    else:
        policy = args.preset
    rec = harness.rollout(model, spec.states()[0], policy, spec.budget, spec.horizon)
    out = output_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rollout.jsonl").write_text(rec.to_jsonl(config_hash=chash))
    write_manifest(out, "rollout", chash, ["rollout.jsonl"])
    print(f"{len(rec.rewards)} steps, return {rec.discounted_return:.6g} -> {out / 'rollout.jsonl'}")
    return 0


def verify_dir(out: Path, chash: str) -> list[str]:
    """Problems found when checking ``out`` against the expected config hash."""
    problems = []
    mpath = out / "manifest.json"
    if not mpath.exists():
        return [f"{mpath} is missing"]
    manifest = json.loads(mpath.read_text())
    if manifest.get("config_hash") != chash:
        problems.append(f"manifest config hash {manifest.get('config_hash')} != {chash}")
    for name, digest in manifest.get("files", {}).items():
        path = out / name
        if not path.exists():
            problems.append(f"{name} is missing")
            continue
        if _sha256(path) != digest:
            problems.append(f"{name} does not match its recorded digest")
        if name.endswith(".json"):
            embedded = json.loads(path.read_text()).get("config_hash")
            if embedded != chash:
                problems.append(f"{name} embeds config hash {embedded}")
        elif name.endswith(".jsonl"):
            for i, line in enumerate(path.read_text().splitlines(), 1):
                if json.loads(line).get("config_hash") != chash:
                    problems.append(f"{name}:{i} embeds a different config hash")
                    break
    return problems


def cmd_verify(args, cfg) -> int:
    chash = config_hash(effective_config(cfg, args.seed))
    out = output_dir(args, cfg)
    problems = verify_dir(out, chash)
    for p in problems:
        print(f"FAIL {p}", file=sys.stderr)
    if problems:
        return 1
    print(f"ok {out} matches config hash {chash[:12]}")
    return 0


COMMANDS = {
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "rollout": cmd_rollout,
    "verify": cmd_verify,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="olt", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", help="output directory (default: $OLT_OUT/<config name>)")
        p.add_argument("--seed", type=int, help="override the campaign seed")
        p.add_argument("--workers", type=int, default=1,
                       help="max concurrent objective evaluations")
        if name == "rollout":
            g = p.add_mutually_exclusive_group(required=True)
            g.add_argument("--theta", help="weights file (best_theta.json or a JSON list)")
            g.add_argument("--preset", choices=PRESETS)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 1
        log.exception("%s failed", args.command)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

    nfa-lab run --preset fig3 --out DIR [--threads N] [--scale n=256,k=256,d=256]
    nfa-lab run --config experiment.json --out DIR
    nfa-lab list-presets
    nfa-lab validate --config experiment.json
    nfa-lab oracle --suite all

Configs are JSON (TOML accepted for files ending in .toml).  The environment
variable NFA_LAB_SEED, when set, replaces the config's seed list with that
single seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__, oracles, presets

try:
    import tomllib as _toml
except ModuleNotFoundError:  # Python < 3.11
    try:
        import tomli as _toml
    except ModuleNotFoundError:
        _toml = None


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise SystemExit(f"config file not found: {p}")
    if p.suffix == ".toml":
        if _toml is None:
            raise SystemExit("TOML support needs the tomli package on this Python version")
        try:
            with open(p, "rb") as fh:
                return _toml.load(fh)
        except _toml.TOMLDecodeError as err:
            raise SystemExit(f"{p}: TOML parse error: {err}")
    try:
        with open(p) as fh:
            return json.load(fh)
    except json.JSONDecodeError as err:
        raise SystemExit(f"{p}: JSON parse error at line {err.lineno}, column {err.colno}: {err.msg}")


def _parse_scale(text: str) -> dict:
    out = {}
    for part in text.split(","):
        if not part:
            continue
        if "=" not in part:
            raise SystemExit(f"bad --scale entry {part!r}; expected key=value")
        key, _, value = part.partition("=")
        key = key.strip()
        if key not in ("n", "d", "k"):
            raise SystemExit(f"bad --scale key {key!r}; know n, d, k")
        try:
            out[key] = int(value)
        except ValueError:
            raise SystemExit(f"bad --scale value for {key}: {value!r}")
    if not out:
        raise SystemExit("--scale given but empty")
    return out


def _resolve(args) -> dict:
    if args.preset and args.config:
        raise SystemExit("give either --preset or --config, not both")
    if args.preset:
        try:
            config = presets.build_config(args.preset, full_scale=getattr(args, "full_scale", False))
        except KeyError as err:
            raise SystemExit(str(err.args[0]))
    elif args.config:
        config = _load_config_file(args.config)
    else:
        raise SystemExit("need --preset or --config")
    if getattr(args, "scale", None):
        config = presets.apply_scale_overrides(config, _parse_scale(args.scale))
    env_seed = os.environ.get("NFA_LAB_SEED")
    if env_seed is not None:
        try:
            config["seeds"] = [int(env_seed)]
        except ValueError:
            raise SystemExit(f"NFA_LAB_SEED must be an integer, got {env_seed!r}")
    return config


def _cmd_run(args) -> int:
    config = _resolve(args)
    problems = presets.validate_config(config)
    if problems:
        print("invalid config:", file=sys.stderr)
        for p in problems:
            print(f"  {p}", file=sys.stderr)
        return 2
    out_dir = args.out or str(Path("artifacts") / config.get("name", "run"))
    path = presets.run_config(config, out_dir, threads=args.threads)
    print(f"wrote artifacts to {path}")
    return 0


def _cmd_list_presets(_args) -> int:
    for name in presets.preset_names():
        print(name)
    return 0


def _cmd_validate(args) -> int:
    config = _resolve(args)
    problems = presets.validate_config(config)
    if problems:
        print("invalid config:")
        for p in problems:
            print(f"  {p}")
        return 2
    print(f"ok: kind={config['kind']}, hash={presets.config_hash(config)[:12]}")
    return 0


def _cmd_oracle(args) -> int:
    try:
        results = oracles.run_suite(args.suite)
    except KeyError as err:
        raise SystemExit(str(err.args[0]))
    failed = 0
    for name, passed, detail in results:
        status = "PASS" if passed else "FAIL"
        print(f"[{status}] {name}: {detail}")
        failed += not passed
    print(f"{len(results) - failed}/{len(results)} oracle checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nfa-lab", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"nfa-lab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a preset or explicit config")
    run.add_argument("--preset", help="preset name (see list-presets)")
    run.add_argument("--config", help="JSON or TOML config file")
    run.add_argument("--out", help="output directory (default artifacts/<name>)")
    run.add_argument("--threads", type=int, default=1, help="parallel runs (1 = bit-reproducible)")
    run.add_argument("--scale", help="override sizes, e.g. n=256,k=256,d=256")
    run.add_argument(
        "--full-scale",
        action="store_true",
        help="fig3 only: restore the n=k=d=1024 regime",
    )
    run.set_defaults(func=_cmd_run)

    lp = sub.add_parser("list-presets", help="print available preset names")
    lp.set_defaults(func=_cmd_list_presets)

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("--preset")
    val.add_argument("--config")
    val.add_argument("--scale")
    val.set_defaults(func=_cmd_validate)

    orc = sub.add_parser("oracle", help="run numerical oracle suites")
    orc.add_argument("--suite", default="all", help="all, fd, freeword, or egop")
    orc.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

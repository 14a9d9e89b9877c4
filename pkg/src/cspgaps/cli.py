"""Command-line interface.

Subcommands:
  predicate  support-complexity report for a named or JSON predicate
  gen        generate a random instance (optionally with an encoding attached)
  run        full verification pipeline over a seed list, JSON report
  sweep      seed x m-schedule sweep, CSV rows

Exit codes: 0 all checks passed or were skipped with certified-precondition
reasons, 1 at least one check failed (witness in the report), 2 usage or
configuration errors.  CSPGAPS_WORKERS sets the seed worker-pool size.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError
from .instances import encode, random_instance
from .pipeline import PipelineConfig, run_pipeline, sweep
from .predicates import Predicate, named_predicate, predicate_report


def _load_predicate(spec: str) -> Predicate:
    if spec.endswith(".json"):
        with open(spec) as fh:
            return Predicate.from_json(fh.read(), name=spec)
    if spec.lstrip().startswith("{"):
        return Predicate.from_json(spec)
    return named_predicate(spec)


def _emit(obj, path: str | None):
    text = obj if isinstance(obj, str) else json.dumps(obj, sort_keys=True, indent=1)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _add_config_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with PipelineConfig fields")
    p.add_argument("--predicate", help="name (parity3, or2, nae3, ...) or JSON")
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--seeds", help="comma list or a-b range, e.g. 0-9")
    p.add_argument("--t", type=int)
    p.add_argument("--radius", type=int)
    p.add_argument("--epsilon", help="rational, e.g. 1/2")
    p.add_argument("--e1", help="explicit closure parameter e1 (rational)")
    p.add_argument("--e2", help="explicit closure parameter e2 (rational)")
    p.add_argument("--s1", type=int, help="explicit certificate size s1")
    p.add_argument("--delta", help="component-bound margin (rational)")
    p.add_argument("--conditional-samples", type=int, dest="conditional_samples")
    p.add_argument("--conditional-x-max", type=int, dest="conditional_x_max")
    p.add_argument("--conditional-families", type=int, dest="conditional_families")
    p.add_argument("--allow-repeats", action="store_true", default=None)
    p.add_argument("--inject-corruption", choices=["pair", "support"],
                   help="negative-control hook: damage the family before verification")
    p.add_argument("--out", help="write the report here instead of stdout")


def _parse_seeds(text: str):
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part and not part.startswith("-"):
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def _build_config(args) -> PipelineConfig:
    base = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
    overrides = {
        "predicate": args.predicate,
        "n": args.n,
        "m": args.m,
        "seeds": _parse_seeds(args.seeds) if args.seeds else None,
        "t": args.t,
        "radius": args.radius,
        "epsilon": args.epsilon,
        "e1": args.e1,
        "e2": args.e2,
        "s1": args.s1,
        "delta": args.delta,
        "conditional_samples": args.conditional_samples,
        "conditional_x_max": args.conditional_x_max,
        "conditional_families": args.conditional_families,
        "allow_repeats": args.allow_repeats,
    }
    for key, val in overrides.items():
        if val is not None:
            base[key] = val
    if args.inject_corruption:
        base["corrupt"] = {"kind": args.inject_corruption}
    for required in ("predicate", "n", "m", "seeds", "t"):
        if base.get(required) is None:
            raise ConfigError(f"missing required config field {required!r}")
    return PipelineConfig.from_jsonable(base)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cspgaps", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_pred = sub.add_parser("predicate", help="support-complexity report")
    p_pred.add_argument("spec", help="name, inline JSON, or path to a .json table")
    p_pred.add_argument("--out")

    p_gen = sub.add_parser("gen", help="generate a random instance")
    p_gen.add_argument("--predicate", required=True)
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--m", type=int, required=True)
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--allow-repeats", action="store_true")
    p_gen.add_argument("--encode", choices=["degk", "linear", "boolean01"])
    p_gen.add_argument("--out")

    p_run = sub.add_parser("run", help="run the verification pipeline")
    _add_config_args(p_run)
    p_run.add_argument("--no-timings", action="store_true",
                       help="omit timing fields for byte-identical reruns")

    p_sweep = sub.add_parser("sweep", help="seed x m-schedule sweep (CSV)")
    _add_config_args(p_sweep)
    p_sweep.add_argument("--m-schedule", required=True,
                         help="comma list of m expressions: 12, n, n/2, 2n, n^3/2")
    p_sweep.add_argument("--timings", action="store_true",
                         help="fill the runtime column (reruns then differ)")

    args = parser.parse_args(argv)
    try:
        if args.command == "predicate":
            _emit(predicate_report(_load_predicate(args.spec)), args.out)
            return 0
        if args.command == "gen":
            P = _load_predicate(args.predicate)
            inst = random_instance(P, args.n, args.m, args.seed,
                                   allow_repeats=args.allow_repeats)
            obj = inst.to_jsonable()
            if args.encode:
                obj["encoding"] = encode(inst, args.encode).to_jsonable()
            _emit(obj, args.out)
            return 0
        if args.command == "run":
            config = _build_config(args)
            report = run_pipeline(config)
            _emit(report.to_json(include_timings=not args.no_timings), args.out)
            return report.exit_code
        if args.command == "sweep":
            if args.m is None:
                args.m = 0  # schedule supplies the real values
            config = _build_config(args)
            rows = sweep(config, [s.strip() for s in args.m_schedule.split(",")],
                         include_timings=args.timings)
            text = "\n".join(",".join(str(c) for c in row) for row in rows)
            _emit(text, args.out)
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())

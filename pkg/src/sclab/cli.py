"""Command-line entry point.

Each subcommand runs one experiment, prints a JSON summary and, with
``--out DIR``, writes ``summary.json`` and ``samples.csv`` there.  Every
output carries the resolved configuration and the master seed, so the
echoed command reproduces it exactly.

Exit codes: 0 success, 2 a statistical gate failed, 1 any error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import shlex
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

SCHEMA_VERSION = 1
EXIT_OK, EXIT_ERROR, EXIT_GATE = 0, 1, 2
LOG3_HALF = math.log(3) / 2

# defaults are the acceptance-scale runs
DEFAULTS: dict[str, dict[str, Any]] = {
    "growth": {"rank": 2, "n_list": [4096, 8192, 16384], "trials": 200, "mode": "geodesic"},
    "homology": {"rank": 2, "n_list": [64, 128, 256, 512, 1024], "trials": 100_000, "mode": "geodesic"},
    "chernoff": {"rank": 2, "n": 4096, "trials": 1000, "ell": 0.5, "epsilon": 0.1, "sigmas": 1},
    "antialign": {"rank": 2, "n_list": [1024, 2048, 4096, 8192, 16384], "trials": 50, "L": 2.5},
    "translation": {"rank": 2, "n": 1000, "trials": 10_000},
    "turtle": {"alpha": math.pi / 2, "step": 0.3, "n": 10_000, "trials": 10_000},
    "rotation": {"alpha": math.pi / 2, "step": 0.3, "n": 10_000, "trials": 10_000},
    "sandwich": {"rank": 2, "L": 2.5},
    "automaton": {"rank": 2, "n": 16, "trials": 10},
}
COMMON = {"seed": 0, "workers": 1, "condition_commutator": False}

# config-file keys and their types
KEYS: dict[str, type] = {
    "rank": int, "n": int, "n_list": list, "trials": int, "seed": int, "mode": str,
    "condition_commutator": bool, "ell": float, "L": float, "epsilon": float, "alpha": float,
    "step": float, "out": str, "workers": int, "sigmas": int, "automaton": str, "generators": str,
    "beta": float, "word": str, "action": str,
}
# keys only some subcommands accept
ONLY = {
    "sigmas": {"chernoff"}, "automaton": {"chernoff", "antialign", "automaton"},
    "generators": {"rotation"}, "beta": {"rotation"}, "word": {"sandwich"}, "action": {"automaton"},
}


class ConfigError(ValueError):
    pass


def _n_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad n-list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file mirroring the flags; flags take precedence")
    common.add_argument("--rank", type=int)
    common.add_argument("--n", type=int)
    common.add_argument("--n-list", dest="n_list", type=_n_list, help="comma separated, e.g. 64,128,256")
    common.add_argument("--trials", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--mode", choices=["geodesic", "walk"])
    common.add_argument("--condition-commutator", dest="condition_commutator", action="store_true", default=None)
    common.add_argument("--ell", type=float)
    common.add_argument("--L", dest="L", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--step", type=float)
    common.add_argument("--out", help="directory for summary.json and samples.csv")
    common.add_argument("--workers", type=int)

    p = argparse.ArgumentParser(prog="sclab", description="Random-word experiments on stable commutator length.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.add_parser("growth", parents=[common], help="scl sandwich over an n-list")
    sub.add_parser("homology", parents=[common], help="Pr(abelianization = 0) exponent")
    ch = sub.add_parser("chernoff", parents=[common], help="block-count concentration gate")
    ch.add_argument("--sigmas", type=int, help="blocks per trial")
    ch.add_argument("--automaton", help="automaton JSON file or shipped name (default: free group)")
    aa = sub.add_parser("antialign", parents=[common], help="anti-aligned block fraction trend")
    aa.add_argument("--automaton", help=argparse.SUPPRESS)
    sub.add_parser("translation", parents=[common], help="translation length of random walks")
    sub.add_parser("turtle", parents=[common], help="winding and area CLT for the hyperbolic turtle")
    rot = sub.add_parser("rotation", parents=[common], help="rotation CLT for random circle maps")
    rot.add_argument("--generators", help="generator-set JSON (default: turtle lifts)")
    rot.add_argument("--beta", type=float, help="use the commuting rotations +beta, -beta")
    sw = sub.add_parser("sandwich", parents=[common], help="certified scl bounds for one word")
    sw.add_argument("word")
    au = sub.add_parser("automaton", parents=[common], help="inspect a combing automaton")
    au.add_argument("action", choices=["info", "validate", "sample"])
    au.add_argument("--automaton", help="automaton JSON file or shipped name (default: free group of --rank)")
    return p


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[args.command])
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        for k, v in data.items():
            k = k.replace("-", "_")
            if k not in KEYS or args.command not in ONLY.get(k, {args.command}):
                raise ConfigError(f"unknown config key {k!r} for {args.command}")
            want = KEYS[k]
            ok = isinstance(v, want) or (want is float and isinstance(v, int) and not isinstance(v, bool))
            if want is int and isinstance(v, bool):
                ok = False
            if want is list and ok:
                ok = all(isinstance(x, int) for x in v)
            if not ok:
                raise ConfigError(f"config key {k!r} must be {want.__name__}")
            cfg[k] = float(v) if want is float else v
    for k, v in vars(args).items():
        if k in ("command", "config") or v is None:
            continue
        cfg[k] = v
    if cfg.get("mode") not in (None, "geodesic", "walk"):
        raise ConfigError(f"unknown mode {cfg['mode']!r}")
    if "trials" in cfg and cfg["trials"] < 1:
        raise ConfigError("trials must be >= 1")
    return cfg


def _command_line(command: str, cfg: dict) -> str:
    parts = ["sclab", command]
    if command == "sandwich":
        parts.append(cfg["word"])
    if command == "automaton":
        parts.append(cfg["action"])
    for k, v in sorted(cfg.items()):
        if k in ("word", "action", "out") or v is None:
            continue
        flag = "--" + k.replace("_", "-")
        if isinstance(v, bool):
            if v:
                parts.append(flag)
        elif isinstance(v, list):
            parts += [flag, ",".join(map(str, v))]
        else:
            parts += [flag, repr(v) if isinstance(v, float) else str(v)]
    return shlex.join(parts)


def emit(command: str, cfg: dict, summary: dict, header: Sequence[str] | None, rows, gate: dict | None) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "reproduce": _command_line(command, cfg),
        "summary": summary,
    }
    if gate is not None:
        doc["gate"] = gate
    text = json.dumps(doc, indent=2, default=_json_default)
    print(text)
    if cfg.get("out"):
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(text + "\n")
        if header is not None:
            buf = io.StringIO()
            buf.write(f"# config: {json.dumps(cfg, sort_keys=True, default=_json_default)}\n")
            buf.write(f"# seed: {cfg.get('seed')}\n")
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
            (out / "samples.csv").write_text(buf.getvalue())
    return doc


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _gate(checks: dict[str, bool]) -> dict:
    return {"passed": all(checks.values()), "checks": checks}


# -- subcommands --------------------------------------------------------------------


def cmd_growth(cfg):
    from .experiments import growth_experiment

    rep = growth_experiment(cfg["n_list"], cfg["trials"], cfg["seed"], cfg["mode"], cfg["rank"], workers=cfg["workers"])
    per_n = rep.per_n()
    checks = {"no_failed_trials": rep.failures == 0, "lower_le_upper": all(r["consistent_fraction"] == 1.0 for r in per_n)}
    if cfg["mode"] == "geodesic":
        checks["median_upper_ratio"] = all(r["median_upper_ratio"] <= LOG3_HALF + 0.15 for r in per_n)
        lows = [r["median_lower_ratio"] for r in per_n]
        checks["lower_ratio_stable"] = min(lows) > 0 and max(lows) <= 2 * min(lows)
    else:
        for r in per_n:
            rs = [x for x in rep.rows if x["n"] == r["n"]]
            r["upper_bound_fraction"] = float(np.mean([x["upper_ratio"] <= LOG3_HALF for x in rs]))
        checks["upper_bound_fraction"] = all(r["upper_bound_fraction"] >= 0.95 for r in per_n)
        checks["reduced_fraction"] = all(abs(r["mean_reduced_fraction"] - 0.5) <= 0.05 for r in per_n)
    keys = ["n", "n_reduced", "lower", "upper", "lower_ratio", "upper_ratio", "consistent", "seed"]
    rows = [[r[k] for k in keys] for r in rep.rows]
    return {"mode": rep.mode, "failures": rep.failures, "per_n": per_n}, ["trial"] + keys, [
        [i] + r for i, r in enumerate(rows)
    ], _gate(checks)


def cmd_homology(cfg):
    from .experiments import as_dict, homology_experiment

    rep = homology_experiment(cfg["rank"], cfg["n_list"], cfg["trials"], cfg["seed"], cfg["mode"], cfg["workers"])
    rows = [[n, h, p] for n, h, p in zip(rep.n_list, rep.hits, rep.probabilities)]
    ok = not math.isnan(rep.slope) and abs(rep.slope - rep.expected_slope) <= 0.15
    return as_dict(rep), ["n", "hits", "probability"], rows, _gate({"slope": ok})


def _load_automaton(cfg):
    from .automaton import example_automaton, free_group_automaton, load_automaton, shipped_automata

    name = cfg.get("automaton")
    if not name:
        return free_group_automaton(cfg["rank"])
    if name in shipped_automata():
        return example_automaton(name)
    return load_automaton(Path(name).read_text())


def _load_model(cfg):
    from .automaton import analyze

    return analyze(_load_automaton(cfg))


def cmd_chernoff(cfg):
    from .automaton import chernoff_experiment

    model = _load_model(cfg)
    rep = chernoff_experiment(model, cfg["ell"], cfg["epsilon"], cfg["n"], cfg["trials"], cfg["seed"], cfg["sigmas"])
    summary = {
        "n": rep.n, "ell": rep.ell, "epsilon": rep.epsilon, "block_edges": rep.block_edges,
        "threshold": rep.threshold, "violation_fraction": rep.violation_fraction,
        "median_ratio": float(np.median(rep.ratios)),
    }
    rows = [[i, float(r)] for i, r in enumerate(rep.ratios)]
    return summary, ["trial", "ratio"], rows, _gate({"violation_fraction": rep.violation_fraction <= 0.05})


def cmd_antialign(cfg):
    from .experiments import antialign_experiment, as_dict

    rep = antialign_experiment(cfg["rank"], cfg["n_list"], cfg["trials"], cfg["L"], cfg["seed"], cfg["workers"])
    rows = [[n, f] for n, f in zip(rep.n_list, rep.mean_fraction)]
    decreasing = bool(np.all(np.diff(rep.mean_fraction) <= 0)) or (not math.isnan(rep.slope) and rep.slope < 0)
    return as_dict(rep), ["n", "mean_fraction"], rows, _gate({"decreasing": decreasing})


def cmd_translation(cfg):
    from .experiments import as_dict, translation_experiment

    rep = translation_experiment(
        cfg["rank"], cfg["n"], cfg["trials"], cfg["seed"], workers=cfg["workers"], condition=cfg["condition_commutator"]
    )
    rows = [[i, t] for i, t in enumerate(rep.samples)]
    return as_dict(rep), ["trial", "translation_length"], rows, _gate({"fraction_below": rep.fraction_below <= 0.01})


def cmd_turtle(cfg):
    from .hyperbolic import CHUNK, RESIDUE_AUDIT, phase_threshold, turtle_clt_experiment

    n = cfg["n"]
    rep = turtle_clt_experiment(cfg["alpha"], cfg["step"], n, cfg["trials"], cfg["seed"], cfg["workers"])[n]
    s = rep.summary()
    s["phase_threshold"] = phase_threshold(cfg["alpha"])
    checks = {
        "winding_mean_zero": abs(s["winding"]["mean"]) <= 3 * s["winding"]["mean_se"],
        "area_mean_zero": abs(s["area"]["mean"]) <= 3 * s["area"]["mean_se"],
        "residue": rep.max_residue <= RESIDUE_AUDIT,
    }
    if cfg["step"] < s["phase_threshold"]:
        checks["winding_ks"] = s["winding"]["ks"] <= 0.05
        checks["area_ks"] = s["area"]["ks"] <= 0.05
    rows = [[i, n, int(w), float(a), rep.seeds[i // CHUNK]] for i, (w, a) in enumerate(zip(rep.winding, rep.area))]
    return s, ["trial", "n", "winding", "area", "seed"], rows, _gate(checks)


def cmd_rotation(cfg):
    from .circle import lift_mobius, load_generator_set, random_rot_clt, rotation
    from .hyperbolic import turtle_step_maps

    checks = {}
    if cfg.get("beta") is not None:
        maps, weights, kind = [rotation(cfg["beta"]), rotation(-cfg["beta"])], [0.5, 0.5], "commuting_rotations"
    elif cfg.get("generators"):
        maps, weights = load_generator_set(Path(cfg["generators"]).read_text())
        kind = "file"
    else:
        R, L = turtle_step_maps(cfg["alpha"], cfg["step"])
        maps, weights, kind = [lift_mobius(R, "positive"), lift_mobius(L, "negative")], [0.5, 0.5], "turtle_lifts"
    rep = random_rot_clt(maps, weights, cfg["n"], cfg["trials"], cfg["seed"], cfg["workers"])
    s = rep.summary()
    s["generators"] = kind
    if kind != "file":
        checks["drift_zero"] = abs(rep.drift) <= 3 * rep.drift_se
    if kind == "commuting_rotations":
        checks["ks"] = rep.ks_distance <= 0.02
    rows = [[i, float(z)] for i, z in enumerate(rep.samples)]
    return s, ["trial", "normalised_displacement"], rows, _gate(checks) if checks else None


def cmd_sandwich(cfg):
    from .scl_bounds import SandwichParams, sandwich
    from .words import Word

    g = Word.parse(cfg["word"], cfg["rank"])
    sw = sandwich(g, SandwichParams(L=cfg["L"]))
    return sw.to_dict(), None, None, None


def cmd_automaton(cfg):
    from .automaton import analyze, sample_geodesic, validate

    a = _load_automaton(cfg)
    if cfg["action"] == "validate":
        rep = validate(a)
        s = {
            "deterministic": rep.deterministic, "reachable": rep.reachable, "coornaert": rep.coornaert,
            "problems": list(rep.problems),
        }
        return s, None, None, _gate({"valid": rep.ok})
    m = analyze(a)
    if cfg["action"] == "info":
        s = {
            "vertices": a.vertex_count, "rank": a.rank, "edges": len(a.edges),
            "perron_eigenvalue": m.perron_eigenvalue,
            "components": [
                {"vertices": list(c.vertices), "eigenvalue": c.eigenvalue, "maximal": c.maximal} for c in m.components
            ],
            "stationary": m.stationary.tolist(),
        }
        return s, None, None, None
    from .montecarlo import derive_seed

    rows = []
    for i in range(cfg["trials"]):
        sd = derive_seed(cfg["seed"], i)
        ps = sample_geodesic(m, cfg["n"], sd)
        rows.append([i, str(ps.word), " ".join(map(str, ps.vertex_path)), sd])
    return {"n": cfg["n"], "samples": len(rows)}, ["trial", "word", "vertex_path", "seed"], rows, None


COMMANDS = {
    "growth": cmd_growth, "homology": cmd_homology, "chernoff": cmd_chernoff, "antialign": cmd_antialign,
    "translation": cmd_translation, "turtle": cmd_turtle, "rotation": cmd_rotation, "sandwich": cmd_sandwich,
    "automaton": cmd_automaton,
}


def dispatch(argv: Sequence[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_ERROR
    try:
        cfg = resolve(args)
        summary, header, rows, gate = COMMANDS[args.command](cfg)
        emit(args.command, cfg, summary, header, rows, gate)
    except ConfigError as exc:
        print(f"sclab: invalid config: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        print(f"sclab: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if gate is not None and not gate["passed"]:
        print("sclab: gate failed: " + ", ".join(k for k, v in gate["checks"].items() if not v), file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

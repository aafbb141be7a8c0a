"""Command-line front end: construct, build-scheme, simulate, align-report."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

from rcpolar.alignment import AlignmentError
from rcpolar.channels import DEFAULT_MU, ChannelError, capacity, channel_from_dict
from rcpolar.construction import DEFAULT_DELTA, choose_puncture, evolve_reliability, select_L
from rcpolar.harq import SimulationConfig, monte_carlo
from rcpolar.polar import is_power_of_two
from rcpolar.ratecompat import SchemeError, build_scheme, dumps_scheme, loads_scheme, rate_profile

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_INVALID, EXIT_ALIGN = 0, 2, 3


class ConfigError(ValueError):
    pass


def load_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        if p.suffix.lower() == ".toml":
            with p.open("rb") as fh:
                cfg = tomllib.load(fh)
        else:
            cfg = json.loads(p.read_text())
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{p}: top level must be a table/object")
    cfg["_base"] = str(p.parent)
    return cfg


def _resolve(cfg: dict, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else Path(cfg.get("_base", ".")) / p


def load_channels(cfg: dict) -> list:
    specs = cfg.get("channels")
    if not specs or not isinstance(specs, list):
        raise ConfigError("config needs a non-empty 'channels' list")
    return [load_channel(cfg, spec) for spec in specs]


def load_channel(cfg: dict, spec):
    """A channel descriptor, or ``{"file": path}`` / a bare path relative to the config."""
    if isinstance(spec, str):
        spec = {"file": spec}
    if not isinstance(spec, dict):
        raise ConfigError(f"bad channel spec {spec!r}")
    if "file" in spec:
        path = _resolve(cfg, spec["file"])
        if not path.is_file():
            raise ConfigError(f"channel file not found: {path}")
        try:
            spec = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"cannot parse channel file {path}: {exc}") from exc
    return channel_from_dict(spec)


def _number(cfg, key, default, kind=float, lo=None, hi=None):
    v = cfg.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and int(v) != v):
        raise ConfigError(f"'{key}' must be {'an integer' if kind is int else 'a number'}, got {v!r}")
    v = kind(v)
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ConfigError(f"'{key}'={v} outside [{lo}, {hi}]")
    return v


def _echo(cfg: dict) -> dict:
    return {k: v for k, v in sorted(cfg.items()) if not k.startswith("_") and k != "out"}


def _header(cfg: dict) -> str:
    return "# config: " + json.dumps(_echo(cfg), sort_keys=True) + "\n"


def _write(path, text: str) -> None:
    Path(path).write_text(text)


def _scheme_params(cfg: dict) -> dict:
    if "k" not in cfg or "rates" not in cfg:
        raise ConfigError("scheme config needs 'k' and 'rates'")
    return dict(
        delta=_number(cfg, "delta", DEFAULT_DELTA, float, 0.0, 1.0),
        mu=_number(cfg, "mu", DEFAULT_MU, int, 2),
        t_max=_number(cfg, "t_max", 8, int, 0, 30),
        puncture_trials=_number(cfg, "puncture_trials", 1, int, 1),
        seed=_number(cfg, "seed", 0, int, 0),
    )


def _build(cfg: dict):
    channels = load_channels(cfg)
    params = _scheme_params(cfg)
    rates = [str(r) if isinstance(r, str) else r for r in cfg["rates"]]
    profile = rate_profile(cfg["k"], rates)
    return build_scheme(channels, profile, **params)


def cmd_construct(cfg: dict, args) -> int:
    channels = load_channels(cfg)
    m = _number(cfg, "m", None, int, 1)
    puncture = bool(cfg.get("puncture", False))
    mu = _number(cfg, "mu", DEFAULT_MU, int, 2)
    delta = _number(cfg, "delta", DEFAULT_DELTA, float, 0.0, 1.0)
    pattern = ()
    block = m
    if not is_power_of_two(m):
        if not puncture:
            raise ConfigError(f"m={m} is not a power of two and puncturing is disabled")
        block = 1 << (m - 1).bit_length()
        if "info_size" not in cfg:
            raise ConfigError("puncturing needs 'info_size' to score patterns")
        pattern, _ = choose_puncture(block, m, _number(cfg, "puncture_trials", 1, int, 1), channels[0],
                                     _number(cfg, "info_size", 0, int, 0, m), _number(cfg, "seed", 0, int, 0),
                                     mu, delta)
    out = args.out or cfg.get("out")
    for j, W in enumerate(channels, start=1):
        prof = evolve_reliability(W, block, pattern, mu, delta)
        text = _header(cfg) + prof.to_csv()
        if out is None:
            sys.stdout.write(text)
        else:
            path = Path(out) if len(channels) == 1 else Path(out).with_name(f"{Path(out).stem}_{j}{Path(out).suffix}")
            _write(path, text)
        line = f"channel {j} ({W.label}): capacity {capacity(W):.6g}, |L| = {select_L(prof).size} of {block}"
        rates = cfg.get("rates") or []
        if j <= len(rates):
            r = float(Fraction(str(rates[j - 1])))
            line += f", rate {r:.6g} {'feasible' if r < capacity(W) else 'ABOVE capacity'}"
        print(line, file=sys.stderr if out is None else sys.stdout)
    return EXIT_OK


def _scheme_report(scheme, stream) -> None:
    print(f"T = {scheme.T} (expansion factor {scheme.expansion_factor}), k = {scheme.k}", file=stream)
    for s in scheme.stages:
        print(f"stage {s.index}: m = {s.m}, punctured = {len(s.punctured_set)}, alignment steps needed = "
              f"{s.steps_needed}, rate loss = {s.rate_loss:.6g} (bound {s.rate_loss_bound:.6g})", file=stream)
    for ell, row in enumerate(scheme.bounds, start=1):
        print(f"union bound after stage {ell}: " + ", ".join(f"W{c}: {b:.6g}" for c, b in enumerate(row, 1)),
              file=stream)


def cmd_build_scheme(cfg: dict, args) -> int:
    scheme = _build(cfg)
    doc = json.loads(dumps_scheme(scheme))
    doc["config"] = _echo(cfg)
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    out = args.out or cfg.get("out")
    if out is None:
        sys.stdout.write(text)
        _scheme_report(scheme, sys.stderr)
    else:
        _write(out, text)
        _scheme_report(scheme, sys.stdout)
    return EXIT_OK


def cmd_align_report(cfg: dict, args) -> int:
    scheme = _build(cfg)
    lines = [f"T = {scheme.T}"]
    for s in scheme.stages:
        lines.append(f"stage {s.index}: t = {s.steps_needed}")
        for a, b, f0, steps, f1 in s.pairs:
            lines.append(f"  pair (W{a}, W{b}): initial mismatch {f0:.6g}, steps {steps}, residual mismatch {f1:.6g}")
    text = _header(cfg) + "\n".join(lines) + "\n"
    out = args.out or cfg.get("out")
    if out is None:
        sys.stdout.write(text)
    else:
        _write(out, text)
    return EXIT_OK


def cmd_simulate(cfg: dict, args) -> int:
    if "scheme" in cfg:
        path = _resolve(cfg, cfg["scheme"])
        if not path.is_file():
            raise ConfigError(f"scheme file not found: {path}")
        scheme = loads_scheme(path.read_text())
    else:
        scheme = _build(cfg)
    targets = cfg.get("fer_targets")
    sim = SimulationConfig(
        scheme=scheme,
        true_channel_index=_number(cfg, "true_channel", 1, int, 1),
        trials=_number(cfg, "trials", 1000, int, 1),
        seed=_number(cfg, "seed", 0, int, 0),
        fer_targets=tuple(targets) if targets is not None else None,
        workers=args.workers or os.cpu_count() or 1,
        batch_size=_number(cfg, "batch_size", 256, int, 1),
        link=load_channel(cfg, cfg["link"]) if "link" in cfg else None,
    )
    result = monte_carlo(sim)
    csv_text = _header(cfg) + result.to_csv()
    summary = json.loads(result.to_json())
    summary["config"] = {"run": _echo(cfg), "simulation": summary["config"]}
    json_text = json.dumps(summary, indent=1, sort_keys=True) + "\n"
    out = args.out or cfg.get("out")
    if out is None:
        sys.stdout.write(csv_text)
    else:
        out = Path(out)
        stem = out.with_suffix("") if out.suffix in (".csv", ".json") else out
        _write(stem.with_name(stem.name + ".csv"), csv_text)
        _write(stem.with_name(stem.name + ".json"), json_text)
        print(f"throughput {result.throughput:.6g} bits/use over {result.trials} sessions")
    return EXIT_OK


COMMANDS = {
    "construct": cmd_construct,
    "build-scheme": cmd_build_scheme,
    "simulate": cmd_simulate,
    "align-report": cmd_align_report,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rcpolar", description="Rate-compatible polar codes and HARQ-IR simulation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML or JSON experiment file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int, help="worker processes (default: all CPUs)")
        p.add_argument("--out", help="output path")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be positive")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        return COMMANDS[args.command](cfg, args)
    except AlignmentError as exc:
        print(f"alignment failed: {exc}", file=sys.stderr)
        return EXIT_ALIGN
    except (ConfigError, SchemeError, ChannelError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Each subcommand reads a flat ``key = value`` config (dotted keys, ``#``
comments), applies ``--set`` and ``--seed`` overrides, validates every
field before any integration starts, writes one CSV and then a JSON
manifest next to it (``<out>.manifest.json``).

Exit codes: 0 success, 2 invalid config, 3 integration failure (the CSV
holds the rows produced before the failure and the manifest records the
error).
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable

import numpy as np

from . import __version__
from .asymptotics import AsymptoticProfile, residual_norm, truncated_asymptote
from .capture import (
    PendulumParams,
    Thresholds,
    asymptote_ic,
    capture_scan,
    disc_ics,
    pendulum_energy,
    separatrix_regions,
)
from .errors import DomainError, IntegrationError
from .integrator import IntegratorConfig, solve
from .models import ForcingLaw, polar_field, primary_field, slow_field
from .stability import stability_experiment

EXIT_OK, EXIT_CONFIG, EXIT_INTEGRATION = 0, 2, 3
HASH_NAME = "blake2b-64"


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# ---------------------------------------------------------------- config


def _float(s: str) -> float:
    return float(s)


def _int(s: str) -> int:
    v = float(s)
    if v != int(v):
        raise ValueError(f"expected an integer, got {s!r}")
    return int(v)


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _choice(*options: str) -> Callable[[str], str]:
    def parse(s: str) -> str:
        s = s.strip().lower()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s

    return parse


@dataclass(frozen=True)
class Field:
    parse: Callable[[str], Any]
    default: Any
    check: Callable[[Any], bool] | None = None
    hint: str = ""


def _positive(v) -> bool:
    return v > 0


def _nonneg(v) -> bool:
    return v >= 0


_COMMON = {
    "seed": Field(_int, 0, _nonneg, "must be >= 0"),
    "integrator.rtol": Field(_float, 1e-9, _positive, "must be > 0"),
    "integrator.atol": Field(_float, 1e-12, _positive, "must be > 0"),
    "integrator.h_max": Field(_float, math.inf, _positive, "must be > 0"),
    "integrator.max_steps": Field(_int, 5_000_000, _positive, "must be > 0"),
    "law.F": Field(_float, 1.0, lambda v: v >= 0 and math.isfinite(v), "must be finite and >= 0"),
    "law.lambda": Field(_float, 0.0, math.isfinite, "must be finite"),
}

SCHEMAS: dict[str, dict[str, Field]] = {
    "simulate": {
        "frame": Field(_choice("slow", "original", "polar"), "slow"),
        "ic.kind": Field(_choice("asymptote", "polar"), "asymptote"),
        "ic.n": Field(_int, 1, lambda v: v in (0, 1), "must be 0 or 1"),
        "ic.rho": Field(_float, 0.0, lambda v: v > -1, "must be > -1"),
        "ic.alpha": Field(_float, math.pi, math.isfinite, "must be finite"),
        "tau.start": Field(_float, 1e2, _positive, "must be > 0"),
        "tau.end": Field(_float, 1e4, _positive, "must be > 0"),
        "samples.count": Field(_int, 1000, _nonneg, "must be >= 0"),
        "samples.spacing": Field(_choice("geometric", "linear"), "geometric"),
    },
    "asymptote": {
        "n": Field(_int, 1, lambda v: v in (0, 1), "must be 0 or 1"),
        "tau.start": Field(_float, 1e3, _positive, "must be > 0"),
        "tau.end": Field(_float, 1e6, _positive, "must be > 0"),
        "tau.count": Field(_int, 61, _nonneg, "must be >= 0"),
        "tau.values": Field(_floats, [], lambda v: all(x > 0 for x in v), "must all be > 0"),
    },
    "stability": {
        "n": Field(_int, 1, lambda v: v in (0, 1), "must be 0 or 1"),
        "radius": Field(_float, 1e-2, lambda v: 0 < v <= 0.1, "must lie in (0, 0.1]"),
        "samples": Field(_int, 100, _positive, "must be > 0"),
        "tau.start": Field(_float, 1e3, lambda v: v >= 1e2, "must be >= 1e2"),
        "tau.end": Field(_float, 1e5, lambda v: v <= 1e6, "must be <= 1e6"),
        "tau.count": Field(_int, 20000, lambda v: v >= 3, "must be >= 3"),
        "integrator.rtol": Field(_float, 1e-10, _positive, "must be > 0"),
        "integrator.atol": Field(_float, 1e-13, _positive, "must be > 0"),
    },
    "scan": {
        "lambda.grid": Field(_floats, [0.0], lambda v: len(v) > 0, "must be nonempty"),
        "F.grid": Field(_floats, [1.0], lambda v: len(v) > 0 and min(v) >= 0, "must be nonempty and >= 0"),
        "ic.kind": Field(_choice("asymptote", "disc", "point"), "asymptote"),
        "ic.rho": Field(_float, 0.0, lambda v: v > -1, "must be > -1"),
        "ic.alpha": Field(_float, math.pi, math.isfinite, "must be finite"),
        "ic.radius": Field(_float, 0.1, _positive, "must be > 0"),
        "ic.count": Field(_int, 16, _positive, "must be > 0"),
        "tau.start": Field(_float, 1e2, _positive, "must be > 0"),
        "tau.end": Field(_float, 1e4, _positive, "must be > 0"),
        "tau.count": Field(_int, 2000, lambda v: v >= 16, "must be >= 16"),
        "integrator.rtol": Field(_float, 1e-8, _positive, "must be > 0"),
        "integrator.atol": Field(_float, 1e-11, _positive, "must be > 0"),
        "classify.amp_lo": Field(_float, 0.8, math.isfinite, "must be finite"),
        "classify.amp_hi": Field(_float, 1.2, math.isfinite, "must be finite"),
        "classify.residence": Field(_float, 0.9, lambda v: 0 <= v <= 1, "must lie in [0, 1]"),
        "classify.decay": Field(_float, -0.5, math.isfinite, "must be finite"),
        "classify.decay_tol": Field(_float, 0.15, _nonneg, "must be >= 0"),
    },
    "pendulum": {
        "pendulum.Fp": Field(_float, 1.0, _positive, "must be > 0"),
        "pendulum.D": Field(_float, 0.0, math.isfinite, "must be finite"),
        "alpha.count": Field(_int, 40, _positive, "must be > 0"),
        "alpha.values": Field(_floats, []),
        "alpha_dot.max": Field(_float, 3.0, _positive, "must be > 0"),
        "alpha_dot.count": Field(_int, 41, _positive, "must be > 0"),
        "alpha_dot.values": Field(_floats, []),
        "tol": Field(_float, 1e-9, _positive, "must be > 0"),
    },
}

# keys that only some commands use
_UNUSED_COMMON = {
    "pendulum": {"law.F", "law.lambda", "integrator.rtol", "integrator.atol", "integrator.h_max", "integrator.max_steps"},
}


def schema(command: str) -> dict[str, Field]:
    fields = {k: v for k, v in _COMMON.items() if k not in _UNUSED_COMMON.get(command, ())}
    fields.update(SCHEMAS[command])
    return fields


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Flat ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{no}", f"expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{no}", "empty key")
        out[key] = value
    return out


def resolve_config(command: str, raw: dict[str, str]) -> dict[str, Any]:
    """Typed, validated config: defaults overlaid with ``raw`` strings."""
    fields = schema(command)
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(unknown[0], f"unknown key for '{command}'")
    cfg = {}
    for key, f in fields.items():
        if key in raw:
            try:
                value = f.parse(raw[key])
            except ValueError as exc:
                raise ConfigError(key, str(exc)) from None
        else:
            value = f.default
        if f.check is not None and not f.check(value):
            raise ConfigError(key, f"{f.hint} (got {value!r})")
        cfg[key] = value
    for lo, hi in (("tau.start", "tau.end"),):
        if lo in cfg and hi in cfg and not cfg[lo] < cfg[hi]:
            raise ConfigError(hi, f"must exceed {lo}")
    if command == "scan" and cfg["tau.end"] / cfg["tau.start"] < 100:
        raise ConfigError("tau.end", "the scan span must cover at least two decades")
    if command == "scan" and not cfg["classify.amp_lo"] < cfg["classify.amp_hi"]:
        raise ConfigError("classify.amp_hi", "must exceed classify.amp_lo")
    if command == "simulate" and cfg["ic.kind"] == "asymptote" and cfg["law.F"] == 0:
        raise ConfigError("ic.kind", "the asymptote needs law.F > 0")
    if "integrator.rtol" in cfg:
        cfg["_integrator"] = IntegratorConfig(
            rtol=cfg["integrator.rtol"],
            atol=cfg["integrator.atol"],
            h_max=cfg["integrator.h_max"],
            max_steps=cfg["integrator.max_steps"],
        )
    return cfg


# ---------------------------------------------------------------- output


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


class CsvSink:
    """Single-writer CSV with LF line endings and round-trip number format."""

    def __init__(self, path: Path, header: Iterable[str]):
        self.path = path
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(list(header))

    def row(self, values: Iterable) -> None:
        self._w.writerow([fmt(v) for v in values])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csv(path, header: Iterable[str], rows: Iterable[Iterable]) -> Path:
    path = Path(path)
    with CsvSink(path, header) as sink:
        for r in rows:
            sink.row(r)
    return path


def file_digest(path) -> str:
    h = hashlib.blake2b(digest_size=8)
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, (np.floating, np.integer)):
        return _jsonable(v.item())
    if isinstance(v, list):
        return [_jsonable(x) for x in v]
    return v


def write_manifest(path: Path, manifest: dict) -> None:
    """Write JSON to a temporary file in the same directory, then rename."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


# ---------------------------------------------------------------- commands


def _law(cfg) -> ForcingLaw:
    return ForcingLaw(cfg["law.F"], cfg["law.lambda"])


def _sample_times(cfg) -> np.ndarray:
    n, a, b = cfg["samples.count"], cfg["tau.start"], cfg["tau.end"]
    if n == 0:
        return np.empty(0)
    if n == 1:
        return np.array([a])
    return np.geomspace(a, b, n) if cfg["samples.spacing"] == "geometric" else np.linspace(a, b, n)


def cmd_simulate(cfg, out: Path) -> dict:
    law = _law(cfg)
    tau0, tau1 = cfg["tau.start"], cfg["tau.end"]
    if cfg["ic.kind"] == "asymptote":
        s = truncated_asymptote(AsymptoticProfile(law, cfg["ic.n"]), tau0)
        rho0, alpha0 = s.rho, s.alpha
    else:
        rho0, alpha0 = cfg["ic.rho"], cfg["ic.alpha"]
    taus = _sample_times(cfg)
    frame = cfg["frame"]
    icfg = cfg["_integrator"]
    if frame == "slow" and not math.isfinite(icfg.h_max):
        # resolve the exp(i tau) drive
        icfg = icfg.replace(h_max=0.2)
    header = ["t" if frame == "original" else "tau", "re_psi", "im_psi", "abs_psi", "rho", "alpha"]

    psi0 = (1.0 + rho0) * np.exp(1j * (tau0 + alpha0))
    if frame == "polar":
        fun, y0, span, times = polar_field(law), [rho0, alpha0], (tau0, tau1), taus
    elif frame == "slow":
        fun, y0, span, times = slow_field(law), [psi0.real, psi0.imag], (tau0, tau1), taus
    else:
        t0, t1 = math.sqrt(2 * tau0), math.sqrt(2 * tau1)
        Psi0 = psi0 * math.sqrt(t0) * np.exp(-0.5j * t0 * t0)
        times = np.clip(np.sqrt(2.0 * taus), t0, t1)
        fun, y0, span = primary_field(law), [Psi0.real, Psi0.imag], (t0, t1)

    error = None
    try:
        res = solve(fun, span, y0, icfg, times)
        ts, ys = res.t, res.y
    except IntegrationError as exc:
        ts, ys = exc.partial if exc.partial is not None else (np.empty(0), np.empty((0, 2)))
        error = exc

    with CsvSink(out, header) as sink:
        for t, y in zip(ts, ys.reshape(len(ts), 2)):
            if frame == "polar":
                rho, alpha = y
                psi = (1.0 + rho) * np.exp(1j * (t + alpha))
                row = (t, psi.real, psi.imag, abs(psi), rho, alpha)
            else:
                z = complex(y[0], y[1])
                tau, psi = (0.5 * t * t, z * np.exp(0.5j * t * t) / math.sqrt(t)) if frame == "original" else (t, z)
                alpha = float(np.angle(psi * np.exp(-1j * tau)))
                row = (t, z.real, z.imag, abs(z), abs(psi) - 1.0, alpha)
            sink.row(row)
    if error is not None:
        raise error
    return {"rows": int(len(ts)), "ic": {"rho": rho0, "alpha": alpha0}}


def cmd_asymptote(cfg, out: Path) -> dict:
    profile = AsymptoticProfile(_law(cfg), cfg["n"])
    taus = np.array(cfg["tau.values"]) if cfg["tau.values"] else (
        np.geomspace(cfg["tau.start"], cfg["tau.end"], cfg["tau.count"]) if cfg["tau.count"] else np.empty(0)
    )
    rows = []
    for tau in taus:
        rr, ra = residual_norm(profile, tau)
        rows.append((tau, profile.rho(tau), profile.alpha(tau), rr, ra))
    write_csv(out, ["tau", "rho_star", "alpha_star", "res_rho", "res_alpha"], rows)
    return {"rows": len(rows), "r": profile.r_lead, "a": profile.a_lead, "kappa": profile.kappa, "mu": profile.mu}


def cmd_stability(cfg, out: Path) -> dict:
    rep = stability_experiment(
        cfg["n"],
        _law(cfg),
        radius=cfg["radius"],
        samples=cfg["samples"],
        tau0=cfg["tau.start"],
        tau1=cfg["tau.end"],
        seed=cfg["seed"],
        cfg=cfg["_integrator"],
        n_times=cfg["tau.count"],
    )
    rows = [(s.sample, s.p0, s.q0, s.max_L_ratio, s.escaped) for s in rep.per_sample]
    write_csv(out, ["sample", "p0", "q0", "max_L_ratio", "escaped"], rows)
    return {
        "max_L_ratio": rep.max_L_ratio,
        "max_L_ratio_energy": rep.max_L_ratio_energy,
        "escaped": rep.escaped,
        "growth_or_escape": rep.growth_or_escape,
    }


def cmd_scan(cfg, out: Path) -> dict:
    kind = cfg["ic.kind"]
    if kind == "asymptote":
        ics = asymptote_ic
    elif kind == "disc":
        ics = disc_ics((cfg["ic.rho"], cfg["ic.alpha"]), cfg["ic.radius"], cfg["ic.count"])
    else:
        ics = np.array([[cfg["ic.rho"], cfg["ic.alpha"]]])
    th = Thresholds(
        amp_lo=cfg["classify.amp_lo"],
        amp_hi=cfg["classify.amp_hi"],
        residence=cfg["classify.residence"],
        decay=cfg["classify.decay"],
        decay_tol=cfg["classify.decay_tol"],
    )
    rows = capture_scan(
        cfg["lambda.grid"],
        cfg["F.grid"],
        ics,
        (cfg["tau.start"], cfg["tau.end"]),
        cfg["_integrator"],
        seed=cfg["seed"],
        n_samples=cfg["tau.count"],
        thresholds=th,
    )
    write_csv(
        out,
        ["lambda", "F", "captured_fraction", "undecided_fraction", "n_samples"],
        [(r.lam, r.F, r.captured_fraction, r.undecided_fraction, r.n_samples) for r in rows],
    )
    return {"cells": len(rows)}


def cmd_pendulum(cfg, out: Path) -> dict:
    params = PendulumParams(cfg["pendulum.Fp"], cfg["pendulum.D"])
    alphas = np.array(cfg["alpha.values"]) if cfg["alpha.values"] else np.linspace(0.0, 2 * np.pi, cfg["alpha.count"], endpoint=False)
    if cfg["alpha_dot.values"]:
        dots = np.array(cfg["alpha_dot.values"])
    elif cfg["alpha_dot.count"] == 1:
        dots = np.zeros(1)
    else:
        dots = np.linspace(-cfg["alpha_dot.max"], cfg["alpha_dot.max"], cfg["alpha_dot.count"])
    A, AD = np.meshgrid(alphas, dots, indexing="ij")
    A, AD = A.ravel(), AD.ravel()
    E = pendulum_energy(A, AD, params)
    regions = separatrix_regions(A, AD, params, cfg["tol"])
    write_csv(out, ["alpha", "alpha_dot", "energy", "region"], zip(A, AD, E, regions))
    return {"points": int(A.size), "inside": int(np.sum(regions == "inside"))}


COMMANDS = {
    "simulate": cmd_simulate,
    "asymptote": cmd_asymptote,
    "stability": cmd_stability,
    "scan": cmd_scan,
    "pendulum": cmd_pendulum,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="autoreson", description="Autoresonance simulation and verification.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="flat key = value config file")
        p.add_argument("--out", type=Path, help=f"output CSV (default {name}.csv)")
        p.add_argument("--seed", type=int, help="overrides the seed key")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key (repeatable)")
    return parser


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat()


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    out = args.out or Path(f"{command}.csv")

    try:
        raw = {}
        if args.config is not None:
            try:
                text = args.config.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError("--config", str(exc)) from None
            raw.update(parse_config_text(text, str(args.config)))
        for item in args.set:
            if "=" not in item:
                raise ConfigError("--set", f"expected KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            raw[key.strip()] = value.strip()
        if args.seed is not None:
            raw["seed"] = str(args.seed)
        cfg = resolve_config(command, raw)
    except (ConfigError, DomainError) as exc:
        print(f"autoreson {command}: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not out.parent.exists():
        print(f"autoreson {command}: invalid config: --out: directory {out.parent} does not exist", file=sys.stderr)
        return EXIT_CONFIG

    started = _now()
    error = None
    summary: dict = {}
    code = EXIT_OK
    try:
        summary = COMMANDS[command](cfg, out)
    except IntegrationError as exc:
        error = {"type": type(exc).__name__, "message": str(exc), "t": exc.t}
        code = EXIT_INTEGRATION
        print(f"autoreson {command}: integration failed: {exc}", file=sys.stderr)

    manifest = {
        "tool": "autoreson",
        "version": __version__,
        "command": command,
        "config": {k: _jsonable(v) for k, v in cfg.items() if not k.startswith("_")},
        "seed": cfg["seed"],
        "started": started,
        "finished": _now(),
        "hash": HASH_NAME,
        "outputs": {out.name: file_digest(out)} if out.exists() else {},
        "summary": {k: _jsonable(v) for k, v in summary.items()},
        "error": error,
    }
    write_manifest(manifest_path(out), manifest)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Command line entry point: ``swrheat {theory,solve,swr,sweep-study}``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import traceback
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import pipeline
from .errors import ConfigError, SwrError
from .solver import monolithic_solve, write_field

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DIVERGED = 3
EXIT_INTERNAL = 4

log = logging.getLogger("swrheat")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


class Writer:
    """Writes artifacts into ``out`` with a JSON sidecar carrying config and hash."""

    def __init__(self, out: Path, cfg: dict, command: str, seed: int | None):
        self.out = out
        self.meta = {"command": command, "config": cfg, "seed": seed}
        out.mkdir(parents=True, exist_ok=True)

    def _sidecar(self, path: Path) -> None:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        side = dict(self.meta, file=path.name, sha256=digest)
        path.with_name(path.name + ".meta.json").write_text(json.dumps(side, indent=2, sort_keys=True))

    def json(self, name: str, obj) -> Path:
        path = self.out / name
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        self._sidecar(path)
        return path

    def csv(self, name: str, header: list[str], rows) -> Path:
        path = self.out / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self._sidecar(path)
        return path

    def field(self, name: str, fld) -> Path:
        path = self.out / name
        write_field(path, fld)
        self._sidecar(path)
        return path


def _report_dict(rep) -> dict:
    d = rep.to_dict()
    d["ok"] = rep.ok
    return d


def cmd_theory(cfg, writer, args) -> int:
    exp = pipeline.build(cfg)
    rep = pipeline.theory_report(exp)
    writer.json("theory_report.json", _report_dict(rep))
    print(json.dumps(_report_dict(rep), indent=2, sort_keys=True))
    return EXIT_OK if rep.ok else EXIT_INVALID


def _slices(exp, fld, cfg, writer):
    spec = exp.spec
    times = spec.times
    mid = tuple(n // 2 for n in spec.cross_shape)
    for t in cfg["output"]["slice_times"] or [spec.horizon]:
        n = int(np.argmin(np.abs(times - t)))
        vals = fld.values[(n,) + mid]
        writer.csv(f"slice_t{n}.csv", ["z", "u"], zip(spec.z.tolist(), vals.tolist()))
    for z in cfg["output"]["probe_points"]:
        i = int(np.argmin(np.abs(spec.z - z)))
        vals = fld.values[(slice(None),) + mid + (i,)]
        writer.csv(f"probe_z{i}.csv", ["t", "u"], zip(times.tolist(), vals.tolist()))


def cmd_solve(cfg, writer, args) -> int:
    exp = pipeline.build(cfg)
    fld = monolithic_solve(exp.spec, exp.f, exp.data, exp.options)
    if cfg["output"]["write_fields"]:
        writer.field("solution.bin", fld)
    _slices(exp, fld, cfg, writer)
    status = {
        "diverged": fld.diverged,
        "divergence_time": fld.divergence_time,
        "sup_norm": float(np.nanmax(np.abs(fld.values))),
        "scheme": exp.options.scheme,
    }
    writer.json("status.json", status)
    if fld.diverged:
        print(f"solution diverged at t={fld.divergence_time}")
        if cfg["algorithm"]["certified"]:
            return EXIT_DIVERGED
    return EXIT_OK


def _bound_dict(out) -> dict:
    b = out.bound
    d = {
        "epsilon_bar": out.epsilon_bar,
        "gamma": out.gamma,
        "window": None,
        "holds": None if b is None else b.holds,
        "holds_per_window": None if b is None else b.holds_per_window,
        "first_failure": None if b is None else b.first_failure,
        "min_margin": None if b is None else min(b.margins),
        "fit": None if out.fit is None else {
            "rate": out.fit.rate, "r_squared": out.fit.r_squared,
            "used": out.fit.used, "excluded": out.fit.excluded,
        },
        "sweeps": out.run.sweeps,
        "stop_reason": out.run.stop_reason,
        "overlap_updates": out.run.updates,
        "warnings": out.warnings,
    }
    return d


def cmd_swr(cfg, writer, args) -> int:
    exp = pipeline.build(cfg)
    rep = pipeline.theory_report(exp)
    out = pipeline.run_swr(exp, args.workers, rep)
    for line in out.warnings:
        print(line)
    count = exp.decomp.count
    header = ["k"] + [f"err_{j + 1}" for j in range(count)] + ["E", "Ebar", "bound", "margin"]
    writer.csv("metrics.csv", header, out.metrics_rows(count))
    bound = _bound_dict(out)
    bound["window"] = cfg["theory"]["window"]
    writer.json("bound_report.json", bound)
    writer.json("theory_report.json", _report_dict(rep))
    if out.barrier:
        writer.json("barrier_report.json", {
            "holds": all(b.holds for b in out.barrier),
            "per_sweep": [
                {"k": k, "holds": b.holds, "lower": b.lower, "upper_max": b.upper_max,
                 "worst": b.worst}
                for k, b in enumerate(out.barrier)
            ],
        })
    if cfg["output"]["write_fields"]:
        writer.field("reference.bin", out.reference)
        for j, fl in enumerate(out.run.state.fields):
            writer.field(f"band_{j + 1}.bin", fl)
    print(f"stop: {out.run.stop_reason} after {out.run.sweeps} sweeps")
    if out.run.stop_reason == "diverged" and cfg["algorithm"]["certified"]:
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_sweep_study(cfg, writer, args) -> int:
    rows = pipeline.sweep_study(cfg, args.workers)
    keys = ["overlap_fraction", "S", "fitted_rate", "r_squared", "predicted_epsilon_bar",
            "sweeps", "stop_reason"]
    writer.csv("rate_table.csv", keys, ([r[k] for k in keys] for r in rows))
    for r in rows:
        print(", ".join(f"{k}={_fmt(r[k])}" for k in keys))
    return EXIT_OK


COMMANDS = {
    "theory": cmd_theory,
    "solve": cmd_solve,
    "swr": cmd_swr,
    "sweep-study": cmd_sweep_study,
}


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="swrheat",
                                 description="Schwarz waveform relaxation for u_t - Lap u = f(u)")
    ap.add_argument("command", nargs="?", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path, help="YAML experiment configuration")
    ap.add_argument("--out", type=Path, default=Path("swrheat_out"), help="output directory")
    ap.add_argument("--workers", type=int, default=1, help="parallel band solves per sweep")
    ap.add_argument("--seed", type=int, default=None,
                    help="recorded in the metadata; only noise fixtures consume it")
    ap.add_argument("--dump-defaults", action="store_true",
                    help="print the fully resolved configuration and exit")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_mod.load(args.config)
        if args.dump_defaults:
            sys.stdout.write(config_mod.dump(cfg))
            return EXIT_OK
        if args.command is None:
            raise ConfigError("a command is required unless --dump-defaults is given")
        if args.workers < 1:
            raise ConfigError(f"--workers must be >= 1, got {args.workers}")
        writer = Writer(args.out, cfg, args.command, args.seed)
        return COMMANDS[args.command](cfg, writer, args)
    except ConfigError as exc:
        for line in getattr(exc, "problems", None) or [str(exc)]:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_INVALID
    except SwrError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

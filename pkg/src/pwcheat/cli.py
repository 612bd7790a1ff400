"""Command-line entry point: reproducible forward/inverse workflows.

Subcommands: simulate, transfer, synth, verify, reconstruct, select.
Every artifact embeds the tool version, a digest of the effective options
and the seed; identical invocations write byte-identical files.  Exit codes:
1 validation, 2 numerical failure, 3 I/O; errors are mirrored as JSON on
stderr for machine consumption.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .completeness import verify_report
from .dataset import TransferDataset
from .exceptions import NumericalError, ValidationError
from .inverse import model_select, reconstruct
from .laplace import transfer_function
from .piecewise import ConductivityProfile, format_float, profile_from_json, profile_to_json
from .timedomain import FluxSpec, simulate, synthesize_dataset


def parse_grid(text: str) -> np.ndarray:
    """Mini-language log:<min>:<max>:<count> or lin:<min>:<max>:<count>."""
    parts = text.split(":")
    if len(parts) != 4 or parts[0] not in ("log", "lin"):
        raise ValidationError(
            f"bad grid spec {text!r}; expected log:<min>:<max>:<count> or lin:..."
        )
    try:
        lo, hi, count = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError as exc:
        raise ValidationError(f"bad grid spec {text!r}: {exc}") from exc
    if count < 1 or lo <= 0 or hi < lo:
        raise ValidationError(f"bad grid spec {text!r}: need 0 < min <= max, count >= 1")
    if parts[0] == "log":
        return np.geomspace(lo, hi, count)
    return np.linspace(lo, hi, count)


def parse_flux(text: str) -> FluxSpec:
    """Mini-language pulse:<amp>:<t_on>:<t_off> or const:<amp>."""
    parts = text.split(":")
    try:
        if parts[0] == "pulse" and len(parts) == 4:
            return FluxSpec(
                kind="pulse",
                amplitude=float(parts[1]),
                t_on=float(parts[2]),
                t_off=float(parts[3]),
            )
        if parts[0] == "const" and len(parts) == 2:
            return FluxSpec(kind="constant", amplitude=float(parts[1]))
    except ValueError as exc:
        raise ValidationError(f"bad flux spec {text!r}: {exc}") from exc
    raise ValidationError(
        f"bad flux spec {text!r}; expected pulse:<amp>:<t_on>:<t_off> or const:<amp>"
    )


def dumps_canonical(obj, _indent: int = 0) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    pad = "  " * _indent
    inner = "  " * (_indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{inner}{json.dumps(str(k))}: {dumps_canonical(v, _indent + 1)}"
            for k, v in sorted(obj.items())
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        seq = list(obj)
        if not seq:
            return "[]"
        items = [f"{inner}{dumps_canonical(v, _indent + 1)}" for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj) if math.isfinite(obj) else "null"
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def config_digest(options: dict) -> str:
    payload = {k: v for k, v in options.items() if k not in ("out",)}
    text = dumps_canonical(payload)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def file_digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


@dataclass(frozen=True)
class RunConfig:
    """One parsed invocation: subcommand plus its effective options."""

    subcommand: str
    options: dict

    @property
    def seed(self) -> int:
        return int(self.options.get("seed", 0))

    def metadata(self) -> dict:
        return {
            "version": __version__,
            "config_digest": config_digest(self.options),
            "seed": self.seed,
        }


def _load_profile(path: str) -> ConductivityProfile:
    with open(path, "r", encoding="utf-8") as fh:
        return profile_from_json(fh.read())


def _write_json(payload: dict, out: str | None) -> None:
    text = dumps_canonical(payload) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _default_threads() -> int:
    env = os.environ.get("PWCHEAT_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ValidationError(f"bad PWCHEAT_THREADS value {env!r}") from exc
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pwcheat",
        description="1-D heat conduction with piecewise-constant conductivity: "
        "forward solvers, verification suite, reconstruction.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--threads", type=int, default=None,
        help="worker threads (default: PWCHEAT_THREADS or CPU count)",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("transfer", parents=[common], help="evaluate the transfer function")
    p.add_argument("--profile", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--lambdas", default=None, help="grid spec log:min:max:count")
    p.add_argument("--out", default=None, help="CSV output (header lambda,H)")

    p = sub.add_parser("simulate", parents=[common], help="time-domain simulation")
    p.add_argument("--profile", required=True)
    p.add_argument("--flux", default="pulse:1:0:1")
    p.add_argument("--nx", type=int, default=200)
    p.add_argument("--dt", type=float, default=5e-4)
    p.add_argument("--T", type=float, default=12.0)
    p.add_argument("--out", required=True, help="CSV output (header t,f,g)")

    p = sub.add_parser("synth", parents=[common], help="synthesize a transfer dataset")
    p.add_argument("--profile", required=True)
    p.add_argument("--lambdas", required=True, help="grid spec log:min:max:count")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV output (header lambda,H,sigma)")

    p = sub.add_parser("verify", parents=[common], help="invariant battery and moment certificate")
    p.add_argument("--q1", required=True, help="first reciprocal-conductivity profile")
    p.add_argument("--q2", required=True, help="second reciprocal-conductivity profile")
    p.add_argument("--pieces", type=int, default=4)
    p.add_argument("--k-grid", dest="k_grid", default=None, help="grid spec")
    p.add_argument("--out", default=None, help="JSON report path (default stdout)")

    for name in ("reconstruct", "select"):
        p = sub.add_parser(name, parents=[common], help=f"{name} a profile from transfer data")
        p.add_argument("--data", required=True)
        if name == "reconstruct":
            p.add_argument("--n", type=int, default=None)
        p.add_argument("--n-max", dest="n_max", type=int, default=None)
        p.add_argument("--restarts", type=int, default=8)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--c0", type=float, default=1e-3)
        p.add_argument("--c1", type=float, default=1e3)
        p.add_argument("--min-width", dest="min_width", type=float, default=0.02)
        p.add_argument("--max-iter", dest="max_iter", type=int, default=100)
        p.add_argument("--ridge", type=float, default=0.0)
        p.add_argument("--out", default=None, help="JSON result path (default stdout)")
    return parser


def run(config: RunConfig) -> int:
    """Execute one subcommand; deterministic given options + seed."""
    opts = config.options
    meta = config.metadata()
    threads = opts.get("threads") or 1

    if config.subcommand == "transfer":
        profile = _load_profile(opts["profile"])
        if (opts.get("lam") is None) == (opts.get("lambdas") is None):
            raise ValidationError("transfer needs exactly one of --lambda/--lambdas")
        if opts.get("lam") is not None:
            if opts["lam"] <= 0:
                raise ValidationError("--lambda must be positive")
            sys.stdout.write(format_float(transfer_function(profile, opts["lam"])) + "\n")
            return 0
        grid = parse_grid(opts["lambdas"])
        rows = [(lam, transfer_function(profile, lam)) for lam in grid]
        lines = [f"# {k}: {v}" for k, v in meta.items()]
        lines.append("lambda,H")
        lines += [f"{format_float(lam)},{format_float(h)}" for lam, h in rows]
        text = "\n".join(lines) + "\n"
        if opts.get("out"):
            with open(opts["out"], "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return 0

    if config.subcommand == "simulate":
        profile = _load_profile(opts["profile"])
        flux = parse_flux(opts["flux"])
        series = simulate(profile, flux, nx=opts["nx"], dt=opts["dt"], T=opts["T"])
        series.to_csv(opts["out"], metadata=meta)
        return 0

    if config.subcommand == "synth":
        profile = _load_profile(opts["profile"])
        grid = parse_grid(opts["lambdas"])
        data = synthesize_dataset(profile, grid, opts["noise"], seed=opts["seed"])
        data.to_csv(opts["out"], metadata=meta)
        return 0

    if config.subcommand == "verify":
        with open(opts["q1"], "r", encoding="utf-8") as fh:
            r1 = profile_from_json(fh.read())
        with open(opts["q2"], "r", encoding="utf-8") as fh:
            r2 = profile_from_json(fh.read())
        k_grid = parse_grid(opts["k_grid"]) if opts.get("k_grid") else None
        report = verify_report(
            r1, r2, partition_pieces=opts["pieces"], k_grid=k_grid, threads=threads
        )
        report["meta"] = meta
        _write_json(report, opts.get("out"))
        return 0

    if config.subcommand in ("reconstruct", "select"):
        data = TransferDataset.from_csv(opts["data"])
        kwargs = dict(
            c0=opts["c0"],
            c1=opts["c1"],
            restarts=opts["restarts"],
            max_iter=opts["max_iter"],
            min_width=opts["min_width"],
            ridge=opts["ridge"],
            seed=opts["seed"],
            threads=threads,
        )
        n = opts.get("n")
        n_max = opts.get("n_max")
        if config.subcommand == "select" or (n is None and n_max is not None):
            if n_max is None:
                raise ValidationError("select needs --n-max")
            best_n, result = model_select(data, n_max, **kwargs)
        else:
            if n is None:
                raise ValidationError("reconstruct needs --n or --n-max")
            result = reconstruct(data, n, **kwargs)
            best_n = result.profile.n_pieces
        payload = {
            "meta": meta,
            "input_digest": file_digest(opts["data"]),
            "best_n": best_n,
            "result": result.to_dict(),
        }
        _write_json(payload, opts.get("out"))
        return 0

    raise ValidationError(f"unknown subcommand {config.subcommand!r}")


def _emit_error(exc: Exception, code: int) -> int:
    sys.stderr.write(
        json.dumps(
            {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        )
        + "\n"
    )
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    if args.get("threads") is None:
        args["threads"] = _default_threads()
    config = RunConfig(args.pop("subcommand"), args)
    try:
        return run(config)
    except ValidationError as exc:
        return _emit_error(exc, 1)
    except NumericalError as exc:
        return _emit_error(exc, 2)
    except OSError as exc:
        return _emit_error(exc, 3)


if __name__ == "__main__":
    sys.exit(main())

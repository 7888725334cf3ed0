"""Command-line front end.

Subcommands::

    fraceig run CONFIG [--out DIR] [--seed N] [--threads N] [--format json|csv|both]
    fraceig validate CONFIG
    fraceig list-experiments
    fraceig export-operator CONFIG [--out DIR]

Exit status: 0 when the verdict holds or is inconclusive, 1 when it is
violated (or the runner failed), 2 for usage and configuration errors.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
import traceback
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from . import experiments as ex
from . import stablemc as mc
from .geometry import Domain

EXPERIMENTS = {
    "thm11": "maximizer distance times lambda^(1/alpha) over a domain family",
    "thm12": "same product for planar simply connected domains, alpha = 2",
    "cor11": "positive definiteness of (-Delta)^(alpha/2) - V below lambda_1 (convex domain)",
    "barta": "lambda_1 against sup |A u / u| for a positive trial function",
    "thm13": "fat radius around the maximizer in units of lambda^(-1/alpha)",
    "faber_krahn": "|D| lambda^(d/alpha) ordering with the ball",
    "thm14": "reverse Hoelder ratios of the principal eigenfunction",
    "obstacle": "obstacle placements maximizing lambda versus the maximizer set",
    "mc_crosscheck": "survival, Feynman-Kac, exit-bound sweep and heat-kernel fit by Monte Carlo",
}

DEFAULT_FAMILY = {"thm11": "convex", "thm12": "simply-connected", "thm13": "l-shape",
                  "faber_krahn": "equal-measure", "thm14": "balls"}
DOMAIN_KINDS = ("ball", "disk", "square", "rectangle", "ellipse", "l-shape", "annulus", "comb", "polygon")
FORMATS = ("json", "csv", "both")


class ConfigError(ValueError):
    """Schema violation in a run configuration."""


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    family: str | None = None
    domain: dict[str, Any] | None = None
    alpha: float = 1.0
    h: float = 1 / 64
    dt: float = 1e-3
    n: int = 100_000
    horizon: float = 1.0
    seed: int = 42
    eps: float = 0.5
    v_sup: float = 0.0
    trial: str = "distance"
    obstacle_radius: float = 0.2
    placements: int = 9
    refine: bool = True
    out: str = "out"
    format: str = "both"

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def emit(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


_FIELDS = {f.name: f for f in fields(RunConfig)}
_POSITIVE = ("h", "dt", "horizon", "n", "obstacle_radius", "placements")


def _check_number(key: str, value: Any, integer: bool = False) -> float | int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number")
    if integer:
        if int(value) != value:
            raise ConfigError(f"{key}: expected an integer")
        return int(value)
    return float(value)


def normalize(obj: dict[str, Any]) -> dict[str, Any]:
    """Validated config dict with every default filled in."""
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(obj) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}")
    if "experiment" not in obj:
        raise ConfigError("missing key 'experiment'")
    out: dict[str, Any] = {}
    for name, f in _FIELDS.items():
        out[name] = obj[name] if name in obj else f.default
    exp = out["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown experiment {exp!r}")
    out["alpha"] = _check_number("alpha", out["alpha"])
    if not 0 < out["alpha"] <= 2:
        raise ConfigError("alpha out of range (0, 2]")
    for key in ("h", "dt", "horizon", "eps", "v_sup", "obstacle_radius"):
        out[key] = _check_number(key, out[key])
    for key in ("n", "seed", "placements"):
        out[key] = _check_number(key, out[key], integer=True)
    for key in _POSITIVE:
        if out[key] <= 0:
            raise ConfigError(f"{key}: must be positive")
    if out["v_sup"] < 0:
        raise ConfigError("v_sup: must be non-negative")
    if out["seed"] < 0 or out["seed"] >= 2 ** 64:
        raise ConfigError("seed: must be a 64-bit unsigned integer")
    if not 0 < out["eps"] < 1:
        raise ConfigError("eps: must lie in (0, 1)")
    if out["dt"] > out["horizon"]:
        raise ConfigError("dt: must not exceed horizon")
    if not isinstance(out["refine"], bool):
        raise ConfigError("refine: expected a boolean")
    if out["format"] not in FORMATS:
        raise ConfigError(f"format: expected one of {', '.join(FORMATS)}")
    if out["trial"] not in ("distance", "eigen", "getoor"):
        raise ConfigError("trial: expected distance, eigen or getoor")
    if not isinstance(out["out"], str):
        raise ConfigError("out: expected a path string")
    if out["family"] is not None and out["family"] not in ex.FAMILIES:
        raise ConfigError(f"family: unknown family {out['family']!r}")
    if out["domain"] is not None:
        _check_domain_spec(out["domain"])
    return out


def _check_domain_spec(spec: Any) -> None:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("domain: expected an object with a 'kind'")
    if spec["kind"] not in DOMAIN_KINDS:
        raise ConfigError(f"domain: unknown kind {spec['kind']!r}")
    for key, value in spec.items():
        if key == "kind":
            continue
        if key in ("center", "lo", "hi", "vertices"):
            continue
        _check_number(f"domain.{key}", value)
        if value <= 0:
            raise ConfigError(f"domain.{key}: must be positive")


def parse_config(text: str) -> RunConfig:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return RunConfig(**normalize(obj))


def build_domain(spec: dict[str, Any] | None, h: float, default: str = "ball") -> Domain:
    spec = {"kind": default} if spec is None else spec
    kind = spec["kind"]
    if kind in ("ball", "disk"):
        return Domain.ball(spec.get("radius", 1.0), h, len(spec.get("center", [0, 0])), spec.get("center"))
    if kind == "square":
        return Domain.square(spec.get("side", 2.0), h)
    if kind == "rectangle":
        return Domain.rectangle(spec.get("lo", [0.0, 0.0]), spec.get("hi", [2.0, 1.0]), h)
    if kind == "ellipse":
        return Domain.ellipse(spec.get("a", 2.0), spec.get("b", 1.0), h)
    if kind == "l-shape":
        return Domain.l_shape(spec.get("size", 2.0), spec.get("notch", 1.0), h)
    if kind == "annulus":
        return Domain.annulus(spec.get("r_in", 0.5), spec.get("r_out", 1.0), h)
    if kind == "comb":
        return ex.comb(int(spec.get("teeth", 4)), h)
    if kind == "polygon":
        return Domain.convex_polygon(spec["vertices"], h)
    raise ConfigError(f"domain: unknown kind {kind!r}")


def dispatch(cfg: RunConfig, threads: int = 1) -> ex.ExperimentReport:
    """Run the experiment named by ``cfg`` and return its report."""
    e, a, h = cfg.experiment, cfg.alpha, cfg.h

    def family() -> ex.DomainFamily:
        if cfg.domain is not None:
            return ex.DomainFamily.single(build_domain(cfg.domain, h))
        return ex.DomainFamily.build(cfg.family or DEFAULT_FAMILY[e], h)

    if e == "thm11":
        report = ex.run_thm11(family(), a, refine_check=cfg.refine)
    elif e == "thm12":
        report = ex.run_thm12(family(), refine_check=cfg.refine)
    elif e == "cor11":
        report = ex.run_cor11_nonexistence(build_domain(cfg.domain, h), a, cfg.v_sup)
    elif e == "barta":
        report = ex.run_barta(build_domain(cfg.domain, h), a, cfg.trial)
    elif e == "thm13":
        report = ex.run_thm13_fatness(family(), a, cfg.eps)
    elif e == "faber_krahn":
        report = ex.run_faber_krahn(family(), a, refine_check=cfg.refine)
    elif e == "thm14":
        report = ex.run_thm14_chiti(family(), a, refine_check=cfg.refine)
    elif e == "obstacle":
        report = ex.run_obstacle(build_domain(cfg.domain, h), a, cfg.obstacle_radius, cfg.placements)
    elif e == "mc_crosscheck":
        dom = build_domain(cfg.domain, h)
        pc = mc.PathConfig(a, dom.d, cfg.dt, cfg.horizon, cfg.n, cfg.seed, threads=threads)
        report = ex.run_mc_crosscheck(dom, a, pc)
    else:  # guarded by normalize
        raise ConfigError(f"unknown experiment {e!r}")
    # where and how results are written does not change them; keep report.json location-free
    report.environment["config"] = {k: v for k, v in cfg.to_dict().items() if k not in ("out", "format")}
    return report


def resolve_threads(flag: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get("FRACEIG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("FRACEIG_THREADS must be an integer") from None
    return 1


def _load(path: str) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text)


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    data = cfg.to_dict()
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        data["out"] = args.out
    if getattr(args, "format", None) is not None:
        data["format"] = args.format
    return RunConfig(**normalize(data))


def _write_metadata(out: Path, args: argparse.Namespace, threads: int, started: float) -> None:
    meta = {"started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
            "elapsed_s": time.time() - started, "threads": threads, "argv": sys.argv,
            "python": platform.python_version(), "version": __version__}
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def cmd_run(args: argparse.Namespace) -> int:
    started = time.time()
    cfg = _apply_overrides(_load(args.config), args)
    threads = resolve_threads(args.threads)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        report = dispatch(cfg, threads)
    except Exception as exc:
        err = {"theorem": cfg.experiment, "verdict": "error", "error": f"{type(exc).__name__}: {exc}",
               "config": cfg.to_dict()}
        (out / "report.json").write_text(json.dumps(err, indent=2, sort_keys=True) + "\n")
        _write_metadata(out, args, threads, started)
        print(f"error: {exc}", file=sys.stderr)
        if os.environ.get("FRACEIG_DEBUG"):
            traceback.print_exc()
        return 1
    report.write(out, cfg.format)
    _write_metadata(out, args, threads, started)
    print(f"{cfg.experiment}: {report.verdict} ({report.reason})")
    return 1 if report.verdict == ex.VIOLATED else 0


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = _load(args.config)
    sys.stdout.write(cfg.emit())
    return 0


def cmd_list(args: argparse.Namespace) -> int:
    for tag, text in EXPERIMENTS.items():
        print(f"{tag:14s} {text}")
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    import numpy as np
    import scipy.io
    import scipy.sparse as sp

    from .fraclap import assemble

    cfg = _load(args.config)
    dom = build_domain(cfg.domain, cfg.h)
    op = assemble(dom, cfg.alpha)
    A = op.matrix()
    A = sp.coo_matrix(A) if not sp.issparse(A) else A.tocoo()
    out = Path(args.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "operator.mtx"
    scipy.io.mmwrite(str(path), A, comment=f"alpha={cfg.alpha} h={cfg.h} n={op.n}", precision=17)
    np.savetxt(out / "operator_nodes.txt", dom.interior_points, header="x y (interior node order)")
    print(str(path))
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit with status 2
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fraceig", description="Fractional Schrodinger eigenvalue laboratory.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (overrides config)")
    run.add_argument("--seed", type=int, help="base seed (overrides config)")
    run.add_argument("--threads", type=int, help="worker threads (fallback: FRACEIG_THREADS)")
    run.add_argument("--format", choices=FORMATS, help="report formats")
    run.set_defaults(func=cmd_run)
    val = sub.add_parser("validate", help="check a config and print it with defaults")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)
    lst = sub.add_parser("list-experiments", help="list experiment tags")
    lst.set_defaults(func=cmd_list)
    exp = sub.add_parser("export-operator", help="dump the assembled operator as Matrix Market")
    exp.add_argument("config")
    exp.add_argument("--out", help="output directory")
    exp.set_defaults(func=cmd_export)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

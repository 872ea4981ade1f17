"""Command-line runner: certify, convert, factorize, embed, psd.

Every run is described by a :class:`RunConfig`. Reports land in
``<out>/<command>-<hash>/`` where the hash covers the config (minus the
output directory) and the contents of any input kernel file, so identical
runs reproduce identical bytes in the same place.

Exit codes: 0 success, 1 mathematical violation, 2 under-coverage,
64 usage error, 65 unparseable input.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .boundary import cylinder_sample, parse_boundary
from .certificates import (
    METHODS,
    aicm_deficiency,
    boundary_aicm,
    certificate,
    default_ray,
    deficiency_l1,
    is_non_increasing,
)
from .config import override, threads
from .embedding import default_sequence, distortion_profile
from .errors import (
    BoundViolationError,
    DecayContractError,
    DomainError,
    NotPositiveTypeError,
    ResourceError,
    UnderCoverageError,
)
from .groups import FreeGroup, LatticeGroup, ball_enumerate, parse_group
from .kernels import TubeKernel
from .psd import action_coefficient, boundary_action, psd_check_action, psd_check_group
from .transforms import BumpFunction, bound_chain, coefficient_factorize, density_to_l2, l2_to_coefficient

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_UNDERCOVERAGE = 2
EXIT_USAGE = 64
EXIT_PARSE = 65

COMMANDS = ("certify", "convert", "factorize", "embed", "psd")
STAGES = ("mean", "density", "l2", "coefficient")
# kernels that factorize / psd can generate instead of reading a file
KERNEL_SOURCES = {
    "delta": "h(s, t) = 1 if s = t else 0",
    "coefficient": "coefficient of the square root of --method's certificate at the first --n",
    "boundary": "action coefficient of square-root boundary means at --omega (psd only)",
}


_INT_FIELDS = ("tube", "window", "window_in", "depth", "levels", "bump", "samples", "sample_radius", "seed")


class UsageError(Exception):
    pass


class ParseError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    group: str = "z:1"
    method: str | None = None
    n: str = "1"
    tube: int = 1
    window: int | None = None
    window_in: int = 1
    depth: int = 6
    levels: int = 8
    omega: str | None = None
    chain: str = "mean,density,l2,coefficient"
    bump: int = 1
    kernel: str | None = None
    source: str = "coefficient"
    samples: int = 0
    sample_radius: int = 2
    psd_tol: float = 1e-10
    norm_tol: float = 1e-12
    seed: int = 0
    out: str = "reports"

    def validate(self) -> "RunConfig":
        self._check_types()
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        try:
            parse_group(self.group)
            ns = parse_range(self.n)
        except DomainError as exc:
            raise UsageError(str(exc)) from exc
        if not ns or min(ns) < 1:
            raise UsageError(f"--n values must be positive, got {self.n!r}")
        if self.tube < 0:
            raise UsageError(f"--tube must be >= 0, got {self.tube}")
        for name in ("window_in", "depth", "levels", "sample_radius"):
            if getattr(self, name) < 1:
                raise UsageError(f"--{name.replace('_', '-')} must be positive")
        if self.window is not None and self.window < 1:
            raise UsageError("--window must be positive")
        if self.bump < 0 or self.samples < 0:
            raise UsageError("--bump and --samples must be >= 0")
        for name in ("psd_tol", "norm_tol"):
            v = getattr(self, name)
            if not (0 < v <= 1e-6):
                raise UsageError(f"{name} must lie in (0, 1e-6], got {v!r}")
        if self.method is not None and self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}; see list-methods")
        if self.source not in KERNEL_SOURCES:
            raise UsageError(f"unknown kernel source {self.source!r}; see list-methods")
        return self

    def _check_types(self) -> None:
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name in _INT_FIELDS:
                ok = isinstance(v, int) and not isinstance(v, bool)
                ok = ok or (v is None and f.name == "window")
            elif f.name in ("psd_tol", "norm_tol"):
                ok = isinstance(v, (int, float)) and not isinstance(v, bool)
            else:
                ok = isinstance(v, str) or (v is None and f.default is None)
            if not ok:
                raise UsageError(f"config field {f.name!r} has the wrong type: {v!r}")

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        if not isinstance(obj, dict):
            raise UsageError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        if "command" not in obj:
            raise UsageError("config needs a 'command'")
        return cls(**obj)

    def digest(self) -> str:
        material = self.to_json()
        material.pop("out")
        if self.kernel is not None:
            material["kernel_sha256"] = hashlib.sha256(_read_bytes(self.kernel)).hexdigest()
        blob = json.dumps(material, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def parse_range(text: str) -> list[int]:
    """``"5"``, ``"1..16"``, ``"10..100:10"`` or ``"2,4,8"``."""
    text = str(text).strip()
    try:
        if ".." in text:
            lo, _, rest = text.partition("..")
            hi, _, step = rest.partition(":")
            return list(range(int(lo), int(hi) + 1, int(step) if step else 1))
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise DomainError(f"cannot parse range {text!r}") from exc


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc


def load_kernel(path: str) -> TubeKernel:
    try:
        obj = json.loads(_read_bytes(path).decode("utf-8"))
        return TubeKernel.from_json(obj)
    except (UnicodeDecodeError, json.JSONDecodeError, DomainError) as exc:
        raise ParseError(f"malformed kernel file {path}: {exc}") from exc


# --- report writing -------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_jsonable, allow_nan=False) + "\n"


@dataclass
class Outcome:
    status: int
    report: dict
    tables: dict = field(default_factory=dict)  # file name -> CSV text
    summary: str = ""


def write_outcome(cfg: RunConfig, outcome: Outcome) -> Path:
    target = Path(cfg.out) / f"{cfg.command}-{cfg.digest()[:16]}"
    target.mkdir(parents=True, exist_ok=True)
    body = {"config": cfg.to_json(), "status": outcome.status, "report": outcome.report}
    (target / "report.json").write_text(dumps(body), encoding="utf-8")
    (target / "config.json").write_text(dumps(cfg.to_json()), encoding="utf-8")
    for name, text in sorted(outcome.tables.items()):
        (target / name).write_text(text, encoding="utf-8")
    return target


# --- commands ---------------------------------------------------------------------


def _default_method(group) -> str:
    return "folner" if isinstance(group, LatticeGroup) else "free_ray"


def _omega(cfg: RunConfig, group):
    if not isinstance(group, FreeGroup):
        return None
    return default_ray(group) if cfg.omega is None else parse_boundary(group, cfg.omega)


def _invariant_checks(method: str, group, tube: int, reports: list) -> dict:
    checks = {"nonnegative": all(r.sup >= 0 for r in reports)}
    ordered = sorted(reports, key=lambda r: r.n)
    checks["non_increasing"] = is_non_increasing([r.sup for r in ordered])
    if method == "boundary":
        checks["rate_2R_over_n"] = all(r.sup <= Fraction(2 * tube, r.n) for r in reports)
    elif method == "free_ray":
        checks["rate_4F_over_n"] = all(r.sup <= 4 * tube / r.n + 1e-12 for r in reports)
    elif method == "folner" and group.dim == 1:
        checks["exact_2F_over_2n_plus_1"] = all(abs(r.sup - 2 * tube / (2 * r.n + 1)) <= 1e-12 for r in reports)
    return checks


def cmd_certify(cfg: RunConfig) -> Outcome:
    group = parse_group(cfg.group)
    method = cfg.method or _default_method(group)
    ns = parse_range(cfg.n)
    if method == "boundary":
        if not isinstance(group, FreeGroup):
            raise DomainError("boundary means need a free group")
        window = ball_enumerate(group, cfg.tube if cfg.window is None else cfg.window)
        if window.radius < cfg.tube:
            raise UnderCoverageError(f"window B({window.radius}) is smaller than the compact B({cfg.tube})")
        compact = ball_enumerate(group, cfg.tube)
        points = cylinder_sample(group, cfg.depth)

        def run(n):
            return aicm_deficiency(boundary_aicm(group, n), points, compact)

    else:
        window = ball_enumerate(group, cfg.tube if cfg.window is None else cfg.window)
        omega = _omega(cfg, group)

        def run(n):
            return deficiency_l1(certificate(group, method, n, omega), cfg.tube, window)

    with ThreadPoolExecutor(max_workers=threads()) as pool:
        reports = list(pool.map(run, ns))
    checks = _invariant_checks(method, group, cfg.tube, reports)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "distance", "max_deficiency"])
    for r in reports:
        for d, v in r.table:
            w.writerow([r.n, d, repr(float(v))])
    ok = all(checks.values())
    report = {"method": method, "checks": checks, "ok": ok, "reports": [r.to_json() for r in reports]}
    worst = max(reports, key=lambda r: r.sup)
    summary = f"certify {method}: {len(reports)} value(s) of n, largest sup {float(worst.sup):.6g} at n={worst.n}"
    return Outcome(EXIT_OK if ok else EXIT_VIOLATION, report, {"table.csv": buf.getvalue()}, summary)


def _parse_chain(text: str) -> list[str]:
    stages = [s.strip() for s in text.split(",") if s.strip()]
    if len(stages) < 2 or stages != list(STAGES[: len(stages)]):
        raise UsageError(f"--chain must be a prefix of {','.join(STAGES)} with at least two stages, got {text!r}")
    return stages


_CHAIN_CHECKS = {
    "density": ("density_le_mean",),
    "l2": ("l2_sq_le_l1", "cauchy_schwarz"),
    "coefficient": ("polarization",),
}


def _bump(group, radius: int) -> BumpFunction:
    if radius == 0:
        return BumpFunction.delta(group)
    return BumpFunction.uniform(group, ball_enumerate(group, radius))


def cmd_convert(cfg: RunConfig) -> Outcome:
    stages = _parse_chain(cfg.chain)
    if cfg.kernel is not None:
        means = load_kernel(cfg.kernel)
        if means.kind != "l1":
            raise DomainError(f"convert needs an l1 kernel as its mean family, got kind {means.kind!r}")
        group = means.group
    else:
        group = parse_group(cfg.group)
        means = certificate(group, cfg.method or _default_method(group), parse_range(cfg.n)[0], _omega(cfg, group))
    window = ball_enumerate(group, cfg.tube if cfg.window is None else cfg.window)
    chain = bound_chain(means, _bump(group, cfg.bump), cfg.tube, window)
    wanted = [c for s in stages[1:] for c in _CHAIN_CHECKS[s]]
    full = chain.to_json()
    checks = {k: full["checks"][k] for k in wanted}
    ok = all(v["violations"] == 0 for v in checks.values())
    report = {"stages": stages, "pairs": chain.pairs, "checks": checks, "ok": ok, "label": means.label}
    summary = f"convert {'->'.join(stages)}: {chain.pairs} pairs, {'no' if ok else 'some'} violations"
    return Outcome(EXIT_OK if ok else EXIT_VIOLATION, report, summary=summary)


def _generated_kernel(cfg: RunConfig, group) -> TubeKernel:
    if cfg.source == "delta":
        return TubeKernel(group, "positive-type", 0, base={group.identity: 1.0}, normalized=False, label="delta")
    if cfg.source == "coefficient":
        method = cfg.method or _default_method(group)
        cert = certificate(group, method, parse_range(cfg.n)[0], _omega(cfg, group))
        return l2_to_coefficient(density_to_l2(cert))
    raise UsageError(f"kernel source {cfg.source!r} is not available here")


def cmd_factorize(cfg: RunConfig) -> Outcome:
    if cfg.kernel is not None:
        h = load_kernel(cfg.kernel)
    else:
        h = _generated_kernel(cfg, parse_group(cfg.group))
    group = h.group
    out_radius = cfg.window if cfg.window is not None else cfg.window_in + h.tube_radius + 1
    window_out = ball_enumerate(group, out_radius)
    window_in = ball_enumerate(group, cfg.window_in)
    try:
        fac = coefficient_factorize(h, window_out, window_in, cfg.psd_tol)
    except NotPositiveTypeError as exc:
        report = {"verdict": "indefinite", "min_eigenvalue": exc.eigenvalue, "witness": exc.witness}
        return Outcome(EXIT_VIOLATION, report, summary=f"factorize: not positive type, eigenvalue {exc.eigenvalue:.6g}")
    report = fac.to_json(rows=True)
    report["verdict"] = "positive-type"
    summary = f"factorize: residual {fac.residual:.3g}, min eigenvalue {fac.min_eigenvalue:.3g}"
    return Outcome(EXIT_OK, report, summary=summary)


def cmd_embed(cfg: RunConfig) -> Outcome:
    group = parse_group(cfg.group)
    window = ball_enumerate(group, cfg.window if cfg.window is not None else 2 * cfg.levels)
    try:
        seq = default_sequence(group, cfg.levels, window)
    except DecayContractError as exc:
        return Outcome(EXIT_VIOLATION, {"error": str(exc)}, summary=f"embed: {exc}")
    prof = distortion_profile(seq, cfg.levels, window)
    report = prof.to_json()
    report["deficiencies"] = seq.deficiencies
    report["ok"] = prof.ok
    summary = f"embed: {len(prof.rows)} distances, {len(prof.violations)} bound violations"
    return Outcome(EXIT_OK if prof.ok else EXIT_VIOLATION, report, {"profile.csv": prof.to_csv()}, summary)


def _sample(cfg: RunConfig, group) -> list:
    ball = ball_enumerate(group, cfg.sample_radius)
    if cfg.samples == 0 or cfg.samples >= len(ball):
        return list(ball)
    rng = np.random.default_rng(cfg.seed)
    picks = np.sort(rng.choice(len(ball), size=cfg.samples, replace=False))
    return [ball.elements[i] for i in picks]


def cmd_psd(cfg: RunConfig) -> Outcome:
    if cfg.kernel is not None:
        h = load_kernel(cfg.kernel)
        group = h.group
    else:
        group = parse_group(cfg.group)
        h = None if cfg.source == "boundary" else _generated_kernel(cfg, group)
    sample = _sample(cfg, group)
    if h is None:
        if not isinstance(group, FreeGroup):
            raise DomainError("boundary kernels need a free group")
        fam = boundary_aicm(group, parse_range(cfg.n)[0], exact=False)
        k = action_coefficient(
            group, lambda x: {t: math.sqrt(m) for t, m in fam(x).masses.items()}, boundary_action(group)
        )
        x = _omega(cfg, group)
        rep = psd_check_action(k, x, sample, cfg.psd_tol)
        where = f"action at {x}"
    else:
        rep = psd_check_group(h, sample, cfg.psd_tol)
        where = "group form"
    report = rep.to_json()
    report["form"] = where
    status = EXIT_OK if rep.positive else EXIT_VIOLATION
    return Outcome(status, report, summary=f"psd ({where}): {rep.verdict}, min eigenvalue {rep.min_eigenvalue:.3g}")


HANDLERS = {
    "certify": cmd_certify,
    "convert": cmd_convert,
    "factorize": cmd_factorize,
    "embed": cmd_embed,
    "psd": cmd_psd,
}


def run(cfg: RunConfig) -> tuple[int, Path, str]:
    """Validate, execute and persist one run; returns (exit status, report dir, summary)."""
    cfg.validate()
    with override(psd_tol=cfg.psd_tol, norm_tol=cfg.norm_tol):
        outcome = HANDLERS[cfg.command](cfg)
    return outcome.status, write_outcome(cfg, outcome), outcome.summary


# --- argument parsing -------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    # every default is None so that only explicit flags override a --config file
    p.add_argument("--config", help="RunConfig JSON file; explicit flags override it")
    p.add_argument("--group", help="free:R or z:D (default z:1)")
    p.add_argument("--method", help="certificate construction, see list-methods")
    p.add_argument("--n", help="level or range: 5, 1..16, 10..100:10, 2,4,8")
    p.add_argument("--tube", type=int, help="tube radius F (compact B(F) for boundary means)")
    p.add_argument("--window", type=int, help="window radius")
    p.add_argument("--window-in", type=int, dest="window_in", help="inner window radius (factorize)")
    p.add_argument("--depth", type=int, help="cylinder depth of the boundary sample")
    p.add_argument("--levels", type=int, help="embedding levels N")
    p.add_argument("--omega", help="boundary point head|cycle, default a")
    p.add_argument("--chain", help="conversion stages, e.g. mean,density,l2,coefficient")
    p.add_argument("--bump", type=int, help="radius of the uniform smoothing bump (0 = delta)")
    p.add_argument("--kernel", help="input kernel JSON file")
    p.add_argument("--source", help="generated kernel when --kernel is absent: delta, coefficient, boundary")
    p.add_argument("--samples", type=int, help="random sample size drawn from B(--sample-radius); 0 = all")
    p.add_argument("--sample-radius", type=int, dest="sample_radius")
    p.add_argument("--psd-tol", type=float, dest="psd_tol")
    p.add_argument("--norm-tol", type=float, dest="norm_tol")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default reports)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coarsecert", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        _add_common(sub.add_parser(name, help=HANDLERS[name].__name__.replace("cmd_", "")))
    sub.add_parser("list-methods", help="list certificate constructions and kernel sources")
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    base: dict = {}
    if ns.config:
        try:
            base = json.loads(_read_bytes(ns.config).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ParseError(f"malformed config file {ns.config}: {exc}") from exc
        if not isinstance(base, dict):
            raise UsageError("config must be a JSON object")
        if base.get("command", ns.command) != ns.command:
            raise UsageError(f"config is for {base['command']!r}, not {ns.command!r}")
    base["command"] = ns.command
    for f in dataclasses.fields(RunConfig):
        v = getattr(ns, f.name, None)
        if f.name != "command" and v is not None:
            base[f.name] = v
    try:
        return RunConfig.from_json(base)
    except TypeError as exc:
        raise UsageError(str(exc)) from exc


def _list_methods() -> str:
    lines = ["certificates:"]
    lines += [f"  {k:10s} {v}" for k, v in METHODS.items()]
    lines.append("kernel sources (factorize, psd):")
    lines += [f"  {k:10s} {v}" for k, v in KERNEL_SOURCES.items()]
    return "\n".join(lines)


def main(argv: list[str] | None = None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        if ns.command == "list-methods":
            print(_list_methods())
            return EXIT_OK
        status, where, summary = run(config_from_args(ns))
    except UsageError as exc:
        print(f"coarsecert: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"coarsecert: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except UnderCoverageError as exc:
        print(f"coarsecert: under-coverage: {exc}", file=sys.stderr)
        return EXIT_UNDERCOVERAGE
    except (BoundViolationError, DecayContractError, NotPositiveTypeError) as exc:
        print(f"coarsecert: violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except (DomainError, ResourceError) as exc:
        print(f"coarsecert: invalid request: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"{summary} -> {where}")
    return status

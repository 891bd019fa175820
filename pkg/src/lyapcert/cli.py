"""Command-line front end.

Reads flat keyed spec files ("key: value" lines, polynomials in the
canonical text grammar), orchestrates the two certificate hierarchies, the
verification oracle, and the simulator, and writes textual artifacts to an
output directory.

Exit codes: 0 when a certificate is found or verification passes, 1 when
the search is exhausted or verification fails, 2 for usage or input
errors.  Every run ends with one machine-readable "status=..." line on
standard error.  Verbosity comes from LYAPCERT_LOG (quiet, info, debug).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cop_lp, flow, linprog, oracle, sos_cert
from .cones import (MAX_ORTHANT_DIMENSION, PolyhedralCone,
                    dump_partition_lines)
from .cop_lp import ConicSystem, RationalLyapunovCandidate
from .poly import (Polynomial, PolynomialParseError, format_polynomial,
                   parse_polynomial)
from .sos_cert import SemialgebraicSystem
from .tangency import SemialgebraicSet

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NOT_FOUND = 1
EXIT_USAGE = 2


class SpecFileError(ValueError):
    def __init__(self, message: str, line: int | None = None,
                 rule: str | None = None):
        where = f" (line {line})" if line is not None else ""
        tag = f" [rule: {rule}]" if rule else ""
        super().__init__(f"{message}{where}{tag}")
        self.line = line
        self.rule = rule


@dataclass
class ParsedSpec:
    system: ConicSystem | SemialgebraicSystem
    options: dict

    @property
    def is_conic(self) -> bool:
        return isinstance(self.system, ConicSystem)


_OPTION_KEYS = {"schedule", "margin", "tau_act", "seed", "deg", "tier",
                "eps_pd", "x0", "T", "dt", "sweeps", "r"}


def parse_spec(path: str | Path) -> ParsedSpec:
    """Parse and validate a system spec file.

    Exactly one constraint block is allowed: cone rows (cone1..coneM as
    linear forms) or generators g1..gM with a bounding box box1..boxn.
    """
    path = Path(path)
    if not path.exists():
        raise SpecFileError(f"spec file {path} does not exist")
    entries: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise SpecFileError("expected 'key: value'", lineno, "syntax")
        key, value = line.split(":", 1)
        key = key.strip()
        value = value.strip()
        if key in entries:
            raise SpecFileError(f"duplicate key {key!r}", lineno, "syntax")
        entries[key] = (value, lineno)

    def take(key: str) -> tuple[str, int] | None:
        return entries.pop(key, None)

    dim_entry = take("dim")
    if dim_entry is None:
        raise SpecFileError("missing 'dim'", None, "dimension")
    try:
        n = int(dim_entry[0])
    except ValueError:
        raise SpecFileError("'dim' must be an integer", dim_entry[1],
                            "dimension")
    if not 1 <= n <= MAX_ORTHANT_DIMENSION:
        raise SpecFileError(
            f"dimension must be in 1..{MAX_ORTHANT_DIMENSION}", dim_entry[1],
            "dimension")

    def parse_poly_entry(key: str, entry: tuple[str, int]) -> Polynomial:
        value, lineno = entry
        try:
            return parse_polynomial(value, n)
        except PolynomialParseError as exc:
            raise SpecFileError(f"{key}: {exc}", lineno, "polynomial")

    field = []
    for i in range(1, n + 1):
        entry = take(f"f{i}")
        if entry is None:
            raise SpecFileError(f"missing field component f{i}", None,
                                "vector-field")
        field.append(parse_poly_entry(f"f{i}", entry))

    cone_rows = []
    i = 1
    while (entry := take(f"cone{i}")) is not None:
        p = parse_poly_entry(f"cone{i}", entry)
        if p.is_homogeneous() != 1:
            raise SpecFileError(
                f"cone{i} must be a linear form", entry[1], "cone-row-linear")
        row = [float(p.coefficient(tuple(1 if k == j else 0
                                         for k in range(n))))
               for j in range(n)]
        cone_rows.append(row)
        i += 1

    generators = []
    i = 1
    while (entry := take(f"g{i}")) is not None:
        generators.append(parse_poly_entry(f"g{i}", entry))
        i += 1

    boxes = []
    i = 1
    while (entry := take(f"box{i}")) is not None:
        parts = entry[0].split()
        if len(parts) != 2:
            raise SpecFileError(f"box{i} needs 'lo hi'", entry[1], "box")
        try:
            boxes.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise SpecFileError(f"box{i} needs numeric bounds", entry[1], "box")
        i += 1

    cone_mode = take("cone")  # bare 'cone:' marks a row-free full space
    options: dict = {}
    for key in list(entries):
        if key in _OPTION_KEYS:
            options[key] = entries.pop(key)[0]
        else:
            raise SpecFileError(f"unknown key {key!r}", entries[key][1],
                                "syntax")

    has_cone = bool(cone_rows) or cone_mode is not None
    has_semialg = bool(generators)
    if has_cone == has_semialg:
        raise SpecFileError(
            "exactly one constraint block required: cone rows or generators",
            None, "constraint-block")

    for i, comp in enumerate(field, start=1):
        if comp.evaluate((0,) * n) != 0:
            raise SpecFileError(f"f{i}(0) != 0", None, "f-at-origin")

    if has_cone:
        C = np.array(cone_rows) if cone_rows else np.zeros((0, n))
        try:
            system: ConicSystem | SemialgebraicSystem = ConicSystem(
                field, PolyhedralCone(C, dimension=n))
        except cop_lp.ConicSetupError as exc:
            rule = "cone-homogeneity" if "homogene" in str(exc) \
                else "cone-system"
            raise SpecFileError(str(exc), None, rule)
    else:
        if len(boxes) != n:
            raise SpecFileError(
                f"semialgebraic mode needs box1..box{n}", None, "box")
        try:
            S = SemialgebraicSet(generators, boxes)
            system = SemialgebraicSystem(field, S)
        except Exception as exc:
            raise SpecFileError(str(exc), None, "semialgebraic-set")
    return ParsedSpec(system, options)


def _parse_schedule(text: str) -> list[tuple[int, int, int]]:
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        nums = part.split()
        if len(nums) != 3:
            raise SpecFileError("schedule entries are 'deg r sweeps'",
                                None, "schedule")
        out.append((int(nums[0]), int(nums[1]), int(nums[2])))
    if not out:
        raise SpecFileError("empty schedule", None, "schedule")
    return out


def default_cone_schedule(sweeps: int = 8) -> list[tuple[int, int, int]]:
    schedule = []
    for d in (2, 4, 6):
        rs = {0, 1, (d - 2) // 2}
        for r in sorted(rs):
            schedule.append((d, r, sweeps))
    return schedule



def _seed(args, spec: ParsedSpec) -> int:
    if args.seed is not None:
        return args.seed
    return int(spec.options.get("seed", 0))


def _tau_act(args, spec: ParsedSpec) -> float | None:
    if args.tau_act is not None:
        return args.tau_act
    if "tau_act" in spec.options:
        return float(spec.options["tau_act"])
    return None


def _status(line: str) -> None:
    print(f"status={line}", file=sys.stderr)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- certificate files -----------------------------------------------------------


def _echo_system(system) -> list[str]:
    lines = [f"dimension: {system.dimension}"]
    for i, comp in enumerate(system.f, start=1):
        lines.append(f"field-{i}: {format_polynomial(comp)}")
    if isinstance(system, ConicSystem):
        for i, row in enumerate(system.cone.C, start=1):
            terms = {tuple(1 if k == j else 0 for k in range(system.dimension)):
                     row[j] for j in range(system.dimension) if row[j] != 0.0}
            lines.append(f"cone-row-{i}: "
                         f"{format_polynomial(Polynomial(system.dimension, terms))}")
        if system.cone.num_rows == 0:
            lines.append("cone-row-count: 0")
    else:
        for i, g in enumerate(system.S.generators, start=1):
            lines.append(f"generator-{i}: {format_polynomial(g)}")
        for i, (lo, hi) in enumerate(system.S.box, start=1):
            lines.append(f"box-{i}: {lo!r} {hi!r}")
    return lines


def format_conic_certificate(cert: cop_lp.ConicCertificate,
                             system: ConicSystem,
                             report: oracle.Report) -> str:
    lines = ["kind: conic-lyapunov-certificate"]
    lines += _echo_system(system)
    lines.append(f"degree: {cert.degree}")
    lines.append(f"r: {cert.r}")
    lines.append(f"margin: {cert.margin!r}")
    lines.append(f"h: {format_polynomial(cert.candidate.h)}")
    lines.append(f"sweeps: {cert.sweeps_used}")
    lines.append(f"lp-rows: {cert.lp_rows}")
    lines.append(f"lp-pivots: {cert.lp_pivots}")
    for flag in cert.corner_flags:
        lines.append(f"corner-flag: {flag}")
    for state in cert.sections:
        tag = f"{state.kind}-{state.label}"
        for cell_line in dump_partition_lines([state.partition]):
            lines.append(f"partition {tag}: {cell_line}")
    for check in report.checks:
        lines.append(f"oracle {check.name}: {check.min_value!r}")
    lines.append(f"oracle-pass: {'true' if report.passed else 'false'}")
    return "\n".join(lines) + "\n"


def format_sos_certificate(cert: sos_cert.SosCertificate,
                           system: SemialgebraicSystem,
                           report: oracle.Report) -> str:
    lines = ["kind: sos-lyapunov-certificate"]
    lines += _echo_system(system)
    lines.append(f"degree: {cert.V.degree()}")
    lines.append(f"tier: {cert.tier}")
    lines.append(f"margin: {cert.margin!r}")
    lines.append(f"eps-pd: {cert.eps_pd!r}")
    dm = "0" if cert.decrease_margin is None or cert.decrease_margin.is_zero() \
        else format_polynomial(cert.decrease_margin)
    lines.append(f"decrease-margin: {dm}")
    lines.append(f"V: {format_polynomial(cert.V)}")
    for name in sorted(cert.multipliers):
        rec = cert.multipliers[name]
        lines.append(f"multiplier {name}: {format_polynomial(rec.polynomial)}")
        lines.append(f"multiplier-gram-mineig {name}: {rec.min_eigenvalue!r}")
    for name in sorted(cert.phi):
        lines.append(f"phi {name}: {format_polynomial(cert.phi[name])}")
    for label in sorted(cert.residuals):
        lines.append(f"residual {label}: {cert.residuals[label]!r}")
    for flag in cert.flags:
        lines.append(f"flag: {flag}")
    for check in report.checks:
        lines.append(f"oracle {check.name}: {check.min_value!r}")
    lines.append(f"oracle-pass: {'true' if report.passed else 'false'}")
    return "\n".join(lines) + "\n"


def read_certificate_candidate(path: Path, dimension: int):
    """Extract the candidate from a certificate file: (kind, poly, r)."""
    kind = None
    poly_text = None
    r = 0
    for raw in path.read_text().splitlines():
        if raw.startswith("kind: "):
            kind = raw.split(": ", 1)[1].strip()
        elif raw.startswith("h: "):
            poly_text = raw.split(": ", 1)[1]
        elif raw.startswith("V: "):
            poly_text = raw.split(": ", 1)[1]
        elif raw.startswith("r: "):
            r = int(raw.split(": ", 1)[1])
    if kind is None or poly_text is None:
        raise SpecFileError(f"{path} is not a certificate file", None,
                            "certificate")
    return kind, parse_polynomial(poly_text, dimension), r


# -- commands --------------------------------------------------------------------


def cmd_find_lyap_cone(args, spec: ParsedSpec) -> int:
    if not spec.is_conic:
        _status("error detail=cone-command-needs-cone-spec")
        return EXIT_USAGE
    system: ConicSystem = spec.system
    if args.deg is not None:
        schedule = [(args.deg, args.r or 0, args.sweeps)]
    elif "schedule" in spec.options:
        schedule = _parse_schedule(spec.options["schedule"])
    else:
        schedule = default_cone_schedule(args.sweeps)
    margin = args.margin if args.margin is not None else \
        float(spec.options.get("margin", cop_lp.DEFAULT_ACCEPT_MARGIN))

    dump = None
    if args.dump_lp:
        out = _out_dir(args)

        def dump(lp, d, r, sweep):
            text = linprog.dump_lp_text(lp)
            (out / f"lp-d{d}-r{r}-s{sweep}.lp").write_text(text)

    outcome = cop_lp.run_hierarchy(system, schedule, accept_margin=margin,
                                   threads=args.threads, lp_dump=dump)
    if not outcome.found:
        levels = "; ".join(
            f"d={lv.degree} r={lv.r} sweeps={lv.sweeps_done} "
            f"best-margin={lv.best_margin:.3e}" for lv in outcome.levels)
        _status(f"exhausted-schedule detail={levels!r}")
        return EXIT_NOT_FOUND
    cert = outcome.certificate
    tau = _tau_act(args, spec)
    report = oracle.verify_conic(
        cert.candidate, system, grid_density=args.density,
        **({"activation_tol": tau} if tau is not None else {}))
    cert.oracle_summary = report.summary_dict()
    out = _out_dir(args)
    path = out / "certificate.txt"
    path.write_text(format_conic_certificate(cert, system, report))
    (out / "report.txt").write_text(report.to_text())
    if not report.passed:
        _status(f"certificate-rejected-by-oracle margin={cert.margin!r} "
                f"worst={report.worst().min_value!r}")
        return EXIT_NOT_FOUND
    _status(f"certificate-found degree={cert.degree} r={cert.r} "
            f"margin={cert.margin!r} sweeps={cert.sweeps_used} file={path}")
    return EXIT_OK


def cmd_find_lyap_sos(args, spec: ParsedSpec) -> int:
    if spec.is_conic:
        _status("error detail=sos-command-needs-semialgebraic-spec")
        return EXIT_USAGE
    system: SemialgebraicSystem = spec.system
    degrees = [args.deg] if args.deg is not None else \
        [int(spec.options["deg"])] if "deg" in spec.options else [2, 4, 6]
    tier = args.tier or spec.options.get("tier", "sdp")
    eps_pd = args.eps_pd if args.eps_pd is not None else \
        float(spec.options.get("eps_pd", 1e-3))
    out = _out_dir(args)

    dump = None
    if args.dump_sdpa:
        from .sdpsolve import dump_sdpa_sparse

        def dump(sdp, deg, slack):
            (out / f"sdp-deg{deg}-s{slack}.dat-s").write_text(
                dump_sdpa_sparse(sdp))
    for deg in degrees:
        outcome = sos_cert.solve_certificate(system, deg, tier=tier,
                                             eps_pd=eps_pd, sdpa_dump=dump)
        if outcome.status == "certificate":
            cert = outcome.certificate
            report = oracle.verify_sos(cert.V, system, samples=args.samples,
                                       seed=_seed(args, spec))
            cert.oracle_summary = report.summary_dict()
            path = out / "certificate.txt"
            path.write_text(format_sos_certificate(cert, system, report))
            (out / "report.txt").write_text(report.to_text())
            if not report.passed:
                _status(f"certificate-rejected-by-oracle degree={deg} "
                        f"worst={report.worst().min_value!r}")
                return EXIT_NOT_FOUND
            _status(f"certificate-found degree={deg} tier={tier} "
                    f"margin={cert.margin!r} file={path}")
            return EXIT_OK
        logger.info("degree %d: %s (%s)", deg, outcome.status, outcome.detail)
    _status(f"exhausted-degrees degrees={degrees} tier={tier}")
    return EXIT_NOT_FOUND


def cmd_verify(args, spec: ParsedSpec) -> int:
    if args.candidate is None and args.certificate is None:
        _status("error detail=verify-needs-candidate-or-certificate")
        return EXIT_USAGE
    n = spec.system.dimension
    if args.certificate is not None:
        kind, poly, r = read_certificate_candidate(Path(args.certificate), n)
    else:
        poly = parse_polynomial(args.candidate, n)
        r = args.r or 0
    out = _out_dir(args)
    if spec.is_conic:
        candidate = RationalLyapunovCandidate(poly, r)
        tau = _tau_act(args, spec)
        report = oracle.verify_conic(
            candidate, spec.system, grid_density=args.density,
            collect_samples=args.csv,
            **({"activation_tol": tau} if tau is not None else {}))
    else:
        report = oracle.verify_sos(poly, spec.system, samples=args.samples,
                                   seed=_seed(args, spec),
                                   collect_samples=args.csv)
    (out / "report.txt").write_text(report.to_text())
    if args.csv:
        (out / "report.csv").write_text(report.to_csv())
    worst = report.worst()
    _status(f"{'verified' if report.passed else 'verification-failed'} "
            f"worst-check={worst.name} worst-min={worst.min_value!r}")
    return EXIT_OK if report.passed else EXIT_NOT_FOUND


def cmd_simulate(args, spec: ParsedSpec) -> int:
    x0_text = args.x0 or spec.options.get("x0")
    if x0_text is None:
        _status("error detail=simulate-needs-x0")
        return EXIT_USAGE
    x0 = [float(v) for v in x0_text.replace(",", " ").split()]
    if len(x0) != spec.system.dimension:
        _status("error detail=x0-dimension-mismatch")
        return EXIT_USAGE
    T = args.T if args.T is not None else float(spec.options.get("T", 10.0))
    dt = args.dt if args.dt is not None else float(spec.options.get("dt", 1e-3))
    V = None
    if args.candidate is not None:
        poly = parse_polynomial(args.candidate, spec.system.dimension)
        if spec.is_conic:
            V = RationalLyapunovCandidate(poly, args.r or 0).value
        else:
            V = poly
    try:
        traj = flow.simulate(x0, T, dt, spec.system, V=V)
    except flow.FlowError as exc:
        _status(f"simulation-error detail={str(exc)!r}")
        return EXIT_USAGE
    out = _out_dir(args)
    path = out / "trajectory.csv"
    path.write_text(traj.to_csv())
    final = traj.final_state()
    _status(f"simulated steps={len(traj) - 1} final-norm="
            f"{float(np.linalg.norm(final))!r} file={path}")
    return EXIT_OK


def cmd_partition_dump(args, spec: ParsedSpec) -> int:
    if not spec.is_conic:
        _status("error detail=partition-dump-needs-cone-spec")
        return EXIT_USAGE
    sections = cop_lp.initial_sections(spec.system)
    partitions = []
    for state in sections:
        part = state.partition
        for _ in range(args.sweeps):
            part = part.refine_all()
        partitions.append(part)
    lines = dump_partition_lines(partitions)
    text = "\n".join(lines) + "\n"
    if args.out != ".":
        path = _out_dir(args) / "partitions.txt"
        path.write_text(text)
    sys.stdout.write(text)
    _status(f"partition-dumped cells={len(lines)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lyapcert",
        description="Lyapunov certificates for normal-cone constrained "
                    "dynamics (LP hierarchy on cones, SOS hierarchy on "
                    "compact semialgebraic sets)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("spec", help="system spec file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--tau-act", type=float, dest="tau_act", default=None,
                       help="constraint activation tolerance")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--density", type=int, default=10_000,
                       help="oracle grid density per section")
        p.add_argument("--samples", type=int, default=10_000,
                       help="oracle sample count for semialgebraic sets")

    p = sub.add_parser("find-lyap-cone", help="run the cone LP hierarchy")
    common(p)
    p.add_argument("--deg", type=int, help="single level: degree of h")
    p.add_argument("--r", type=int, help="single level: denominator power")
    p.add_argument("--sweeps", type=int, default=8)
    p.add_argument("--margin", type=float, help="acceptance margin")
    p.add_argument("--dump-lp", action="store_true")
    p.set_defaults(func=cmd_find_lyap_cone)

    p = sub.add_parser("find-lyap-sos", help="run the SOS hierarchy")
    common(p)
    p.add_argument("--deg", type=int, help="single degree for V")
    p.add_argument("--tier", choices=("dsos", "sdp"))
    p.add_argument("--eps-pd", type=float, dest="eps_pd")
    p.add_argument("--dump-sdpa", action="store_true")
    p.set_defaults(func=cmd_find_lyap_sos)

    p = sub.add_parser("verify", help="oracle-check a candidate")
    common(p)
    p.add_argument("--candidate", help="polynomial text (h or V)")
    p.add_argument("--r", type=int, help="denominator power for cone mode")
    p.add_argument("--certificate", help="certificate file to re-verify")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="projected Euler trajectory")
    common(p)
    p.add_argument("--x0", help="start state, comma or space separated")
    p.add_argument("--T", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--candidate", help="record this V along the trajectory")
    p.add_argument("--r", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("partition-dump", help="dump section partitions")
    common(p)
    p.add_argument("--sweeps", type=int, default=0,
                   help="uniform refinement sweeps before dumping")
    p.set_defaults(func=cmd_partition_dump)
    return parser


def _configure_logging() -> None:
    level_name = os.environ.get("LYAPCERT_LOG", "quiet").lower()
    level = {"quiet": logging.ERROR, "info": logging.INFO,
             "debug": logging.DEBUG}.get(level_name, logging.ERROR)
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        spec = parse_spec(args.spec)
    except (SpecFileError, PolynomialParseError) as exc:
        _status(f"input-error detail={str(exc)!r}")
        return EXIT_USAGE
    try:
        return args.func(args, spec)
    except (SpecFileError, PolynomialParseError, ValueError) as exc:
        _status(f"input-error detail={str(exc)!r}")
        return EXIT_USAGE
    except sos_cert.CertificateUnsoundError as exc:
        _status(f"unsound-certificate detail={str(exc)!r}")
        return EXIT_NOT_FOUND


if __name__ == "__main__":
    sys.exit(main())

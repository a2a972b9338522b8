"""Verification report: per-check residual statistics, spectral table and verdict"""
import json  # ujson cannot read NaN back
from dataclasses import dataclass, field
from math import isfinite
from typing import Dict, List, Optional

import numpy as np

from lagrangian_audit.utils.errors import SpecParseError

PASS = "PASS"
FAIL = "FAIL"
INFO = "INFO"
SKIP = "SKIP"
STATUSES = [PASS, FAIL, INFO, SKIP]


@dataclass
class CheckResult:
    """
    Aggregate of one residual over all sampled points.

    Attributes:
        name: check name, e.g. "gauss" or "frame.trace"
        tier: tolerance tier the check is gated by ("count" checks gate at 0)
        status: PASS / FAIL when gating, INFO when only measured, SKIP when not evaluated
        max_residual, mean_residual: statistics over the points that produced a value
        point_of_max: parameter point (and its index) where the maximum was attained
    """
    name: str
    tier: str
    status: str
    tolerance: Optional[float] = None
    max_residual: Optional[float] = None
    mean_residual: Optional[float] = None
    point_index: Optional[int] = None
    point_of_max: Optional[List[float]] = None
    evaluated: int = 0

    def __post_init__(self):
        assert self.status in STATUSES, f"Unknown check status {self.status}"

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "tier": self.tier,
            "status": self.status,
            "tolerance": self.tolerance,
            "max": self.max_residual,
            "mean": self.mean_residual,
            "point_index": self.point_index,
            "point_of_max": self.point_of_max,
            "evaluated": self.evaluated,
        }

    @classmethod
    def from_dict(cls, d: Dict) -> "CheckResult":
        return cls(name=d["name"], tier=d["tier"], status=d["status"], tolerance=d["tolerance"], max_residual=d["max"],
                   mean_residual=d["mean"], point_index=d["point_index"], point_of_max=d["point_of_max"], evaluated=d["evaluated"])


@dataclass
class VerificationReport:
    config: Dict
    tool_version: str
    evaluator: str
    checks: List[CheckResult] = field(default_factory=list)
    curvature_profile: Optional[Dict] = None
    spectral_table: Optional[List[Dict]] = None
    verdict: Optional[Dict] = None
    skipped_points: List[Dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.status != FAIL for check in self.checks)

    def failed_checks(self) -> List[CheckResult]:
        return [check for check in self.checks if check.status == FAIL]

    def check(self, name: str) -> CheckResult:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def to_dict(self) -> Dict:
        return {
            "config": self.config,
            "tool_version": self.tool_version,
            "evaluator": self.evaluator,
            "passed": self.passed,
            "checks": [check.to_dict() for check in self.checks],
            "curvature_profile": self.curvature_profile,
            "spectral_table": self.spectral_table,
            "verdict": self.verdict,
            "skipped_points": self.skipped_points,
        }

    @classmethod
    def from_dict(cls, d: Dict) -> "VerificationReport":
        return cls(config=d["config"], tool_version=d["tool_version"], evaluator=d["evaluator"],
                   checks=[CheckResult.from_dict(c) for c in d["checks"]], curvature_profile=d["curvature_profile"],
                   spectral_table=d["spectral_table"], verdict=d["verdict"], skipped_points=d["skipped_points"])


def _format_float(value: float) -> str:
    if value != value:
        return "NaN"
    if not isfinite(value):
        return "Infinity" if value > 0 else "-Infinity"
    return "%.16e" % value


def _encode(obj, depth: int) -> str:
    pad = "  " * (depth + 1)
    end = "  " * depth
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + _encode(v, depth + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = sorted((str(k), v) for k, v in obj.items())
        return "{\n" + ",\n".join(f"{pad}{json.dumps(k)}: {_encode(v, depth + 1)}" for k, v in items) + "\n" + end + "}"
    raise TypeError(f"Cannot encode {type(obj).__name__} in a report")


def dumps_report_json(obj) -> str:
    """Sorted keys, two space indent, floats with 17 significant digits."""
    return _encode(obj, 0) + "\n"


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.3e}"
    return str(value)


def _markdown(report: VerificationReport) -> str:
    lines = [f"# Verification report: {report.evaluator}", ""]
    lines.append(f"Tool version {report.tool_version}. Overall: **{PASS if report.passed else FAIL}**.")
    lines += ["", "## Configuration", "", "```json", dumps_report_json(report.config).rstrip(), "```", ""]
    lines += ["## Residuals", "", "| check | tier | max | mean | tolerance | point of max | status |", "|---|---|---|---|---|---|---|"]
    for check in report.checks:
        point = "-" if check.point_of_max is None else f"#{check.point_index} ({', '.join(f'{x:.6f}' for x in check.point_of_max)})"
        lines.append(f"| {check.name} | {check.tier} | {_fmt(check.max_residual)} | {_fmt(check.mean_residual)} | "
                     f"{_fmt(check.tolerance)} | {point} | {check.status} |")
    if report.curvature_profile:
        lines += ["", "## Curvature profile", "", "| quantity | value |", "|---|---|"]
        lines += [f"| {k} | {_fmt(v)} |" for k, v in sorted(report.curvature_profile.items())]
    if report.spectral_table:
        lines += ["", "## Adapted frame", "", "| stage | lambda | closed form | mu | closed form | epsilon | f max |",
                  "|---|---|---|---|---|---|---|"]
        for row in report.spectral_table:
            lines.append(f"| {row['stage']} | {_fmt(row['lambda'])} | {_fmt(row['lambda_closed_form'])} | {_fmt(row['mu'])} | "
                         f"{_fmt(row['mu_closed_form'])} | {_fmt(row['epsilon'])} | {_fmt(row['f_max'])} |")
    if report.verdict:
        lines += ["", "## Verdict", ""]
        lines += [f"- {k}: {_fmt(v)}" for k, v in sorted(report.verdict.items()) if not isinstance(v, dict)]
        for k, v in sorted(report.verdict.items()):
            if isinstance(v, dict):
                lines.append(f"- {k}: " + ", ".join(f"{kk}={_fmt(vv)}" for kk, vv in sorted(v.items())))
    if report.skipped_points:
        lines += ["", "## Skipped points", "", "| index | reason |", "|---|---|"]
        lines += [f"| {p['index']} | {p['reason']} |" for p in report.skipped_points]
    return "\n".join(lines) + "\n"


def emit_report(report: VerificationReport, output_format: str = "json") -> str:
    if output_format == "json":
        return dumps_report_json(report.to_dict())
    if output_format == "markdown":
        return _markdown(report)
    raise ValueError(f"Unknown report format {output_format}")


def load_report(text: str) -> VerificationReport:
    try:
        contents = json.loads(text)
    except ValueError as e:
        raise SpecParseError("$", f"invalid report JSON ({e})")
    return VerificationReport.from_dict(contents)

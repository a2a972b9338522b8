'''
Audit catalog immersions at seeded sample points and report the residuals.

Every sample point is handled independently: the lift is expanded as a jet,
the geometry engine measures the structure equations, and for product kinds
the adapted frame is rebuilt and the case is classified. Per-point results are
merged in point order, so reports do not depend on the number of workers.

Commands:
    python -m lagrangian_audit.run_audit catalog
    python -m lagrangian_audit.run_audit verify spec.json --samples 100 --workers 4
    python -m lagrangian_audit.run_audit frame spec.json --format markdown
    python -m lagrangian_audit.run_audit audit-all --samples 20 --output-dir audit_reports

Exit codes: 0 every check passed, 1 a check failed, 2 configuration error.
'''
import logging
import multiprocessing
import os
import sys
import time
from typing import Dict, List, Optional, Sequence, Tuple

import argh
import ujson
from tqdm import tqdm

from lagrangian_audit import __version__
from lagrangian_audit.catalog import ImmersionEvaluator, build_evaluator
from lagrangian_audit.classifier import classify_case, extract_adapted_frame, verify_frame_relations
from lagrangian_audit.geometry_engine import analyze_sample, calabi_point_residual
from lagrangian_audit.utils.audit_utils import (aggregate_point_residuals, parse_tolerance_overrides, point_rng, print_memory,
                                                residual_statistics)
from lagrangian_audit.utils.classes.adapted_frame import ClassificationVerdict, CurvatureProfile
from lagrangian_audit.utils.classes.immersion_spec import AuditConfig, ImmersionSpec, build_audit_config, load_spec_file
from lagrangian_audit.utils.classes.verification_report import (FAIL, INFO, PASS, SKIP, CheckResult, VerificationReport,
                                                                dumps_report_json, emit_report)
from lagrangian_audit.utils.constants import (AUDIT_ALL_PRESETS, CALABI_POINT_PRODUCT, CASE_I, CHECK_TIERS, DEFAULT_FORMAT,
                                              DEFAULT_RESTARTS, FLAT_BOTH, FORMATS, INCONSISTENT, KIND_SCHEMAS, TOLERANCE_TIERS,
                                              WARPED_PRODUCT)
from lagrangian_audit.utils.errors import AuditError, NotASpaceFormProductError, SpecValidationError
from lagrangian_audit.utils.utils import dump_json_file, ensure_dir, write_text_file

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
COUNT_TIER = "count"
# min(|c1|, |c2|) across passing catalog audits
C1C2_GATE_LIMIT = 1e-8

STRUCTURAL_CHECKS = {
    "gauss": "gauss",
    "codazzi": "codazzi",
    "ricci_eq": "ricci_equation",
    "tsinghua": "tsinghua",
    "ricci_identity": "ricci_identity",
}
FRAME_CHECKS = [name for name, _ in CHECK_TIERS if name.startswith("frame.")]


def expected_label(spec: ImmersionSpec) -> Optional[str]:
    expected_c2 = spec.expected_c2
    if spec.kind == WARPED_PRODUCT or expected_c2 is None:
        return None
    return FLAT_BOTH if expected_c2 == 0 else CASE_I


def check_roles(spec: ImmersionSpec, jet_order: int) -> Dict[str, str]:
    """check name -> 'gate', 'info' (measured only) or 'skip' (not evaluated) for this kind."""
    roles = {}
    for name, _ in CHECK_TIERS:
        role = "gate"
        if spec.kind == WARPED_PRODUCT:
            if name == "nabla_h":
                role = "info"
            elif name.startswith(("curvature.", "frame.")) or name == "classification":
                role = "skip"
        if name == "frame.calabi_point" and spec.kind != CALABI_POINT_PRODUCT:
            role = "skip"
        if name == "ricci_identity" and jet_order < 4:
            role = "skip"
        roles[name] = role
    return roles


def _classify_point(config: AuditConfig, evaluator: ImmersionEvaluator, geometry, c_tilde: float, result: Dict) -> None:
    spec = config.spec
    split = evaluator.factor_split
    residuals = result["residuals"]
    profile = geometry.profile

    residuals["curvature.factor1_constancy"] = profile.c1_deviation
    residuals["curvature.factor2_constancy"] = profile.c2_deviation
    residuals["curvature.mixed"] = profile.mixed_max
    residuals["curvature.c2_closed_form"] = abs(profile.c2_estimate - spec.expected_c2)
    residuals["curvature.c1c2_gate"] = min(abs(profile.c1_estimate), abs(profile.c2_estimate))

    adapted = extract_adapted_frame(geometry.shape, split, restarts=DEFAULT_RESTARTS, seed=config.seed,
                                    factor_bases=geometry.frame.factor_bases(split))
    relations = verify_frame_relations(adapted, geometry.shape, geometry.curv, c_tilde)
    for name, value in relations.items():
        residuals[f"frame.{name}"] = value
    if spec.kind == CALABI_POINT_PRODUCT:
        direction = geometry.frame.coordinate_directions()[:, 0]
        residuals["frame.calabi_point"] = calabi_point_residual(geometry.shape, direction)["residual"]

    try:
        verdict = classify_case(profile, relations, config.tolerances, split, c_tilde)
        residuals["classification"] = 0.0 if verdict.case_label == expected_label(spec) else 1.0
        result["verdict"] = {"case_label": verdict.case_label, "c1": verdict.c1, "c2": verdict.c2}
    except NotASpaceFormProductError as e:
        residuals["classification"] = 1.0
        result["verdict"] = {"case_label": INCONSISTENT, "reason": str(e)}
    result["profile"] = profile.to_dict()
    result["relations"] = relations
    result["spectral"] = adapted.spectral_table(c_tilde)


def evaluate_point(config: AuditConfig, evaluator: ImmersionEvaluator, index: int) -> Dict:
    """All residuals at sample point `index`; module errors end up in result['error']."""
    rng = point_rng(config.seed, index)
    point = evaluator.sample_point(rng)
    result = {"index": index, "point": [float(x) for x in point], "residuals": {}, "error": None,
              "profile": None, "relations": None, "spectral": None, "verdict": None}
    residuals = result["residuals"]
    try:
        sample = evaluator.sample(point, order=config.jet_order)
    except AuditError as e:
        result["error"] = f"{type(e).__name__}: {e}"
        residuals["pipeline.point_errors"] = 1.0
        return result

    split = evaluator.factor_split
    geometry = analyze_sample(sample, split, rng)
    for name, value in (geometry.ambient or {}).items():
        residuals[f"ambient.{name}"] = value
    if geometry.shape is not None:
        residuals["cubic_form.symmetry"] = geometry.shape.asymmetry
    residuals["minimality"] = geometry.minimality
    residuals["nabla_h"] = geometry.nabla_h_max
    for key, name in STRUCTURAL_CHECKS.items():
        residuals[name] = (geometry.structural or {}).get(key)

    if geometry.ok and split is not None:
        try:
            _classify_point(config, evaluator, geometry, sample.c_tilde, result)
        except AuditError as e:
            geometry.error = f"{type(e).__name__}: {e}"
    result["error"] = geometry.error
    residuals["pipeline.point_errors"] = 0.0 if geometry.ok else 1.0
    return result


def init_process(args):
    config = args
    global config_global
    global evaluator_global
    config_global = config
    evaluator_global = build_evaluator(config.spec)


def audit_point(index):
    return evaluate_point(config_global, evaluator_global, index)


def _check_result(name: str, tier: str, role: str, tolerance: float, entries: List[Tuple[int, float]], points: Dict[int, List[float]]):
    if role == "skip" or not entries:
        return CheckResult(name, tier, SKIP, tolerance)
    if tier == COUNT_TIER:
        total = float(sum(value for _, value in entries))
        flagged = [index for index, value in entries if value > 0]
        index = flagged[0] if flagged else None
        status = PASS if total <= tolerance else FAIL
        return CheckResult(name, tier, INFO if role == "info" else status, tolerance, total, total / len(entries), index,
                           points[index] if index is not None else None, len(entries))
    max_residual, mean_residual, index = residual_statistics(entries)
    if role == "info":
        status = INFO
    else:
        status = PASS if max_residual <= tolerance else FAIL
    return CheckResult(name, tier, status, tolerance, max_residual, mean_residual, index, points[index], len(entries))


def _merged_profile(results: List[Dict], split) -> Optional[CurvatureProfile]:
    profiles = [r["profile"] for r in results if r["profile"] is not None]
    if not profiles:
        return None
    mean = lambda key: float(sum(p[key] for p in profiles) / len(profiles))
    largest = lambda key: float(max(p[key] for p in profiles))
    return CurvatureProfile(
        c1_estimate=mean("c1_estimate"),
        c2_estimate=mean("c2_estimate"),
        mixed_estimate=mean("mixed_estimate"),
        max_deviation=largest("max_deviation"),
        c1_deviation=largest("c1_deviation"),
        c2_deviation=largest("c2_deviation"),
        mixed_max=largest("mixed_max"),
        split=split,
    )


def _merged_verdict(config: AuditConfig, evaluator: ImmersionEvaluator, results: List[Dict],
                    profile: Optional[CurvatureProfile]) -> Optional[Dict]:
    if profile is None:
        return None
    relations = {}
    for r in results:
        for name, value in (r["relations"] or {}).items():
            relations[name] = max(relations.get(name, 0.0), value)
    c_tilde = float(config.spec.c_tilde)
    try:
        verdict = classify_case(profile, relations, config.tolerances, evaluator.factor_split, c_tilde)
        out = verdict.to_dict()
    except NotASpaceFormProductError as e:
        out = ClassificationVerdict(INCONSISTENT, profile.c1_estimate, profile.c2_estimate, relations).to_dict()
        out["reason"] = str(e)
    out["expected_label"] = expected_label(config.spec)
    out["points_classified"] = sum(1 for r in results if r["verdict"] is not None)
    return out


def describe(spec: ImmersionSpec) -> str:
    return f"{spec.kind} (n={spec.n}, n1={spec.n1}, n2={spec.n2})"


def build_report(config: AuditConfig, evaluator: ImmersionEvaluator, results: List[Dict],
                 check_names: Optional[Sequence[str]] = None) -> VerificationReport:
    """Single threaded assembly of the per-point results."""
    results = sorted(results, key=lambda r: r["index"])
    account = aggregate_point_residuals(results)
    roles = check_roles(config.spec, config.jet_order)
    points = {r["index"]: r["point"] for r in results}
    checks = []
    for name, tier in CHECK_TIERS:
        if check_names is not None and name not in check_names:
            continue
        tolerance = 0.0 if tier == COUNT_TIER else config.tolerances[tier]
        checks.append(_check_result(name, tier, roles[name], tolerance, account.get(name, []), points))

    profile = _merged_profile(results, evaluator.factor_split)
    spectral = next((r["spectral"] for r in results if r["spectral"] is not None), None)
    return VerificationReport(
        config=config.to_dict(),
        tool_version=__version__,
        evaluator=describe(config.spec),
        checks=checks,
        curvature_profile=profile.to_dict() if profile is not None else None,
        spectral_table=spectral,
        verdict=_merged_verdict(config, evaluator, results, profile),
        skipped_points=[{"index": r["index"], "point": r["point"], "reason": r["error"]} for r in results if r["error"]],
    )


def collect_points(config: AuditConfig, workers: int = 1) -> List[Dict]:
    tasks = list(range(config.sample_count))
    if workers <= 1:
        init_process(config)
        return [audit_point(index) for index in tqdm(tasks, desc="Auditing points")]
    with multiprocessing.Pool(processes=workers, initializer=init_process, initargs=(config,)) as pool:
        return list(tqdm(pool.imap(audit_point, tasks, chunksize=1), total=len(tasks), desc="Auditing points"))


def run_audit(config: AuditConfig, workers: int = 1) -> VerificationReport:
    evaluator = build_evaluator(config.spec)
    start = time.time()
    results = collect_points(config, workers)
    logger.info(f"Finished auditing {len(results)} points of {describe(config.spec)} in {time.time() - start:.2f} seconds.")
    return build_report(config, evaluator, results)


def frame_report(config: AuditConfig) -> VerificationReport:
    """Adapted frame and its relations at the first sample point only."""
    evaluator = build_evaluator(config.spec)
    if evaluator.factor_split is None:
        raise SpecValidationError(f"{config.spec.kind} has no product split, so it has no adapted frame")
    result = evaluate_point(config, evaluator, 0)
    return build_report(config, evaluator, [result], check_names=FRAME_CHECKS + ["pipeline.point_errors"])


def audit_catalog(samples=None, seed=None, order=None, tolerances=None, workers: int = 1,
                  presets: Optional[List[Dict]] = None) -> Tuple[List[VerificationReport], Dict]:
    """Audit every preset and apply the c1 c2 = 0 gate over the passing entries."""
    reports = []
    for preset in AUDIT_ALL_PRESETS if presets is None else presets:
        config = build_audit_config(dict(preset)).with_overrides(samples, seed, order, tolerances)
        reports.append(run_audit(config, workers))
    entries = []
    gate = 0.0
    for report in reports:
        verdict = report.verdict or {}
        entry = {"evaluator": report.evaluator, "passed": report.passed, "case_label": verdict.get("case_label"),
                 "c1": verdict.get("c1"), "c2": verdict.get("c2")}
        if report.passed and entry["c1"] is not None:
            gate = max(gate, min(abs(entry["c1"]), abs(entry["c2"])))
        entries.append(entry)
    summary = {
        "tool_version": __version__,
        "entries": entries,
        "c1c2_gate": gate,
        "c1c2_gate_passed": gate < C1C2_GATE_LIMIT,
        "passed": all(report.passed for report in reports) and gate < C1C2_GATE_LIMIT,
    }
    return reports, summary


def render_catalog(output_format: str = DEFAULT_FORMAT) -> str:
    if output_format == "json":
        return dumps_report_json({"kinds": KIND_SCHEMAS, "tolerance_tiers": TOLERANCE_TIERS})
    lines = ["| kind | required | constants | description |", "|---|---|---|---|"]
    for kind, schema in KIND_SCHEMAS.items():
        constants = ", ".join(f"{k}: {v}" for k, v in schema["constants"].items()) or "-"
        lines.append(f"| {kind} | {', '.join(schema['required'])} | {constants} | {schema['description']} |")
    return "\n".join(lines) + "\n"


def render_summary(summary: Dict, output_format: str = DEFAULT_FORMAT) -> str:
    if output_format == "json":
        return dumps_report_json(summary)
    lines = ["| evaluator | passed | case | c1 | c2 |", "|---|---|---|---|---|"]
    for e in summary["entries"]:
        lines.append(f"| {e['evaluator']} | {PASS if e['passed'] else FAIL} | {e['case_label'] or '-'} | {e['c1']} | {e['c2']} |")
    lines.append("")
    lines.append(f"max min(|c1|, |c2|) over passing entries: {summary['c1c2_gate']:.3e} "
                 f"({PASS if summary['c1c2_gate_passed'] else FAIL})")
    return "\n".join(lines) + "\n"


def _emit(text: str, output: Optional[str]) -> None:
    if output:
        write_text_file(output, text)
        logger.info(f"Wrote {output}")
    else:
        sys.stdout.write(text)


def _load_config(spec_file, samples, seed, order, tol_tier, output_format) -> AuditConfig:
    config = load_spec_file(spec_file).with_overrides(samples, seed, order, parse_tolerance_overrides(tol_tier), output_format)
    logger.info(ujson.dumps(config.to_dict(), indent=4, sort_keys=True))
    return config


def audit_options(func):
    """Flags shared by the audit commands."""
    decorators = [
        argh.arg('--samples', type=int, help='number of sample points (overrides the spec file)'),
        argh.arg('--seed', type=int, help='seed of the point generator'),
        argh.arg('--order', type=int, choices=[3, 4], help='jet order; 3 skips the Ricci identity'),
        argh.arg('--tol-tier', action='append', help='tolerance override name=value, repeatable'),
        argh.arg('--format', choices=FORMATS, help='report format'),
        argh.arg('--workers', type=int, help='processes used for sample points'),
    ]
    for decorator in reversed(decorators):
        func = decorator(func)
    return func


@argh.arg('--format', choices=FORMATS, help='json or markdown')
def catalog(format=DEFAULT_FORMAT):
    """List the immersion kinds and their parameter schemas."""
    sys.stdout.write(render_catalog(format))


@argh.arg('spec_file', help='JSON immersion spec')
@argh.arg('--output', help='write the report to this file instead of stdout')
@audit_options
def verify(spec_file, samples=None, seed=None, order=None, tol_tier=None, format=None, workers=1, output=None):
    """Audit one immersion."""
    try:
        config = _load_config(spec_file, samples, seed, order, tol_tier, format)
        build_evaluator(config.spec)
    except (AuditError, OSError) as e:
        logger.error(f"Configuration error: {e}")
        sys.exit(EXIT_CONFIG)
    report = run_audit(config, workers)
    _emit(emit_report(report, config.output_format), output)
    for check in report.failed_checks():
        logger.info(f"FAIL {check.name}: max {check.max_residual:.3e} > {check.tolerance:.0e} at point #{check.point_index}")
    sys.exit(EXIT_PASS if report.passed else EXIT_FAIL)


@argh.arg('spec_file', help='JSON immersion spec')
@argh.arg('--output', help='write the report to this file instead of stdout')
@audit_options
def frame(spec_file, samples=None, seed=None, order=None, tol_tier=None, format=None, workers=1, output=None):
    """Adapted frame spectral table at the first sample point."""
    try:
        config = _load_config(spec_file, samples, seed, order, tol_tier, format)
        report = frame_report(config)
    except (AuditError, OSError) as e:
        logger.error(f"Configuration error: {e}")
        sys.exit(EXIT_CONFIG)
    _emit(emit_report(report, config.output_format), output)
    sys.exit(EXIT_PASS if report.passed else EXIT_FAIL)


@argh.named('audit-all')
@argh.arg('--output-dir', help='directory for one report per catalog entry and summary.json')
@audit_options
def audit_all(samples=None, seed=None, order=None, tol_tier=None, format=None, workers=1, output_dir=None):
    """Audit every built-in catalog entry at its preset size."""
    start = time.time()
    output_format = format or DEFAULT_FORMAT
    try:
        tolerances = parse_tolerance_overrides(tol_tier)
        reports, summary = audit_catalog(samples, seed, order, tolerances, workers)
    except AuditError as e:
        logger.error(f"Configuration error: {e}")
        sys.exit(EXIT_CONFIG)
    if output_dir:
        ensure_dir(output_dir)
        extension = "json" if output_format == "json" else "md"
        for i, report in enumerate(reports):
            kind = report.config["spec"]["kind"]
            write_text_file(os.path.join(output_dir, f"{i:02d}_{kind}.{extension}"), emit_report(report, output_format))
        dump_json_file(os.path.join(output_dir, "summary.json"), summary)
    sys.stdout.write(render_summary(summary, output_format))
    logger.info(f"Finished audit-all in {time.time() - start:.2f} seconds.")
    print_memory()
    sys.exit(EXIT_PASS if summary["passed"] else EXIT_FAIL)


def main():
    logging.basicConfig(level=logging.INFO, format='%(message)s')
    parser = argh.ArghParser(description="Verify minimal Lagrangian immersions in complex space forms")
    parser.add_commands([catalog, verify, frame, audit_all])
    parser.dispatch()


if __name__ == '__main__':
    main()

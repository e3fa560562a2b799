"""
Command Line
============
Problem documents in, report documents out:
- solve   primal transcription and its optimal trajectory
- gap     primal optimum vs J* at the extracted certificate
- verify  optimality conditions for a given trajectory / certificate pair
- dual    J* at the extracted certificate plus the specialized dual
- demo    built-in decay / ptl / pfc instances, solve + gap + verify

Exit codes: 0 ok, 1 iteration limit, 2 infeasible, 3 unbounded,
4 parse error, 5 verification failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

import config
import demos
from certify import VerificationReport, verify_all
from convex_functions import MaxAffine
from convex_geometry import Polytope
from lp_core import INFEASIBLE, ITERATION_LIMIT, UNBOUNDED, DimensionError, RejectedInput, as_matrix, as_vector
from setvalued_maps import LinearControlMap, PolyhedralMap
from transcription import (DiscreteTrajectory, DualCertificate, PrimalNotOptimal, ProblemSpec,
                           evaluate_dual_functional, extract_dual_certificate, solve_primal,
                           specialize_dual)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ITERATION_LIMIT = 1
EXIT_INFEASIBLE = 2
EXIT_UNBOUNDED = 3
EXIT_PARSE = 4
EXIT_VERIFY = 5
EXIT_USAGE = 64

STATUS_EXIT = {
    ITERATION_LIMIT: EXIT_ITERATION_LIMIT,
    INFEASIBLE: EXIT_INFEASIBLE,
    UNBOUNDED: EXIT_UNBOUNDED,
}


class ProblemDocumentError(RejectedInput):
    """Malformed document; `path` names the offending key"""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class UsageError(Exception):
    pass


# ============================================================================
# EXTENDED-REAL JSON
# ============================================================================

def encode_value(obj):
    """Replace infinities by "+inf" / "-inf" and numpy values by plain ones"""
    if isinstance(obj, dict):
        return {k: encode_value(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode_value(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return encode_value(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        if math.isinf(obj):
            return "+inf" if obj > 0 else "-inf"
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def decode_value(obj):
    if isinstance(obj, dict):
        return {k: decode_value(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [decode_value(v) for v in obj]
    if obj == "+inf":
        return math.inf
    if obj == "-inf":
        return -math.inf
    return obj


# ============================================================================
# PROBLEM DOCUMENTS
# ============================================================================

PROBLEM_KEYS = {'order', 'horizon', 'grid', 'dynamics', 'objective', 'endpoint_set', 'state_set'}
OPTIONAL_KEYS = {'name', 'description'}


def _require(doc, key, path):
    if not isinstance(doc, dict):
        raise ProblemDocumentError(path, "expected an object")
    if key not in doc:
        raise ProblemDocumentError(f"{path}.{key}" if path else key, "missing key")
    return doc[key]


def _check_keys(doc, allowed, path):
    if not isinstance(doc, dict):
        raise ProblemDocumentError(path, "expected an object")
    for key in doc:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ProblemDocumentError(where, f"unknown key '{key}'")


def _matrix(value, cols, path):
    try:
        return as_matrix(value, cols, path)
    except (ValueError, TypeError) as e:
        raise ProblemDocumentError(path, str(e)) from e


def _vector(value, size, path):
    try:
        return as_vector(value, size, path)
    except (ValueError, TypeError) as e:
        raise ProblemDocumentError(path, str(e)) from e


def _polytope(doc, dim, path):
    _check_keys(doc, {'A', 'd'}, path)
    A = _matrix(_require(doc, 'A', path), dim, f"{path}.A")
    d = _vector(_require(doc, 'd', path), A.shape[0], f"{path}.d") if A.shape[0] else np.zeros(0)
    return Polytope(A, d)


def _dynamics(doc):
    path = 'dynamics'
    kind = _require(doc, 'type', path)
    if kind == 'linear_control':
        _check_keys(doc, {'type', 'A', 'B', 'U'}, path)
        A = _matrix(_require(doc, 'A', path), None, f"{path}.A")
        B = _matrix(_require(doc, 'B', path), None, f"{path}.B")
        U = _polytope(_require(doc, 'U', path), B.shape[1], f"{path}.U")
        return LinearControlMap(A, B, U)
    if kind == 'polyhedral':
        _check_keys(doc, {'type', 'A', 'E', 'd'}, path)
        A = _matrix(_require(doc, 'A', path), None, f"{path}.A")
        E = _matrix(_require(doc, 'E', path), A.shape[1], f"{path}.E")
        d = _vector(_require(doc, 'd', path), A.shape[0], f"{path}.d")
        return PolyhedralMap(A, E, d)
    raise ProblemDocumentError(f"{path}.type", f"unknown dynamics type '{kind}'")


def _objective(doc, n):
    path = 'objective'
    _check_keys(doc, {'rows'}, path)
    rows = _require(doc, 'rows', path)
    if not isinstance(rows, list) or not rows:
        raise ProblemDocumentError(f"{path}.rows", "expected a nonempty list")
    parsed = []
    for l, row in enumerate(rows):
        where = f"{path}.rows[{l}]"
        _check_keys(row, {'a0', 'aT', 'b'}, where)
        a0 = _vector(_require(row, 'a0', where), n, f"{where}.a0")
        aT = _vector(_require(row, 'aT', where), n, f"{where}.aT")
        b = _require(row, 'b', where)
        if not isinstance(b, (int, float)):
            raise ProblemDocumentError(f"{where}.b", "expected a number")
        parsed.append((np.concatenate([a0, aT]), float(b)))
    return MaxAffine.from_rows(parsed)


def _state_sets(doc, n, N):
    path = 'state_set'
    if isinstance(doc, dict) and 'per_node' in doc:
        _check_keys(doc, {'per_node'}, path)
        nodes = doc['per_node']
        if not isinstance(nodes, list) or len(nodes) != N + 1:
            raise ProblemDocumentError(f"{path}.per_node", f"expected a list of {N + 1} sets")
        return [_polytope(node, n, f"{path}.per_node[{i}]") for i, node in enumerate(nodes)]
    return [_polytope(doc, n, path)]


def _positive_int(doc, key):
    value = _require(doc, key, '')
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ProblemDocumentError(key, f"expected a positive integer, got {value!r}")
    return value


def parse_problem(doc: Dict[str, Any]) -> ProblemSpec:
    """ProblemDocument -> ProblemSpec; every rejection names a key path"""
    _check_keys(doc, PROBLEM_KEYS | OPTIONAL_KEYS, '')
    for key in sorted(PROBLEM_KEYS):
        _require(doc, key, '')
    k = _positive_int(doc, 'order')
    N = _positive_int(doc, 'grid')
    T = doc['horizon']
    if isinstance(T, bool) or not isinstance(T, (int, float)):
        raise ProblemDocumentError('horizon', f"expected a number, got {T!r}")

    F = _dynamics(doc['dynamics'])
    n = F.n
    f = _objective(doc['objective'], n)
    S = _polytope(doc['endpoint_set'], 2 * n, 'endpoint_set')
    X = _state_sets(doc['state_set'], n, N)
    try:
        return ProblemSpec(k, float(T), N, F, f, S, X)
    except DimensionError as e:
        raise ProblemDocumentError('', str(e)) from e


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ProblemDocumentError(f"line {e.lineno}", e.msg) from e
    except OSError as e:
        raise ProblemDocumentError('', f"cannot read {path}: {e.strerror}") from e


def load_problem(path) -> ProblemSpec:
    return parse_problem(load_json(path))


def trajectory_document(traj: DiscreteTrajectory) -> Dict[str, Any]:
    doc = {'x': traj.x.tolist(), 'v': traj.v.tolist()}
    if traj.u is not None:
        doc['u'] = traj.u.tolist()
    return doc


def certificate_document(cert: DualCertificate) -> Dict[str, Any]:
    doc = {
        'x_star': cert.x_star.tolist(),
        'v_star': cert.v_star.tolist(),
        'mu0': cert.mu0.tolist(),
        'muT': cert.muT.tolist(),
    }
    if cert.lam is not None:
        doc['lambda'] = cert.lam.tolist()
    return doc


def parse_trajectory(doc, spec: ProblemSpec) -> DiscreteTrajectory:
    _check_keys(doc, {'x', 'v', 'u'}, 'trajectory')
    traj = DiscreteTrajectory(_require(doc, 'x', 'trajectory'), _require(doc, 'v', 'trajectory'), doc.get('u'))
    traj.check_shape(spec)
    return traj


def parse_certificate(doc, spec: ProblemSpec) -> DualCertificate:
    path = 'certificate'
    _check_keys(doc, {'x_star', 'v_star', 'mu0', 'muT', 'lambda'}, path)
    cert = DualCertificate(_require(doc, 'x_star', path), _require(doc, 'v_star', path),
                           _require(doc, 'mu0', path), _require(doc, 'muT', path), doc.get('lambda'))
    cert.check_shape(spec)
    return cert


# ============================================================================
# REPORT DOCUMENTS
# ============================================================================

@dataclass
class ReportDocument:
    command: str
    status: str
    primal_value: Optional[float] = None
    dual_value: Optional[float] = None
    gap: Optional[float] = None
    trajectory: Optional[Dict[str, Any]] = None
    certificate: Optional[Dict[str, Any]] = None
    verification: Optional[VerificationReport] = None
    specialization: Optional[Dict[str, Any]] = None
    error: Optional[str] = None
    version: str = config.VERSION
    tolerances: Dict[str, float] = field(default_factory=config.tolerances)

    def as_dict(self):
        return {
            'command': self.command,
            'status': self.status,
            'primal_value': self.primal_value,
            'dual_value': self.dual_value,
            'gap': self.gap,
            'trajectory': self.trajectory,
            'certificate': self.certificate,
            'verification': self.verification.as_dict() if self.verification else None,
            'specialization': self.specialization,
            'error': self.error,
            'version': self.version,
            'tolerances': self.tolerances,
        }

    def emit(self):
        return json.dumps(encode_value(self.as_dict()), indent=2)

    @classmethod
    def from_dict(cls, data):
        data = decode_value(data)
        verification = data.get('verification')
        return cls(
            command=data['command'],
            status=data['status'],
            primal_value=data.get('primal_value'),
            dual_value=data.get('dual_value'),
            gap=data.get('gap'),
            trajectory=data.get('trajectory'),
            certificate=data.get('certificate'),
            verification=VerificationReport.from_dict(verification) if verification else None,
            specialization=data.get('specialization'),
            error=data.get('error'),
            version=data.get('version', config.VERSION),
            tolerances=data.get('tolerances', {}),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def format_table(report: ReportDocument) -> str:
    lines = [f"{report.command}: {report.status}"]
    for label, value in (("primal", report.primal_value), ("dual", report.dual_value), ("gap", report.gap)):
        if value is not None:
            lines.append(f"  {label:<8} {value:.10g}")
    if report.error:
        lines.append(f"  error    {report.error}")
    if report.verification:
        lines.append("-" * 52)
        lines.append(f"  {'condition':<16} {'residual':>10} {'node':>6}  result")
        for e in report.verification.entries:
            node = '-' if e.node is None else str(e.node)
            lines.append(f"  {e.condition:<16} {e.residual:>10.2e} {node:>6}  {'PASS' if e.passed else 'FAIL'}")
        lines.append("-" * 52)
        lines.append(f"  {'all conditions':<16} {'PASS' if report.verification.passed else 'FAIL'}")
    return "\n".join(lines)


# ============================================================================
# COMMANDS
# ============================================================================

def _tols(tol):
    """--tol overrides the inclusion/transversality tolerance"""
    return {'inclusion': tol} if tol is not None else {}


def _failed(command, error, code, status='error'):
    logger.warning(f"{command}: {error}")
    return ReportDocument(command, status, error=str(error)), code


def _solve(command, spec):
    try:
        return solve_primal(spec), None
    except PrimalNotOptimal as e:
        return None, _failed(command, e, STATUS_EXIT.get(e.status, EXIT_VERIFY), e.status)


def cmd_solve(path):
    try:
        spec = load_problem(path)
    except RejectedInput as e:
        return _failed('solve', e, EXIT_PARSE, 'parse_error')
    solved, failure = _solve('solve', spec)
    if failure:
        return failure
    traj, value, _ = solved
    return ReportDocument('solve', 'optimal', primal_value=value,
                          trajectory=trajectory_document(traj)), EXIT_OK


def cmd_gap(path, tol=None):
    """--tol bounds |primal - dual|"""
    tol = config.GAP_TOL if tol is None else tol
    try:
        spec = load_problem(path)
    except RejectedInput as e:
        return _failed('gap', e, EXIT_PARSE, 'parse_error')
    solved, failure = _solve('gap', spec)
    if failure:
        return failure
    traj, primal, sol = solved
    cert = extract_dual_certificate(spec, sol)
    dual = evaluate_dual_functional(spec, cert)
    gap = primal - dual
    ok = abs(gap) <= tol
    logger.info(f"gap: primal={primal:.10g} dual={dual:.10g} gap={gap:.3e}")
    report = ReportDocument('gap', 'optimal' if ok else 'gap_exceeded', primal_value=primal,
                            dual_value=dual, gap=gap, trajectory=trajectory_document(traj),
                            certificate=certificate_document(cert))
    return report, EXIT_OK if ok else EXIT_VERIFY


def cmd_dual(path):
    try:
        spec = load_problem(path)
    except RejectedInput as e:
        return _failed('dual', e, EXIT_PARSE, 'parse_error')
    solved, failure = _solve('dual', spec)
    if failure:
        return failure
    traj, primal, sol = solved
    cert = extract_dual_certificate(spec, sol)
    dual = evaluate_dual_functional(spec, cert)
    specialization = None
    try:
        special = specialize_dual(spec)
    except RejectedInput:
        logger.info(f"No specialized dual for k={spec.k} with {type(spec.F).__name__}")
    else:
        specialization = {
            **special.as_dict(),
            'objective': special.objective(cert),
            'constraint_residual': special.constraint_residual(cert),
        }
    return ReportDocument('dual', 'optimal', primal_value=primal, dual_value=dual, gap=primal - dual,
                          certificate=certificate_document(cert),
                          specialization=specialization), EXIT_OK


def cmd_verify(path, primal_path, cert_path, tol=None):
    try:
        spec = load_problem(path)
        traj = parse_trajectory(load_json(primal_path), spec)
        cert = parse_certificate(load_json(cert_path), spec)
    except RejectedInput as e:
        return _failed('verify', e, EXIT_PARSE, 'parse_error')
    try:
        report = verify_all(spec, traj, cert, _tols(tol))
    except RejectedInput as e:
        return _failed('verify', e, EXIT_VERIFY, 'rejected')
    weak = report.entry('weak_duality').detail
    return ReportDocument('verify', 'verified' if report.passed else 'failed',
                          primal_value=weak['primal'], dual_value=weak['dual'],
                          gap=weak['primal'] - weak['dual'], verification=report), \
        EXIT_OK if report.passed else EXIT_VERIFY


def cmd_demo(name, out=None, tol=None):
    if name not in demos.DEMOS:
        raise UsageError(f"unknown demo '{name}' (choose from {', '.join(sorted(demos.DEMOS))})")
    doc = demos.DEMOS[name]()
    logger.info("=" * 60)
    logger.info(f"Demo: {name} (k={doc['order']}, N={doc['grid']})")
    logger.info("=" * 60)
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, f"{name}.json"), 'w') as fh:
            json.dump(doc, fh, indent=2)

    spec = parse_problem(doc)
    solved, failure = _solve('demo', spec)
    if failure:
        return failure
    traj, primal, sol = solved
    cert = extract_dual_certificate(spec, sol)
    report = verify_all(spec, traj, cert, _tols(tol))
    dual = report.entry('weak_duality').detail['dual']
    result = ReportDocument('demo', 'verified' if report.passed else 'failed', primal_value=primal,
                            dual_value=dual, gap=primal - dual, trajectory=trajectory_document(traj),
                            certificate=certificate_document(cert), verification=report)
    return result, EXIT_OK if report.passed else EXIT_VERIFY


# ============================================================================
# ENTRY POINT
# ============================================================================

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog='dfi', description="Solve and certify Mayer problems for k-th order "
                                             "convex differential inclusions")
    parser.add_argument('--version', action='version', version=config.VERSION)
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p, tol_help=None):
        if tol_help:
            p.add_argument('--tol', type=float, default=None, help=tol_help)
        p.add_argument('--out', default=None, help="write the report to this path")
        p.add_argument('--format', choices=['json', 'table'], default='json', help="output format (default json)")

    for name, text, tol_help in (
            ('solve', "solve the primal transcription", None),
            ('gap', "primal optimum vs dual value at the extracted certificate",
             f"gap tolerance (default {config.GAP_TOL:g})"),
            ('dual', "dual value and specialized dual", None)):
        p = sub.add_parser(name, help=text)
        p.add_argument('problem', help="problem document (JSON)")
        common(p, tol_help)

    p = sub.add_parser('verify', help="check optimality conditions for a trajectory/certificate pair")
    p.add_argument('problem', help="problem document (JSON)")
    p.add_argument('trajectory', help="trajectory document with x, v (and optional u)")
    p.add_argument('certificate', help="certificate document with x_star, v_star, mu0, muT (and lambda)")
    common(p, f"inclusion/transversality tolerance (default {config.INCLUSION_TOL:g})")

    p = sub.add_parser('demo', help="run a built-in instance")
    p.add_argument('name', help=f"one of {', '.join(sorted(demos.DEMOS))}")
    p.add_argument('--tol', type=float, default=None, help="inclusion/transversality tolerance")
    p.add_argument('--out', default=None, help="directory for <name>.json and <name>.report.json")
    p.add_argument('--format', choices=['json', 'table'], default='json', help="output format (default json)")
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run the command, print the report; returns the exit code"""
    try:
        args = build_parser().parse_args(argv)
        if args.command == 'demo':
            report, code = cmd_demo(args.name, args.out, args.tol)
        elif args.command == 'verify':
            report, code = cmd_verify(args.problem, args.trajectory, args.certificate, args.tol)
        elif args.command == 'gap':
            report, code = cmd_gap(args.problem, args.tol)
        else:
            handler = {'solve': cmd_solve, 'dual': cmd_dual}[args.command]
            report, code = handler(args.problem)
    except UsageError as e:
        print(f"usage error: {e}")
        return EXIT_USAGE

    text = format_table(report) if args.format == 'table' else report.emit()
    print(text)
    if args.out:
        target = os.path.join(args.out, f"{args.name}.report.json") if args.command == 'demo' else args.out
        with open(target, 'w') as fh:
            fh.write(report.emit())
    return code

"""
Differential Inclusion Certifier Service
========================================
JSON API over the solver and certifier:
- POST /api/solve    primal transcription
- POST /api/gap      primal vs dual at the extracted certificate
- POST /api/dual     dual value and specialized dual
- POST /api/verify   optimality conditions for a trajectory/certificate pair
- GET  /api/demo/<name>  built-in decay / ptl / pfc instances

Request bodies are ProblemDocuments; /api/verify takes
{"problem": ..., "trajectory": ..., "certificate": ...}.
"""

import logging

from flask import Flask, request, jsonify

import config
import demos
from certify import verify_all
from cli import (ReportDocument, certificate_document, encode_value, parse_certificate, parse_problem,
                 parse_trajectory, trajectory_document)
from lp_core import ITERATION_LIMIT, RejectedInput
from transcription import (PrimalNotOptimal, evaluate_dual_functional, extract_dual_certificate,
                           solve_primal, specialize_dual)

# ============================================================================
# SETUP LOGGING
# ============================================================================

logging.basicConfig(
    level=getattr(logging, config.LOG_LEVEL, logging.INFO),
    format='%(asctime)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

# ============================================================================
# INITIALIZE FLASK APP
# ============================================================================

app = Flask(__name__)


def _report(report: ReportDocument, code=200):
    body = encode_value(report.as_dict())
    body['success'] = code == 200
    return jsonify(body), code


def _error(message, code):
    return jsonify({'success': False, 'error': message}), code


def _not_optimal(command, e: PrimalNotOptimal):
    # iteration limit is reported as a server error
    code = 500 if e.status == ITERATION_LIMIT else 422
    logger.warning(f"[{command}] primal LP {e.status}")
    return jsonify({'success': False, 'status': e.status, 'error': str(e)}), code


def _problem_from_request():
    data = request.get_json(silent=True)
    if not data:
        raise RejectedInput("No JSON body received")
    return data


# ============================================================================
# HEALTH
# ============================================================================

@app.route('/health', methods=['GET'])
def health():
    """Liveness check with the tolerances in force"""
    return jsonify({
        'status': 'healthy',
        'version': config.VERSION,
        'tolerances': config.tolerances(),
    })


# ============================================================================
# WORKFLOWS
# ============================================================================

@app.route('/api/solve', methods=['POST'])
def api_solve():
    try:
        spec = parse_problem(_problem_from_request())
        traj, value, _ = solve_primal(spec)
        logger.info(f"[solve] value={value:.10g}")
        return _report(ReportDocument('solve', 'optimal', primal_value=value,
                                      trajectory=trajectory_document(traj)))
    except RejectedInput as e:
        return _error(str(e), 400)
    except PrimalNotOptimal as e:
        return _not_optimal('solve', e)
    except Exception as e:
        logger.exception(f"Error solving problem: {e}")
        return _error(str(e), 500)


@app.route('/api/gap', methods=['POST'])
def api_gap():
    try:
        spec = parse_problem(_problem_from_request())
        traj, primal, sol = solve_primal(spec)
        cert = extract_dual_certificate(spec, sol)
        dual = evaluate_dual_functional(spec, cert)
        gap = primal - dual
        logger.info(f"[gap] primal={primal:.10g} dual={dual:.10g} gap={gap:.3e}")
        status = 'optimal' if abs(gap) <= config.GAP_TOL else 'gap_exceeded'
        return _report(ReportDocument('gap', status, primal_value=primal, dual_value=dual, gap=gap,
                                      trajectory=trajectory_document(traj),
                                      certificate=certificate_document(cert)))
    except RejectedInput as e:
        return _error(str(e), 400)
    except PrimalNotOptimal as e:
        return _not_optimal('gap', e)
    except Exception as e:
        logger.exception(f"Error computing gap: {e}")
        return _error(str(e), 500)


@app.route('/api/dual', methods=['POST'])
def api_dual():
    try:
        spec = parse_problem(_problem_from_request())
        _, primal, sol = solve_primal(spec)
        cert = extract_dual_certificate(spec, sol)
        dual = evaluate_dual_functional(spec, cert)
        specialization = None
        try:
            special = specialize_dual(spec)
            specialization = {**special.as_dict(), 'objective': special.objective(cert),
                              'constraint_residual': special.constraint_residual(cert)}
        except RejectedInput:
            pass
        return _report(ReportDocument('dual', 'optimal', primal_value=primal, dual_value=dual,
                                      gap=primal - dual, certificate=certificate_document(cert),
                                      specialization=specialization))
    except RejectedInput as e:
        return _error(str(e), 400)
    except PrimalNotOptimal as e:
        return _not_optimal('dual', e)
    except Exception as e:
        logger.exception(f"Error evaluating dual: {e}")
        return _error(str(e), 500)


@app.route('/api/verify', methods=['POST'])
def api_verify():
    """
    Expected JSON payload:
    {
        "problem": {...ProblemDocument...},
        "trajectory": {"x": [...], "v": [...], "u": [...] (optional)},
        "certificate": {"x_star": [...], "v_star": [...], "mu0": [...], "muT": [...], "lambda": [...] (optional)},
        "tol": 1e-7 (optional)
    }
    """
    try:
        data = _problem_from_request()
        for key in ('problem', 'trajectory', 'certificate'):
            if key not in data:
                return _error(f"Missing '{key}'", 400)
        spec = parse_problem(data['problem'])
        traj = parse_trajectory(data['trajectory'], spec)
        cert = parse_certificate(data['certificate'], spec)
        tols = {'inclusion': float(data['tol'])} if data.get('tol') is not None else None
        report = verify_all(spec, traj, cert, tols)
        weak = report.entry('weak_duality').detail
        logger.info(f"[verify] passed={report.passed}")
        return _report(ReportDocument('verify', 'verified' if report.passed else 'failed',
                                      primal_value=weak['primal'], dual_value=weak['dual'],
                                      gap=weak['primal'] - weak['dual'], verification=report))
    except RejectedInput as e:
        return _error(str(e), 400)
    except Exception as e:
        logger.exception(f"Error verifying certificate: {e}")
        return _error(str(e), 500)


@app.route('/api/demo/<name>', methods=['GET'])
def api_demo(name):
    if name not in demos.DEMOS:
        return _error(f"Unknown demo '{name}'", 404)
    try:
        doc = demos.DEMOS[name]()
        spec = parse_problem(doc)
        traj, primal, sol = solve_primal(spec)
        cert = extract_dual_certificate(spec, sol)
        report = verify_all(spec, traj, cert)
        dual = report.entry('weak_duality').detail['dual']
        body = encode_value(ReportDocument('demo', 'verified' if report.passed else 'failed',
                                           primal_value=primal, dual_value=dual, gap=primal - dual,
                                           trajectory=trajectory_document(traj),
                                           certificate=certificate_document(cert),
                                           verification=report).as_dict())
        body['problem'] = doc
        body['success'] = True
        return jsonify(body)
    except PrimalNotOptimal as e:
        return _not_optimal('demo', e)
    except Exception as e:
        logger.exception(f"Error running demo {name}: {e}")
        return _error(str(e), 500)


# ============================================================================
# RUN SERVER
# ============================================================================

if __name__ == '__main__':
    logger.info("=" * 60)
    logger.info("Differential Inclusion Certifier Starting...")
    config.log_settings()
    logger.info(f"API available at http://localhost:{config.PORT}")
    logger.info("=" * 60)

    app.run(host='0.0.0.0', port=config.PORT, debug=config.DEBUG)

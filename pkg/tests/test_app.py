import pytest

import demos
from app import app


@pytest.fixture
def client():
    app.config['TESTING'] = True
    with app.test_client() as client:
        yield client


def test_health(client):
    body = client.get('/health').get_json()
    assert body['status'] == 'healthy'
    assert set(body['tolerances']) >= {'inclusion', 'gap', 'weak_duality'}


def test_solve(client):
    response = client.post('/api/solve', json=demos.decay())
    assert response.status_code == 200
    body = response.get_json()
    assert body['success']
    assert body['primal_value'] == pytest.approx(demos.DECAY_VALUE, abs=1e-9)


def test_gap_and_verify(client):
    problem = demos.ptl(N=12)
    gap = client.post('/api/gap', json=problem).get_json()
    assert gap['status'] == 'optimal'
    assert abs(gap['gap']) <= 1e-6

    response = client.post('/api/verify', json={
        'problem': problem,
        'trajectory': gap['trajectory'],
        'certificate': gap['certificate'],
    })
    body = response.get_json()
    assert response.status_code == 200
    assert body['status'] == 'verified'
    assert body['verification']['passed']


def test_verify_reports_failed_conditions(client):
    problem = demos.decay()
    gap = client.post('/api/gap', json=problem).get_json()
    certificate = dict(gap['certificate'], mu0=[0.0])
    body = client.post('/api/verify', json={
        'problem': problem, 'trajectory': gap['trajectory'], 'certificate': certificate, 'tol': 1e-7,
    }).get_json()
    assert body['status'] == 'failed'
    entries = {e['condition']: e for e in body['verification']['entries']}
    assert not entries['c']['passed']
    assert entries['a']['passed']


def test_dual_specialization(client):
    body = client.post('/api/dual', json=demos.ptl(N=12)).get_json()
    assert body['specialization']['name'] == 'third-order linear-control dual'


def test_demo(client):
    body = client.get('/api/demo/decay').get_json()
    assert body['status'] == 'verified'
    assert body['problem'] == demos.decay()


def test_unknown_demo(client):
    assert client.get('/api/demo/nope').status_code == 404


def test_bad_documents(client):
    assert client.post('/api/solve', data='not json', content_type='application/json').status_code == 400
    doc = demos.decay()
    doc['gird'] = doc.pop('grid')
    response = client.post('/api/solve', json=doc)
    assert response.status_code == 400
    assert 'gird' in response.get_json()['error']
    assert client.post('/api/verify', json={'problem': demos.decay()}).status_code == 400


def test_infeasible_problem(client):
    doc = demos.decay()
    doc['state_set'] = {'A': [[1.0]], 'd': [0.5]}
    response = client.post('/api/solve', json=doc)
    assert response.status_code == 422
    assert response.get_json()['status'] == 'infeasible'

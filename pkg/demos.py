"""
Built-in Instances
==================
Problem documents for the three desk instances:
- decay: x' = -x, x(0) = 1, minimize x(T)
- ptl:   x''' ∈ [-1, 1], zero initial data, minimize x(T)
- pfc:   x'''' ∈ [-1 - x/2, 1], zero initial data, minimize x(T)
"""

import math

# Discrete optimum of the decay instance: (1 - h)^N with h = T/N
DECAY_VALUE = 0.9 ** 10

# Continuous optimum of the third-order instance: -T³/6
PTL_CONTINUOUS_VALUE = -1.0 / 6.0


def _whole_line():
    return {'A': [], 'd': []}


def _zero_initial_data():
    """S = {(y, z) : y = 0} in R², applied to every derivative order"""
    return {'A': [[1.0, 0.0], [-1.0, 0.0]], 'd': [0.0, 0.0]}


def _minimize_final_state():
    return {'rows': [{'a0': [0.0], 'aT': [1.0], 'b': 0.0}]}


def decay(N=10):
    return {
        'order': 1,
        'horizon': 1.0,
        'grid': N,
        'dynamics': {
            'type': 'linear_control',
            'A': [[-1.0]],
            'B': [[0.0]],
            'U': {'A': [[1.0], [-1.0]], 'd': [1.0, 1.0]},
        },
        'objective': _minimize_final_state(),
        'endpoint_set': {'A': [[1.0, 0.0], [-1.0, 0.0]], 'd': [1.0, -1.0]},
        'state_set': _whole_line(),
    }


def ptl(N=64):
    return {
        'order': 3,
        'horizon': 1.0,
        'grid': N,
        'dynamics': {
            'type': 'linear_control',
            'A': [[0.0]],
            'B': [[1.0]],
            'U': {'A': [[1.0], [-1.0]], 'd': [1.0, 1.0]},
        },
        'objective': _minimize_final_state(),
        'endpoint_set': _zero_initial_data(),
        'state_set': _whole_line(),
    }


def pfc(N=16):
    return {
        'order': 4,
        'horizon': 1.0,
        'grid': N,
        'dynamics': {
            'type': 'polyhedral',
            'A': [[0.0], [-0.5]],
            'E': [[-1.0], [1.0]],
            'd': [1.0, 1.0],
        },
        'objective': _minimize_final_state(),
        'endpoint_set': _zero_initial_data(),
        'state_set': _whole_line(),
    }


DEMOS = {
    'decay': decay,
    'ptl': ptl,
    'pfc': pfc,
}


def ptl_bang_bang_value(N=64, T=1.0):
    """x_N for v ≡ -1 from zero data: -h³ C(N, 3)"""
    h = T / N
    return -h ** 3 * math.comb(N, 3)

"""Bias-corrected Adam."""

import logging

import numpy as np

from eye_purify import exceptions


logger = logging.getLogger(__name__)

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


def init_state(params):
    return {'t': 0,
            'm': [np.zeros_like(p) for p in params],
            'v': [np.zeros_like(p) for p in params]}


def adam_step(params, grads, state, lr, beta1=BETA1, beta2=BETA2, eps=EPS):
    """Return (updated params, updated state); inputs are left untouched.

    params and grads are parallel lists of arrays; state comes from
    init_state or a previous call.
    """
    if len(params) != len(grads):
        raise exceptions.ShapeError("one gradient per parameter", expected=len(params), actual=len(grads))
    t = state['t'] + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state['m'], state['v']):
        if p.shape != g.shape:
            raise exceptions.ShapeError("gradient shape differs from parameter", expected=p.shape, actual=g.shape)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        new_params.append((p - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype))
        new_m.append(m)
        new_v.append(v)
    return new_params, {'t': t, 'm': new_m, 'v': new_v}


class Adam(object):
    """Adam over Tensors; step() reads each parameter's .grad and writes .data in place."""

    def __init__(self, params, lr, beta1=BETA1, beta2=BETA2, eps=EPS):
        if not lr > 0:
            raise exceptions.ConfigurationError("learning rate must be > 0, got {}".format(lr))
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = init_state([p.data for p in self.params])

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in self.params]
        updated, self.state = adam_step([p.data for p in self.params], grads, self.state,
                                        self.lr, self.beta1, self.beta2, self.eps)
        for p, data in zip(self.params, updated):
            p.data = data

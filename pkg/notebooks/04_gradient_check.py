"""
Checking backpropagation with finite differences
================================================

Compare the analytic loss gradient of a float64 network against central
differences on a handful of randomly chosen parameters.
"""
import numpy as np

from adnet import Network, build_config, init_params
from adnet.layers import one_hot

spec = build_config("A-LRN", "tiny")
net = Network(spec, init_params(spec, seed=2, dtype=np.float64).params)
rng = np.random.default_rng(0)
x = rng.random((4, 3, 32, 32))
targets = one_hot([1, 0, 0, 1], 2, np.float64)


def loss():
    # a fixed generator keeps the dropout mask identical between calls
    return net.loss_and_grads(x, targets, np.random.default_rng(3))[0]


_, _, grads = net.loss_and_grads(x, targets, np.random.default_rng(3))
h = 1e-5
for key in rng.choice(list(net.params), size=8, replace=False):
    p = net.params[key]
    i = tuple(int(rng.integers(s)) for s in p.shape)
    old = p[i]
    p[i] = old + h
    up = loss()
    p[i] = old - h
    down = loss()
    p[i] = old
    numeric = (up - down) / (2 * h)
    print(f"{key:16s} analytic={grads[key][i]: .8e} numeric={numeric: .8e}")

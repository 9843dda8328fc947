"""
Networks, gradients and interval bounds
=======================================

A small dueling Q-network built from plain numpy, its gradients checked
against finite differences, and interval bounds on its outputs over an
l-infinity ball of inputs.
"""

# %%
import numpy as np

from bcl.nn import Network, NetworkSpec

spec = NetworkSpec((4, 16, 3), dueling=True)
net = Network.create(spec, seed=0)
x = np.array([0.2, 0.5, 0.9, 0.0])
print("Q(x) =", net.forward(x))

# %% Input gradient of one Q-value, compared with central differences
upstream = np.array([1.0, 0.0, 0.0])
_, gx = net.backward(x, upstream)
h = 1e-6
fd = np.array([(net.forward(x + h * e)[0] - net.forward(x - h * e)[0]) / (2 * h)
               for e in np.eye(4)])
print("analytic:", gx)
print("numeric: ", fd)

# %% Interval bounds at eps = 0.05 contain every sampled perturbation
bounds = net.ibp(x, 0.05)
rng = np.random.default_rng(0)
samples = net.forward(np.clip(x + rng.uniform(-0.05, 0.05, (5000, 4)), 0, 1))
print("lower:", bounds.lower)
print("upper:", bounds.upper)
print("sampled min/max:", samples.min(0), samples.max(0))
print("all contained:", bounds.contains(samples))

"""
Observation attacks
===================

The four evaluation attacks (PGD, RI-FGSM, and the two multi-restart
variants) against a randomly initialised policy network. Every
perturbation stays inside the budget ball and the [0, 1] observation box.
"""

# %%
import numpy as np

from bcl.attacks import AttackSpec, run_attack
from bcl.envs import encode_ridgewalk
from bcl.nn import Network, NetworkSpec

net = Network.create(NetworkSpec((24, 32, 2)), seed=3)
x = encode_ridgewalk(4)
clean = int(np.argmax(net.forward(x)))
print("clean action:", clean)

# %%
for eps in (1 / 255, 10 / 255, 25 / 255):
    for kind in ("pgd", "rifgsm", "rifgsm_multi", "rifgsm_multi_t"):
        d = run_attack(net, x, AttackSpec(kind, eps, restarts=200, seed=1))
        act = int(np.argmax(net.forward(x + d)))
        print(f"eps={eps * 255:4.0f}/255 {kind:15s} |d|max={np.abs(d).max():.4f} "
              f"action {clean} -> {act}")

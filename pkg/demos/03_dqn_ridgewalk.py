"""
DQN on RidgeWalk, with and without adversarial training
=======================================================

A vanilla dueling DQN learns to walk right along the ridge but a 30-step
PGD attack at 25/255 sends it the wrong way. One phase of adversarial
training from that model restores the return under attack. Takes about a
minute on one core.
"""

# %%
from bcl.attacks import AttackSpec
from bcl.dqn import DqnConfig, train_dqn_phase
from bcl.harness.evaluation import evaluate
from bcl.nn import Network, NetworkSpec

EPS = 25 / 255
f0 = Network.create(NetworkSpec((24, 32, 32, 2), dueling=True), seed=0)
vanilla = train_dqn_phase(f0, "ridgewalk", 0.0, 0.0, DqnConfig(frames=40_000), seed=0)

# %%
def show(name, model):
    s = evaluate(model, "ridgewalk", [AttackSpec("pgd", EPS)], episodes=5)
    print(f"{name:8s} nominal {s.r_nominal:+.2f}   PGD@25/255 {s.r_adv:+.2f}")


show("vanilla", vanilla)

# %% Adversarial training at the target budget, bootstrapped from the vanilla model
robust = train_dqn_phase(vanilla, "ridgewalk", EPS, EPS, DqnConfig(frames=40_000, loss_mode="at"),
                         seed=1)
show("AT", robust)

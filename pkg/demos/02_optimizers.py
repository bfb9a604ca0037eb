"""
Derivative-free optimizers
==========================

The three optimizers on small test functions. All of them maximize.
"""

# %%
import numpy as np

from olt import (
    CemConfig,
    GpoConfig,
    OnePlusOneConfig,
    SearchSpace,
    cem_maximize,
    gpo_maximize,
    one_plus_one_maximize,
)


def shifted_bowl(x):
    return -float(np.sum((x - np.array([0.5, -0.3])) ** 2))


box = SearchSpace.cube(2, -1, 1)

# %%
# Cross-entropy method: the sampling distribution contracts onto the optimum.
run = cem_maximize(shifted_bowl, box, CemConfig(iterations=30), seed=0)
print("cem best", run.best_x, run.best_value)
print(run.to_csv().splitlines()[:4])

# %%
# (1+1)-ES with the 1/5th success rule.
run = one_plus_one_maximize(shifted_bowl, box, OnePlusOneConfig(max_evaluations=500), seed=0)
print("es best", run.best_x, "final step size", run.step_sizes[-1])

# %%
# GP optimization spends far fewer evaluations.
run = gpo_maximize(shifted_bowl, box, GpoConfig(budget=25), seed=0)
print("gpo best", run.best_x, "after", run.evaluations, "evaluations")

"""
Tuning the scoring weights on a chain
=====================================

A full campaign on the five-cell chain, checked against the exact
finite-horizon policy from backward induction.
"""

# %%
from olt import CemConfig, EvaluationSpec, act, run_campaign, value_iteration_oracle
from olt.mdp import reachable_pairs

spec = EvaluationSpec("chain_walk", {"n_states": 5, "discount": 0.9},
                      n_initial=1, horizon=4, budget=5)
result = run_campaign(spec, "cem", CemConfig(iterations=20), seed=0)
print("best J", result.train_J, "weights", result.best_theta.round(3))
print("presets", result.baselines)

# %%
# Compare with the optimal policy at every reachable (state, steps-left) pair.
model = spec.model()
oracle = value_iteration_oracle(model, spec.horizon)
for s, k in sorted(reachable_pairs(model, spec.horizon)):
    print((s, k), "tree:", act(model, (s,), result.best_theta, spec.budget),
          "oracle:", oracle.action(s, k))

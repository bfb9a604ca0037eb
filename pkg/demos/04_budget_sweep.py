"""
Larger budgets, better decisions
================================

Optimized weights against the three presets on the double integrator, for a
range of expansion budgets. Takes about a minute; the result is a CSV table.
"""

# %%
from olt import CemConfig, EvaluationSpec, budget_sweep
from olt.harness import sweep_csv

spec = EvaluationSpec("double_integrator", n_initial=8, horizon=50, budget=1, seed=0)
rows = budget_sweep(spec, [1, 5, 25, 125], "cem",
                    CemConfig(population=12, elites=3, iterations=4), seed=0)
print(sweep_csv(rows))

# %%
# J_optimized should grow with the budget and never fall below the presets.
for r in rows:
    print(r.budget, round(r.J_optimized, 3), round(max(r.J_uniform, r.J_greedy), 3))

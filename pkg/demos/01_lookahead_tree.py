"""
Growing a look-ahead tree
=========================

One decision step of the tree policy on the double integrator: the tree is
grown from the current state by expanding the best-scored open leaf until
the expansion budget runs out.
"""

# %%
# A tree with the breadth-first preset. Thirteen expansions with three
# actions is exactly enough to hold every node down to depth 3.
import numpy as np

from olt import DoubleIntegrator, build_tree, feature_dimension, preset_theta, select_action

model = DoubleIntegrator()
s0 = (0.8, -0.2)
tree = build_tree(model, s0, "uniform", budget=13)
print("nodes:", tree.node_count, "expansions:", tree.expansion_count)
print("chosen action:", select_action(tree))

# %%
# Every node stores its discounted path return and its depth; these are two
# of the features the scoring weights act on.
for node in tree.nodes[:5]:
    print(node.path, round(node.path_return, 4), node.depth)

# %%
# A different weight vector grows a very different tree under the same budget.
theta = np.zeros(feature_dimension(model))
theta[3] = 1.0       # path return
theta[1] = -0.05     # mild depth penalty
deep = build_tree(model, s0, theta, budget=13)
print("max depth, uniform:", max(n.depth for n in tree.nodes))
print("max depth, weighted:", max(n.depth for n in deep.nodes))

# %%
# The expansion order can be dumped as JSONL for inspection.
for rec in deep.trace_records()[:4]:
    print(rec)

# %%
# The greedy preset is just another weight vector.
print(preset_theta("greedy", model))

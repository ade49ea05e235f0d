"""
A small benchmark against random guessing
=========================================

Sparse five-node linear models with uniform noise, a handful of seeds. For
each one we compare the structural Hamming distance of the learned mixed
graph with that of a random graph drawn from the same generator.

Expect a minute or two on a laptop.
"""

import numpy as np

from adascore.discovery import adascore
from adascore.metrics import evaluate
from adascore.simulate import make_instance, random_baseline

learned, guessed = [], []
for seed in range(6):
    inst = make_instance(5, 0.3, "linear", 1000, 0, seed)
    graph, _ = adascore(inst.data)
    learned.append(evaluate(graph, inst.target)["shd"])
    rnd = random_baseline(5, 0.3, inst.data.d, "linear", seed)
    guessed.append(evaluate(rnd, inst.target)["shd"])
    print(f"seed {seed}: learned SHD {learned[-1]}, random SHD {guessed[-1]}")

print("median SHD, learned:", np.median(learned))
print("median SHD, random: ", np.median(guessed))

# The same sweep, with more seeds and a resumable cache, is available from
# the command line:
#   adascore benchmark --nodes 5 --edge-probs 0.3 --mechanisms linear --seeds 0-19 --out-dir sweep

"""Graph-strategy and attention ablations on the planted benchmark.

Prints the two tables the `gmacn sweep` command writes as CSV. With the
defaults below this takes a few minutes; pass more seeds for medians.

Run: python3 demos/04_ablations.py
"""

# %%
import numpy as np

from eeg_gmacn.benchmark import sweep

rows = sweep(seeds=(0,), epochs=300)

# %% strategy table: plain GCN stack on different electrode graphs
print(f"{'graph':14s} {'Acc':>6} {'F1':>6} {'ECE':>7}")
for r in rows:
    if r["table"] == "strategy":
        tag = f"{r['strategy']}{{{r['parameter']:g}}}"
        print(f"{tag:14s} {r['acc']:6.3f} {r['f1']:6.3f} {r['ece']:7.4f}")

# %% attention table: same graph, with and without the attention branch
print(f"\n{'model':14s} {'Acc':>6} {'F1':>6} {'ECE':>7} {'MFLOPs':>8} {'params':>8}")
for r in rows:
    if r["table"] == "attention":
        name = "with attention" if r["attention"] else "plain GCN"
        print(f"{name:14s} {r['acc']:6.3f} {r['f1']:6.3f} {r['ece']:7.4f} "
              f"{r['flops'] / 1e6:8.3f} {r['params']:8d}")

# %% the cost side is analytic, so it holds regardless of training noise
on = [r for r in rows if r["table"] == "attention" and r["attention"]][0]
off = [r for r in rows if r["table"] == "attention" and not r["attention"]][0]
print("\nattention adds", on["flops"] - off["flops"], "multiply-adds and",
      on["params"] - off["params"], "parameters")
print("mean F1 over strategy rows:", np.mean([r["f1"] for r in rows if r["table"] == "strategy"]))

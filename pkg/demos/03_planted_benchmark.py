"""Train on planted-electrode data and check that IEGW finds the planted electrodes.

Every class adds a fixed feature template to 8 electrodes of its own; all
other entries are unit Gaussian noise. A good explanation should rank the
predicted class's electrodes on top.

Run: python3 demos/03_planted_benchmark.py  (about a minute)
"""

# %%
from pathlib import Path

from eeg_gmacn.benchmark import recovery_scores, run_planted
from eeg_gmacn.evaluation import format_table
from eeg_gmacn.explain import explain_epochs, mean_report, render_scalp_svg

run = run_planted(seed=0, epochs=300)
print("train accuracy", run.report.accuracies[-1])
print(format_table(run.evaluation))

# %% planted electrodes per class
montage = run.spec.montage
for c, idx in run.spec.planted.items():
    print(c, [montage.names[i] for i in idx])

# %% how often the explanation singles out the right electrodes
mean_rate, top_rate = recovery_scores(run)
print(f"planted mean beats the rest on {mean_rate:.1%} of test epochs")
print(f"top-8 holds >= 5 planted electrodes on {top_rate:.1%} of test epochs")

# %% one class-level map: average the explanations of epochs predicted as class 0
reports = explain_epochs(run.model, run.test_set.features)
class0 = mean_report([r for r in reports if r.target_class == 0])
top = [montage.names[i] for i in class0.ranking()[:8]]
print("class 0 top electrodes:", top)
out = Path("class0_iegw.svg")
render_scalp_svg(class0, out, montage, title="class 0, mean IEGW")
print("wrote", out.resolve())

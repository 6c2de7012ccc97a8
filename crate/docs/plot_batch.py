"""Plot median true-region belief per iteration from a batch CSV.

    pathpref run --config cfg.json --out batch.csv
    python docs/plot_batch.py batch.csv batch.png
"""

import sys

import matplotlib.pyplot as plt
import pandas as pd


def main(path, out):
    df = pd.read_csv(path, comment="#")
    df = df[df.status != "error"]
    fig, (ax, vio) = plt.subplots(1, 2, figsize=(11, 4))
    for (cell, sel, user, pol), g in df.groupby(["cell", "selector", "user", "p_hat_policy"]):
        by_iter = g.groupby("iteration").posterior_true
        med = by_iter.median()
        ax.plot(med.index, med.values, label=f"{sel} / {user} / {pol}")
        ax.fill_between(med.index, by_iter.quantile(0.25), by_iter.quantile(0.75), alpha=0.15)
    ax.set_xlabel("iteration")
    ax.set_ylabel("belief in true region")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=7)

    last = df.iteration.max()
    groups = [g.posterior_true.values for _, g in df[df.iteration == last].groupby("cell")]
    vio.violinplot(groups, showmedians=True)
    vio.set_xlabel("cell")
    vio.set_ylabel(f"belief at iteration {last}")
    fig.tight_layout()
    fig.savefig(out, dpi=150)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2] if len(sys.argv) > 2 else "batch.png")

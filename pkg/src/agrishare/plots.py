"""Figure rendering for sweep and table outputs.

Every report path that writes delimited results can also render a PNG next
to it. The Agg backend keeps rendering deterministic and headless.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_SAVE_OPTS = {"dpi": 150, "metadata": {"Software": None}}


def _curve(ax, med_rows, color, label):
    eps = [r["epsilon"] for r in med_rows]
    med = [r["median"] for r in med_rows]
    lo = [r["q25"] for r in med_rows]
    hi = [r["q75"] for r in med_rows]
    ax.plot(eps, med, "o-", color=color, label=label)
    ax.fill_between(eps, lo, hi, color=color, alpha=0.2, linewidth=0)


def render_power_sweep(med_rows, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    _curve(ax, med_rows, "tab:red", "power (median, IQR)")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("membership-inference power")
    ax.set_ylim(0, 1)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def render_utility_sweep(med_rows_by_classifier, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    colors = {"logreg": "tab:blue", "gnb": "tab:green", "svm": "tab:orange"}
    for kind, med_rows in sorted(med_rows_by_classifier.items()):
        _curve(ax, med_rows, colors.get(kind, "tab:gray"), kind)
    ax.set_xlabel("epsilon")
    ax.set_ylabel("accuracy on privatized rows")
    ax.set_ylim(0, 1)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def render_table4(reports, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    kinds = [r.classifier for r in reports]
    x = range(len(kinds))
    width = 0.38
    ax.bar([i - width / 2 for i in x], [r.accuracy_clean * 100 for r in reports],
           width, label="centralized", color="tab:blue")
    ax.bar([i + width / 2 for i in x], [r.accuracy_noisy * 100 for r in reports],
           width, label="privatized aggregate", color="tab:orange")
    ax.set_xticks(list(x))
    ax.set_xticklabels(kinds)
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 105)
    ax.legend(loc="lower right")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def render_clusters(points, labels, centroids, path):
    fig, ax = plt.subplots(figsize=(6, 5))
    sc = ax.scatter(points[:, 0], points[:, 1], c=labels, s=6, cmap="tab10", alpha=0.6)
    ax.scatter(centroids[:, 0], centroids[:, 1], marker="x", s=120, c="black",
               label="centroids")
    ax.set_xlabel("component 1")
    ax.set_ylabel("component 2")
    ax.legend()
    fig.colorbar(sc, ax=ax, label="cluster")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def render_fl_sweep(med_rows, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    _curve(ax, med_rows, "tab:purple", "personalized accuracy (median, IQR)")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("federated model accuracy on initiator")
    ax.set_ylim(0, 1)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def render_round_accuracy(reports, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([r.round for r in reports], [r.global_eval_accuracy for r in reports],
            "o-", color="tab:purple")
    ax.set_xlabel("federated round")
    ax.set_ylabel("initiator eval accuracy")
    ax.set_ylim(0, 1)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)

"""Static SVG figures for sweep curves and SE diagonals."""

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .io import atomic_write  # noqa: E402

# fixed ids and no date stamp keep the SVG bytes reproducible
matplotlib.rcParams["svg.hashsalt"] = "selab"


def _save(fig, path):
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def sweep_figure(path, name, n_list, medians, reference=None, slope=None):
    """Median deviation against n on log-log axes, with the rate envelope when given."""
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ok = [(n, m) for n, m in zip(n_list, medians) if m > 0]
    if ok:
        ax.loglog(*zip(*ok), "o-", label="median deviation")
    if reference is not None:
        ax.loglog(n_list, reference, "--", color="0.5", label="rate reference")
    title = name if slope is None else f"{name}  (slope {slope:.2f})"
    ax.set_title(title, fontsize=9)
    ax.set_xlabel("n")
    ax.set_ylabel("|empirical - SE|")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def norms_figure(path, steps, u_norm2, v_norm2, reference=None):
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.plot(steps, u_norm2, "o-", label="|u|^2")
    ax.plot(steps, v_norm2, "s-", label="|v|^2")
    if reference is not None:
        ax.plot(*reference, "x", color="k", label="scalar recursion")
    ax.set_xlabel("step")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)

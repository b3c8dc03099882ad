"""Report figures, rendered off-screen to image files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# PNG metadata without a software version keeps figures byte-stable.
_METADATA = {"Software": None}


def plot_cerr(per_pair: list[float | None], corpus_cerr: float, path, title: str = "CERR per sentence") -> None:
    """Bar chart of per-sentence CERR; excluded (already modern) pairs are left blank."""
    fig, ax = plt.subplots(figsize=(max(4.0, 0.25 * len(per_pair) + 2), 3.2))
    xs = [i for i, v in enumerate(per_pair, 1) if v is not None]
    ys = [v for v in per_pair if v is not None]
    ax.bar(xs, ys, color="#4a7ab0", width=0.8)
    ax.axhline(corpus_cerr, color="#c0392b", linestyle="--", linewidth=1,
               label=f"corpus CERR {corpus_cerr:.3f}")
    ax.axhline(1.0, color="grey", linewidth=0.6)
    ax.set_xlabel("sentence")
    ax.set_ylabel("CERR")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata=_METADATA)
    plt.close(fig)


def plot_training(history: list[dict], path) -> None:
    """Training loss and (if recorded) validation perplexity per epoch."""
    epochs = [h["epoch"] for h in history]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(epochs, [h["loss"] for h in history], marker="o", color="#4a7ab0", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss (nats/char)")
    valid = [(h["epoch"], h["valid_ppl"]) for h in history if h.get("valid_ppl") is not None]
    if valid:
        ax2 = ax.twinx()
        ax2.plot([e for e, _ in valid], [p for _, p in valid], marker="s", color="#c0392b", label="valid PPL")
        ax2.set_ylabel("validation perplexity")
        ax2.legend(loc="upper center", fontsize=8)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata=_METADATA)
    plt.close(fig)

"""Figure rendering for CLI outputs.

Every renderer takes the same row dicts the CSV writer sees and writes one
PNG next to the delimited output. Import stays cheap: matplotlib is pulled
in lazily so CSV-only runs never pay for it.
"""

from __future__ import annotations

from collections import defaultdict


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _finish(fig, path: str) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    _plt().close(fig)
    return path


def render_bench(rows: list[dict], path: str) -> str:
    """Median latency vs n per variant, with a p10..p90 band."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    by_variant: dict[str, list[dict]] = defaultdict(list)
    for r in rows:
        by_variant[r["variant"]].append(r)
    for variant, group in by_variant.items():
        group = sorted(group, key=lambda r: r["n"])
        ns = [r["n"] for r in group]
        ax.plot(ns, [r["median_ms"] for r in group], marker="o", label=variant)
        ax.fill_between(ns, [r["p10_ms"] for r in group],
                        [r["p90_ms"] for r in group], alpha=0.2)
    ax.set_xlabel("sequence length n")
    ax.set_ylabel("wall clock (ms)")
    if len({r["n"] for r in rows}) > 1:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.legend()
    ax.set_title("forward latency")
    return _finish(fig, path)


def render_costmodel(rows: list[dict], path: str) -> str:
    """FLOP totals vs N for the four variants."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    rows = sorted(rows, key=lambda r: r["N"])
    ns = [r["N"] for r in rows]
    for key in ("flops_full", "flops_lowrank", "flops_kernel", "flops_flurka"):
        ax.plot(ns, [r[key] for r in rows], marker=".", label=key.removeprefix("flops_"))
    crossovers = {r.get("crossover_n") for r in rows} - {None, ""}
    for c in crossovers:
        ax.axvline(int(c), color="gray", linestyle=":", linewidth=1)
    ax.set_xlabel("sequence length N")
    ax.set_ylabel("FLOPs")
    if len(set(ns)) > 1:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.legend()
    ax.set_title("cost model")
    return _finish(fig, path)


def render_rank(rows: list[dict], path: str) -> str:
    """Layer x head heatmap of kernelized attention matrix ranks."""
    plt = _plt()
    layers = 1 + max(r["layer"] for r in rows)
    heads = 1 + max(r["head"] for r in rows)
    grid = [[0] * heads for _ in range(layers)]
    for r in rows:
        grid[r["layer"]][r["head"]] = r["rank"]
    fig, ax = plt.subplots(figsize=(1.2 + 0.7 * heads, 1.2 + 0.6 * layers))
    im = ax.imshow(grid, cmap="viridis", vmin=0, vmax=rows[0]["d_p"])
    for i in range(layers):
        for j in range(heads):
            ax.text(j, i, str(grid[i][j]), ha="center", va="center", color="white", fontsize=8)
    ax.set_xlabel("head")
    ax.set_ylabel("layer")
    ax.set_title(f"numerical rank (n={rows[0]['n']}, d_p={rows[0]['d_p']})")
    fig.colorbar(im, ax=ax, shrink=0.85)
    return _finish(fig, path)


def render_errbound(rows: list[dict], path: str) -> str:
    """Fused error against its two-term bound, one marker per trial."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    trials = [r["trial"] for r in rows]
    ax.plot(trials, [r["bound_sum"] for r in rows], marker="s", label="kernel + lowrank bound")
    ax.plot(trials, [r["err_fused_inf"] for r in rows], marker="o", label="fused error")
    ax.plot(trials, [r["err_kernel_inf"] for r in rows], marker=".", linestyle="--", label="kernel term")
    ax.plot(trials, [r["err_lowrank_inf"] for r in rows], marker=".", linestyle="--", label="lowrank term")
    ax.set_xlabel("trial")
    ax.set_ylabel("max-abs error")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.set_title("fused error vs triangle bound")
    return _finish(fig, path)


def render_loss(rows: list[dict], path: str, transferred_at: int | None = None) -> str:
    """Training curve; a vertical line marks the up-training hand-off."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot([r["step"] for r in rows], [r["loss"] for r in rows])
    if transferred_at is not None:
        ax.axvline(transferred_at, color="gray", linestyle=":", linewidth=1)
        ax.text(transferred_at, max(r["loss"] for r in rows), " transfer", fontsize=8, va="top")
    ax.set_xlabel("step")
    ax.set_ylabel("mse")
    ax.set_yscale("log")
    ax.set_title("toy training loss")
    return _finish(fig, path)

"""Figure data: KM curves, caterpillar intervals, alignment heatmap, worst-N list."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .manifest import write_csv
from .ranking import Alignment, UnderproductionResult, ordinal_ranks, underproduction_draws
from .survival.km import KMCurve

UNDERPRODUCTION_COLUMNS = ["package", "installs", "ri", "rq_mean", "U_mean", "U_median", "U_lo", "U_hi", "class"]


def underproduction_rows(result: UnderproductionResult, installs) -> list[list]:
    return [
        [pid, int(inst), f"{ri:.17g}", f"{rq:.17g}", f"{m:.17g}", f"{med:.17g}", f"{lo:.17g}", f"{hi:.17g}", c.value]
        for pid, inst, ri, rq, m, med, lo, hi, c in zip(
            result.package_ids, installs, result.ri, result.rq_mean, result.U_mean,
            result.U_median, result.U_lo, result.U_hi, result.classes)
    ]


def km_rows(curves: list[KMCurve]) -> list[list]:
    rows = []
    for c in curves:
        for t, s, n, d in zip(c.times, c.survival, c.n_risk, c.n_event):
            rows.append([c.stratum, f"{t:.10g}", f"{s:.17g}", int(n), int(d)])
    return rows


def caterpillar_rows(result: UnderproductionResult) -> list[list]:
    order = np.argsort(result.U_mean, kind="stable")
    return [
        [k + 1, result.package_ids[i], f"{result.U_mean[i]:.17g}", f"{result.U_lo[i]:.17g}",
         f"{result.U_hi[i]:.17g}", result.classes[i].value]
        for k, i in enumerate(order)
    ]


def heatmap_counts(ri, rq, grid: int = 50, mask=None) -> np.ndarray:
    """Count packages in a ``G x G`` grid of (importance rank, quality rank).

    ``G = min(grid, N)``. Rank ``r`` of ``N`` lands in bin
    ``floor((r - 1) * G / N)``. Rows index importance bins, columns quality.
    ``mask`` keeps the full-corpus binning but counts only selected packages.
    """
    ri = np.asarray(ri, dtype=float)
    rq = np.asarray(rq, dtype=float)
    N = len(ri)
    G = max(1, min(grid, N))
    counts = np.zeros((G, G), dtype=np.int64)
    if N == 0:
        return counts
    bi = np.clip(np.floor((ri - 1) * G / N).astype(int), 0, G - 1)
    bq = np.clip(np.floor((rq - 1) * G / N).astype(int), 0, G - 1)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        bi, bq = bi[mask], bq[mask]
    np.add.at(counts, (bi, bq), 1)
    return counts


def mean_quality_ranks(q_draws: np.ndarray) -> np.ndarray:
    return ordinal_ranks(np.asarray(q_draws).mean(axis=0)[None, :])[0]


def heatmap_rows(result: UnderproductionResult, rq_of_mean_q, grid: int = 50) -> list[list]:
    misaligned = [c is not Alignment.ALIGNED for c in result.classes]
    rows = []
    for panel, mask in (("all", None), ("misaligned", misaligned)):
        counts = heatmap_counts(result.ri, rq_of_mean_q, grid, mask)
        G = counts.shape[0]
        rows += [[panel, i, j, int(counts[i, j])] for i in range(G) for j in range(G)]
    return rows


def worst_rows(result: UnderproductionResult, top: int = 20) -> list[list]:
    order = np.lexsort((np.arange(result.N), -result.U_mean))[:top]
    return [
        [k + 1, result.package_ids[i], f"{result.U_mean[i]:.17g}", f"{result.U_q25[i]:.17g}",
         f"{result.U_median[i]:.17g}", f"{result.U_q75[i]:.17g}", f"{result.U_lo[i]:.17g}",
         f"{result.U_hi[i]:.17g}"]
        for k, i in enumerate(order)
    ]


def write_report(out_dir, curves, result: UnderproductionResult, q_draws, top=20, grid=50,
                 svg=False, manifest_hash=None) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rq_mean_q = mean_quality_ranks(q_draws)
    paths = {name: out_dir / f"{name}.csv" for name in ("km", "caterpillar", "heatmap", "worst")}
    write_csv(paths["km"], ["stratum", "time", "survival", "n_risk", "n_event"], km_rows(curves), manifest_hash)
    write_csv(paths["caterpillar"], ["order", "package", "U_mean", "U_lo", "U_hi", "class"],
              caterpillar_rows(result), manifest_hash)
    write_csv(paths["heatmap"], ["panel", "ri_bin", "rq_bin", "count"],
              heatmap_rows(result, rq_mean_q, grid), manifest_hash)
    write_csv(paths["worst"], ["rank", "package", "U_mean", "U_q25", "U_median", "U_q75", "U_lo", "U_hi"],
              worst_rows(result, top), manifest_hash)
    if svg:
        paths.update(render_svg(out_dir, curves, result, rq_mean_q, q_draws, top, grid))
    return paths


def _mpl_version() -> tuple[int, int]:
    import matplotlib

    return tuple(int(x) for x in matplotlib.__version__.split(".")[:2])


def render_svg(out_dir, curves, result, rq_mean_q, q_draws, top, grid) -> dict[str, Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    paths = {}

    fig, ax = plt.subplots(figsize=(6, 4))
    for c in curves:
        if len(c.times):
            ax.step(np.concatenate([[0], c.times]), np.concatenate([[1], c.survival]), where="post", label=c.stratum)
    ax.set_xscale("symlog")
    ax.set_xlabel("days since opened")
    ax.set_ylabel("share unresolved")
    ax.legend(fontsize=7)
    paths["km_svg"] = out_dir / "km.svg"
    fig.savefig(paths["km_svg"])
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    order = np.argsort(result.U_mean, kind="stable")
    x = np.arange(result.N)
    colors = {Alignment.ALIGNED: "grey", Alignment.UNDERPRODUCED: "tab:red", Alignment.OVERPRODUCED: "tab:blue"}
    for k, i in enumerate(order):
        ax.plot([x[k], x[k]], [result.U_lo[i], result.U_hi[i]], color=colors[result.classes[i]], lw=0.6)
    ax.axhline(0, color="black", lw=0.5)
    ax.set_xlabel("package (sorted by mean U)")
    ax.set_ylabel("U (95% interval)")
    paths["caterpillar_svg"] = out_dir / "caterpillar.svg"
    fig.savefig(paths["caterpillar_svg"])
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(heatmap_counts(result.ri, rq_mean_q, grid).T, origin="lower", cmap="viridis")
    ax.set_xlabel("importance rank bin")
    ax.set_ylabel("quality rank bin")
    paths["heatmap_svg"] = out_dir / "heatmap.svg"
    fig.savefig(paths["heatmap_svg"])
    plt.close(fig)

    worst = [result.package_ids.index(r[1]) for r in worst_rows(result, top)]
    U = underproduction_draws(result.ri, ordinal_ranks(q_draws))
    fig, ax = plt.subplots(figsize=(6, max(2, 0.25 * len(worst))))
    # "orientation" replaced "vert" in matplotlib 3.10
    flip = {"orientation": "horizontal"} if _mpl_version() >= (3, 10) else {"vert": False}
    ax.boxplot([U[:, i] for i in worst][::-1], showfliers=False, whis=(2.5, 97.5), **flip)
    ax.set_yticks(range(1, len(worst) + 1), [result.package_ids[i] for i in worst][::-1], fontsize=6)
    ax.set_xlabel("U")
    paths["worst_svg"] = out_dir / "worst.svg"
    fig.tight_layout()
    fig.savefig(paths["worst_svg"])
    plt.close(fig)
    return paths

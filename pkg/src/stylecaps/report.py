"""Score rater responses and write tables, a JSON summary and figures."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from stylecaps.evalkit import (  # noqa: E402
    COMPOSITIONAL_LABELS,
    RaterResponse,
    compositional_breakdown,
    group_by_tag,
    mos,
    split_recall,
    tag_recall,
)

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
}
# Fixed PNG metadata keeps figures byte-stable across runs.
PNG_METADATA = {"Software": None}


@dataclass
class ScoreReport:
    metrics: dict
    per_tag_rows: list[tuple[str, int, float]]
    files: list[str]


def _finite(x: float) -> float | None:
    return x if isinstance(x, (int, float)) and math.isfinite(x) else None


def compute_metrics(responses: Sequence[RaterResponse], item_majority: bool = False) -> dict:
    metrics: dict = {"n_responses": len(responses)}

    tagged = [r for r in responses if r.tag_heard is not None and r.tag is not None]
    if tagged:
        rec = tag_recall(group_by_tag(tagged), item_majority=item_majority)
        metrics["tag_recall"] = {
            "macro": _finite(rec.macro),
            "by_scope": {k: _finite(v) for k, v in split_recall(rec).items()},
            "per_tag": rec.per_tag,
            "support": rec.support,
            "excluded": rec.excluded,
            "counting": "item_majority" if item_majority else "per_response",
        }

    likert = [r for r in responses if r.likert is not None]
    if likert:
        mean, half = mos([r.likert for r in likert])
        metrics["mos"] = {"mean": mean, "ci95": _finite(half), "n": len(likert)}
        by_tag: dict[str, list[int]] = defaultdict(list)
        for r in likert:
            if r.tag is not None:
                by_tag[r.tag].append(r.likert)
        if by_tag:
            metrics["mos_by_tag"] = {}
            for tag in sorted(by_tag):
                m, h = mos(by_tag[tag])
                metrics["mos_by_tag"][tag] = {"mean": m, "ci95": _finite(h), "n": len(by_tag[tag])}

    comp = [r for r in responses if r.tags_heard_compositional is not None]
    if comp:
        b = compositional_breakdown(comp)
        metrics["compositional"] = {"fractions": b.fractions, "n_items": len(b.per_item), "ties": b.ties}
    return metrics


def _plot_recall(metrics: dict, path: Path) -> None:
    per_tag = metrics["tag_recall"]["per_tag"]
    tags = sorted(per_tag, key=lambda t: (-per_tag[t], t))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.25 * len(tags) + 1.5), 3.2))
        ax.bar(range(len(tags)), [per_tag[t] for t in tags], color="#4C72B0")
        macro = metrics["tag_recall"]["macro"]
        if macro is not None:
            ax.axhline(macro, color="#C44E52", linestyle="--", linewidth=1, label=f"macro {macro:.3f}")
            ax.legend(frameon=False)
        ax.set_xticks(range(len(tags)), tags, rotation=90)
        ax.set_ylim(0, 1)
        ax.set_ylabel("tag recall")
        fig.savefig(path, bbox_inches="tight", metadata=PNG_METADATA)
        plt.close(fig)


def _plot_mos(metrics: dict, path: Path) -> None:
    rows = metrics.get("mos_by_tag") or {"all": metrics["mos"]}
    labels = list(rows)
    means = [rows[k]["mean"] for k in labels]
    errs = [rows[k]["ci95"] or 0.0 for k in labels]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(3.0, 0.3 * len(labels) + 1.5), 3.2))
        ax.errorbar(range(len(labels)), means, yerr=errs, fmt="o", color="#55A868", capsize=3)
        ax.set_xticks(range(len(labels)), labels, rotation=90)
        ax.set_ylim(1, 5)
        ax.set_ylabel("MOS (95% CI)")
        fig.savefig(path, bbox_inches="tight", metadata=PNG_METADATA)
        plt.close(fig)


def _plot_compositional(metrics: dict, path: Path) -> None:
    fr = metrics["compositional"]["fractions"]
    colors = ("#4C72B0", "#55A868", "#DD8452", "#8C8C8C")
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 1.6))
        left = 0.0
        for label, color in zip(COMPOSITIONAL_LABELS, colors):
            ax.barh([0], [fr[label]], left=left, color=color, label=label.replace("_", " "))
            left += fr[label]
        ax.set_xlim(0, 1)
        ax.set_yticks([])
        ax.grid(False)
        ax.legend(ncol=4, frameon=False, bbox_to_anchor=(0.5, -0.35), loc="upper center")
        fig.savefig(path, bbox_inches="tight", metadata=PNG_METADATA)
        plt.close(fig)


def _summary_text(metrics: dict) -> str:
    lines = [f"responses: {metrics['n_responses']}"]
    if "tag_recall" in metrics:
        tr = metrics["tag_recall"]
        fmt = lambda v: "n/a" if v is None else f"{v:.4f}"  # noqa: E731
        lines.append(f"tag recall (macro, {tr['counting']}): {fmt(tr['macro'])}")
        for scope, v in tr["by_scope"].items():
            lines.append(f"  {scope}: {fmt(v)}")
        if tr["excluded"]:
            lines.append(f"  excluded (no responses): {', '.join(tr['excluded'])}")
    if "mos" in metrics:
        m = metrics["mos"]
        ci = "n/a" if m["ci95"] is None else f"{m['ci95']:.4f}"
        lines.append(f"MOS: {m['mean']:.4f} +/- {ci} (n={m['n']})")
    if "compositional" in metrics:
        fr = metrics["compositional"]["fractions"]
        lines.append("compositional: " + ", ".join(f"{k}={fr[k]:.4f}" for k in COMPOSITIONAL_LABELS))
    return "\n".join(lines) + "\n"


def write_report(
    responses: Sequence[RaterResponse], out_dir: str | Path, item_majority: bool = False, figures: bool = True
) -> ScoreReport:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics = compute_metrics(responses, item_majority)
    files = []

    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    files.append("metrics.json")

    rows = []
    if "tag_recall" in metrics:
        tr = metrics["tag_recall"]
        rows = [(t, tr["support"][t], tr["per_tag"][t]) for t in sorted(tr["per_tag"])]
    with open(out / "per_tag.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("tag\tn\trecall\n")
        for tag, n, v in rows:
            fh.write(f"{tag}\t{n}\t{v:.6f}\n")
    files.append("per_tag.tsv")

    (out / "summary.txt").write_text(_summary_text(metrics), encoding="utf-8")
    files.append("summary.txt")

    if figures:
        for key, name, plot in (
            ("tag_recall", "tag_recall.png", _plot_recall),
            ("mos", "mos.png", _plot_mos),
            ("compositional", "compositional.png", _plot_compositional),
        ):
            if key in metrics:
                plot(metrics, out / name)
                files.append(name)
    return ScoreReport(metrics, rows, files)

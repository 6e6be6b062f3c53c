"""Render result tables from stored artifacts, with no recomputation."""

from __future__ import annotations

import json
from pathlib import Path

from .analytics import SENTIMENTS, RobustnessReport, robustness_from_dict
from .pipeline import artifact_path
from .spectral import DefenseEvalRow, read_sweep


class ReportError(FileNotFoundError):
    pass


def _table(title: str, headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]
    lines = [title]
    lines.append("  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip())
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


def _fmt(value: float | None, digits: int = 4) -> str:
    if value is None:
        return "-"
    return f"{value:.{digits}f}"


def _pct(value: float | None) -> str:
    if value is None:
        return "-"
    return f"{100 * value:.2f}"


def render_summary_table(report: RobustnessReport) -> str:
    rows = [
        ["Accuracy (Clean)", _fmt(report.accuracy_clean)],
        ["Accuracy (Poisoned)", _fmt(report.accuracy_poisoned)],
        ["Accuracy Drop", _fmt(report.accuracy_drop)],
        ["Flip Rate", _fmt(report.flip_rate)],
        ["Poisoning Success Rate", _fmt(report.poisoning_success_rate)],
        ["Abstentions (Clean)", str(report.abstentions_clean)],
        ["Abstentions (Poisoned)", str(report.abstentions_poisoned)],
    ]
    return _table("Table 1: Accuracy and flip summary", ["Metric", "Value"], rows)


def render_per_class_table(report: RobustnessReport) -> str:
    rows = [[s.value, _fmt(report.per_class_flip[s])] for s in SENTIMENTS]
    return _table("Table 2: Flip rate per sentiment class", ["Sentiment Class", "Flip Rate"], rows)


def render_macro_table(which: str, macro: tuple[float, float, float]) -> str:
    titles = {"clean": "Table 3: Macro averages, clean predictions",
              "poisoned": "Table 4: Macro averages, poisoned predictions"}
    rows = [
        ["Precision", _fmt(macro[0])],
        ["Recall", _fmt(macro[1])],
        ["F1-Score", _fmt(macro[2])],
    ]
    return _table(titles[which], ["Metric", "Value"], rows)


def render_model_table(report: RobustnessReport) -> str:
    rows = [
        ["ICL (Clean)", f"{report.accuracy_clean:.6f}"] + [f"{v:.6f}" for v in report.macro_clean],
        ["ICL (Poisoned)", f"{report.accuracy_poisoned:.6f}"] + [f"{v:.6f}" for v in report.macro_poisoned],
    ]
    return _table(
        "Table 5: Macro-averaged performance metrics",
        ["Model", "Accuracy", "Precision", "Recall", "F1"],
        rows,
    )


def render_sweep_table(rows: list[DefenseEvalRow]) -> str:
    body = [
        [
            f"{round(100 * row.poison_ratio):d}%",
            str(row.n_poisoned),
            str(row.n_flagged),
            _pct(row.paper_ratio_rate),
            _pct(row.true_recall),
            _pct(row.post_defense_icl_accuracy),
        ]
        for row in rows
    ]
    return _table(
        "Table 6: Post-defense evaluation by poisoning ratio",
        ["Poisoning Ratio", "# Poisoned", "# Flagged", "Detection Rate (%)", "True Recall (%)", "Post-Defense ICL Accuracy (%)"],
        body,
    )


def render_report(out_dir: str | Path) -> str:
    """All six tables from a run directory's stored artifacts."""
    out_dir = Path(out_dir)
    robustness_path = artifact_path(out_dir, "robustness_json")
    sweep_path = artifact_path(out_dir, "sweep")
    for path in (robustness_path, sweep_path):
        if not path.exists():
            raise ReportError(f"missing artifact: {path}")
    with open(robustness_path, encoding="utf-8") as fh:
        report = robustness_from_dict(json.load(fh))
    sweep_rows = read_sweep(sweep_path)
    sections = [
        render_summary_table(report),
        render_per_class_table(report),
        render_macro_table("clean", report.macro_clean),
        render_macro_table("poisoned", report.macro_poisoned),
        render_model_table(report),
        render_sweep_table(sweep_rows),
    ]
    defense_path = artifact_path(out_dir, "defense")
    if defense_path.exists():
        with open(defense_path, encoding="utf-8") as fh:
            defense = json.load(fh)
        notes = [
            f"flagged {defense.get('n_flagged')} of {defense.get('n_total')} support examples",
            f"avg polarity after defense: {_fmt(defense.get('avg_polarity'))}",
            f"logreg validation accuracy (train/test): "
            f"{_fmt(defense.get('logreg_train_accuracy'))}/{_fmt(defense.get('logreg_test_accuracy'))}",
        ]
        sections.append("Defense notes: " + "; ".join(notes))
    return "\n\n".join(sections)

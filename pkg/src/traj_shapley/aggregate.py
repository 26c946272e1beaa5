"""Dataset-level summaries of local attributions.

The history feature is present in every query, so its values are simply
averaged. Neighbors differ from query to query; for them we take the best
neighbor per query and average that over the queries that have neighbors at
all (the social interaction score). Injected random agents are summarized
the same way.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .attribution import FeatureKind, LocalAttribution
from .errors import EmptyInput


@dataclass
class GlobalReport:
    phi_history: float
    social_interaction_score: float
    random_agent_score: float | None
    num_queries: int
    num_queries_with_neighbors: int
    num_queries_with_injected: int = 0
    label: str = ""
    locals: list[LocalAttribution] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "payout": "negative loss (positive = feature improves performance)",
            "phi_history": self.phi_history,
            "social_interaction_score": self.social_interaction_score,
            "random_agent_score": self.random_agent_score,
            "num_queries": self.num_queries,
            "num_queries_with_neighbors": self.num_queries_with_neighbors,
            "num_queries_with_injected": self.num_queries_with_injected,
            "neighborless_queries": "excluded from the social interaction score",
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GlobalReport":
        return cls(
            float(doc["phi_history"]),
            float(doc["social_interaction_score"]),
            None if doc.get("random_agent_score") is None else float(doc["random_agent_score"]),
            int(doc["num_queries"]),
            int(doc["num_queries_with_neighbors"]),
            int(doc.get("num_queries_with_injected", 0)),
            doc.get("label", ""),
        )


def local_max(attr: LocalAttribution, kind: FeatureKind) -> float | None:
    """Largest value among ``kind`` features of one query, ``None`` if it has none."""
    values = attr.values(kind)
    return float(values.max()) if len(values) else None


def aggregate(locals_: Sequence[LocalAttribution], label: str = "") -> GlobalReport:
    if not locals_:
        raise EmptyInput("aggregate needs at least one local attribution")
    history = [float(a.values(FeatureKind.HISTORY)[0]) for a in locals_]
    social = [m for a in locals_ if (m := local_max(a, FeatureKind.NEIGHBOR)) is not None]
    random = [m for a in locals_ if (m := local_max(a, FeatureKind.INJECTED)) is not None]
    return GlobalReport(
        phi_history=float(np.mean(history)),
        social_interaction_score=float(np.mean(social)) if social else 0.0,
        random_agent_score=float(np.mean(random)) if random else None,
        num_queries=len(locals_),
        num_queries_with_neighbors=len(social),
        num_queries_with_injected=len(random),
        label=label,
        locals=list(locals_),
    )


_COMPARED = ("phi_history", "social_interaction_score", "random_agent_score")


def compare_reports(a: GlobalReport, b: GlobalReport) -> list[tuple[str, float | None, float | None, float | None]]:
    """Rows ``(metric, a, b, a - b)``; the difference is ``None`` when either side is absent."""
    rows = []
    for name in _COMPARED:
        va, vb = getattr(a, name), getattr(b, name)
        rows.append((name, va, vb, None if va is None or vb is None else va - vb))
    return rows


def _cell(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def comparison_csv(rows, label_a: str = "a", label_b: str = "b") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", label_a, label_b, "diff"])
    for name, va, vb, d in rows:
        w.writerow([name, _cell(va), _cell(vb), _cell(d)])
    return buf.getvalue()


def report_json(report: GlobalReport) -> str:
    return json.dumps(report.to_json(), indent=2) + "\n"


def bar_chart_svg(reports: Sequence[GlobalReport], width: int = 640, height: int = 360) -> str:
    """Grouped bars (history, social score, random-agent score) per report."""
    series = [("history", "phi_history", "#c0392b"), ("social", "social_interaction_score", "#2471a3"),
              ("random", "random_agent_score", "#7f8c8d")]
    values = [getattr(r, attr) for r in reports for _, attr, _ in series]
    finite = [v for v in values if v is not None]
    top = max([0.0] + finite)
    bottom = min([0.0] + finite)
    span = (top - bottom) or 1.0
    margin, plot_h = 40, height - 80
    plot_w = width - 2 * margin
    group_w = plot_w / max(1, len(reports))
    bar_w = group_w / (len(series) + 1)

    def y_of(v: float) -> float:
        return margin + (top - v) / span * plot_h

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<line x1="{margin}" y1="{y_of(0.0):.2f}" x2="{width - margin}" y2="{y_of(0.0):.2f}" stroke="black"/>']
    for g, report in enumerate(reports):
        x0 = margin + g * group_w + bar_w / 2
        for s, (name, attr, color) in enumerate(series):
            v = getattr(report, attr)
            if v is None:
                continue
            y1, y2 = sorted((y_of(v), y_of(0.0)))
            out.append(f'<rect x="{x0 + s * bar_w:.2f}" y="{y1:.2f}" width="{bar_w * 0.9:.2f}" '
                       f'height="{max(y2 - y1, 0.5):.2f}" fill="{color}"><title>{name}: {v:.4g}</title></rect>')
        label = report.label or f"model {g + 1}"
        out.append(f'<text x="{margin + (g + 0.5) * group_w:.2f}" y="{height - 20}" text-anchor="middle" '
                   f'font-size="12">{_escape(label)}</text>')
    for s, (name, _, color) in enumerate(series):
        out.append(f'<rect x="{margin + s * 90}" y="8" width="10" height="10" fill="{color}"/>'
                   f'<text x="{margin + s * 90 + 14}" y="17" font-size="11">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")

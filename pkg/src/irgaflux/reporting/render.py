import math
import re
from typing import Any, Dict, Mapping, Optional

from jinja2 import Template

from irgaflux.reporting.templates import (
    COMPARISON_TEMPLATE,
    DIAGNOSTICS_TEMPLATE,
    RUN_SUMMARY_TEMPLATE,
)


def _render(raw_template: str, content: Dict[str, Any]) -> str:
    rendered = Template(raw_template, trim_blocks=True).render(content)
    return re.sub(r"\n{3,}", "\n\n", rendered).strip()


def _fmt_log_odds(value: Optional[float]) -> str:
    if value is None or math.isinf(value):
        return "inf"
    return f"{value:.3f}"


def _or_nan(value: Optional[float]) -> float:
    return float("nan") if value is None else value


def render_run_summary(document: Any) -> str:
    """Human-readable table of a run's per-variable results."""
    rows = []
    if document.inclusion_probs is not None:
        for j, name in enumerate(document.variables):
            rows.append(
                {
                    "name": name,
                    "prob": document.inclusion_probs[j],
                    "log_odds": _fmt_log_odds(document.log_odds[j]),
                    "mean": document.posterior_mean[j],
                    "sd": _or_nan(document.posterior_sd[j]),
                }
            )
    return _render(
        RUN_SUMMARY_TEMPLATE,
        {
            "mode": document.mode,
            "seed": document.seed,
            "sigma2": document.sigma2,
            "rows": rows,
            "timings": document.timings,
        },
    )


def render_comparison(
    comparison: Any,
    n: int,
    reference: str = "Gibbs",
    average_se: Optional[float] = None,
) -> str:
    """Min, quartiles, max and mean of absolute log-odds differences."""
    return _render(
        COMPARISON_TEMPLATE,
        {"c": comparison, "n": n, "reference": reference, "average_se": average_se},
    )


def render_diagnostics(check: str, fields: Mapping[str, Any]) -> str:
    return _render(DIAGNOSTICS_TEMPLATE, {"check": check, "fields": dict(fields)})

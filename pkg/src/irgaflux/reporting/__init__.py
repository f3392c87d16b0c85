from irgaflux.reporting.render import (
    render_comparison,
    render_diagnostics,
    render_run_summary,
)

__all__ = ["render_comparison", "render_diagnostics", "render_run_summary"]

RUN_SUMMARY_TEMPLATE = """
irgaflux {{ mode }} run (seed {{ seed }})
{% if sigma2 is not none %}
sigma2: {{ "%.6g"|format(sigma2) }}
{% endif %}
{% if rows %}
{{ "%-16s %10s %10s %12s %12s"|format("variable", "prob", "log-odds", "mean", "sd") }}
{% for row in rows %}
{{ "%-16s %10.4f %10s %12.5g %12.5g"|format(row.name, row.prob, row.log_odds, row.mean, row.sd) }}
{% endfor %}
{% endif %}
{% if timings %}

Timings (s):
{% for step, seconds in timings.items() %}
  {{ step }}: {{ "%.3f"|format(seconds) }}
{% endfor %}
{% endif %}
"""

COMPARISON_TEMPLATE = """
Absolute log-odds difference against {{ reference }} ({{ n }} variables)
{{ "%8s %8s %8s %8s %8s %8s"|format("min", "Q1", "median", "Q3", "max", "mean") }}
{{ "%8.3f %8.3f %8.3f %8.3f %8.3f %8.3f"|format(c.min, c.q1, c.median, c.q3, c.max, c.mean) }}
{% if average_se is not none %}
Reference batch-means SE (average): {{ "%.2g"|format(average_se) }}
{% endif %}
"""

DIAGNOSTICS_TEMPLATE = """
Diagnostic `{{ check }}`
{% for key, value in fields.items() %}
  {{ key }}: {{ value }}
{% endfor %}
"""

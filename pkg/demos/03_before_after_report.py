"""Compare national proportions in random samples before and after filtering.

Counts here are illustrative: three countries with roughly three quarters
national users in a random sample, and the share measured again in a sample
drawn from the users the model kept.

    python3 demos/03_before_after_report.py
"""
from natforest.classify_eval import ReportRow, build_report
from natforest.sampling import estimate_proportion

before = [ReportRow("North", 120_000, 385, 301), ReportRow("South", 45_000, 385, 288)]
after = [ReportRow("North", 88_000, 385, 360), ReportRow("South", 30_500, 385, 349)]
report = build_report(before, after)
print(report.to_text())

for row in before + after:
    p, lo, hi = estimate_proportion(row.class1, row.sample)
    print(f"{row.name:6s} {100 * p:6.2f}%  95% interval {100 * lo:.2f} to {100 * hi:.2f}")

"""Comparing estimators over many replicates with the study harness.

``run_study`` simulates every (scenario, replicate) pair from its own
seed, fits each estimator and reports MSE ratios against a reference fit.
The bundled ``baseline-desk`` configuration runs 200 replicates at two
quality factors in well under a minute.  The same study is available as
``psdcalib study baseline-desk --out-dir results``.
"""

import sys

from psdcalib.study import bundled_config, run_study

replicates = int(sys.argv[1]) if len(sys.argv) > 1 else 50
cfg = bundled_config("baseline-desk", replicates=replicates)
summary = run_study(cfg)

print(f"{replicates} replicates, MSE relative to {summary.reference}")
print(f"{'scenario':>15}{'fit':>6}{'param':>6}{'ratio':>9}{'rel. bias':>11}")
for r in summary.rows:
    if r["fit"] != summary.reference:
        print(f"{r['scenario']:>15}{r['fit']:>6}{r['param']:>6}{r['ratio']:9.3f}{r['rel_bias']:+11.4f}")

"""
Runtime against the number of buses
===================================

Median wall-clock time of one topology recovery (noise estimate, mixing
estimate, constrained step, thresholding) on Watts-Strogatz graphs with
``||L||_F = 5``, unit noise and ``c^2 = 10``.
"""

from mlbest import harness

Ms = [10, 20, 40]
cfg = harness.config_from_dict(
    {
        "scenario": {"watts_strogatz": {"M": Ms, "frobenius_norm": 5.0}},
        "N_list": [200],
        "sigma2": [1.0],
        "prior_c": 10**0.5,
        "mc_trials": 5,
    }
)
rows = harness.runtime_benchmark(cfg)
for r in rows:
    print(f"M={r.M:>3} {r.method:>22}: {r.median_runtime_s * 1e3:8.2f} ms")

for method in sorted({r.method for r in rows}):
    times = [r.median_runtime_s for r in rows if r.method == method]
    print(f"{method}: log-log slope {harness.loglog_slope(Ms, times):.2f}")

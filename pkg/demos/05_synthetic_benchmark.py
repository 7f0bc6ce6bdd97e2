"""Accuracy on generated attack chains and the speedup from the reductions.

Takes about half a minute.  The baseline skips grouping and pruning; when it
runs out of time the speedup shown is a lower bound.
"""

from chaincheck.bench import gen_pool, run_accuracy, run_benchmark, summarize

for mode in ("escalation", "privacy"):
    for negative in (False, True):
        res = run_accuracy(100, mode=mode, negative=negative, seed=1)
        kind = "broken chains" if negative else "planted chains"
        print(f"{mode:10s} {kind:15s} {res['correct']}/{res['total']} correct")

pool = gen_pool(0)
rows = run_benchmark([10, 100, 300], trials=2, seed=1, pool=pool, timeout=5)
for entry in summarize(rows):
    opt = entry["optimized"]["mean_ms"]
    base = entry["baseline"]
    line = f"{entry['size']:4d} rules: optimized {opt:8.1f} ms, baseline {base['mean_ms']:8.1f} ms"
    if base["censored"]:
        line += f" ({base['censored']} runs hit the budget)"
    bound = ">=" if entry["speedup_is_lower_bound"] else ""
    print(line + f", speedup {bound}{entry['speedup']:.0f}x")

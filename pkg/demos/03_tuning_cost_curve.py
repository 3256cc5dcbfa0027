"""Tune search parameters against different quality objectives and compare
what each target costs.

The cost model charges bytes read per query (centroid scan + candidate scan +
rescoring). Because tolerant and semantic recall forgive retrievals that plain
recall punishes, tuning against them reaches the same nominal target at a
lower operating point — that difference, in percent, is the payoff.

Run:  python3 demos/03_tuning_cost_curve.py
"""

from annquality import metrics, synth, tuning
from annquality.exact import Metric, brute_force_topk
from annquality.ivf import build_index, train_kmeans
from annquality.judge import synthetic_oracle_judge

K = 20

base = synth.SynthSpec(
    n_docs=5000, dim=32, n_clusters=25, cluster_std=0.2, n_queries=100, seed=1
)
spec = synth.skew_profile(base, "bimodal", k=K)
docs, queries, oracle = synth.generate(spec)
gt = brute_force_topk(queries, docs, K, Metric.INNER_PRODUCT)
judgments = synthetic_oracle_judge(gt, oracle)

centroids = train_kmeans(docs, 32, iters=15, seed=2)
index = build_index(docs, centroids, quantize=True)
x = metrics.tolerance_proxy(gt, K)

grid = tuning.default_grid(index.nlist, K)
print(f"sweeping {len(grid)} configurations (nprobe x reorder_k), x = {x:.2f}%")
trials = tuning.sweep(index, queries, gt, "recall", grid, judgments, x=x)

# The Pareto front: configurations no other config beats on both axes.
front = tuning.pareto(trials)
print("\nPareto front (recall vs mean bytes/query):")
print(f"{'nprobe':>6} {'reorder':>8} {'recall':>8} {'bytes':>10}")
for t in front:
    print(f"{t.params.nprobe:>6} {t.params.reorder_k:>8} "
          f"{t.achieved:8.3f} {t.cost:10.0f}")

# Tune to a target three ways and compare costs.
target = 0.98
out = tuning.cost_savings_experiment(index, queries, gt, judgments, grid, x, target)
a = out["recall_tuned"]
print(f"\ntarget recall >= {target}:")
print(f"  tuned on recall:   nprobe={a.params.nprobe:<3} "
      f"cost={a.cost:.0f} (trecall={a.extras['trecall']:.3f}, "
      f"srecall={a.extras['srecall']:.3f})")
for key, label in (
    ("trecall_retuned", "retuned on trecall"),
    ("srecall_retuned", "retuned on srecall"),
    ("trecall_direct", "trecall >= target "),
):
    t = out[key]
    print(f"  {label}: nprobe={t.params.nprobe:<3} cost={t.cost:.0f}")
print(f"\nsavings vs recall-tuned config:")
print(f"  matching its trecall: {out['savings_trecall_pct']:5.1f}%")
print(f"  matching its srecall: {out['savings_srecall_pct']:5.1f}%")
print(f"  targeting trecall >= {target} directly: "
      f"{out['savings_direct_trecall_pct']:5.1f}%")

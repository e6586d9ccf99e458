"""Benchmark runs: a verified report, a strong-scaling table, and the analytic model."""

import json

from distfft.bench import ComplexityModel, RunConfig, flops_estimate, predict_terms, run, strong_scaling

rep = run(RunConfig(dims=(8, 8, 8), grid=(2, 2), kind="c2c", reps=3))
print("verified:", rep["verification"]["verified"], " median breakdown (s):")
print(json.dumps(rep["timing"]["median"], indent=2))

cfg = RunConfig(dims=(16, 16, 16), nprocs=1, backend="costmodel", staging_inv_bw=1e-10,
                pipelined=True, chunks=2, reps=1, warmup=0, verify="off")
print(f"\n{'P':>2} {'grid':>6} {'local_fft us':>13} {'wire us':>9} {'total us':>9} {'model us':>9}")
for r in strong_scaling(cfg, [1, 2, 4, 8]):
    t = r["timing"]["min"]
    grid = "x".join(map(str, r["problem"]["grid"]))
    print(f"{r['problem']['ranks']:2d} {grid:>6} {t['local_fft'] * 1e6:13.3f} {t['wire_comm'] * 1e6:9.3f} "
          f"{t['total'] * 1e6:9.3f} {r['model_seconds'] * 1e6:9.3f}")

print("\n5 N log2 N for 1024^3:", flops_estimate((1024,) * 3))
for p in (8, 64, 512):
    _, hyper = predict_terms((1024,) * 3, p, ComplexityModel("hypercube"))
    _, torus = predict_terms((1024,) * 3, p, ComplexityModel("torus3d"))
    print(f"P={p:3d}: torus / hypercube communication term = {torus / hyper:.3f}")

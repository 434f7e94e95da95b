"""Channel accuracy against noise level and particle count."""
import os

from codesmux import ExperimentConfig, PipelineConfig, build_pipeline, run_experiment

pipe = build_pipeline(PipelineConfig(rng_seed=0))

# 20 trials per cell keeps this quick; the acceptance suite uses 100
trials = int(os.environ.get("TRIALS", "20"))
cfg = ExperimentConfig(pipe.model, pipe.truth_scaling, noise_levels=(0.0, 0.05, 0.1, 0.2),
                       event_counts=(5, 10, 15), trials=trials)
agg, rows = run_experiment(cfg)
for c in agg["cells"]:
    print(f"sigma={c['noise_sigma_v']:.2f}  n={c['n_events']:2d}  "
          f"accuracy={c['accuracy_mean']:.3f}±{c['accuracy_std']:.3f}  "
          f"speed MAE={c['speed_mae_mean']:.0f} um/s")

"""Decoding the ten-particle, 60 ms sequence 8, 7, 8, 6, 6, 7, 8, 7, 9, 7."""
import time

from codesmux import PipelineConfig, build_pipeline, decode_record, score
from codesmux.evaluate import REPLAY_CHANNELS, ExperimentConfig, run_trial
from codesmux.synth import noise_sigma_for_snr

# calibration, training and K selection on simulated data
pipe = build_pipeline(PipelineConfig(rng_seed=0))
print("K =", pipe.model.k)

cfg = ExperimentConfig(pipe.model, pipe.truth_scaling, channels=REPLAY_CHANNELS, trials=1)
t0 = time.perf_counter()
events, result, report = run_trial(cfg, noise_sigma_for_snr(20), len(REPLAY_CHANNELS), 0)
print(f"decoded in {time.perf_counter() - t0:.2f} s")
print("expected:", [e.channel for e in events])
print("decoded: ", result.channels)
print("clusters:", result.clusters)

for e, d in zip(events, result.events):
    print(f"{e.channel} {d.sensor_id}  v={e.speed_um_s:8.0f} est={d.est_speed_um_s:8.0f}"
          f"  A={e.amplitude_v:.3f} est={d.est_amplitude_v:.3f}")
print("accuracy:", report.channel_accuracy, "speed MAE:", report.speed_mae_um_s)

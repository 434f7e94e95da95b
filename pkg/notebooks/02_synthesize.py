"""Simulating the two output channels for a handful of particles."""
import numpy as np

from codesmux import (ParticleEvent, ScalingTable, SynthConfig, detect_pulses, generate_codebook,
                      noise_sigma_for_snr, synthesize_record)

book = generate_codebook(10, 5)
scaling = ScalingTable.random(book, 0.5, 1.2, rng_seed=1)

# one particle through sensor 4 (code 10101): one pre-coding pulse, three code pulses
events = [ParticleEvent(4, 3e-3, 30_000, 1.0)]
rec = synthesize_record(events, SynthConfig(book, scaling, duration_s=0.012))
print("pre peaks:", detect_pulses(rec.pre_channel, rec.sample_rate_hz, 0.3))
print("code peaks:", detect_pulses(rec.code_channel, rec.sample_rate_hz, 0.2))

# one bit pitch (30 um) takes 1 ms at 30 000 um/s, so bits 1, 3 and 5 are 2 ms apart
print("pulse spacing (ms):", np.diff(detect_pulses(rec.code_channel, rec.sample_rate_hz, 0.2)) / 50)

# the same particle at 20 dB peak SNR
noisy = synthesize_record(events, SynthConfig(book, scaling, noise_sigma_for_snr(20), rng_seed=3,
                                              duration_s=0.012))
print("noise RMS:", noisy.pre_channel[:100].std())

# records are linear in their events
a = [ParticleEvent(2, 2e-3, 25_000, 0.9)]
b = [ParticleEvent(7, 4e-3, 33_000, 1.1)]
cfg = SynthConfig(book, scaling, duration_s=0.02)
ra, rb, rab = (synthesize_record(e, cfg) for e in (a, b, a + b))
print("superposition error:", np.abs(rab.code_channel - ra.code_channel - rb.code_channel).max())

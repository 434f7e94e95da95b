"""Pulse features and K-NN speed regression, including the choice of K."""
import numpy as np

from codesmux import (ScalingTable, build_training_set, extract_features, generate_codebook,
                      isolated_records, knn_predict, pulse_waveform, select_k)

# a Hann lobe of duration T has widths T/3, T/2 and 2T/3 at 3/4, 1/2 and 1/4 of its peak
T, fs = 1e-3, 50_000.0
w = pulse_waveform(1.0, 5e-3, T, fs, 1000)
f = extract_features(w, fs, int(np.argmax(w)))
print("features:", f.x1_v, f.x2_s / T, f.x3_s / T, f.x4_s / T)

# training set: 400 isolated events on an even speed grid, with noise
book = generate_codebook(10, 5)
scaling = ScalingTable.random(book, 0.5, 1.2, rng_seed=1)
rng = np.random.default_rng(0)
speeds = np.linspace(22_000, 38_000, 400)
recs = isolated_records(book, scaling, speeds, rng.uniform(0.8, 1.2, 400),
                        [1 + i % 10 for i in range(400)], noise_sigma_v=0.1, rng_seed=2)
tset = build_training_set(recs, book, smoothing_s=3 / fs)

# repeated random sub-sampling: in-sample error grows with K, out-of-sample error dips
rep = select_k(tset, 40, rng_seed=0, standardize=True)
print("K*:", rep.k_star)
for k in (1, 5, 10, rep.k_star, 40):
    print(f"K={k:2d}  in={rep.in_sample_err[k - 1]:8.1f}  out={rep.out_sample_err[k - 1]:8.1f}")

pred = knn_predict(tset.X, tset, rep.k_star, standardize=True)
print("training RMSE at K*:", np.sqrt(np.mean((pred - tset.speeds) ** 2)))

"""Recovering per-bit scaling factors and the pulse shape from isolated events."""
import numpy as np

from codesmux import ScalingTable, canonical_pulse_shape, estimate_scaling, generate_codebook
from codesmux.evaluate import calibration_records

book = generate_codebook(10, 5)
truth = ScalingTable.random(book, 0.5, 1.2, rng_seed=7)

# twenty noiseless events per sensor
recs = calibration_records(book, truth, 20, rng_seed=7)
est = estimate_scaling([(r, e.channel) for r, e in recs], book)
for sid in book.sensor_ids:
    print(sid, np.round(truth.row(sid), 3), np.round(est.row(sid), 3))

# averaged, amplitude- and width-normalized pre-coding pulse
shape = canonical_pulse_shape(recs)
print("shape ends and peak:", shape[0], shape[-1], shape.max())

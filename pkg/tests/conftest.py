import numpy as np
import pytest

from codesmux import ScalingTable, generate_codebook
from codesmux.evaluate import PipelineConfig, build_pipeline


@pytest.fixture(scope="session")
def book():
    return generate_codebook(10, 5)


@pytest.fixture(scope="session")
def truth(book):
    return ScalingTable.random(book, 0.5, 1.2, rng_seed=1)


@pytest.fixture(scope="session")
def pipeline():
    """Default decoder: filtered, noisy-trained, K by validation."""
    return build_pipeline(PipelineConfig(rng_seed=0))


@pytest.fixture(scope="session")
def clean_pipeline():
    """Decoder without the pre-filter, trained on noiseless events."""
    return build_pipeline(PipelineConfig(rng_seed=0, training_noise_sigma_v=0.0,
                                         smoothing_s=0.0, k=1))


def hann_width(T, fraction):
    """Closed-form full width of a Hann lobe of duration T at ``fraction`` of its peak."""
    return T * (1 - np.arccos(1 - 2 * fraction) / np.pi)


def cluster_events(book, rng, n_events, gap_range=(1e-3, 3e-3)):
    """``n_events`` particles whose code waveforms overlap, plus a window that fits them."""
    from codesmux import ParticleEvent
    from codesmux.synth import event_extent

    t = 1.5e-3
    events = []
    for _ in range(n_events):
        events.append(ParticleEvent(int(rng.choice(book.sensor_ids)), t,
                                    float(rng.uniform(24_000, 36_000)), float(rng.uniform(0.8, 1.2))))
        t += rng.uniform(*gap_range)
    window = max(event_extent(e, book)[1] for e in events) + 1.5e-3
    return events, window

"""Simulation and decoding of code-multiplexed resistive pulse sensor networks."""

from .codebook import (CodeBook, SensorCode, SensorGeometry, cross_correlation,
                       generate_codebook, min_hamming_distance, validate_codebook)
from .calibrate import ScalingTable, canonical_pulse_shape, estimate_scaling
from .pulsefeat import (PulseFeatures, TruncatedPulseError, detect_pulses, extract_features,
                        normalize_pulse)
from .synth import (ParticleEvent, SignalRecord, SynthConfig, event_waveforms,
                    isolated_records, noise_sigma_for_snr, pulse_waveform, random_scenario,
                    synthesize_record)
from .speedknn import (KSelectionReport, TrainingSample, TrainingSet,
                       build_training_set, knn_predict, knn_speed, select_k)
from .decode import (CodeTemplate, DecodedEvent, DecodeResult, DecoderModel,
                     TemplateRangeError, build_template, decode_record, mmse_assign, prepare_candidates,
                     segment_pulses)
from .evaluate import (ExperimentConfig, PipelineConfig, ScoreReport, build_pipeline,
                       run_experiment, score)

__version__ = "0.1.0"

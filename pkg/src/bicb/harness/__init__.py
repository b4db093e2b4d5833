from .data import TrafficFormatError, load_traffic, write_traffic
from .episode import EpisodeResult, run_episode
from .experiment import ConfigError, load_config, run_experiment, validate_config
from .metrics import MetricsReport, compute_metrics
from .synth import SynthConfig, assumption1_check, synth_days, synth_generate

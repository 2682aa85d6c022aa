"""Speech emotion recognition from MFCC features.

Multi-scale convolutional front half, optional gated global fusion, and a
small reverse-mode autodiff core underneath; training uses mixup and Adam
with decoupled weight decay. The `glam` command drives the full pipeline:
synth -> features -> train -> eval, plus a gradient-check suite.
"""

from .audio import (AudioClip, FeatureSegment, FeatureStats, MfccConfig,
                    compute_mfcc, load_wav, log_mel_energies, mel_filterbank,
                    normalize_features, segment_frames, segment_step,
                    segment_utterance)
from .autodiff import (Tensor, backward, batchnorm2d, clear_grads, concat,
                       conv2d_same, gelu, layernorm, linear, matmul, maxpool2d,
                       relu, reshape, softmax_cross_entropy, split_half,
                       tensor_sum)
from .cache import cache_dir_for, config_hash, extract_features, load_features
from .errors import (ConfigError, DivergenceError, FormatError, GlamError,
                     GlamIOError, ParseError, ShapeError, StateError,
                     TooShortError, ValidationError)
from .experiment import ExperimentResult, RunResult, run_experiment
from .gradcheck import GradCheckReport, default_suite, full_model_case, grad_check, run_suite
from .manifest import CLASSES, UtteranceRecord, filter_records, parse_manifest
from .metrics import (MetricsReport, SplitSummary, aggregate_utterance,
                      compute_metrics, confusion_from_labels, make_splits,
                      metrics_from_confusion, summarize_runs)
from .model import (FUSION_MODES, ModelConfig, ParameterSet, glam_forward,
                    global_aware_forward, init_parameters, load_checkpoint,
                    parameter_count, save_checkpoint)
from .synth import generate_synth_dataset
from .tensorio import read_tensor, write_tensor
from .train import (TrainConfig, TrainResult, adam_step, evaluate_utterances,
                    lr_at_epoch, mixup_batch, sample_beta, train)

__version__ = "0.1.0"

"""MFCC frontend: WAV loading, framing, mel filterbank, segmentation.

The pipeline is the common speech recipe: pre-emphasis, 25 ms Hann windows
every 10 ms without centering, magnitude-squared FFT, triangular HTK-mel
filters spanning 0 Hz to Nyquist, natural log with an energy floor, and an
orthonormal DCT-II.  Utterances are then cut into fixed 2-second windows of
frames (with 1.6 s overlap) so every model input has one shape.
"""

import struct
import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.fft
import scipy.io.wavfile

from .errors import ConfigError, FormatError, GlamIOError, TooShortError, ValidationError

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class MfccConfig:
    sample_rate: int = 16000
    window_len: int = 400
    hop: int = 160
    fft_size: int = 512
    n_mels: int = 40
    n_mfcc: int = 40
    pre_emphasis: float = 0.97
    log_floor: float = 1e-10
    segment_seconds: float = 2.0
    segment_overlap_seconds: float = 1.6

    def __post_init__(self):
        if self.sample_rate <= 0 or self.window_len <= 0 or self.hop <= 0:
            raise ConfigError("sample_rate, window_len and hop must be positive")
        if self.fft_size < self.window_len:
            raise ConfigError(f"fft_size {self.fft_size} smaller than window_len {self.window_len}")
        if not 1 <= self.n_mfcc <= self.n_mels:
            raise ConfigError(f"n_mfcc {self.n_mfcc} must be in [1, n_mels={self.n_mels}]")
        if not 0.0 <= self.pre_emphasis < 1.0:
            raise ConfigError(f"pre_emphasis {self.pre_emphasis} must be in [0, 1)")
        if self.log_floor <= 0.0:
            raise ConfigError("log_floor must be positive")
        if not 0.0 <= self.segment_overlap_seconds < self.segment_seconds:
            raise ConfigError("segment overlap must be shorter than the segment")


def segment_frames(cfg: MfccConfig) -> int:
    """Frames in one analysis segment (198 under the defaults)."""
    n = int(round(cfg.segment_seconds * cfg.sample_rate))
    if n < cfg.window_len:
        raise ConfigError("segment shorter than one analysis window")
    return 1 + (n - cfg.window_len) // cfg.hop


def segment_step(cfg: MfccConfig) -> int:
    """Frame step between segment starts (40 under the defaults)."""
    step = int(round((cfg.segment_seconds - cfg.segment_overlap_seconds) * cfg.sample_rate / cfg.hop))
    if step < 1:
        raise ConfigError("segment step rounds to zero frames")
    return step


@dataclass
class AudioClip:
    samples: np.ndarray  # float64, mono, in [-1, 1] for PCM sources
    sample_rate: int


@dataclass
class FeatureSegment:
    """One fixed-size MFCC window of an utterance."""

    data: np.ndarray  # float32, (frames, n_mfcc)
    utterance_id: str = ""
    segment_index: int = 0
    label: int = -1


@dataclass
class FeatureStats:
    mean: np.ndarray  # (n_mfcc,)
    std: np.ndarray  # (n_mfcc,), floored at STD_FLOOR


def load_wav(path) -> AudioClip:
    """Read a PCM-16 or float-32 WAV; stereo is downmixed by averaging."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # scipy warns on unknown chunks
            rate, data = scipy.io.wavfile.read(path)
    except FileNotFoundError as e:
        raise GlamIOError(f"{path}: {e}") from e
    except (ValueError, EOFError, struct.error) as e:
        raise FormatError(f"{path}: not a readable WAV file ({e})") from e
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported WAV encoding {data.dtype}; expected int16 or float32")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    elif samples.ndim != 1:
        raise FormatError(f"{path}: unexpected channel layout with shape {data.shape}")
    return AudioClip(samples=samples, sample_rate=int(rate))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: MfccConfig) -> np.ndarray:
    """Triangular filters on the HTK mel scale, (n_mels, fft_size//2 + 1).

    Edges are spaced uniformly in mel between 0 Hz and Nyquist and each
    triangle is evaluated at the FFT bin center frequencies.  No area
    normalization is applied.
    """
    nyquist = cfg.sample_rate / 2.0
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), cfg.n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(cfg.fft_size // 2 + 1) * (cfg.sample_rate / cfg.fft_size)
    fb = np.zeros((cfg.n_mels, bin_freqs.size), dtype=np.float64)
    for m in range(cfg.n_mels):
        lo, center, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (bin_freqs - lo) / (center - lo)
        falling = (hi - bin_freqs) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def filterbank_centers_hz(cfg: MfccConfig) -> np.ndarray:
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(cfg.sample_rate / 2.0), cfg.n_mels + 2)
    return mel_to_hz(mel_points[1:-1])


def frame_signal(emphasized: np.ndarray, cfg: MfccConfig) -> np.ndarray:
    """Slice into overlapping windows, no centering: 1 + (N - win) // hop frames."""
    n = emphasized.size
    if n < cfg.window_len:
        raise TooShortError(f"clip of {n} samples is shorter than one {cfg.window_len}-sample window")
    windows = np.lib.stride_tricks.sliding_window_view(emphasized, cfg.window_len)
    return windows[:: cfg.hop].copy()


def log_mel_energies(clip: AudioClip, cfg: MfccConfig) -> np.ndarray:
    """Pre-DCT log mel energies, (n_frames, n_mels) float64."""
    if clip.sample_rate != cfg.sample_rate:
        raise ConfigError(f"clip is {clip.sample_rate} Hz but config expects {cfg.sample_rate} Hz")
    x = np.asarray(clip.samples, dtype=np.float64)
    if x.size == 0:
        raise TooShortError("empty clip")
    emphasized = np.concatenate([x[:1], x[1:] - cfg.pre_emphasis * x[:-1]])
    frames = frame_signal(emphasized, cfg)
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(cfg.window_len) / cfg.window_len)
    spectrum = np.fft.rfft(frames * window, n=cfg.fft_size, axis=1)
    power = np.abs(spectrum) ** 2
    mel = power @ mel_filterbank(cfg).T
    return np.log(np.maximum(mel, cfg.log_floor))


def compute_mfcc(clip: AudioClip, cfg: MfccConfig) -> np.ndarray:
    """MFCC matrix, (n_frames, n_mfcc) float32."""
    log_mel = log_mel_energies(clip, cfg)
    coeffs = scipy.fft.dct(log_mel, type=2, norm="ortho", axis=1)
    return coeffs[:, : cfg.n_mfcc].astype(np.float32)


def segment_utterance(features: np.ndarray, cfg: MfccConfig,
                      utterance_id: str = "", label: int = -1) -> list:
    """Cut a feature matrix into fixed windows of ``segment_frames(cfg)``.

    Windows start every ``segment_step(cfg)`` frames; an utterance shorter
    than one window yields a single zero-padded segment.
    """
    win = segment_frames(cfg)
    step = segment_step(cfg)
    feats = np.asarray(features, dtype=np.float32)
    if feats.ndim != 2 or feats.shape[1] != cfg.n_mfcc:
        raise ValidationError(f"features must be (frames, {cfg.n_mfcc}), got {feats.shape}")
    if feats.shape[0] == 0:
        raise ValidationError("empty feature matrix")
    n = feats.shape[0]
    segments = []
    if n < win:
        padded = np.zeros((win, cfg.n_mfcc), dtype=np.float32)
        padded[:n] = feats
        segments.append(FeatureSegment(padded, utterance_id, 0, label))
    else:
        for index, start in enumerate(range(0, n - win + 1, step)):
            segments.append(FeatureSegment(feats[start : start + win].copy(), utterance_id, index, label))
    return segments


def normalize_features(segments, stats: FeatureStats | None = None):
    """Per-coefficient z-normalization over all frames of all segments.

    With ``stats=None`` the statistics are computed from ``segments`` (the
    training set) and returned for reuse on validation/test data.
    """
    segments = list(segments)
    if not segments:
        raise ValidationError("normalize_features needs at least one segment")
    if stats is None:
        stacked = np.concatenate([s.data.astype(np.float64) for s in segments], axis=0)
        mean = stacked.mean(axis=0)
        std = np.maximum(stacked.std(axis=0), STD_FLOOR)
        stats = FeatureStats(mean=mean, std=std)
    out = []
    for s in segments:
        data = ((s.data.astype(np.float64) - stats.mean) / stats.std).astype(np.float32)
        out.append(replace(s, data=data))
    return out, stats

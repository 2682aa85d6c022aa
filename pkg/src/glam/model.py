"""The multi-scale + global-aware network.

The conv stack runs parallel 1x3 (frequency) and 3x1 (time) branches per
block, batch-normalized and rectified, concatenated along the frequency
axis in the first block and along channels afterwards, with 2x2 pooling
after every block, then one large-kernel conv.  The flattened C x d_f map
passes through a gated fusion block (a gMLP-style unit that starts as an
exact identity) before the fully connected classifier head.

Everything here is functional: parameters live in a ParameterSet and each
forward takes them explicitly, so eval-mode inference is a pure function.
"""

import json
import zlib
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import tensorio
from .autodiff import BNState, Tensor
from .errors import ConfigError, FormatError, ShapeError

FUSION_MODES = ("global_aware", "none")


@dataclass(frozen=True)
class ModelConfig:
    n_classes: int = 4
    in_channels: int = 1
    in_frames: int = 198
    in_coeffs: int = 40
    n_multiscale_blocks: int = 3
    branch_channels: int = 16
    final_kernel: tuple = (5, 5)
    final_channels: int = 32
    pool: tuple = (2, 2)
    fusion_mode: str = "global_aware"
    head_hidden: int = 64
    gate_kernel: int = 3

    def __post_init__(self):
        object.__setattr__(self, "final_kernel", tuple(self.final_kernel))
        object.__setattr__(self, "pool", tuple(self.pool))
        if self.fusion_mode not in FUSION_MODES:
            raise ConfigError(f"fusion_mode must be one of {FUSION_MODES}, got {self.fusion_mode!r}")
        if self.n_multiscale_blocks < 1:
            raise ConfigError("need at least one multiscale block")
        if min(self.n_classes, self.branch_channels, self.final_channels, self.head_hidden) < 1:
            raise ConfigError("channel and class counts must be positive")
        if self.gate_kernel % 2 == 0:
            raise ConfigError("gate_kernel must be odd for same padding")
        if self.final_kernel[0] % 2 == 0 or self.final_kernel[1] % 2 == 0:
            raise ConfigError("final_kernel sides must be odd for same padding")
        self.stage_shapes()  # raises ConfigError if pooling exhausts the input

    @property
    def in_shape(self):
        return (self.in_channels, self.in_frames, self.in_coeffs)

    def stage_shapes(self):
        """(C, H, W) after the input and after every conv stage."""
        c, h, w = self.in_channels, self.in_frames, self.in_coeffs
        shapes = [(c, h, w)]
        ph, pw = self.pool
        for i in range(self.n_multiscale_blocks):
            if i == 0:
                c, w = self.branch_channels, 2 * w  # branch concat along frequency
            else:
                c = 2 * self.branch_channels  # branch concat along channels
            h, w = h // ph, w // pw
            if h < 1 or w < 1:
                raise ConfigError(f"pooling exhausts the input at block {i + 1} ({h}x{w})")
            shapes.append((c, h, w))
        _, h, w = shapes[-1]
        shapes.append((self.final_channels, h, w))
        return shapes

    def fusion_dims(self):
        """(C, d_f) entering the fusion block: channels and flattened map size."""
        c, h, w = self.stage_shapes()[-1]
        return c, h * w


@dataclass
class ParamSpec:
    name: str
    shape: tuple
    init: str  # kaiming | zeros | ones
    fan_in: int = 0


def parameter_layout(cfg: ModelConfig) -> list:
    """Every parameter's name, shape and initialization, in stable order."""
    shapes = cfg.stage_shapes()
    bc = cfg.branch_channels
    specs = []

    def conv(prefix, out_c, in_c, kh, kw, init="kaiming"):
        specs.append(ParamSpec(f"{prefix}.kernel", (out_c, in_c, kh, kw), init, in_c * kh * kw))
        specs.append(ParamSpec(f"{prefix}.bias", (out_c,), "ones" if init == "zeros" else "zeros"))
        # gate conv is the only zero-weight conv and wants bias one

    def bn(prefix, c):
        specs.append(ParamSpec(f"{prefix}.gamma", (c,), "ones"))
        specs.append(ParamSpec(f"{prefix}.beta", (c,), "zeros"))

    for i in range(cfg.n_multiscale_blocks):
        in_c = shapes[i][0]
        for branch, (kh, kw) in (("spatial", (1, 3)), ("temporal", (3, 1))):
            conv(f"block{i + 1}.{branch}", bc, in_c, kh, kw)
            bn(f"block{i + 1}.{branch}.bn", bc)

    in_c = shapes[cfg.n_multiscale_blocks][0]
    conv("final", cfg.final_channels, in_c, *cfg.final_kernel)
    bn("final.bn", cfg.final_channels)

    if cfg.fusion_mode == "global_aware":
        c, d_f = cfg.fusion_dims()
        specs.append(ParamSpec("fusion.norm.gamma", (d_f,), "ones"))
        specs.append(ParamSpec("fusion.norm.beta", (d_f,), "zeros"))
        specs.append(ParamSpec("fusion.proj_in.weight", (d_f, 4 * d_f), "kaiming", d_f))
        specs.append(ParamSpec("fusion.proj_in.bias", (4 * d_f,), "zeros"))
        conv("fusion.gate", c, c, 1, cfg.gate_kernel, init="zeros")
        specs.append(ParamSpec("fusion.proj_out.weight", (2 * d_f, d_f), "zeros"))
        specs.append(ParamSpec("fusion.proj_out.bias", (d_f,), "zeros"))

    c, d_f = cfg.fusion_dims()
    specs.append(ParamSpec("head.hidden.weight", (c * d_f, cfg.head_hidden), "kaiming", c * d_f))
    specs.append(ParamSpec("head.hidden.bias", (cfg.head_hidden,), "zeros"))
    specs.append(ParamSpec("head.out.weight", (cfg.head_hidden, cfg.n_classes), "kaiming", cfg.head_hidden))
    specs.append(ParamSpec("head.out.bias", (cfg.n_classes,), "zeros"))
    return specs


def bn_state_layout(cfg: ModelConfig) -> list:
    names = []
    for i in range(cfg.n_multiscale_blocks):
        names.append((f"block{i + 1}.spatial.bn", cfg.branch_channels))
        names.append((f"block{i + 1}.temporal.bn", cfg.branch_channels))
    names.append(("final.bn", cfg.final_channels))
    return names


def parameter_count(cfg: ModelConfig) -> int:
    return sum(int(np.prod(s.shape)) for s in parameter_layout(cfg))


class ParameterSet:
    """Named trainable tensors plus the mutable running stats of BN layers."""

    def __init__(self, params=None, bn=None):
        self.params = dict(params or {})
        self.bn = dict(bn or {})

    def tensors(self):
        return self.params.values()

    def copy(self):
        params = {
            name: Tensor(t.data.copy(), requires_grad=t.requires_grad)
            for name, t in self.params.items()
        }
        bn = {name: st.copy() for name, st in self.bn.items()}
        return ParameterSet(params, bn)


def init_parameters(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> ParameterSet:
    """Kaiming-uniform weights, zero biases, BN gamma 1 / beta 0, and the
    gate conv at weights 0 / bias 1 so the fusion block starts as identity.

    Each parameter draws from its own RNG stream keyed by (seed, name), so
    values do not depend on which other parameter groups exist.
    """
    params = {}
    for spec in parameter_layout(cfg):
        if spec.init == "kaiming":
            rng = np.random.default_rng([seed, zlib.crc32(spec.name.encode())])
            bound = np.sqrt(6.0 / spec.fan_in)
            data = rng.uniform(-bound, bound, size=spec.shape)
        elif spec.init == "zeros":
            data = np.zeros(spec.shape)
        elif spec.init == "ones":
            data = np.ones(spec.shape)
        else:
            raise ConfigError(f"unknown init {spec.init!r}")
        params[spec.name] = Tensor(data.astype(dtype), requires_grad=True)
    bn = {name: BNState.fresh(c, dtype) for name, c in bn_state_layout(cfg)}
    return ParameterSet(params, bn)


# ---------------------------------------------------------------------------
# forwards


def _conv_bn_relu(x, params, prefix, mode):
    p = params.params
    h = ad.conv2d_same(x, p[f"{prefix}.kernel"], p[f"{prefix}.bias"])
    h = ad.batchnorm2d(h, p[f"{prefix}.bn.gamma"], p[f"{prefix}.bn.beta"], params.bn[f"{prefix}.bn"], mode)
    return ad.relu(h)


def multiscale_block_forward(x, params, cfg, index, mode):
    """One block: parallel 1x3 and 3x1 branches, concat, 2x2 pool.

    The first block concatenates the branches along the frequency axis,
    later blocks along channels.
    """
    prefix = f"block{index + 1}"
    spatial = _conv_bn_relu(x, params, f"{prefix}.spatial", mode)
    temporal = _conv_bn_relu(x, params, f"{prefix}.temporal", mode)
    axis = 3 if index == 0 else 1
    merged = ad.concat([spatial, temporal], axis=axis)
    return ad.maxpool2d(merged, cfg.pool)


def final_conv_forward(x, params, cfg, mode):
    """Large-kernel same-padded conv + BN + ReLU; spatial size is preserved."""
    return _conv_bn_relu(x, params, "final", mode)


def _linear_tokens(x, weight, bias):
    # apply a (d_in -> d_out) linear over the trailing axis of (N, C, d_in)
    n, c, d = x.shape
    flat = ad.reshape(x, (n * c, d))
    out = ad.linear(flat, weight, bias)
    return ad.reshape(out, (n, c, out.shape[1]))


def global_aware_forward(x, params, cfg):
    """Gated fusion over the flattened feature axis of (N, C, d_f).

    Pre-norm, project d_f -> 4*d_f, GeLU, split halves along the feature
    axis, gate one half with a channel-mixing conv (kernel 3, channel count
    preserved), multiply, project back to d_f, add the residual.  At
    initialization (gate weights 0 / bias 1, output projection 0) this is
    exactly the identity.
    """
    p = params.params
    normed = ad.layernorm(x, p["fusion.norm.gamma"], p["fusion.norm.beta"])
    z = _linear_tokens(normed, p["fusion.proj_in.weight"], p["fusion.proj_in.bias"])
    z = ad.gelu(z)
    u, v = ad.split_half(z, axis=2)
    n, c, d2 = v.shape
    v4 = ad.reshape(v, (n, c, 1, d2))
    g4 = ad.conv2d_same(v4, p["fusion.gate.kernel"], p["fusion.gate.bias"])
    gate = ad.reshape(g4, (n, c, d2))
    h = ad.mul(u, gate)
    proj = _linear_tokens(h, p["fusion.proj_out.weight"], p["fusion.proj_out.bias"])
    return ad.add(x, proj)


def _head(x, params, cfg):
    p = params.params
    hidden = ad.relu(ad.linear(x, p["head.hidden.weight"], p["head.hidden.bias"]))
    logits = ad.linear(hidden, p["head.out.weight"], p["head.out.bias"])
    return hidden, logits


def _forward(x, params, cfg, mode):
    if x.data.ndim != 4 or tuple(x.shape[1:]) != cfg.in_shape:
        raise ShapeError(f"expected input (N, {', '.join(map(str, cfg.in_shape))}), got {tuple(x.shape)}")
    h = x
    for i in range(cfg.n_multiscale_blocks):
        h = multiscale_block_forward(h, params, cfg, i, mode)
    h = final_conv_forward(h, params, cfg, mode)
    c, d_f = cfg.fusion_dims()
    n = x.shape[0]
    h = ad.reshape(h, (n, c, d_f))
    if cfg.fusion_mode == "global_aware":
        h = global_aware_forward(h, params, cfg)
    flat = ad.reshape(h, (n, c * d_f))
    return _head(flat, params, cfg)


def glam_forward(x, params, cfg, mode="eval"):
    """Full network: conv stack, fusion, classifier.  Returns logits (N, K)."""
    _, logits = _forward(x, params, cfg, mode)
    return logits


def export_embeddings(x, params, cfg):
    """Penultimate (post-ReLU hidden) activations in eval mode, (N, head_hidden)."""
    hidden, _ = _forward(x, params, cfg, "eval")
    return hidden


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_probabilities(params, cfg, inputs: np.ndarray, batch_size: int = 32) -> np.ndarray:
    """Eval-mode softmax probabilities for a stack of inputs (N, C, H, W)."""
    probs = []
    for start in range(0, inputs.shape[0], batch_size):
        xb = Tensor(inputs[start : start + batch_size])
        logits = glam_forward(xb, params, cfg, mode="eval")
        probs.append(softmax(logits.data))
    return np.concatenate(probs, axis=0)


# ---------------------------------------------------------------------------
# checkpoints: one JSON header line, then GTSR blobs in header order


def _cfg_to_dict(cfg: ModelConfig) -> dict:
    d = asdict(cfg)
    d["final_kernel"] = list(cfg.final_kernel)
    d["pool"] = list(cfg.pool)
    return d


def config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    if "final_kernel" in d:
        d["final_kernel"] = tuple(d["final_kernel"])
    if "pool" in d:
        d["pool"] = tuple(d["pool"])
    return ModelConfig(**d)


def save_checkpoint(path, cfg: ModelConfig, params: ParameterSet, step: int = 0,
                    extra: dict | None = None, aux_tensors: dict | None = None):
    aux_tensors = aux_tensors or {}
    header = {
        "format": "glam-checkpoint",
        "version": 1,
        "config": _cfg_to_dict(cfg),
        "step": int(step),
        "tensors": list(params.params),
        "bn_states": {name: st.updates for name, st in params.bn.items()},
        "aux_tensors": list(aux_tensors),
        "extra": extra or {},
    }
    blobs = [tensorio.dump_tensor(params.params[name].data) for name in header["tensors"]]
    for name in sorted(params.bn):  # header keys are sorted, keep blobs aligned
        blobs.append(tensorio.dump_tensor(params.bn[name].mean))
        blobs.append(tensorio.dump_tensor(params.bn[name].var))
    for name in header["aux_tensors"]:
        blobs.append(tensorio.dump_tensor(np.asarray(aux_tensors[name])))
    payload = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n" + b"".join(blobs)
    tensorio.atomic_write_bytes(path, payload)


def load_checkpoint(path):
    """Returns (cfg, params, step, extra, aux_tensors); shapes are validated
    against the stored config before anything is returned."""
    with open(path, "rb") as f:
        line = f.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"{path}: bad checkpoint header ({e})") from e
        if header.get("format") != "glam-checkpoint":
            raise FormatError(f"{path}: not a checkpoint file")
        cfg = config_from_dict(header["config"])
        expected = {s.name: tuple(s.shape) for s in parameter_layout(cfg)}
        if set(header["tensors"]) != set(expected):
            missing = set(expected) ^ set(header["tensors"])
            raise FormatError(f"{path}: parameter names do not match config (mismatch: {sorted(missing)})")
        params = {}
        for name in header["tensors"]:
            arr = tensorio.read_tensor_from(f)
            if arr.shape != expected[name]:
                raise FormatError(f"{path}: tensor {name} has shape {arr.shape}, config implies {expected[name]}")
            params[name] = Tensor(arr, requires_grad=True)
        bn = {}
        state_names = {name for name, _ in bn_state_layout(cfg)}
        if set(header["bn_states"]) != state_names:
            raise FormatError(f"{path}: BN state names do not match config")
        for name in sorted(header["bn_states"]):
            mean = tensorio.read_tensor_from(f)
            var = tensorio.read_tensor_from(f)
            bn[name] = BNState(mean, var, header["bn_states"][name])
        aux = {name: tensorio.read_tensor_from(f) for name in header.get("aux_tensors", [])}
    return cfg, ParameterSet(params, bn), header["step"], header.get("extra", {}), aux

"""Finite-difference gradient verification.

``grad_check`` compares reverse-mode gradients against central differences
(f(x+h) - f(x-h)) / 2h in float64, coordinate by coordinate.  It is the
oracle for every backward rule in the package: the stock suite in
``default_suite`` covers each differentiable op plus a conv/bn composite,
and ``full_model_case`` wires in the whole network at a small size.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, backward, clear_grads
from .errors import ConfigError

# Inputs larger than this are checked on a seeded random subset of
# coordinates; anything at or below it is checked exhaustively.
SUBSAMPLE_THRESHOLD = 10_000


@dataclass
class InputCheck:
    name: str
    max_rel_err: float
    n_checked: int
    ok: bool


@dataclass
class GradCheckReport:
    tol: float
    per_input: list = field(default_factory=list)

    @property
    def max_rel_err(self):
        return max((c.max_rel_err for c in self.per_input), default=0.0)

    @property
    def ok(self):
        return all(c.ok for c in self.per_input)


def _rel_err(a, n, scale_floor):
    return abs(a - n) / max(abs(a), abs(n), scale_floor)


def grad_check(f, inputs, h=1e-5, tol=1e-6, seed=0, max_coords=SUBSAMPLE_THRESHOLD,
               scale_floor=1e-3, names=None):
    """Check analytic gradients of ``f`` w.r.t. every tensor in ``inputs``.

    f is called as f(*inputs) and must return a scalar Tensor,
    deterministically.  All inputs must be float64.  Coordinates are
    enumerated exhaustively up to ``max_coords`` per input and subsampled
    (deterministically under ``seed``) beyond that.  The relative error of
    a coordinate is |a - n| / max(|a|, |n|, scale_floor); the floor keeps
    finite-difference noise on near-zero gradients from registering as
    spurious relative error.
    """
    inputs = list(inputs)
    if names is None:
        names = [f"input{i}" for i in range(len(inputs))]
    for t in inputs:
        if t.data.dtype != np.float64:
            raise ConfigError("grad_check requires float64 inputs")
        t.requires_grad = True

    clear_grads(inputs)
    loss = f(*inputs)
    backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    clear_grads(inputs)

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tol=tol)
    for name, t, a in zip(names, inputs, analytic):
        flat = t.data.reshape(-1)
        a_flat = a.reshape(-1)
        size = flat.size
        if size > max_coords:
            coords = np.sort(rng.choice(size, size=max_coords, replace=False))
        else:
            coords = np.arange(size)
        worst = 0.0
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            up = f(*inputs).item()
            flat[i] = orig - h
            down = f(*inputs).item()
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            worst = max(worst, _rel_err(float(a_flat[i]), numeric, scale_floor))
        report.per_input.append(InputCheck(name, worst, len(coords), worst < tol))
    return report


# ---------------------------------------------------------------------------
# stock verification suite


@dataclass
class SuiteCase:
    name: str
    build: object  # () -> (f, inputs, names)
    tol: float = 1e-6
    max_coords: int = SUBSAMPLE_THRESHOLD
    h: float = 1e-5


@dataclass
class SuiteResult:
    name: str
    max_rel_err: float
    tol: float
    ok: bool


def _sq_sum(t):
    # sum(t * t): a curved loss so incoming gradients are non-constant
    return ad.tensor_sum(ad.mul(t, t))


def _soft_targets(rng, n, k):
    t = rng.random((n, k))
    return t / t.sum(axis=1, keepdims=True)


def _build_add(seed):
    r = np.random.default_rng(seed)
    a = Tensor(r.standard_normal((3, 4)))
    b = Tensor(r.standard_normal((3, 4)))

    def f(a, b):
        return _sq_sum(ad.add(a, b))

    return f, [a, b], ["a", "b"]


def _build_add_scalar(seed):
    r = np.random.default_rng(seed)
    a = Tensor(r.standard_normal((3, 4)))
    s = Tensor(r.standard_normal(()))

    def f(a, s):
        return _sq_sum(ad.add(a, s))

    return f, [a, s], ["a", "s"]


def _build_mul(seed):
    r = np.random.default_rng(seed)
    a = Tensor(r.standard_normal((5, 2)))
    b = Tensor(r.standard_normal((5, 2)))

    def f(a, b):
        return ad.tensor_sum(ad.mul(a, b))

    return f, [a, b], ["a", "b"]


def _build_mul_scalar(seed):
    r = np.random.default_rng(seed)
    a = Tensor(r.standard_normal((5, 2)))
    s = Tensor(r.standard_normal(()))

    def f(a, s):
        return _sq_sum(ad.mul(a, s))

    return f, [a, s], ["a", "s"]


def _build_matmul(seed):
    r = np.random.default_rng(seed)
    a = Tensor(r.standard_normal((4, 3)))
    b = Tensor(r.standard_normal((3, 5)))

    def f(a, b):
        return _sq_sum(ad.matmul(a, b))

    return f, [a, b], ["a", "b"]


def _build_linear(seed):
    r = np.random.default_rng(seed)
    x = Tensor(r.standard_normal((4, 6)))
    w = Tensor(r.standard_normal((6, 3)))
    b = Tensor(r.standard_normal(3))

    def f(x, w, b):
        return _sq_sum(ad.linear(x, w, b))

    return f, [x, w, b], ["x", "w", "b"]


def _build_conv(shape_x, shape_k):
    def build(seed):
        r = np.random.default_rng(seed)
        x = Tensor(r.standard_normal(shape_x))
        k = Tensor(r.standard_normal(shape_k))
        b = Tensor(r.standard_normal(shape_k[0]))

        def f(x, k, b):
            return _sq_sum(ad.conv2d_same(x, k, b))

        return f, [x, k, b], ["x", "kernel", "bias"]

    return build


def _build_relu(seed):
    r = np.random.default_rng(seed)
    v = r.standard_normal((4, 5))
    v = np.where(np.abs(v) < 0.05, 0.5, v)  # stay clear of the kink
    x = Tensor(v)

    def f(x):
        return _sq_sum(ad.relu(x))

    return f, [x], ["x"]


def _build_gelu(seed):
    r = np.random.default_rng(seed)
    x = Tensor(r.standard_normal((4, 5)))

    def f(x):
        return _sq_sum(ad.gelu(x))

    return f, [x], ["x"]


def _build_batchnorm(seed):
    r = np.random.default_rng(seed)
    x = Tensor(r.standard_normal((3, 3, 4, 2)))
    g = Tensor(r.standard_normal(3))
    b = Tensor(r.standard_normal(3))

    def f(x, g, b):
        state = ad.BNState.fresh(3, np.float64)
        return _sq_sum(ad.batchnorm2d(x, g, b, state, "train"))

    return f, [x, g, b], ["x", "gamma", "beta"]


def _build_layernorm(seed):
    r = np.random.default_rng(seed)
    x = Tensor(r.standard_normal((3, 4, 6)))
    g = Tensor(r.standard_normal(6))
    b = Tensor(r.standard_normal(6))

    def f(x, g, b):
        return _sq_sum(ad.layernorm(x, g, b))

    return f, [x, g, b], ["x", "gamma", "beta"]


def _build_maxpool(seed):
    r = np.random.default_rng(seed)
    # distinct values with gaps far above h so the argmax never flips
    vals = r.permutation(np.linspace(-1.0, 1.0, 2 * 2 * 5 * 6)).reshape(2, 2, 5, 6)
    x = Tensor(vals)

    def f(x):
        return _sq_sum(ad.maxpool2d(x, (2, 2)))

    return f, [x], ["x"]


def _build_concat(seed):
    r = np.random.default_rng(seed)
    a = Tensor(r.standard_normal((2, 3, 4)))
    b = Tensor(r.standard_normal((2, 2, 4)))

    def f(a, b):
        return _sq_sum(ad.concat([a, b], axis=1))

    return f, [a, b], ["a", "b"]


def _build_split_half(seed):
    r = np.random.default_rng(seed)
    x = Tensor(r.standard_normal((3, 8)))

    def f(x):
        lo, hi = ad.split_half(x, axis=-1)
        return ad.tensor_sum(ad.mul(lo, hi))

    return f, [x], ["x"]


def _build_reshape(seed):
    r = np.random.default_rng(seed)
    x = Tensor(r.standard_normal((2, 3, 4)))

    def f(x):
        return _sq_sum(ad.reshape(x, (6, 4)))

    return f, [x], ["x"]


def _build_softmax_ce(seed):
    r = np.random.default_rng(seed)
    logits = Tensor(r.standard_normal((5, 4)))
    targets = _soft_targets(r, 5, 4)

    def f(logits):
        return ad.softmax_cross_entropy(logits, targets)

    return f, [logits], ["logits"]


def _build_composite(seed):
    r = np.random.default_rng(seed)
    x = Tensor(r.standard_normal((2, 1, 8, 6)))
    k = Tensor(r.standard_normal((4, 1, 3, 3)))
    kb = Tensor(r.standard_normal(4))
    g = Tensor(np.ones(4))
    b = Tensor(np.zeros(4))
    w = Tensor(r.standard_normal((4 * 4 * 3, 3)))
    wb = Tensor(r.standard_normal(3))
    targets = _soft_targets(r, 2, 3)

    def f(x, k, kb, g, b, w, wb):
        h = ad.conv2d_same(x, k, kb)
        h = ad.batchnorm2d(h, g, b, ad.BNState.fresh(4, np.float64), "train")
        h = ad.relu(h)
        h = ad.maxpool2d(h, (2, 2))
        h = ad.reshape(h, (2, 4 * 4 * 3))
        logits = ad.linear(h, w, wb)
        return ad.softmax_cross_entropy(logits, targets)

    return f, [x, k, kb, g, b, w, wb], ["x", "kernel", "kbias", "gamma", "beta", "w", "wbias"]


def default_suite(seed=0):
    """One case per differentiable op plus a conv/bn/pool/fc composite."""
    def with_seed(build):
        return lambda: build(seed)

    return [
        SuiteCase("add", with_seed(_build_add)),
        SuiteCase("add_scalar", with_seed(_build_add_scalar)),
        SuiteCase("mul", with_seed(_build_mul)),
        SuiteCase("mul_scalar", with_seed(_build_mul_scalar)),
        SuiteCase("matmul", with_seed(_build_matmul)),
        SuiteCase("linear", with_seed(_build_linear)),
        # the conv loss is quadratic in each input, so central differences
        # are exact in h; a larger step only reduces cancellation noise
        SuiteCase("conv2d_same_1x3", with_seed(_build_conv((2, 3, 4, 5), (4, 3, 1, 3))), h=1e-3),
        SuiteCase("conv2d_same_3x3", with_seed(_build_conv((2, 2, 5, 4), (3, 2, 3, 3))), h=1e-3),
        SuiteCase("relu", with_seed(_build_relu)),
        SuiteCase("gelu", with_seed(_build_gelu)),
        SuiteCase("batchnorm_train", with_seed(_build_batchnorm), tol=1e-5),
        SuiteCase("layernorm", with_seed(_build_layernorm), tol=1e-5),
        SuiteCase("maxpool2d", with_seed(_build_maxpool)),
        SuiteCase("concat", with_seed(_build_concat)),
        SuiteCase("split_half", with_seed(_build_split_half)),
        SuiteCase("reshape", with_seed(_build_reshape)),
        SuiteCase("softmax_cross_entropy", with_seed(_build_softmax_ce)),
        SuiteCase("composite_conv_bn_pool_fc", with_seed(_build_composite), tol=1e-4),
    ]


def full_model_case(seed=0, max_coords=1024):
    """Gradient-check every parameter of the network at a small config."""
    from . import model as model_mod

    def build():
        cfg = model_mod.ModelConfig(in_frames=8, in_coeffs=10, n_multiscale_blocks=1)
        params = model_mod.init_parameters(cfg, seed=seed, dtype=np.float64)
        rng = np.random.default_rng(seed + 1)
        x = Tensor(rng.standard_normal((2, 1, 8, 10)))
        targets = _soft_targets(rng, 2, cfg.n_classes)
        names = list(params.params)
        tensors = [params.params[n] for n in names]

        def f(*weights):
            states = {name: st.copy() for name, st in params.bn.items()}
            live = model_mod.ParameterSet(dict(zip(names, weights)), states)
            logits = model_mod.glam_forward(x, live, cfg, mode="train")
            return ad.softmax_cross_entropy(logits, targets)

        return f, tensors, names

    return SuiteCase("full_model_small", build, tol=1e-4, max_coords=max_coords)


def run_case(case, seed=0):
    f, inputs, names = case.build()
    report = grad_check(f, inputs, h=case.h, tol=case.tol, seed=seed,
                        max_coords=case.max_coords, names=names)
    return SuiteResult(case.name, report.max_rel_err, case.tol, report.ok)


def run_suite(cases=None, seed=0):
    if cases is None:
        cases = default_suite(seed)
    return [run_case(c, seed=seed) for c in cases]

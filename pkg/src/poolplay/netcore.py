"""Dense-network numerics: forward pass, manual backprop, Adam, categorical sampling.

All trainable parameters of a :class:`PolicyValueNet` live in one flat float64
vector; every layer's weight and bias are views into it.  Gradients use the
same layout, which keeps Adam, gradient clipping and checkpoint serialization
trivial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

LEAKY_SLOPE = 0.01
ACTIVATIONS = ("leaky_relu", "linear")


class ConfigError(ValueError):
    """Raised for shape/dimension mismatches and invalid configuration."""


class TraceError(RuntimeError):
    """Raised when a forward trace no longer matches the network parameters."""


class NonFiniteGradient(FloatingPointError):
    """Raised by :func:`adam_step` when the gradient contains NaN or inf."""


@dataclass
class Layer:
    weight: np.ndarray  # (out, in), view into the owning flat vector
    bias: np.ndarray  # (out,)
    activation: str


class MLP:
    """An ordered stack of dense layers (one ``NetworkParameters`` block)."""

    def __init__(self, layers: list[Layer]):
        for prev, nxt in zip(layers, layers[1:]):
            if prev.weight.shape[0] != nxt.weight.shape[1]:
                raise ConfigError(
                    f"layer dims do not chain: {prev.weight.shape} -> {nxt.weight.shape}"
                )
        self.layers = layers

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        if x.shape[-1] != self.in_dim:
            raise ConfigError(f"input has {x.shape[-1]} features, expected {self.in_dim}")
        cache = []
        h = x
        for layer in self.layers:
            z = h @ layer.weight.T + layer.bias
            cache.append((h, z))
            if layer.activation == "leaky_relu":
                h = np.where(z > 0, z, LEAKY_SLOPE * z)
            else:
                h = z
        return h, cache

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Forward without keeping activations (inference only)."""
        h = x
        for layer in self.layers:
            z = h @ layer.weight.T + layer.bias
            h = np.maximum(z, LEAKY_SLOPE * z) if layer.activation == "leaky_relu" else z
        return h

    def backward(self, cache: list, dout: np.ndarray, grads: list[Layer]) -> np.ndarray:
        """Accumulate parameter gradients into ``grads`` and return d(input)."""
        d = dout
        for layer, g, (h, z) in zip(reversed(self.layers), reversed(grads), reversed(cache)):
            if layer.activation == "leaky_relu":
                d = np.where(z > 0, d, LEAKY_SLOPE * d)
            g.weight += d.T @ h
            g.bias += d.sum(axis=0)
            d = d @ layer.weight
        return d


@dataclass
class LayerSpec:
    name: str
    out_dim: int
    in_dim: int
    activation: str
    gain: float = math.sqrt(2.0)


def _mlp_specs(prefix: str, dims: list[int], final_gain: float) -> list[LayerSpec]:
    specs = []
    n = len(dims) - 1
    for k in range(n):
        last = k == n - 1
        specs.append(
            LayerSpec(
                name=f"{prefix}.{k}",
                out_dim=dims[k + 1],
                in_dim=dims[k],
                activation="linear" if last and final_gain is not None else "leaky_relu",
                gain=final_gain if (last and final_gain is not None) else math.sqrt(2.0),
            )
        )
    return specs


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class FlatParams:
    """Allocates named dense layers inside one flat vector."""

    def __init__(self, specs: list[LayerSpec]):
        self.specs = specs
        self.offsets: dict[str, tuple[int, int, int]] = {}
        total = 0
        for s in specs:
            w = s.out_dim * s.in_dim
            self.offsets[s.name] = (total, total + w, total + w + s.out_dim)
            total += w + s.out_dim
        self.size = total

    def layers(self, flat: np.ndarray, prefix: str) -> list[Layer]:
        out = []
        for s in self.specs:
            if s.name.rsplit(".", 1)[0] != prefix:
                continue
            a, b, c = self.offsets[s.name]
            out.append(Layer(flat[a:b].reshape(s.out_dim, s.in_dim), flat[b:c], s.activation))
        return out

    def init(self, rng: np.random.Generator) -> np.ndarray:
        flat = np.zeros(self.size)
        for s in self.specs:
            a, b, _ = self.offsets[s.name]
            flat[a:b] = _orthogonal(rng, s.out_dim, s.in_dim, s.gain).ravel()
        return flat

    def layout(self) -> list[dict]:
        return [
            {"name": s.name, "shape": [s.out_dim, s.in_dim], "activation": s.activation}
            for s in self.specs
        ]


@dataclass(frozen=True)
class NetSpec:
    obs_dim: int
    n_actions: int
    torso_width: int = 128
    head_width: int = 64
    global_obs_dim: Optional[int] = None  # set -> MAPPO layout (unshared value net)
    rnd_embed_dim: Optional[int] = None  # set -> RND heads and predictor/target nets

    @property
    def mappo(self) -> bool:
        return self.global_obs_dim is not None

    @property
    def rnd(self) -> bool:
        return self.rnd_embed_dim is not None

    def to_dict(self) -> dict:
        return {
            "obs_dim": self.obs_dim,
            "n_actions": self.n_actions,
            "torso_width": self.torso_width,
            "head_width": self.head_width,
            "global_obs_dim": self.global_obs_dim,
            "rnd_embed_dim": self.rnd_embed_dim,
        }


def _trainable_specs(spec: NetSpec) -> list[LayerSpec]:
    tw, hw = spec.torso_width, spec.head_width
    specs = _mlp_specs("torso", [spec.obs_dim, tw, tw, tw], final_gain=None)
    specs += _mlp_specs("policy", [tw, hw, hw, spec.n_actions], final_gain=0.01)
    if spec.mappo:
        specs += _mlp_specs("vtorso", [spec.global_obs_dim, tw, tw, tw], final_gain=None)
    specs += _mlp_specs("value", [tw, hw, hw, 1], final_gain=1.0)
    if spec.rnd:
        specs += _mlp_specs("ivalue", [tw, hw, hw, 1], final_gain=1.0)
        specs += _mlp_specs("predictor", [spec.obs_dim, hw, hw, spec.rnd_embed_dim], final_gain=1.0)
    return specs


def _target_specs(spec: NetSpec) -> list[LayerSpec]:
    return _mlp_specs("target", [spec.obs_dim, spec.head_width, spec.rnd_embed_dim], final_gain=1.0)


class PolicyValueNet:
    """Shared-torso actor-critic with optional MAPPO and RND variants.

    Plain PPO: ``torso`` (3 layers) feeds ``policy`` and ``value`` heads (3 layers
    each).  MAPPO: the value side gets its own ``vtorso`` fed by the global
    observation.  RND adds an intrinsic value head on the torso, a trainable
    ``predictor`` and a frozen ``target`` network, both reading the observation.
    """

    def __init__(self, spec: NetSpec, seed: int = 0, params: Optional[np.ndarray] = None,
                 target: Optional[np.ndarray] = None):
        self.spec = spec
        self.space = FlatParams(_trainable_specs(spec))
        rng = np.random.default_rng(seed)
        self.params = self.space.init(rng) if params is None else np.array(params, dtype=np.float64)
        if self.params.shape != (self.space.size,):
            raise ConfigError(f"expected {self.space.size} parameters, got {self.params.shape}")
        self.target_space = FlatParams(_target_specs(spec)) if spec.rnd else None
        if self.target_space is not None:
            if target is None:
                target = self.target_space.init(np.random.default_rng(seed + 7919))
            self.target_params = np.array(target, dtype=np.float64)
            self.target_params.flags.writeable = False
        else:
            self.target_params = None
        self.version = 0
        self._bind()

    def _bind(self) -> None:
        self.nets = {
            name: MLP(self.space.layers(self.params, name))
            for name in ("torso", "policy", "vtorso", "value", "ivalue", "predictor")
            if any(s.name.startswith(name + ".") for s in self.space.specs)
        }
        self.target = (
            MLP(self.target_space.layers(self.target_params, "target"))
            if self.target_space is not None
            else None
        )

    def set_params(self, flat: np.ndarray) -> None:
        if flat.shape != self.params.shape:
            raise ConfigError(f"parameter shape {flat.shape} != {self.params.shape}")
        self.params[:] = flat
        self.touch()

    def touch(self) -> None:
        """Mark parameters as changed; invalidates outstanding traces."""
        self.version += 1

    def copy(self) -> "PolicyValueNet":
        net = PolicyValueNet(self.spec, params=self.params.copy(), target=self.target_params)
        return net

    def zeros_like_params(self) -> np.ndarray:
        return np.zeros_like(self.params)

    def layout(self) -> list[dict]:
        return self.space.layout()


@dataclass
class ForwardTrace:
    net: PolicyValueNet
    version: int
    caches: dict = field(default_factory=dict)
    rnd_diff: Optional[np.ndarray] = None  # predictor - target embeddings


@dataclass
class NetOutput:
    logits: np.ndarray
    value: np.ndarray
    intrinsic_value: Optional[np.ndarray]
    trace: ForwardTrace
    prediction_error: Optional[np.ndarray] = None  # per-sample mean squared embedding diff


def forward(net: PolicyValueNet, obs: np.ndarray, global_obs: Optional[np.ndarray] = None,
            rnd: bool = False) -> NetOutput:
    """Evaluate policy logits and value(s) for a batch (or a single vector)."""
    single = obs.ndim == 1
    x = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    if x.shape[1] != net.spec.obs_dim:
        raise ConfigError(f"observation length {x.shape[1]} != torso input {net.spec.obs_dim}")
    trace = ForwardTrace(net=net, version=net.version)
    h, trace.caches["torso"] = net.nets["torso"].forward(x)
    logits, trace.caches["policy"] = net.nets["policy"].forward(h)
    if net.spec.mappo:
        if global_obs is None:
            raise ConfigError("MAPPO network needs a global observation for its value input")
        g = np.atleast_2d(np.asarray(global_obs, dtype=np.float64))
        hv, trace.caches["vtorso"] = net.nets["vtorso"].forward(g)
    else:
        hv = h
    value, trace.caches["value"] = net.nets["value"].forward(hv)
    ivalue = None
    pred_err = None
    if net.spec.rnd:
        iv, trace.caches["ivalue"] = net.nets["ivalue"].forward(h)
        ivalue = iv[:, 0]
        if rnd:
            pred, trace.caches["predictor"] = net.nets["predictor"].forward(x)
            targ, _ = net.target.forward(x)
            trace.rnd_diff = pred - targ
            pred_err = np.mean(trace.rnd_diff**2, axis=1)
    value = value[:, 0]
    if single:
        logits, value = logits[0], value[0]
        ivalue = None if ivalue is None else ivalue[0]
        pred_err = None if pred_err is None else pred_err[0]
    return NetOutput(logits, value, ivalue, trace, pred_err)


def policy_logits(net: PolicyValueNet, obs: np.ndarray) -> np.ndarray:
    """Action logits only; the cheap path used by opponents and evaluation."""
    x = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    if x.shape[1] != net.spec.obs_dim:
        raise ConfigError(f"observation length {x.shape[1]} != torso input {net.spec.obs_dim}")
    return net.nets["policy"].apply(net.nets["torso"].apply(x))


def backprop(trace: ForwardTrace, dlogits: Optional[np.ndarray] = None,
             dvalue: Optional[np.ndarray] = None, dintrinsic: Optional[np.ndarray] = None,
             dprediction: Optional[np.ndarray] = None) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. all trainable parameters.

    Each ``d*`` argument is dLoss/d(head output) for the batch; ``dprediction`` is
    dLoss/d(per-sample prediction error).  Heads without an upstream gradient
    are skipped.
    """
    net = trace.net
    if trace.version != net.version:
        raise TraceError("trace was produced before the last parameter update")
    grad = net.zeros_like_params()
    gnets = {name: MLP(net.space.layers(grad, name)) for name in net.nets}
    dh = None

    def add(acc, d):
        return d if acc is None else acc + d

    if dlogits is not None:
        d = np.atleast_2d(dlogits)
        dh = add(dh, net.nets["policy"].backward(trace.caches["policy"], d, gnets["policy"].layers))
    if dvalue is not None:
        d = np.asarray(dvalue, dtype=np.float64).reshape(-1, 1)
        dv = net.nets["value"].backward(trace.caches["value"], d, gnets["value"].layers)
        if net.spec.mappo:
            net.nets["vtorso"].backward(trace.caches["vtorso"], dv, gnets["vtorso"].layers)
        else:
            dh = add(dh, dv)
    if dintrinsic is not None:
        d = np.asarray(dintrinsic, dtype=np.float64).reshape(-1, 1)
        dh = add(dh, net.nets["ivalue"].backward(trace.caches["ivalue"], d, gnets["ivalue"].layers))
    if dprediction is not None:
        if trace.rnd_diff is None:
            raise TraceError("prediction gradient requested but forward ran without rnd=True")
        diff = trace.rnd_diff
        d = np.asarray(dprediction, dtype=np.float64).reshape(-1, 1) * 2.0 * diff / diff.shape[1]
        net.nets["predictor"].backward(trace.caches["predictor"], d, gnets["predictor"].layers)
    if dh is not None:
        net.nets["torso"].backward(trace.caches["torso"], dh, gnets["torso"].layers)
    return grad


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def clip_by_global_norm(grad: np.ndarray, max_norm: float) -> tuple[np.ndarray, float]:
    norm = float(np.sqrt(np.dot(grad, grad)))
    if max_norm is not None and norm > max_norm:
        return grad * (max_norm / norm), norm
    return grad, norm


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState, lr: float,
              beta1: float = 0.99, beta2: float = 0.999, eps: float = 1e-8,
              max_grad_norm: Optional[float] = 10.0) -> tuple[np.ndarray, AdamState]:
    """In-place Adam update with bias correction and global-norm clipping."""
    if params.shape != grad.shape or state.first_moment.shape != params.shape:
        raise ConfigError("parameter, gradient and moment shapes differ")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("gradient contains non-finite values")
    grad, _ = clip_by_global_norm(grad, max_grad_norm)
    state.step_count += 1
    t = state.step_count
    m, v = state.first_moment, state.second_moment
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    params -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


def masked_log_softmax(logits: np.ndarray, mask: Optional[np.ndarray] = None,
                       temperature: float = 1.0) -> np.ndarray:
    """Row-wise log-softmax; masked-out entries get ``-inf``."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64)) / temperature
    if mask is not None:
        m = np.atleast_2d(np.asarray(mask, dtype=bool))
        if not np.all(m.any(axis=1)):
            raise ValueError("every row of the action mask needs at least one legal action")
        z = np.where(m, z, -np.inf)
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return shifted - lse


def softmax(logits: np.ndarray, mask: Optional[np.ndarray] = None, temperature: float = 1.0) -> np.ndarray:
    return np.exp(masked_log_softmax(logits, mask, temperature))


def sample_actions(logits: np.ndarray, mask: Optional[np.ndarray], temperature: float,
                   rng: np.random.Generator, greedy: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Batched categorical sampling; returns (actions, log-probabilities)."""
    logp = masked_log_softmax(logits, mask, temperature)
    if greedy:
        actions = logp.argmax(axis=1)
        return actions, logp[np.arange(len(actions)), actions]
    return sample_from_logp(logp, rng.random(len(logp)))


def sample_from_logp(logp: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse-CDF draw per row given uniforms ``u`` in [0, 1)."""
    probs = np.exp(logp)
    cum = np.cumsum(probs, axis=1)
    actions = (cum <= u[:, None]).sum(axis=1)
    # cumulative rounding can leave u above the last bucket
    overflow = actions >= probs.shape[1]
    if overflow.any():
        last_legal = probs.shape[1] - 1 - np.argmax(probs[:, ::-1] > 0, axis=1)
        actions = np.where(overflow, last_legal, actions)
    return actions, logp[np.arange(len(actions)), actions]


def sample_action(logits: np.ndarray, mask: Optional[np.ndarray] = None, temperature: float = 1.0,
                  rng: Optional[np.random.Generator] = None) -> tuple[int, float]:
    rng = rng if rng is not None else np.random.default_rng()
    a, lp = sample_actions(np.atleast_2d(logits), None if mask is None else np.atleast_2d(mask),
                           temperature, rng)
    return int(a[0]), float(lp[0])


def entropy(logp: np.ndarray) -> np.ndarray:
    p = np.exp(logp)
    return -np.sum(np.where(p > 0, p * logp, 0.0), axis=1)

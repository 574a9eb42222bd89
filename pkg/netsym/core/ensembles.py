"""Network architectures, ensemble sampling, forward passes and backpropagation.

An :class:`ArchitectureSpec` is an ordered stack of :class:`LayerSpec` objects with
a prior attached to every sampled tensor. :func:`sample_networks` draws a batch
of networks at once; every parameter tensor then carries the batch dimensions in
front, and :func:`forward` / :func:`backward` broadcast over them.

Inputs are either one point of shape ``(d,)`` or a set of points ``(P, d)``.
Outputs follow: ``batch + (D,)`` or ``batch + (P, D)``.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from netsym.core.linalg import RngStream
from netsym.core.prior_base import ParameterPrior
from netsym.core.types import Activation, FieldType, LayerKind, PriorKind
from netsym.priors import GaussianPrior, QuarticPrior, UniformCirclePrior, prior_from_dict

logger = logging.getLogger(__name__)


def _mod1(x: np.ndarray) -> np.ndarray:
    # x % 1.0 rounds tiny negative values up to exactly 1.0
    r = np.mod(x, 1.0)
    return np.where(r >= 1.0, 0.0, r)


def _fixed_weight(weight, in_dim: int, out_dim: int) -> np.ndarray:
    w = np.array(weight, dtype=float)
    if w.shape != (out_dim, in_dim):
        raise ValueError(f"fixed weight must have shape {(out_dim, in_dim)}, got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("fixed weight must be finite")
    w.setflags(write=False)
    return w


# -- layers -------------------------------------------------------------------


@dataclass(frozen=True)
class LayerSpec:
    """One layer of an architecture.

    Build with :meth:`linear`, :meth:`t_layer` or :meth:`activation`.
    """

    kind: LayerKind
    in_dim: Optional[int] = None
    out_dim: Optional[int] = None
    weight_prior: Optional[ParameterPrior] = None
    bias_prior: Optional[ParameterPrior] = None
    weight: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    scale: float = 1.0
    complex_weights: bool = False
    nonlinearity: Optional[Activation] = None
    sigma_b: Optional[float] = None
    sigma_w: Optional[float] = None
    norm_dim: Optional[int] = None

    @classmethod
    def linear(
        cls,
        in_dim: int,
        out_dim: int,
        weight_prior: Optional[ParameterPrior] = None,
        bias_prior: Optional[ParameterPrior] = None,
        weight=None,
        scale: float = 1.0,
        complex_weights: bool = False,
    ) -> "LayerSpec":
        """Affine layer ``z = scale * W h + b``.

        Exactly one of ``weight_prior`` and ``weight`` is given; a fixed ``weight``
        makes the layer's weight deterministic. Complex layers draw real and
        imaginary parts independently from the same zero-mean Gaussian prior.

        Raises:
            ValueError: On bad dimensions or an unsupported prior for this layer.
        """
        if in_dim < 1 or out_dim < 1:
            raise ValueError(f"layer dimensions must be positive, got {in_dim} -> {out_dim}")
        if (weight_prior is None) == (weight is None):
            raise ValueError("linear layer needs exactly one of weight_prior and a fixed weight")
        for name, prior in (("weight", weight_prior), ("bias", bias_prior)):
            if prior is None:
                continue
            if prior.kind is PriorKind.UNIFORM_CIRCLE:
                raise ValueError(f"uniform-circle {name} prior is only supported on t-layer biases")
            if complex_weights and not (prior.kind is PriorKind.GAUSSIAN and prior.is_zero_mean()):
                raise ValueError(
                    f"complex layers need a zero-mean gaussian {name} prior, got {prior!r}"
                )
        if complex_weights and weight is not None:
            raise ValueError("complex layers need a weight prior, not a fixed weight")
        if weight is not None:
            weight = _fixed_weight(weight, in_dim, out_dim)
        if not math.isfinite(scale):
            raise ValueError(f"scale must be finite, got {scale}")
        return cls(
            kind=LayerKind.LINEAR,
            in_dim=int(in_dim),
            out_dim=int(out_dim),
            weight_prior=weight_prior,
            bias_prior=bias_prior,
            weight=weight,
            scale=float(scale),
            complex_weights=bool(complex_weights),
        )

    @classmethod
    def t_layer(
        cls, in_dim: int, out_dim: int, weight, bias_prior: Optional[ParameterPrior] = None
    ) -> "LayerSpec":
        """Circle-valued layer ``((W h mod 1) + b) mod 1`` with fixed ``W`` and uniform ``b``."""
        if in_dim < 1 or out_dim < 1:
            raise ValueError(f"layer dimensions must be positive, got {in_dim} -> {out_dim}")
        bias_prior = bias_prior if bias_prior is not None else UniformCirclePrior()
        if bias_prior.kind is not PriorKind.UNIFORM_CIRCLE:
            raise ValueError(
                f"t-layer bias prior must be uniform-circle, got {bias_prior.kind.value}"
            )
        return cls(
            kind=LayerKind.T_LAYER,
            in_dim=int(in_dim),
            out_dim=int(out_dim),
            bias_prior=bias_prior,
            weight=_fixed_weight(weight, in_dim, out_dim),
        )

    @classmethod
    def activation(
        cls,
        name,
        sigma_b: Optional[float] = None,
        sigma_w: Optional[float] = None,
        norm_dim: Optional[int] = None,
    ) -> "LayerSpec":
        """Elementwise nonlinearity.

        ``exp-normalized`` computes ``exp(z) / sqrt(exp(2 (sigma_b^2 + sigma_w^2 / norm_dim)))``
        and needs all three constants.
        """
        nonlinearity = Activation(name)
        if nonlinearity is Activation.EXP_NORMALIZED:
            if sigma_b is None or sigma_w is None or norm_dim is None:
                raise ValueError("exp-normalized activation requires sigma_b, sigma_w and norm_dim")
            if norm_dim < 1:
                raise ValueError(f"norm_dim must be positive, got {norm_dim}")
            return cls(
                kind=LayerKind.ACTIVATION,
                nonlinearity=nonlinearity,
                sigma_b=float(sigma_b),
                sigma_w=float(sigma_w),
                norm_dim=int(norm_dim),
            )
        return cls(kind=LayerKind.ACTIVATION, nonlinearity=nonlinearity)

    @property
    def exp_shift(self) -> float:
        """``log`` of the exp-normalized denominator."""
        return self.sigma_b**2 + self.sigma_w**2 / self.norm_dim

    @property
    def parameter_names(self) -> Tuple[str, ...]:
        """Names of the sampled (trainable) tensors of this layer, in storage order."""
        names = []
        if self.kind is LayerKind.LINEAR and self.weight_prior is not None:
            names.append("weight")
        if self.bias_prior is not None:
            names.append("bias")
        return tuple(names)

    def parameter_shape(self, name: str) -> Tuple[int, ...]:
        return (self.out_dim, self.in_dim) if name == "weight" else (self.out_dim,)


@dataclass(frozen=True)
class ArchitectureSpec:
    """A network ``f: R^d -> R^D`` (or ``C^D``) as an ordered stack of layers.

    Raises:
        ValueError: If layer dimensions do not compose, the final dimension is not
            ``output_dim``, or complex weights appear anywhere but the final layer
            of a complex architecture.
    """

    input_dim: int
    output_dim: int
    layers: Tuple[LayerSpec, ...]
    field: FieldType = FieldType.REAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "field", FieldType(self.field))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError(
                "input and output dimensions must be positive, "
                f"got {self.input_dim}, {self.output_dim}"
            )
        if not self.layers:
            raise ValueError("architecture needs at least one layer")
        last = len(self.layers) - 1
        dim = self.input_dim
        for index, layer in enumerate(self.layers):
            if layer.kind is LayerKind.ACTIVATION:
                continue
            if layer.in_dim != dim:
                raise ValueError(
                    f"layer {index} expects {layer.in_dim} inputs but receives {dim}"
                )
            if layer.complex_weights and index != last:
                raise ValueError(
                    f"complex weights are only supported in the final layer, not layer {index}"
                )
            dim = layer.out_dim
        if dim != self.output_dim:
            raise ValueError(f"final layer produces {dim} outputs, expected {self.output_dim}")
        has_complex = self.layers[last].complex_weights
        if has_complex and self.field is not FieldType.COMPLEX:
            raise ValueError("complex final layer in a real architecture")
        if self.field is FieldType.COMPLEX and not has_complex:
            raise ValueError("complex architecture needs a complex final layer")

    @property
    def output_layer(self) -> int:
        """Index of the last affine layer."""
        for index in range(len(self.layers) - 1, -1, -1):
            if self.layers[index].kind is not LayerKind.ACTIVATION:
                return index
        raise ValueError("architecture has no affine layer")

    @property
    def width(self) -> int:
        """Input width of the output layer (the hidden width ``N``)."""
        return self.layers[self.output_layer].in_dim

    @property
    def parameter_count(self) -> int:
        return sum(
            int(np.prod(layer.parameter_shape(name)))
            for layer in self.layers
            for name in layer.parameter_names
        )


# -- draws --------------------------------------------------------------------


class LayerParams(NamedTuple):
    """Parameter tensors of one layer; ``None`` where the layer has no such tensor."""

    weight: Optional[np.ndarray] = None
    bias: Optional[np.ndarray] = None


@dataclass(frozen=True)
class NetworkDraw:
    """Concrete parameters for one network, or a batch of networks.

    Sampled tensors carry ``batch_shape`` in front; fixed weights are shared and
    stored without batch dimensions.
    """

    spec: ArchitectureSpec
    params: Tuple[LayerParams, ...]
    batch_shape: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "batch_shape", tuple(int(b) for b in self.batch_shape))
        if len(self.params) != len(self.spec.layers):
            raise ValueError(
                f"expected parameters for {len(self.spec.layers)} layers, got {len(self.params)}"
            )
        for index, (layer, p) in enumerate(zip(self.spec.layers, self.params)):
            for name in layer.parameter_names:
                tensor = getattr(p, name)
                expected = self.batch_shape + layer.parameter_shape(name)
                if tensor is None or tensor.shape != expected:
                    got = None if tensor is None else tensor.shape
                    raise ValueError(f"layer {index} {name} must have shape {expected}, got {got}")

    @property
    def count(self) -> int:
        return int(np.prod(self.batch_shape)) if self.batch_shape else 1

    def select(self, index: int) -> "NetworkDraw":
        """The ``index``-th network of a batch with one batch dimension."""
        if len(self.batch_shape) != 1:
            raise ValueError(f"select needs exactly one batch dimension, got {self.batch_shape}")
        params = []
        for layer, p in zip(self.spec.layers, self.params):
            names = layer.parameter_names
            params.append(
                LayerParams(
                    p.weight[index] if "weight" in names else p.weight,
                    p.bias[index] if "bias" in names else p.bias,
                )
            )
        return NetworkDraw(self.spec, tuple(params), ())

    def parameter_vector(self) -> np.ndarray:
        """All sampled tensors flattened in layer order, weight before bias: ``batch + (P,)``."""
        _require_real(self.spec, "parameter_vector")
        pieces = [
            getattr(p, name).reshape(self.batch_shape + (-1,))
            for layer, p in zip(self.spec.layers, self.params)
            for name in layer.parameter_names
        ]
        return np.concatenate(pieces, axis=-1)

    def with_parameter_vector(self, vector) -> "NetworkDraw":
        """Inverse of :meth:`parameter_vector`."""
        _require_real(self.spec, "with_parameter_vector")
        vector = np.asarray(vector, dtype=float)
        expected = self.batch_shape + (self.spec.parameter_count,)
        if vector.shape != expected:
            raise ValueError(f"parameter vector must have shape {expected}, got {vector.shape}")
        offset = 0
        params = []
        for layer, p in zip(self.spec.layers, self.params):
            values = p._asdict()
            for name in layer.parameter_names:
                shape = layer.parameter_shape(name)
                size = int(np.prod(shape))
                values[name] = vector[..., offset : offset + size].reshape(self.batch_shape + shape)
                offset += size
            params.append(LayerParams(**values))
        return NetworkDraw(self.spec, tuple(params), self.batch_shape)


def _require_real(spec: ArchitectureSpec, what: str) -> None:
    if spec.field is FieldType.COMPLEX:
        raise ValueError(f"{what} is only supported for real architectures")


def _draw(prior: ParameterPrior, shape, rng: RngStream, count: Optional[int], complex_: bool):
    real = prior.sample(shape, rng, count)
    if not complex_:
        return real
    return real + 1j * prior.sample(shape, rng, count)


def sample_networks(spec: ArchitectureSpec, count: Optional[int], rng: RngStream) -> NetworkDraw:
    """Draw ``count`` independent networks stacked on a leading batch axis.

    Every sampled tensor is drawn independently from its prior; quartic priors run
    one Metropolis chain per network. ``count=None`` draws one unbatched network.
    """
    if count is not None and count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    params = []
    for layer in spec.layers:
        if layer.kind is LayerKind.ACTIVATION:
            params.append(LayerParams())
            continue
        if layer.weight_prior is not None:
            shape = (layer.out_dim, layer.in_dim)
            weight = _draw(layer.weight_prior, shape, rng, count, layer.complex_weights)
        else:
            weight = layer.weight
        bias = None
        if layer.bias_prior is not None:
            bias = _draw(layer.bias_prior, (layer.out_dim,), rng, count, layer.complex_weights)
        params.append(LayerParams(weight, bias))
    return NetworkDraw(spec, tuple(params), () if count is None else (int(count),))


def sample_network(spec: ArchitectureSpec, rng: RngStream) -> NetworkDraw:
    """Draw one network with every parameter tensor taken independently from its prior."""
    return sample_networks(spec, None, rng)


# -- evaluation ---------------------------------------------------------------


def _as_points(spec: ArchitectureSpec, x) -> Tuple[np.ndarray, bool]:
    points = np.asarray(x, dtype=float)
    if points.ndim == 0:
        raise ValueError("input must be a vector or a set of points")
    single = points.ndim == 1
    if single:
        points = points[None, :]
    if points.shape[-1] != spec.input_dim:
        raise ValueError(
            f"dimension mismatch: network expects {spec.input_dim} inputs, got {points.shape[-1]}"
        )
    return points, single


def _run_layers(net: NetworkDraw, h: np.ndarray, keep: bool = False, stop: Optional[int] = None):
    cache = []
    for layer, p in zip(net.spec.layers[:stop], net.params[:stop]):
        inp = h
        if layer.kind is LayerKind.LINEAR:
            h = layer.scale * np.matmul(h, np.swapaxes(p.weight, -1, -2))
            if p.bias is not None:
                h = h + p.bias[..., None, :]
        elif layer.kind is LayerKind.T_LAYER:
            h = _mod1(_mod1(np.matmul(h, p.weight.T)) + p.bias[..., None, :])
        elif layer.nonlinearity is Activation.RELU:
            h = np.maximum(h, 0.0)
        else:
            h = np.exp(h - layer.exp_shift)
        if keep:
            cache.append((inp, h))
    return h, cache


def forward(net: NetworkDraw, x) -> np.ndarray:
    """Evaluate the network(s) at one point ``(d,)`` or a point set ``(P, d)``.

    Raises:
        ValueError: If the input dimension does not match the architecture.
    """
    points, single = _as_points(net.spec, x)
    out, _ = _run_layers(net, points)
    return out[..., 0, :] if single else out


def forward_complex(net: NetworkDraw, x) -> np.ndarray:
    """Complex outputs of a network whose final layer is complex-linear."""
    if net.spec.field is not FieldType.COMPLEX:
        raise ValueError("forward_complex requires a complex architecture")
    return forward(net, x)


def hidden_features(net: NetworkDraw, x) -> np.ndarray:
    """Post-activations feeding the output layer, ``batch + (P, N)`` (or ``batch + (N,)``)."""
    points, single = _as_points(net.spec, x)
    h, _ = _run_layers(net, points, stop=net.spec.output_layer)
    return h[..., 0, :] if single else h


def _backprop(net: NetworkDraw, cache, grad: np.ndarray) -> Tuple[LayerParams, ...]:
    grads: List[LayerParams] = [LayerParams()] * len(net.spec.layers)
    for index in range(len(net.spec.layers) - 1, -1, -1):
        layer, p = net.spec.layers[index], net.params[index]
        inp, out = cache[index]
        if layer.kind is LayerKind.LINEAR:
            gw = None
            if layer.weight_prior is not None:
                gw = layer.scale * np.matmul(np.swapaxes(grad, -1, -2), inp)
            gb = grad.sum(axis=-2) if p.bias is not None else None
            grads[index] = LayerParams(gw, gb)
            grad = layer.scale * np.matmul(grad, p.weight)
        elif layer.kind is LayerKind.T_LAYER:
            # mod is treated as the identity
            grads[index] = LayerParams(None, grad.sum(axis=-2))
            grad = np.matmul(grad, p.weight)
        elif layer.nonlinearity is Activation.RELU:
            grad = grad * (inp > 0)
        else:
            grad = grad * out
    return tuple(grads)


def backward(net: NetworkDraw, x, grad_output) -> Tuple[LayerParams, ...]:
    """Gradients of ``sum(grad_output * forward(net, x))`` with respect to every sampled tensor.

    ``grad_output`` has the shape of ``forward(net, x)``. Returned tensors share the
    shapes of ``net.params`` and are summed over input points; entries for fixed or
    absent tensors are ``None``.
    """
    _require_real(net.spec, "backward")
    points, single = _as_points(net.spec, x)
    out, cache = _run_layers(net, points, keep=True)
    _warn_boundary(net, cache)
    grad = np.asarray(grad_output, dtype=float)
    if single:
        grad = grad[..., None, :]
    if grad.shape != out.shape:
        raise ValueError(f"grad_output must have shape {out.shape}, got {grad.shape}")
    return _backprop(net, cache, grad)


def flatten_gradients(net: NetworkDraw, grads: Sequence[LayerParams]) -> np.ndarray:
    """Gradients in :meth:`NetworkDraw.parameter_vector` order."""
    pieces = []
    for layer, g in zip(net.spec.layers, grads):
        for name in layer.parameter_names:
            shape = net.batch_shape + layer.parameter_shape(name)
            tensor = np.broadcast_to(getattr(g, name), shape)
            pieces.append(tensor.reshape(net.batch_shape + (-1,)))
    return np.concatenate(pieces, axis=-1)


def jacobian(net: NetworkDraw, x) -> np.ndarray:
    """``d f_i(x_p) / d theta`` for every sampled parameter.

    Returns ``batch + (P, D, parameters)``, or ``batch + (D, parameters)`` for a single
    point. T-layers use the identity gradient for ``mod``.
    """
    _require_real(net.spec, "jacobian")
    points, single = _as_points(net.spec, x)
    out, cache = _run_layers(net, points, keep=True)
    _warn_boundary(net, cache)
    n_points, n_out = out.shape[-2:]
    rows = []
    for p in range(n_points):
        components = []
        for i in range(n_out):
            grad = np.zeros(out.shape)
            grad[..., p, i] = 1.0
            components.append(flatten_gradients(net, _backprop(net, cache, grad)))
        rows.append(np.stack(components, axis=-2))
    jac = np.stack(rows, axis=-3)
    return jac[..., 0, :, :] if single else jac


def _boundary_hits(net: NetworkDraw, cache) -> int:
    hits = 0
    for layer, p, (inp, _) in zip(net.spec.layers, net.params, cache):
        if layer.kind is LayerKind.T_LAYER:
            raw = np.matmul(inp, p.weight.T)
            hits += int(np.sum(raw == np.floor(raw)))
    return hits


def _warn_boundary(net: NetworkDraw, cache) -> None:
    hits = _boundary_hits(net, cache)
    if hits:
        logger.warning("%d t-layer entries on the mod boundary; using the identity gradient", hits)


def mod_boundary_hits(net: NetworkDraw, x) -> int:
    """Number of t-layer entries whose ``W h`` lands exactly on an integer.

    ``mod`` is not differentiable there; gradients still use the identity convention.
    """
    points, _ = _as_points(net.spec, x)
    _, cache = _run_layers(net, points, keep=True)
    return _boundary_hits(net, cache)


# -- builders -----------------------------------------------------------------


def gauss_net(
    input_dim: int, output_dim: int, width: int, sigma_w: float = 1.0, sigma_b: float = 1.0
) -> ArchitectureSpec:
    """Single hidden layer with the exp-normalized activation.

    ``W0 ~ N(0, sigma_w / sqrt(d))``, ``b0, b1 ~ N(0, sigma_b)``, ``W1 ~ N(0, sigma_w / sqrt(N))``.
    """
    return ArchitectureSpec(
        input_dim,
        output_dim,
        (
            LayerSpec.linear(
                input_dim,
                width,
                GaussianPrior(std=sigma_w / math.sqrt(input_dim)),
                GaussianPrior(std=sigma_b),
            ),
            LayerSpec.activation(Activation.EXP_NORMALIZED, sigma_b, sigma_w, input_dim),
            LayerSpec.linear(
                width,
                output_dim,
                GaussianPrior(std=sigma_w / math.sqrt(width)),
                GaussianPrior(std=sigma_b),
            ),
        ),
    )


def relu_net(
    input_dim: int,
    output_dim: int,
    width: int,
    sigma_w: float = 1.0,
    sigma_b: float = 0.0,
    output_bias: bool = False,
    input_std: Optional[float] = None,
) -> ArchitectureSpec:
    """Single hidden relu layer; hidden bias only when ``sigma_b > 0``.

    ``input_std`` overrides the first-layer std, which defaults to ``sigma_w / sqrt(d)``.
    """
    first_std = sigma_w / math.sqrt(input_dim) if input_std is None else input_std
    hidden_bias = GaussianPrior(std=sigma_b) if sigma_b > 0 else None
    out_bias = GaussianPrior(std=sigma_b) if output_bias and sigma_b > 0 else None
    return ArchitectureSpec(
        input_dim,
        output_dim,
        (
            LayerSpec.linear(input_dim, width, GaussianPrior(std=first_std), hidden_bias),
            LayerSpec.activation(Activation.RELU),
            LayerSpec.linear(
                width, output_dim, GaussianPrior(std=sigma_w / math.sqrt(width)), out_bias
            ),
        ),
    )


def linear_net(
    input_dim: int,
    output_dim: int,
    sigma_w: float = 1.0,
    scale: float = 1.0,
    sigma_b: Optional[float] = None,
) -> ArchitectureSpec:
    """``f = scale * W x (+ b)`` with ``W ~ N(0, sigma_w)``."""
    bias = GaussianPrior(std=sigma_b) if sigma_b else None
    return ArchitectureSpec(
        input_dim,
        output_dim,
        (LayerSpec.linear(input_dim, output_dim, GaussianPrior(std=sigma_w), bias, scale=scale),),
    )


def t_layer_net(
    input_dim: int,
    output_dim: int,
    width: int,
    sigma_w: float = 1.0,
    weight=None,
    weight_seed: int = 0,
    activation: Optional[str] = None,
) -> ArchitectureSpec:
    """T-layer into ``width`` circle-valued units followed by a Gaussian linear readout.

    Without ``weight`` the fixed t-layer matrix is drawn once from ``N(0, 1)``
    with ``weight_seed``, so it is part of the architecture, not of the ensemble.
    """
    if weight is None:
        weight = RngStream(weight_seed).normal(0.0, 1.0, (width, input_dim))
    layers = [LayerSpec.t_layer(input_dim, width, weight)]
    if activation is not None:
        layers.append(LayerSpec.activation(activation))
    readout = GaussianPrior(std=sigma_w / math.sqrt(width))
    layers.append(LayerSpec.linear(width, output_dim, readout))
    return ArchitectureSpec(input_dim, output_dim, tuple(layers))


def complex_output_net(
    input_dim: int,
    output_dim: int,
    width: int,
    sigma_w: float = 1.0,
    sigma_b: float = 1.0,
    output_bias: bool = False,
) -> ArchitectureSpec:
    """Gauss-net hidden layer with a complex-linear output layer (``C^D`` outputs)."""
    out_bias = GaussianPrior(std=sigma_b) if output_bias else None
    return ArchitectureSpec(
        input_dim,
        output_dim,
        (
            LayerSpec.linear(
                input_dim,
                width,
                GaussianPrior(std=sigma_w / math.sqrt(input_dim)),
                GaussianPrior(std=sigma_b),
            ),
            LayerSpec.activation(Activation.EXP_NORMALIZED, sigma_b, sigma_w, input_dim),
            LayerSpec.linear(
                width,
                output_dim,
                GaussianPrior(std=sigma_w / math.sqrt(width)),
                out_bias,
                complex_weights=True,
            ),
        ),
        FieldType.COMPLEX,
    )


def quartic_output_net(
    input_dim: int,
    output_dim: int,
    width: int,
    sigma: float = 1.0,
    coupling: float = 0.0,
    sigma_w: float = 1.0,
    burn_in: int = 10_000,
) -> ArchitectureSpec:
    """Relu hidden layer whose ``D x N`` output weight has a quartic-invariant prior.

    ``sigma`` is the full std of each output weight; it is not rescaled by width.
    Every sampled network runs its own Metropolis chain for ``burn_in`` sweeps.
    """
    return ArchitectureSpec(
        input_dim,
        output_dim,
        (
            LayerSpec.linear(input_dim, width, GaussianPrior(std=sigma_w / math.sqrt(input_dim))),
            LayerSpec.activation(Activation.RELU),
            LayerSpec.linear(
                width,
                output_dim,
                QuarticPrior(sigma, coupling, burn_in=burn_in),
            ),
        ),
    )


def breaking_net(
    input_dim: int,
    output_dim: int,
    width: int,
    k: int = 0,
    mu: float = 0.0,
    input_std: Optional[float] = None,
    output_std: Optional[float] = None,
) -> ArchitectureSpec:
    """Relu hidden layer and a no-bias output layer whose first ``k`` rows have mean ``mu``.

    Weights default to ``N(0, 1/sqrt(d))`` and ``N(., 1/sqrt(N))`` read as standard
    deviations; the density keeps ``SO(D - k)`` symmetry.
    """
    if not 0 <= k <= output_dim:
        raise ValueError(f"k must lie in [0, {output_dim}], got {k}")
    first_std = 1.0 / math.sqrt(input_dim) if input_std is None else input_std
    last_std = 1.0 / math.sqrt(width) if output_std is None else output_std
    return ArchitectureSpec(
        input_dim,
        output_dim,
        (
            LayerSpec.linear(input_dim, width, GaussianPrior(std=first_std)),
            LayerSpec.activation(Activation.RELU),
            LayerSpec.linear(width, output_dim, GaussianPrior(mean=mu, std=last_std, rows=k)),
        ),
    )


BUILDERS: Dict[str, Callable[..., ArchitectureSpec]] = {
    "gauss_net": gauss_net,
    "relu_net": relu_net,
    "linear_net": linear_net,
    "t_layer_net": t_layer_net,
    "complex_output_net": complex_output_net,
    "quartic_output_net": quartic_output_net,
    "breaking_net": breaking_net,
}


def _layer_from_dict(data: Dict[str, Any]) -> LayerSpec:
    kind = LayerKind(data["kind"])
    if kind is LayerKind.ACTIVATION:
        return LayerSpec.activation(
            data["name"], data.get("sigma_b"), data.get("sigma_w"), data.get("input_dim")
        )
    if kind is LayerKind.T_LAYER:
        return LayerSpec.t_layer(data["in"], data["out"], data["weight"])
    weight_prior = prior_from_dict(data["weight"]) if isinstance(data.get("weight"), dict) else None
    fixed = None if weight_prior is not None else data.get("weight")
    bias = data.get("bias")
    return LayerSpec.linear(
        data["in"],
        data["out"],
        weight_prior,
        prior_from_dict(bias) if bias is not None else None,
        weight=fixed,
        scale=data.get("scale", 1.0),
        complex_weights=data.get("complex", False),
    )


def architecture_from_dict(data: Dict[str, Any], width: Optional[int] = None) -> ArchitectureSpec:
    """Build an architecture from its config form.

    ``{"builder": name, **kwargs}`` calls a named builder, with ``width`` overriding
    the ``width`` keyword when given; otherwise ``data`` lists layers explicitly.

    Raises:
        ValueError: On an unknown builder, layer kind or bad arguments.
    """
    data = dict(data)
    if "builder" in data:
        name = data.pop("builder")
        if name not in BUILDERS:
            raise ValueError(f"unknown architecture builder: {name!r}")
        if width is not None:
            data["width"] = width
        try:
            return BUILDERS[name](**data)
        except TypeError as exc:
            raise ValueError(f"bad arguments for {name}: {exc}") from None
    try:
        layers = tuple(_layer_from_dict(layer) for layer in data["layers"])
        return ArchitectureSpec(
            data["input_dim"], data["output_dim"], layers, FieldType(data.get("field", "real"))
        )
    except KeyError as exc:
        raise ValueError(f"architecture is missing field {exc}") from None

"""Generative models mapping a radius-r latent ball into R^n.

Two families are supported: a linear map ``z -> B z`` and a fully connected
network. Both evaluate batched latents (trailing axis is the latent axis),
return ``J^T u`` products for gradient-based search, and report an upper bound
on their Lipschitz constant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .seeding import make_rng

ACTIVATIONS = ("relu", "sigmoid", "tanh", "none")
ACTIVATION_LIPSCHITZ = {"relu": 1.0, "sigmoid": 0.25, "tanh": 1.0, "none": 1.0}
BALL_TOL = 1e-12


class GeneratorError(ValueError):
    """Malformed generator definition or file."""


class DomainError(ValueError):
    """Latent input outside the generator's ball in strict mode."""


def spectral_norm(matrix):
    """Largest singular value (LAPACK SVD via ``numpy.linalg.norm(M, 2)``)."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.size == 0:
        return 0.0
    return float(np.linalg.norm(matrix, 2))


@dataclass(frozen=True)
class LatentBall:
    k: int
    r: float

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise GeneratorError(f"latent dimension must be a positive integer, got {self.k}")
        if not np.isfinite(self.r) or self.r <= 0:
            raise GeneratorError(f"radius must be positive, got {self.r}")

    def contains(self, z) -> bool:
        norms = np.linalg.norm(np.asarray(z, dtype=float), axis=-1)
        return bool(np.all(norms <= self.r * (1.0 + BALL_TOL)))

    def project(self, z):
        """Radial projection onto the ball (rows independently)."""
        z = np.asarray(z, dtype=float)
        norms = np.linalg.norm(z, axis=-1, keepdims=True)
        scale = np.where(norms > self.r, self.r / np.maximum(norms, 1e-300), 1.0)
        return z * scale


class _Generator:
    domain: LatentBall

    @property
    def k(self) -> int:
        return self.domain.k

    @property
    def radius(self) -> float:
        return self.domain.r

    def _check_latent(self, z, strict):
        z = np.asarray(z, dtype=float)
        if z.ndim not in (1, 2) or z.shape[-1] != self.k:
            raise GeneratorError(f"latent has shape {z.shape}, expected (..., {self.k})")
        if strict and not self.domain.contains(z):
            raise DomainError(
                f"latent norm {np.max(np.linalg.norm(z, axis=-1)):.6g} exceeds radius {self.radius:.6g}"
            )
        return z

    def _check_ambient(self, u, z):
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.n or (z.ndim == 2 and u.shape != (z.shape[0], self.n)):
            raise GeneratorError(f"ambient vector has shape {u.shape}, expected (..., {self.n})")
        return u


@dataclass(frozen=True, eq=False)
class LinearGenerator(_Generator):
    """``G(z) = B z`` on the ball of radius ``r``."""

    matrix: np.ndarray
    domain: LatentBall

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2:
            raise GeneratorError("linear generator matrix must be 2-dimensional")
        n, k = matrix.shape
        if k != self.domain.k:
            raise GeneratorError(f"matrix has {k} columns but latent dimension is {self.domain.k}")
        if n < k:
            raise GeneratorError(f"ambient dimension {n} is smaller than latent dimension {k}")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def from_matrix(cls, matrix, radius):
        matrix = np.asarray(matrix, dtype=float)
        return cls(matrix, LatentBall(matrix.shape[1] if matrix.ndim == 2 else 0, float(radius)))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def forward(self, z, strict=True):
        z = self._check_latent(z, strict)
        return z @ self.matrix.T

    def jacobian_vector_product(self, z, u, strict=True):
        """Return ``J(z)^T u``; for a linear map this is ``B^T u``."""
        z = self._check_latent(z, strict)
        u = self._check_ambient(u, z)
        return u @ self.matrix

    def lipschitz_bound(self) -> float:
        return spectral_norm(self.matrix)

    def to_dict(self):
        return {"kind": "linear", "radius": self.radius, "matrix": self.matrix.tolist()}


@dataclass(frozen=True, eq=False)
class Layer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float)
        bias = np.array(self.bias, dtype=float)
        if weights.ndim != 2:
            raise GeneratorError("layer weights must be a 2-dimensional array")
        if bias.shape != (weights.shape[0],):
            raise GeneratorError(
                f"bias has shape {bias.shape}, expected ({weights.shape[0]},) to match weights"
            )
        if self.activation not in ACTIVATIONS:
            raise GeneratorError(f"unsupported activation {self.activation!r}")
        weights.setflags(write=False)
        bias.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)


def _activate(name, pre):
    if name == "relu":
        return np.maximum(pre, 0.0)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * pre))
    if name == "tanh":
        return np.tanh(pre)
    return pre


def _activation_grad(name, pre, out):
    # relu uses subgradient 0 at a zero pre-activation
    if name == "relu":
        return (pre > 0.0).astype(float)
    if name == "sigmoid":
        return out * (1.0 - out)
    if name == "tanh":
        return 1.0 - out * out
    return np.ones_like(pre)


@dataclass(frozen=True, eq=False)
class MlpGenerator(_Generator):
    """Fully connected network ``z -> act_d(W_d ... act_1(W_1 z + b_1) ... + b_d)``."""

    layers: tuple
    domain: LatentBall

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise GeneratorError("an MLP generator needs at least one layer")
        expected = self.domain.k
        for i, layer in enumerate(layers):
            if layer.weights.shape[1] != expected:
                raise GeneratorError(
                    f"dimension chain broken at layer {i}: expects input {layer.weights.shape[1]}, "
                    f"previous output is {expected}"
                )
            expected = layer.weights.shape[0]
        object.__setattr__(self, "layers", layers)

    @property
    def n(self) -> int:
        return self.layers[-1].weights.shape[0]

    @property
    def dims(self):
        return [self.k] + [layer.weights.shape[0] for layer in self.layers]

    def forward(self, z, strict=True):
        h = self._check_latent(z, strict)
        for layer in self.layers:
            h = _activate(layer.activation, h @ layer.weights.T + layer.bias)
        return h

    def _forward_trace(self, z):
        trace = []
        h = z
        for layer in self.layers:
            pre = h @ layer.weights.T + layer.bias
            out = _activate(layer.activation, pre)
            trace.append((pre, out))
            h = out
        return trace

    def jacobian_vector_product(self, z, u, strict=True):
        """Return ``J(z)^T u`` by reverse accumulation through the layers."""
        z = self._check_latent(z, strict)
        u = self._check_ambient(u, z)
        trace = self._forward_trace(z)
        grad = u
        for layer, (pre, out) in zip(reversed(self.layers), reversed(trace)):
            grad = (grad * _activation_grad(layer.activation, pre, out)) @ layer.weights
        return grad

    def value_and_vjp(self, z, u_fn):
        """Forward pass plus ``J^T u_fn(G(z))`` sharing one trace (unchecked domain)."""
        trace = self._forward_trace(z)
        output = trace[-1][1]
        grad = u_fn(output)
        for layer, (pre, out) in zip(reversed(self.layers), reversed(trace)):
            grad = (grad * _activation_grad(layer.activation, pre, out)) @ layer.weights
        return output, grad

    def lipschitz_bound(self) -> float:
        bound = 1.0
        for layer in self.layers:
            bound *= spectral_norm(layer.weights) * ACTIVATION_LIPSCHITZ[layer.activation]
        return bound

    def to_dict(self):
        return {
            "kind": "mlp",
            "radius": self.radius,
            "layers": [
                {
                    "weights": layer.weights.tolist(),
                    "bias": layer.bias.tolist(),
                    "activation": layer.activation,
                }
                for layer in self.layers
            ],
        }


def random_mlp(dims, seed, spectral_scale=1.5, activations=None, radius=None, bias_std=0.0):
    """Seeded random MLP with every weight matrix rescaled to spectral norm ``spectral_scale``.

    Hidden layers default to relu and the output layer to the identity. The
    radius defaults to ``sqrt(k)``.
    """
    dims = [int(d) for d in dims]
    if activations is None:
        activations = ["relu"] * (len(dims) - 2) + ["none"]
    if len(activations) != len(dims) - 1:
        raise GeneratorError("need one activation per layer")
    rng = make_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], activations):
        weights = rng.standard_normal((fan_out, fan_in))
        weights *= spectral_scale / spectral_norm(weights)
        bias = bias_std * rng.standard_normal(fan_out)
        layers.append(Layer(weights, bias, act))
    radius = np.sqrt(dims[0]) if radius is None else radius
    return MlpGenerator(tuple(layers), LatentBall(dims[0], float(radius)))


def orthonormal_linear(n, k, radius, seed):
    """Linear generator whose matrix has orthonormal columns (QR of a Gaussian matrix)."""
    q, _ = np.linalg.qr(make_rng(seed).standard_normal((n, k)))
    return LinearGenerator.from_matrix(q, radius)


def generator_from_dict(data, source="<generator>"):
    if not isinstance(data, dict):
        raise GeneratorError(f"{source}: top level must be an object")
    kind = data.get("kind")
    if kind not in ("linear", "mlp"):
        raise GeneratorError(f"{source}: field 'kind' must be 'linear' or 'mlp', got {kind!r}")
    radius = data.get("radius")
    if not isinstance(radius, (int, float)) or isinstance(radius, bool):
        raise GeneratorError(f"{source}: field 'radius' must be a number")
    if kind == "linear":
        if "matrix" not in data:
            raise GeneratorError(f"{source}: linear generator requires field 'matrix'")
        try:
            matrix = np.array(data["matrix"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise GeneratorError(f"{source}: field 'matrix' is not a numeric rectangular array") from exc
        if matrix.ndim != 2:
            raise GeneratorError(f"{source}: field 'matrix' must be an array of rows")
        return LinearGenerator.from_matrix(matrix, radius)
    raw_layers = data.get("layers")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise GeneratorError(f"{source}: mlp generator requires a non-empty 'layers' array")
    layers = []
    for i, raw in enumerate(raw_layers):
        where = f"{source}: layers[{i}]"
        if not isinstance(raw, dict):
            raise GeneratorError(f"{where} must be an object")
        for key in ("weights", "bias", "activation"):
            if key not in raw:
                raise GeneratorError(f"{where} is missing field '{key}'")
        if raw["activation"] not in ACTIVATIONS:
            raise GeneratorError(f"{where}.activation: unsupported activation {raw['activation']!r}")
        try:
            weights = np.array(raw["weights"], dtype=float)
            bias = np.array(raw["bias"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise GeneratorError(f"{where}: weights/bias must be numeric rectangular arrays") from exc
        try:
            layers.append(Layer(weights, bias, raw["activation"]))
        except GeneratorError as exc:
            raise GeneratorError(f"{where}: {exc}") from None
    k = layers[0].weights.shape[1] if layers[0].weights.ndim == 2 else 0
    try:
        return MlpGenerator(tuple(layers), LatentBall(k, float(radius)))
    except GeneratorError as exc:
        raise GeneratorError(f"{source}: {exc}") from None


def save_generator(gen, path):
    """Write a generator as JSON; floats use the shortest round-trip repr."""
    Path(path).write_text(json.dumps(gen.to_dict(), indent=1) + "\n", encoding="utf-8")


def load_generator(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise GeneratorError(f"cannot read generator file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GeneratorError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return generator_from_dict(data, str(path))

"""
Surrogate models predicting [score, normalized duration] from a level's
channel stack and the 16 class parameters.

The convolutional model has two branches: a map branch
(conv 5x5 -> pool -> conv 5x5 -> pool -> 800 features) and a class branch
(dense 16 -> 8), joined by a dense 128 layer and a 2-unit output. Every
node uses ELU. Three flat baselines read the same inputs.

Arrays are NCHW. Layer forward passes return their cache instead of storing
it, so a trained model can be shared between readers.
"""

import hashlib
import json
import logging
import struct
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from level import N_CHANNELS, SIZE

logger = logging.getLogger(__name__)

N_PARAMS = 16
N_OUTPUTS = 2
FLAT_INPUTS = N_CHANNELS * SIZE * SIZE + N_PARAMS
KERNEL = 5
MODEL_KINDS = ("cnn", "mlp16", "perceptron", "linear")
BASELINE_KINDS = MODEL_KINDS[1:]

WEIGHTS_MAGIC = b"CFW1"

Grads = Dict[str, np.ndarray]


class ShapeError(ValueError):
    """Input does not match the shape a layer expects"""

    def __init__(self, layer: str, expected, got):
        self.layer = layer
        super().__init__(f"layer {layer}: expected shape {expected}, got {got}")


class GradientError(ArithmeticError):
    """A layer produced a non-finite gradient"""

    def __init__(self, layer: str):
        self.layer = layer
        super().__init__(f"non-finite gradient in layer {layer}")


class ModelFormatError(ValueError):
    """Raised for unreadable or mismatched weight files"""


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0)))


def elu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0))).astype(x.dtype)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    return elu(z) if activation == "elu" else z


def _activation_grad(dout: np.ndarray, z: np.ndarray, activation: str) -> np.ndarray:
    return dout * elu_grad(z) if activation == "elu" else dout


# -------------------------
# LAYERS
# -------------------------

class Layer:
    name: str = "layer"

    def __init__(self):
        self.params: Dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, object]:
        raise NotImplementedError

    def backward(self, dout: np.ndarray, cache) -> Tuple[np.ndarray, Grads]:
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, name: str, n_in: int, n_out: int, activation: str, rng: np.random.Generator):
        super().__init__()
        self.name = name
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        scale = np.sqrt(2.0 / n_in)
        self.params = {
            "W": (rng.standard_normal((n_in, n_out)) * scale).astype(np.float32),
            "b": np.zeros(n_out, dtype=np.float32),
        }

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(self.name, ("N", self.n_in), x.shape)
        z = x @ self.params["W"] + self.params["b"]
        return _activate(z, self.activation), (x, z)

    def backward(self, dout, cache):
        x, z = cache
        dz = _activation_grad(dout, z, self.activation)
        grads = {"W": x.T @ dz, "b": dz.sum(axis=0)}
        return dz @ self.params["W"].T, grads


class Conv2D(Layer):
    """5x5 same-padding convolution with ELU, computed as im2col + matmul"""

    def __init__(self, name: str, c_in: int, c_out: int, rng: np.random.Generator, kernel: int = KERNEL):
        super().__init__()
        self.name = name
        self.c_in, self.c_out, self.kernel = c_in, c_out, kernel
        self.pad = kernel // 2
        scale = np.sqrt(2.0 / (c_in * kernel * kernel))
        self.params = {
            "W": (rng.standard_normal((c_out, c_in, kernel, kernel)) * scale).astype(np.float32),
            "b": np.zeros(c_out, dtype=np.float32),
        }

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise ShapeError(self.name, ("N", self.c_in, "H", "W"), x.shape)
        n, _, h, w = x.shape
        k, p = self.kernel, self.pad
        padded = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(2, 3))
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, self.c_in * k * k)
        z = cols @ self.params["W"].reshape(self.c_out, -1).T + self.params["b"]
        z = z.reshape(n, h, w, self.c_out).transpose(0, 3, 1, 2)
        return elu(z), (x.shape, cols, z)

    def backward(self, dout, cache):
        shape, cols, z = cache
        n, _, h, w = shape
        k, p = self.kernel, self.pad
        dz = dout * elu_grad(z)
        dflat = dz.transpose(0, 2, 3, 1).reshape(-1, self.c_out)
        grads = {
            "W": (dflat.T @ cols).reshape(self.params["W"].shape),
            "b": dflat.sum(axis=0),
        }
        dcols = (dflat @ self.params["W"].reshape(self.c_out, -1)).reshape(n, h, w, self.c_in, k, k)
        dpadded = np.zeros((n, self.c_in, h + 2 * p, w + 2 * p), dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dpadded[:, :, i:i + h, j:j + w] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dpadded[:, :, p:p + h, p:p + w], grads


class MaxPool2D(Layer):
    """2x2 max pooling with stride 2"""

    def __init__(self, name: str):
        super().__init__()
        self.name = name

    def forward(self, x):
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeError(self.name, ("N", "C", "even", "even"), x.shape)
        blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
        winners = np.argmax(blocks, axis=-1)
        out = np.take_along_axis(blocks, winners[..., np.newaxis], axis=-1)[..., 0]
        return out, (x.shape, winners)

    def backward(self, dout, cache):
        (n, c, h, w), winners = cache
        dblocks = np.zeros((n, c, h // 2, w // 2, 4), dtype=dout.dtype)
        np.put_along_axis(dblocks, winners[..., np.newaxis], dout[..., np.newaxis], axis=-1)
        dx = dblocks.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return dx, {}


# -------------------------
# MODELS
# -------------------------

@dataclass(frozen=True)
class Prediction:
    """Raw network outputs; consumers use the clamped copies"""

    score: np.ndarray
    duration: np.ndarray

    @property
    def score_clamped(self) -> np.ndarray:
        return np.clip(self.score, 0.0, 1.0)

    @property
    def duration_clamped(self) -> np.ndarray:
        return np.clip(self.duration, 0.0, 1.0)


def mse_loss(outputs: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    """Squared error summed over the outputs, averaged over the batch; returns (loss, dloss/doutputs)"""
    diff = outputs - targets
    n = outputs.shape[0]
    return float(np.sum(diff * diff) / n), (2.0 / n) * diff


class SurrogateModel:
    """Common machinery: parameter access, inference, loss gradients, dtype casts"""

    kind = "model"

    def __init__(self):
        self.layers: List[Layer] = []

    def parameters(self) -> List[Tuple[str, np.ndarray]]:
        """(qualified name, array) in layer order; arrays are live references"""
        return [(f"{layer.name}.{key}", value)
                for layer in self.layers for key, value in layer.params.items()]

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.parameters())
        if set(own) != set(state):
            raise ModelFormatError(f"tensor names differ: {sorted(set(own) ^ set(state))}")
        for layer in self.layers:
            for key in layer.params:
                value = np.asarray(state[f"{layer.name}.{key}"])
                if value.shape != layer.params[key].shape:
                    raise ShapeError(layer.name, layer.params[key].shape, value.shape)
                layer.params[key] = value.astype(layer.params[key].dtype).copy()

    @property
    def dtype(self):
        return self.layers[0].params["W"].dtype

    def astype(self, dtype) -> "SurrogateModel":
        """Copy of the model with every tensor cast to dtype"""
        clone = build_model(self.kind)
        for layer, source in zip(clone.layers, self.layers):
            layer.params = {key: value.astype(dtype) for key, value in source.params.items()}
        return clone

    def spec_digest(self) -> bytes:
        layout = [self.kind, [(name, list(value.shape)) for name, value in self.parameters()]]
        return hashlib.sha256(json.dumps(layout).encode()).digest()[:16]

    @staticmethod
    def _check_inputs(channels: np.ndarray, params: np.ndarray) -> None:
        if channels.ndim != 4 or channels.shape[1:] != (N_CHANNELS, SIZE, SIZE):
            raise ShapeError("input.channels", ("N", N_CHANNELS, SIZE, SIZE), channels.shape)
        if params.ndim != 2 or params.shape[1] != N_PARAMS:
            raise ShapeError("input.params", ("N", N_PARAMS), params.shape)
        if channels.shape[0] != params.shape[0]:
            raise ShapeError("input", f"{channels.shape[0]} parameter rows", params.shape)

    def forward(self, channels: np.ndarray, params: np.ndarray) -> Tuple[np.ndarray, object]:
        raise NotImplementedError

    def backward(self, doutputs: np.ndarray, tape) -> Grads:
        raise NotImplementedError

    def __call__(self, channels: np.ndarray, params: np.ndarray) -> np.ndarray:
        return self.forward(channels, params)[0]

    def predict(self, channels: np.ndarray, params: np.ndarray) -> Prediction:
        outputs = self(channels, params)
        return Prediction(outputs[:, 0], outputs[:, 1])

    def predict_outcomes(self, channels: np.ndarray, params: np.ndarray) -> np.ndarray:
        """(N,2) raw [score, duration]; a single (8,20,20) level is shared by every row"""
        params = np.atleast_2d(np.asarray(params, dtype=self.dtype))
        if channels.ndim == 3:
            channels = np.broadcast_to(channels, (params.shape[0],) + channels.shape)
        return self(channels, params)

    def loss_and_gradients(self, channels: np.ndarray, params: np.ndarray,
                           targets: np.ndarray) -> Tuple[float, Grads]:
        outputs, tape = self.forward(channels, params)
        loss, doutputs = mse_loss(outputs, targets.astype(outputs.dtype))
        return loss, self.backward(doutputs, tape)

    def _backward_layer(self, layer: Layer, dout: np.ndarray, cache, grads: Grads) -> np.ndarray:
        dx, layer_grads = layer.backward(dout, cache)
        for key, value in layer_grads.items():
            if not np.all(np.isfinite(value)):
                raise GradientError(layer.name)
            grads[f"{layer.name}.{key}"] = value
        return dx


class ConvSurrogate(SurrogateModel):
    kind = "cnn"

    def __init__(self, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.conv1 = Conv2D("conv1", N_CHANNELS, 16, rng)
        self.pool1 = MaxPool2D("pool1")
        self.conv2 = Conv2D("conv2", 16, 32, rng)
        self.pool2 = MaxPool2D("pool2")
        self.class_dense = Dense("class_dense", N_PARAMS, 8, "elu", rng)
        self.hidden = Dense("hidden", 800 + 8, 128, "elu", rng)
        self.output = Dense("output", 128, N_OUTPUTS, "elu", rng)
        self.layers = [self.conv1, self.pool1, self.conv2, self.pool2,
                       self.class_dense, self.hidden, self.output]

    def map_features(self, channels: np.ndarray) -> Tuple[np.ndarray, list]:
        x = channels.astype(self.dtype)
        caches = []
        for layer in (self.conv1, self.pool1, self.conv2, self.pool2):
            x, cache = layer.forward(x)
            caches.append(cache)
        return x.reshape(x.shape[0], -1), caches

    def _head(self, features: np.ndarray, params: np.ndarray):
        c, class_cache = self.class_dense.forward(params.astype(self.dtype))
        h, hidden_cache = self.hidden.forward(np.concatenate([features, c], axis=1))
        y, output_cache = self.output.forward(h)
        return y, (class_cache, hidden_cache, output_cache)

    def forward(self, channels, params):
        self._check_inputs(channels, params)
        features, map_caches = self.map_features(channels)
        y, head_caches = self._head(features, params)
        return y, (map_caches, head_caches)

    def backward(self, doutputs, tape):
        map_caches, (class_cache, hidden_cache, output_cache) = tape
        grads: Grads = {}
        dh = self._backward_layer(self.output, doutputs, output_cache, grads)
        dz = self._backward_layer(self.hidden, dh, hidden_cache, grads)
        dfeatures, dc = dz[:, :800], dz[:, 800:]
        self._backward_layer(self.class_dense, dc, class_cache, grads)

        pooled_shape = map_caches[3][0]
        dx = dfeatures.reshape(pooled_shape[0], 32, pooled_shape[2] // 2, pooled_shape[3] // 2)
        for layer, cache in zip((self.pool2, self.conv2, self.pool1, self.conv1), reversed(map_caches)):
            dx = self._backward_layer(layer, dx, cache, grads)
        return grads

    def predict_outcomes(self, channels, params):
        params = np.atleast_2d(np.asarray(params, dtype=self.dtype))
        if channels.ndim == 3:
            features, _ = self.map_features(channels[np.newaxis])
            features = np.repeat(features, params.shape[0], axis=0)
            return self._head(features, params)[0]
        return self(channels, params)


class FlatSurrogate(SurrogateModel):
    """Baselines over the flattened 3200 map bits plus the 16 parameters"""

    def __init__(self, kind: str, seed: int = 0):
        super().__init__()
        if kind not in BASELINE_KINDS:
            raise ValueError(f"unknown baseline kind {kind!r}; expected one of {', '.join(BASELINE_KINDS)}")
        self.kind = kind
        rng = np.random.default_rng(seed)
        if kind == "mlp16":
            self.layers = [Dense("hidden", FLAT_INPUTS, 16, "elu", rng),
                           Dense("output", 16, N_OUTPUTS, "identity", rng)]
        elif kind == "perceptron":
            self.layers = [Dense("output", FLAT_INPUTS, N_OUTPUTS, "elu", rng)]
        else:
            self.layers = [Dense("output", FLAT_INPUTS, N_OUTPUTS, "identity", rng)]

    def forward(self, channels, params):
        self._check_inputs(channels, params)
        x = np.concatenate([channels.reshape(channels.shape[0], -1).astype(self.dtype),
                            params.astype(self.dtype)], axis=1)
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, doutputs, tape):
        grads: Grads = {}
        dx = doutputs
        for layer, cache in zip(reversed(self.layers), reversed(tape)):
            dx = self._backward_layer(layer, dx, cache, grads)
        return grads


def build_baseline(kind: str, seed: int = 0) -> FlatSurrogate:
    return FlatSurrogate(kind, seed)


def build_model(kind: str, seed: int = 0) -> SurrogateModel:
    if kind == "cnn":
        return ConvSurrogate(seed)
    return build_baseline(kind, seed)


# -------------------------
# WEIGHT FILES
# -------------------------

def save_model(model: SurrogateModel, path: str) -> None:
    """CFW1 layout: magic, 16-byte layout digest, kind, then named float32 tensors with shapes"""
    kind = model.kind.encode("ascii")
    tensors = model.parameters()
    with open(path, "wb") as handle:
        handle.write(WEIGHTS_MAGIC)
        handle.write(model.spec_digest())
        handle.write(struct.pack("<B", len(kind)) + kind)
        handle.write(struct.pack("<I", len(tensors)))
        for name, value in tensors:
            encoded = name.encode("utf-8")
            handle.write(struct.pack("<H", len(encoded)) + encoded)
            handle.write(struct.pack("<B", value.ndim))
            handle.write(struct.pack(f"<{value.ndim}I", *value.shape))
            handle.write(np.ascontiguousarray(value, dtype="<f4").tobytes())


def load_model(path: str) -> SurrogateModel:
    with open(path, "rb") as handle:
        data = handle.read()
    if data[:4] != WEIGHTS_MAGIC:
        raise ModelFormatError(f"{path}: not a weight file (bad magic)")
    try:
        digest = data[4:20]
        (kind_len,) = struct.unpack_from("<B", data, 20)
        offset = 21 + kind_len
        kind = data[21:offset].decode("ascii")
        (count,) = struct.unpack_from("<I", data, offset)
        offset += 4
        state = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            name = data[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", data, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", data, offset)
            offset += 4 * ndim
            size = int(np.prod(shape)) if shape else 1
            state[name] = np.frombuffer(data, dtype="<f4", count=size, offset=offset).reshape(shape)
            offset += 4 * size
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise ModelFormatError(f"{path}: truncated or corrupt weight file ({e})") from e
    if offset != len(data):
        raise ModelFormatError(f"{path}: {len(data) - offset} trailing bytes")
    if kind not in MODEL_KINDS:
        raise ModelFormatError(f"{path}: unknown model kind {kind!r}")

    model = build_model(kind)
    if model.spec_digest() != digest:
        raise ModelFormatError(f"{path}: layer layout does not match a {kind} model")
    model.load_state_dict(state)
    return model

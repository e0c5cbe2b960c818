"""Layer kernels: dense, LSTM, 1-D convolution, dropout, pooling.

All layers share the same small protocol: `init(rng, input_shape,
dtype)` allocates parameters and returns the output shape (without the
batch axis), `forward(x, training, rng)` caches whatever the backward
pass needs when training, and `backward(dy, need_dx)` fills
`self.grads` and optionally returns the gradient w.r.t. the input.
Setting need_dx=False at the deepest non-frozen layer lets training
skip the remaining downstream work, which is what makes layer freezing
cheaper, not just a no-op mask.

Hidden activations are ReLU throughout; the LSTM keeps sigmoid gates
and applies the ReLU to the candidate and cell-output transforms.
"""

import numpy as np


def _glorot(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Layer:
    params: dict
    grads: dict

    def __init__(self):
        self.params = {}
        self.grads = {}

    def init(self, rng, input_shape, dtype):
        raise NotImplementedError

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, dy, need_dx=True):
        raise NotImplementedError

    def param_count(self):
        return sum(p.size for p in self.params.values())


class Dense(Layer):
    """Fully connected layer, activation 'relu' or 'linear'."""

    def __init__(self, units, activation="relu"):
        super().__init__()
        self.units = units
        self.activation = activation

    def init(self, rng, input_shape, dtype):
        (din,) = input_shape
        self.params = {
            "W": _glorot(rng, (din, self.units), din, self.units, dtype),
            "b": np.zeros(self.units, dtype=dtype),
        }
        return (self.units,)

    def forward(self, x, training=False, rng=None):
        z = x @ self.params["W"] + self.params["b"]
        y = np.maximum(z, 0) if self.activation == "relu" else z
        if training:
            self._x, self._z = x, z
        return y

    def backward(self, dy, need_dx=True):
        dz = dy * (self._z > 0) if self.activation == "relu" else dy
        self.grads = {"W": self._x.T @ dz, "b": dz.sum(axis=0)}
        return dz @ self.params["W"].T if need_dx else None


class LSTM(Layer):
    """Single LSTM layer, gate order (input, forget, candidate, output).

    Kernels use Glorot-uniform init (including the recurrent kernel);
    biases start at zero except the forget gate, which starts at one.
    """

    def __init__(self, units, return_sequences=False):
        super().__init__()
        self.units = units
        self.return_sequences = return_sequences

    def init(self, rng, input_shape, dtype):
        t, din = input_shape
        h = self.units
        b = np.zeros(4 * h, dtype=dtype)
        b[h:2 * h] = 1.0
        self.params = {
            "W": _glorot(rng, (din, 4 * h), din, 4 * h, dtype),
            "U": _glorot(rng, (h, 4 * h), h, 4 * h, dtype),
            "b": b,
        }
        return (t, h) if self.return_sequences else (h,)

    def forward(self, x, training=False, rng=None):
        n, t, _ = x.shape
        h_dim = self.units
        dtype = x.dtype
        h = np.zeros((n, h_dim), dtype=dtype)
        c = np.zeros((n, h_dim), dtype=dtype)
        W, U, bias = self.params["W"], self.params["U"], self.params["b"]
        xw = x @ W  # all timesteps at once
        cache = [] if training else None
        hs = np.empty((n, t, h_dim), dtype=dtype) if self.return_sequences else None
        for step in range(t):
            z = xw[:, step] + h @ U + bias
            gi = sigmoid(z[:, :h_dim])
            gf = sigmoid(z[:, h_dim:2 * h_dim])
            zg = z[:, 2 * h_dim:3 * h_dim]
            gg = np.maximum(zg, 0)
            go = sigmoid(z[:, 3 * h_dim:])
            c_prev = c
            c = gf * c_prev + gi * gg
            hc = np.maximum(c, 0)
            h_prev = h
            h = go * hc
            if training:
                cache.append((gi, gf, gg, go, zg > 0, c_prev, c, hc, h_prev))
            if self.return_sequences:
                hs[:, step] = h
        if training:
            self._x, self._cache = x, cache
        return hs if self.return_sequences else h

    def backward(self, dy, need_dx=True):
        x, cache = self._x, self._cache
        n, t, _ = x.shape
        h_dim = self.units
        W, U = self.params["W"], self.params["U"]
        dz_all = np.empty((n, t, 4 * h_dim), dtype=x.dtype)
        h_prev_all = np.empty((n, t, h_dim), dtype=x.dtype)
        dh_next = np.zeros((n, h_dim), dtype=x.dtype)
        dc_next = np.zeros((n, h_dim), dtype=x.dtype)
        for step in range(t - 1, -1, -1):
            gi, gf, gg, go, zg_pos, c_prev, c, hc, h_prev = cache[step]
            dh = dh_next + (dy[:, step] if self.return_sequences else (dy if step == t - 1 else 0.0))
            do = dh * hc
            dc = dh * go * (c > 0) + dc_next
            dz = dz_all[:, step]
            dz[:, :h_dim] = dc * gg * gi * (1 - gi)
            dz[:, h_dim:2 * h_dim] = dc * c_prev * gf * (1 - gf)
            dz[:, 2 * h_dim:3 * h_dim] = dc * gi * zg_pos
            dz[:, 3 * h_dim:] = do * go * (1 - go)
            h_prev_all[:, step] = h_prev
            dh_next = dz @ U.T
            dc_next = dc * gf
        # weight gradients batched over all timesteps
        flat_dz = dz_all.reshape(n * t, 4 * h_dim)
        self.grads = {
            "W": x.reshape(n * t, -1).T @ flat_dz,
            "U": h_prev_all.reshape(n * t, h_dim).T @ flat_dz,
            "b": flat_dz.sum(axis=0),
        }
        return (dz_all @ W.T) if need_dx else None


class Conv1D(Layer):
    """Valid 1-D convolution, stride 1, ReLU activation."""

    def __init__(self, filters, kernel):
        super().__init__()
        self.filters = filters
        self.kernel = kernel

    def init(self, rng, input_shape, dtype):
        t, cin = input_shape
        k, f = self.kernel, self.filters
        self.params = {
            "W": _glorot(rng, (k, cin, f), k * cin, k * f, dtype),
            "b": np.zeros(f, dtype=dtype),
        }
        return (t - k + 1, f)

    def forward(self, x, training=False, rng=None):
        k = self.kernel
        # windows: (n, t_out, cin, k)
        windows = np.lib.stride_tricks.sliding_window_view(x, k, axis=1)
        z = np.einsum("nock,kcf->nof", windows, self.params["W"], optimize=True)
        z = z + self.params["b"]
        if training:
            self._windows, self._z, self._in_shape = windows, z, x.shape
        return np.maximum(z, 0)

    def backward(self, dy, need_dx=True):
        dz = dy * (self._z > 0)
        self.grads = {
            "W": np.einsum("nock,nof->kcf", self._windows, dz, optimize=True),
            "b": dz.sum(axis=(0, 1)),
        }
        if not need_dx:
            return None
        dx = np.zeros(self._in_shape, dtype=dy.dtype)
        t_out = dz.shape[1]
        for k in range(self.kernel):
            dx[:, k:k + t_out] += dz @ self.params["W"][k].T
        return dx


class MaxPool1D(Layer):
    """Non-overlapping max pooling over time (window = stride = pool)."""

    def __init__(self, pool=2):
        super().__init__()
        self.pool = pool

    def init(self, rng, input_shape, dtype):
        t, c = input_shape
        return (t // self.pool, c)

    def forward(self, x, training=False, rng=None):
        n, t, c = x.shape
        t_out = t // self.pool
        blocks = x[:, :t_out * self.pool].reshape(n, t_out, self.pool, c)
        if training:
            self._argmax = blocks.argmax(axis=2)
            self._in_shape = x.shape
        return blocks.max(axis=2)

    def backward(self, dy, need_dx=True):
        self.grads = {}
        if not need_dx:
            return None
        n, t_out, c = dy.shape
        dblocks = np.zeros((n, t_out, self.pool, c), dtype=dy.dtype)
        np.put_along_axis(dblocks, self._argmax[:, :, None, :], dy[:, :, None, :], axis=2)
        dx = np.zeros(self._in_shape, dtype=dy.dtype)
        dx[:, :t_out * self.pool] = dblocks.reshape(n, t_out * self.pool, c)
        return dx


class Flatten(Layer):
    def init(self, rng, input_shape, dtype):
        self._shape = input_shape
        return (int(np.prod(input_shape)),)

    def forward(self, x, training=False, rng=None):
        self._n = x.shape[0]
        return x.reshape(self._n, -1)

    def backward(self, dy, need_dx=True):
        self.grads = {}
        return dy.reshape((self._n,) + self._shape) if need_dx else None


class Dropout(Layer):
    """Inverted dropout: scales at training time, identity at inference."""

    def __init__(self, rate):
        super().__init__()
        self.rate = rate

    def init(self, rng, input_shape, dtype):
        return input_shape

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("training-mode dropout needs an RNG")
        keep = (rng.random(x.shape) >= self.rate).astype(x.dtype)
        self._mask = keep / (1.0 - self.rate)
        return x * self._mask

    def backward(self, dy, need_dx=True):
        self.grads = {}
        if not need_dx:
            return None
        return dy if self._mask is None else dy * self._mask

"""Sinusoidal coordinate network producing SoS corrections.

Layer recurrence for ``l = 1 .. L``::

    h_0 = x,   h_l = sin(omega * (W_l h_{l-1} + b_l))   for l < L,
    out = output_scale * (W_L h_{L-1} + b_L)

The flat parameter vector lists layers in order, each as its weight matrix
(row-major, shape ``[fan_out, fan_in]``) followed by its bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DomainError, Seed

DEFAULT_LAYERS = (2, 128, 128, 128, 1)


@dataclass(frozen=True)
class SirenNetwork:
    layer_sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...] = field(repr=False)
    biases: tuple[np.ndarray, ...] = field(repr=False)
    omega: float = 30.0
    output_scale: float = 100.0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or sizes[0] != 2 or sizes[-1] != 1:
            raise ValueError(f"layer sizes must start at 2 and end at 1, got {sizes}")
        if self.omega <= 0:
            raise ValueError("omega must be > 0")
        ws = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        bs = tuple(np.array(b, dtype=np.float64) for b in self.biases)
        for l, (w, b) in enumerate(zip(ws, bs)):
            if w.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
                raise ValueError(f"layer {l} parameter shapes do not match sizes {sizes}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {l} has non-finite parameters")
            w.setflags(write=False)
            b.setflags(write=False)
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def n_params(self) -> int:
        return parameter_count(self.layer_sizes)

    def parameters(self) -> np.ndarray:
        return np.concatenate([a.ravel() for w, b in zip(self.weights, self.biases) for a in (w, b)])

    def with_parameters(self, flat) -> "SirenNetwork":
        return from_parameters(self.layer_sizes, flat, self.omega, self.output_scale)


def parameter_count(layer_sizes) -> int:
    return sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))


def from_parameters(layer_sizes, flat, omega: float = 30.0, output_scale: float = 100.0) -> SirenNetwork:
    flat = np.asarray(flat, dtype=np.float64)
    if flat.size != parameter_count(layer_sizes):
        raise ValueError(f"expected {parameter_count(layer_sizes)} parameters, got {flat.size}")
    ws, bs, i = [], [], 0
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        ws.append(flat[i : i + n_in * n_out].reshape(n_out, n_in))
        i += n_in * n_out
        bs.append(flat[i : i + n_out])
        i += n_out
    return SirenNetwork(tuple(layer_sizes), tuple(ws), tuple(bs), omega, output_scale)


def init_bound(layer: int, n_in: int, omega: float) -> float:
    if layer == 0:
        return 1.0 / n_in
    return np.sqrt(6.0 / n_in) / omega


def siren_init(layer_sizes=DEFAULT_LAYERS, omega: float = 30.0, seed: Seed = Seed(0),
               output_scale: float = 100.0) -> SirenNetwork:
    rng = seed.rng("weights")
    ws, bs = [], []
    for l, (n_in, n_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        bound = init_bound(l, n_in, omega)
        ws.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        bs.append(rng.uniform(-bound, bound, size=n_out))
    return SirenNetwork(tuple(layer_sizes), tuple(ws), tuple(bs), omega, output_scale)


def _check_coords(coords) -> np.ndarray:
    x = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    if x.shape[-1] != 2:
        raise ValueError("coordinates must be 2D")
    bad = (x < 0) | (x > 1) | ~np.isfinite(x)
    if bad.any():
        i = int(np.argwhere(bad.any(axis=1))[0][0])
        raise DomainError(f"coordinate {tuple(x[i])} at index {i} outside the unit square")
    return x


def _forward(net: SirenNetwork, x: np.ndarray):
    acts, pre = [x], []
    h = x
    n = len(net.weights)
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        if l < n - 1:
            pre.append(z)
            h = np.sin(net.omega * z)
            acts.append(h)
        else:
            h = z
    return net.output_scale * h[:, 0], acts, pre


def siren_forward(net: SirenNetwork, coords) -> np.ndarray:
    """SoS correction in m/s at each coordinate of the unit square."""
    out, _, _ = _forward(net, _check_coords(coords))
    return out


def siren_backward(net: SirenNetwork, coords, upstream) -> np.ndarray:
    """Flat gradient of ``sum(upstream * siren_forward(net, coords))``."""
    x = _check_coords(coords)
    up = np.asarray(upstream, dtype=np.float64).ravel()
    if up.shape[0] != x.shape[0]:
        raise ValueError("upstream length must match the number of coordinates")
    _, acts, pre = _forward(net, x)
    n = len(net.weights)
    g = (net.output_scale * up)[:, None]
    grads = [None] * n
    for l in range(n - 1, -1, -1):
        grads[l] = (g.T @ acts[l], g.sum(axis=0))
        if l > 0:
            gh = g @ net.weights[l]
            g = gh * net.omega * np.cos(net.omega * pre[l - 1])
    return np.concatenate([a.ravel() for gw, gb in grads for a in (gw, gb)])

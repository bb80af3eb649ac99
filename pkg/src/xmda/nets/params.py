"""Flat parameter/gradient storage with named views.

All parameters of one network live in a single flat vector (and a
parallel gradient vector), so the optimizer is three vector ops and
checkpointing is a walk over named slices. Initialization is uniform
fan-in scaling for weights and zeros for biases, drawn in registration
order from the provided generator.
"""

import numpy as np


class ParamStore:
    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._specs = []          # (name, shape, fan_in or None)
        self._index = {}          # name -> (offset, shape)
        self.data = None
        self.grad = None

    def add(self, name, shape, fan_in=None):
        if self.data is not None:
            raise RuntimeError("store already finalized")
        if any(name == n for n, _, _ in self._specs):
            raise ValueError(f"duplicate parameter {name!r}")
        self._specs.append((name, tuple(shape), fan_in))
        return name

    def finalize(self, rng):
        total = 0
        for name, shape, _ in self._specs:
            self._index[name] = (total, shape)
            total += int(np.prod(shape))
        self.data = np.zeros(total, dtype=self.dtype)
        self.grad = np.zeros(total, dtype=self.dtype)
        for name, shape, fan_in in self._specs:
            if fan_in:
                bound = 1.0 / np.sqrt(fan_in)
                off, _ = self._index[name]
                n = int(np.prod(shape))
                self.data[off:off + n] = rng.uniform(
                    -bound, bound, size=n).astype(self.dtype)

    def view(self, name):
        off, shape = self._index[name]
        return self.data[off:off + int(np.prod(shape))].reshape(shape)

    def grad_view(self, name):
        off, shape = self._index[name]
        return self.grad[off:off + int(np.prod(shape))].reshape(shape)

    def zero_grad(self):
        self.grad.fill(0)

    @property
    def size(self):
        return 0 if self.data is None else self.data.size

    def names(self):
        return [n for n, _, _ in self._specs]

    def state_dict(self):
        return {n: self.view(n).copy() for n in self.names()}

    def load_state_dict(self, state):
        for n in self.names():
            v = self.view(n)
            v[...] = np.asarray(state[n], dtype=self.dtype).reshape(v.shape)


class Adam:
    """Standard Adam over one flat parameter vector."""

    def __init__(self, store, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.store = store
        self.lr = store.dtype.type(lr)
        self.beta1 = store.dtype.type(beta1)
        self.beta2 = store.dtype.type(beta2)
        self.eps = store.dtype.type(eps)
        self.t = 0
        self.m = np.zeros_like(store.data)
        self.v = np.zeros_like(store.data)

    def step(self):
        g = self.store.grad
        self.t += 1
        self.m += (1 - self.beta1) * (g - self.m)
        self.v += (1 - self.beta2) * (g * g - self.v)
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        self.store.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

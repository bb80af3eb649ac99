"""Layer primitives with explicit forward/backward.

Each layer caches what its backward pass needs on the instance; a
forward is always paired with one backward before the next forward, as
the training loop does. Parameter gradients accumulate into the store.
"""

import numpy as np

from .. import kernels


class Conv3x3:
    def __init__(self, store, name, cin, cout):
        self.store = store
        self.w = store.add(f"{name}.w", (3, 3, cin, cout), fan_in=9 * cin)
        self.b = store.add(f"{name}.b", (cout,))
        self._x = None

    def forward(self, x):
        self._x = x
        return kernels.conv3x3_fwd(x, self.store.view(self.w),
                                   self.store.view(self.b))

    def backward(self, gy):
        gw, gb = kernels.conv3x3_bwd_params(self._x, gy)
        self.store.grad_view(self.w)[...] += gw
        self.store.grad_view(self.b)[...] += gb
        return kernels.conv3x3_bwd_input(gy, self.store.view(self.w))


class Linear:
    def __init__(self, store, name, fin, fout):
        self.store = store
        self.w = store.add(f"{name}.w", (fin, fout), fan_in=fin)
        self.b = store.add(f"{name}.b", (fout,))
        self._x = None

    def forward(self, x):
        self._x = x
        return x @ self.store.view(self.w) + self.store.view(self.b)

    def backward(self, gy):
        self.store.grad_view(self.w)[...] += self._x.T @ gy
        self.store.grad_view(self.b)[...] += gy.sum(axis=0)
        return gy @ self.store.view(self.w).T


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, x.dtype.type(0))

    def backward(self, gy):
        return np.where(self._mask, gy, gy.dtype.type(0))


class MaxPool2:
    def __init__(self):
        self._idx = None
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        y, self._idx = kernels.maxpool2_fwd(x)
        return y

    def backward(self, gy):
        return kernels.maxpool2_bwd(gy, self._idx, self._shape)


class Upsample2:
    def forward(self, x):
        return kernels.upsample2_fwd(x)

    def backward(self, gy):
        return kernels.upsample2_bwd(gy)


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class SoftmaxHead:
    """Linear classifier + softmax; one of the four segmentation outputs."""

    def __init__(self, store, name, fin, num_classes):
        self.linear = Linear(store, name, fin, num_classes)
        self._p = None

    def forward(self, feat):
        self._p = softmax(self.linear.forward(feat))
        return self._p

    def backward(self, gp):
        p = self._p
        gz = p * (gp - (gp * p).sum(axis=1, keepdims=True))
        return self.linear.backward(gz)

"""Pure numpy versions of the convolution and pooling kernels.

Layouts follow NCHW for activations and OIHW for convolution kernels.
Convolutions use zero padding of ``pad`` pixels on every side.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def _columns(x, k, stride, pad):
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    # (N, C, Ho, Wo, k, k) -> (N, Ho, Wo, C, k, k)
    return win.transpose(0, 2, 3, 1, 4, 5)


def conv2d_forward(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    ho, wo = _out_size(h, k, stride, pad), _out_size(wd, k, stride, pad)
    cols = _columns(x, k, stride, pad).reshape(n * ho * wo, c * k * k)
    out = cols @ w.reshape(o, -1).T + b
    return np.ascontiguousarray(out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2))


def conv2d_backward(x, w, dout, stride, pad, need_dx=True):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    ho, wo = dout.shape[2], dout.shape[3]
    dmat = dout.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
    cols = _columns(x, k, stride, pad).reshape(n * ho * wo, c * k * k)
    dw = (dmat.T @ cols).reshape(w.shape)
    db = dmat.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (dmat @ w.reshape(o, -1)).reshape(n, ho, wo, c, k, k)
    dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += (
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2))
    dx = dxp[:, :, pad:pad + h, pad:pad + wd] if pad else dxp
    return np.ascontiguousarray(dx), dw, db


def maxpool_forward(x, size):
    n, c, h, w = x.shape
    ho, wo = h // size, w // size
    win = (x[:, :, :ho * size, :wo * size]
           .reshape(n, c, ho, size, wo, size)
           .transpose(0, 1, 2, 4, 3, 5)
           .reshape(n, c, ho, wo, size * size))
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg.astype(np.intp)


def maxpool_backward(dout, arg, size, h, w):
    n, c, ho, wo = dout.shape
    win = np.zeros((n, c, ho, wo, size * size))
    np.put_along_axis(win, arg[..., None], dout[..., None], axis=-1)
    dx = np.zeros((n, c, h, w))
    dx[:, :, :ho * size, :wo * size] = (
        win.reshape(n, c, ho, wo, size, size)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, ho * size, wo * size))
    return dx

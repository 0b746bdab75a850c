"""Shared neural building blocks: affine maps, multihead attention, and the
post-norm transformer layer used by both the semantic coder and the
self-attention denoiser.

Position-wise work happens on 2-D tensors of shape (batch*len, dim); the
attention helpers reshape to (batch, len, dim) internally.
"""

import math

import numpy as np

from .autodiff import (add, concat_rows, layer_norm_rows, matmul, mul, relu,
                       reshape, scale, slice_cols, softmax_rows,
                       transpose_last2)


def init_affine(store, prefix, rng, fan_in, fan_out, weight_scale=None, zero=False):
    if zero:
        w = np.zeros((fan_in, fan_out))
    else:
        s = weight_scale if weight_scale is not None else 1.0 / math.sqrt(fan_in)
        w = rng.standard_normal((fan_in, fan_out)) * s
    store.add(prefix + ".w", w)
    store.add(prefix + ".b", np.zeros((1, fan_out)))


def affine(store, prefix, x):
    return add(matmul(x, store[prefix + ".w"].tensor), store[prefix + ".b"].tensor)


def init_attention(store, prefix, rng, dim, zero_out=False):
    s = 1.0 / math.sqrt(dim)
    for name in ("wq", "wk", "wv"):
        store.add(f"{prefix}.{name}", rng.standard_normal((dim, dim)) * s)
    # residual branch starts small so deep post-norm stacks stay trainable
    wo = np.zeros((dim, dim)) if zero_out else rng.standard_normal((dim, dim)) * s * 0.1
    store.add(f"{prefix}.wo", wo)


def multihead_attention(store, prefix, x2d, b, l, dim, heads):
    """Scaled dot-product attention over each sentence; returns (b*l, dim)."""
    head_dim = dim // heads
    q = matmul(x2d, store[prefix + ".wq"].tensor)
    k = matmul(x2d, store[prefix + ".wk"].tensor)
    v = matmul(x2d, store[prefix + ".wv"].tensor)
    q3 = reshape(q, (b, l, dim))
    k3 = reshape(k, (b, l, dim))
    v3 = reshape(v, (b, l, dim))
    outs = []
    for h in range(heads):
        lo, hi = h * head_dim, (h + 1) * head_dim
        qh = slice_cols(q3, lo, hi)
        kh = slice_cols(k3, lo, hi)
        vh = slice_cols(v3, lo, hi)
        scores = scale(matmul(qh, transpose_last2(kh)), 1.0 / math.sqrt(head_dim))
        outs.append(matmul(softmax_rows(scores), vh))
    merged = reshape(concat_rows(outs), (b * l, dim))
    return matmul(merged, store[prefix + ".wo"].tensor)


def init_layer_norm(store, prefix, dim):
    store.add(prefix + ".g", np.ones((1, dim)))
    store.add(prefix + ".b", np.zeros((1, dim)))


def layer_norm_affine(store, prefix, x):
    normed = layer_norm_rows(x)
    return add(mul(normed, store[prefix + ".g"].tensor), store[prefix + ".b"].tensor)


def init_transformer_layer(store, prefix, rng, dim, ffn_dim):
    init_attention(store, prefix + ".attn", rng, dim)
    init_layer_norm(store, prefix + ".ln1", dim)
    init_affine(store, prefix + ".ffn1", rng, dim, ffn_dim)
    init_affine(store, prefix + ".ffn2", rng, ffn_dim, dim,
                weight_scale=0.1 / math.sqrt(ffn_dim))
    init_layer_norm(store, prefix + ".ln2", dim)


def transformer_layer(store, prefix, x2d, b, l, dim, heads):
    attn = multihead_attention(store, prefix + ".attn", x2d, b, l, dim, heads)
    x = layer_norm_affine(store, prefix + ".ln1", add(x2d, attn))
    hidden = relu(affine(store, prefix + ".ffn1", x))
    ffn = affine(store, prefix + ".ffn2", hidden)
    return layer_norm_affine(store, prefix + ".ln2", add(x, ffn))


def transformer_stack(store, prefix, x2d, b, l, dim, heads, layers):
    x = x2d
    for i in range(layers):
        x = transformer_layer(store, f"{prefix}.{i}", x, b, l, dim, heads)
    return x


def init_transformer_stack(store, prefix, rng, dim, ffn_dim, layers):
    for i in range(layers):
        init_transformer_layer(store, f"{prefix}.{i}", rng, dim, ffn_dim)


def sinusoidal_positions(max_len, dim):
    """The fixed positional-encoding matrix; identical across runs."""
    pe = np.zeros((max_len, dim))
    pos = np.arange(max_len)[:, None].astype(np.float64)
    div = np.exp(np.arange(0, dim, 2) * (-math.log(10000.0) / dim))
    pe[:, 0::2] = np.sin(pos * div)
    pe[:, 1::2] = np.cos(pos * div[: dim // 2])
    return pe

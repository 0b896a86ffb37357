"""Residue encoder: stacked invariant point attention blocks.

Attention logits combine scalar query-key products, a learned projection
of the pair representation, and squared distances between query/key
points carried into global coordinates by the residue frames. Because
coordinates only ever enter through those inter-point distances, the
whole stack is invariant under global rigid motions of the input.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensorcore as tc
from .featurize import FeatureSet, RawFeatures
from .nn import LayerNorm, Linear, Module
from .tensorcore import Tensor


@dataclass
class EncoderConfig:
    blocks: int = 6
    d_single: int = 128
    d_pair: int = 64
    heads: int = 4
    points: int = 4
    ln_eps: float = 1e-5

    def __post_init__(self):
        if min(self.blocks, self.d_single, self.d_pair, self.heads, self.points) < 0:
            raise ValueError("encoder config fields must be non-negative")
        if self.d_single % self.heads:
            raise ValueError("d_single must be divisible by heads")


_SOFTPLUS_INV_ONE = math.log(math.e - 1.0)


class IpaBlock(Module):
    def __init__(self, rng: np.random.Generator, cfg: EncoderConfig):
        super().__init__()
        ds, dp, h, p = cfg.d_single, cfg.d_pair, cfg.heads, cfg.points
        self.cfg = cfg
        self.dh = ds // h
        self.wq = self.child("wq", Linear(rng, ds, h * self.dh, bias=False))
        self.wk = self.child("wk", Linear(rng, ds, h * self.dh, bias=False))
        self.wv = self.child("wv", Linear(rng, ds, h * self.dh, bias=False))
        self.wqp = self.child("wqp", Linear(rng, ds, h * p * 3, bias=False))
        self.wkp = self.child("wkp", Linear(rng, ds, h * p * 3, bias=False))
        self.pair_bias = self.child("pair_bias", Linear(rng, dp, h, bias=False))
        self.pair_value = self.child("pair_value", Linear(rng, dp, h * self.dh, bias=False))
        self.gamma = self.param("gamma", np.full(h, _SOFTPLUS_INV_ONE))
        self.out = self.child("out", Linear(rng, 2 * h * self.dh, ds))
        self.ln_attn = self.child("ln_attn", LayerNorm(ds, cfg.ln_eps))
        self.ln_trans = self.child("ln_trans", LayerNorm(ds, cfg.ln_eps))
        self.trans_in = self.child("trans_in", Linear(rng, ds, ds))
        self.trans_out = self.child("trans_out", Linear(rng, ds, ds))

    def _global_points(self, proj: Tensor, n: int, rot_t: Tensor, trans: Tensor) -> Tensor:
        hp = self.cfg.heads * self.cfg.points
        pts = tc.reshape(proj, (n, hp, 3))
        return tc.add(tc.matmul(pts, rot_t), tc.reshape(trans, (n, 1, 3)))

    def __call__(self, h: Tensor, z: Tensor, rotations: np.ndarray, translations: np.ndarray,
                 return_attn: bool = False):
        cfg = self.cfg
        n = h.shape[0]
        nh, dh, p = cfg.heads, self.dh, cfg.points

        def heads_first(t: Tensor) -> Tensor:
            return tc.transpose(tc.reshape(t, (n, nh, dh)), (1, 0, 2))

        q, k, v = heads_first(self.wq(h)), heads_first(self.wk(h)), heads_first(self.wv(h))
        logits = tc.mul(tc.matmul(q, tc.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(dh))

        flat_z = tc.reshape(z, (n * n, cfg.d_pair))
        bias = tc.transpose(tc.reshape(self.pair_bias(flat_z), (n, n, nh)), (2, 0, 1))
        logits = tc.add(logits, bias)

        rot_t = tc.constant(rotations.transpose(0, 2, 1))
        trans = tc.constant(translations)
        gq = self._global_points(self.wqp(h), n, rot_t, trans)
        gk = self._global_points(self.wkp(h), n, rot_t, trans)
        diff = tc.sub(tc.reshape(gq, (n, 1, nh, p, 3)), tc.reshape(gk, (1, n, nh, p, 3)))
        sq_dist = tc.tsum(tc.tsum(tc.mul(diff, diff), axis=4), axis=3)
        gamma = tc.reshape(tc.softplus(self.gamma), (nh, 1, 1))
        point_term = tc.mul(tc.mul(tc.transpose(sq_dist, (2, 0, 1)), gamma), -0.5 / p)
        logits = tc.add(logits, point_term)

        attn = tc.softmax(logits, axis=-1)

        out_scalar = tc.reshape(tc.transpose(tc.matmul(attn, v), (1, 0, 2)), (n, nh * dh))
        zv = tc.reshape(self.pair_value(flat_z), (n, n, nh, dh))
        attn_pairs = tc.reshape(tc.transpose(attn, (1, 2, 0)), (n, n, nh, 1))
        out_pair = tc.reshape(tc.tsum(tc.mul(attn_pairs, zv), axis=1), (n, nh * dh))

        update = self.out(tc.concat([out_scalar, out_pair], axis=1))
        h = self.ln_attn(tc.add(h, update))
        h = self.ln_trans(tc.add(h, self.trans_out(tc.relu(self.trans_in(h)))))
        if return_attn:
            return h, attn.values
        return h


class Encoder(Module):
    """``cfg.blocks`` sequential attention blocks over embedded features."""

    def __init__(self, rng: np.random.Generator, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.blocks = [self.child(f"block{i}", IpaBlock(rng, cfg)) for i in range(cfg.blocks)]

    def __call__(self, features: FeatureSet, raw: RawFeatures) -> Tensor:
        h = features.single
        for block in self.blocks:
            h = block(h, features.pair, raw.rotations, raw.translations)
        return h


def encode(encoder: Encoder, features: FeatureSet, raw: RawFeatures) -> Tensor:
    return encoder(features, raw)

"""Per-residue and per-pair input features for the encoder.

Raw features are pure functions of the structure (rigid-transform
invariant: everything is expressed in residue local frames or as
sequence-relative classes). A trainable embedding maps them to the
model's single/pair widths.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensorcore as tc
from .geometry import Residue
from .nn import Linear, Module
from .tensorcore import Tensor

N_AA = 20
# one-hot type (20) + sin/cos phi,psi,omega (6) + validity bits (3) + local N,CA,C,O (12)
SINGLE_RAW_DIM = 41
# relative sequence offsets -32..+32; cross-chain pairs share the +32 clip slot
OFFSET_CLIP = 32
N_OFFSET_CLASSES = 2 * OFFSET_CLIP + 1
CROSS_CHAIN_CLASS = N_OFFSET_CLASSES - 1
_BACKBONE_ATOMS = ("N", "CA", "C", "O")


@dataclass
class RawFeatures:
    single: np.ndarray        # (n, SINGLE_RAW_DIM)
    pair_type: np.ndarray     # (n, n) int, 20*type_i + type_j
    pair_offset: np.ndarray   # (n, n) int in [0, N_OFFSET_CLASSES)
    pair_coords: np.ndarray   # (n, n, 3), Ca of j in frame of i
    rotations: np.ndarray     # (n, 3, 3)
    translations: np.ndarray  # (n, 3)

    @property
    def n(self) -> int:
        return self.single.shape[0]


@dataclass
class FeatureSet:
    """Embedded features: ``single`` (n, d_single) and ``pair`` (n, n, d_pair)."""

    single: Tensor
    pair: Tensor


def _sincos(angle: float | None) -> tuple[float, float, float]:
    """(sin, cos, valid); undefined dihedrals zero their slots."""
    if angle is None:
        return 0.0, 0.0, 0.0
    return float(np.sin(angle)), float(np.cos(angle)), 1.0


def single_features(residues: Sequence[Residue]) -> np.ndarray:
    n = len(residues)
    out = np.zeros((n, SINGLE_RAW_DIM))
    for i, res in enumerate(residues):
        out[i, res.type_idx] = 1.0
        trig = []
        valid = []
        for angle in (res.phi, res.psi, res.omega):
            s, c, v = _sincos(angle)
            trig.extend((s, c))
            valid.append(v)
        out[i, 20:26] = trig
        out[i, 26:29] = valid
        for k, name in enumerate(_BACKBONE_ATOMS):
            if name in res.atoms:  # a missing O keeps zeros
                out[i, 29 + 3 * k:32 + 3 * k] = res.frame.apply_inverse(res.atoms[name])
    return out


def pair_features(residues: Sequence[Residue]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = len(residues)
    types = np.array([r.type_idx for r in residues])
    pair_type = types[:, None] * N_AA + types[None, :]

    pair_offset = np.full((n, n), CROSS_CHAIN_CLASS, dtype=np.intp)
    chains = [r.chain_id for r in residues]
    seqs = np.array([r.seq_num for r in residues])
    for i in range(n):
        same = np.array([chains[j] == chains[i] for j in range(n)])
        delta = np.clip(seqs - seqs[i], -OFFSET_CLIP, OFFSET_CLIP) + OFFSET_CLIP
        pair_offset[i, same] = delta[same]

    positions = np.stack([r.position for r in residues])
    rotations = np.stack([r.frame.rotation for r in residues])
    diff = positions[None, :, :] - positions[:, None, :]
    pair_coords = np.einsum("nba,nmb->nma", rotations, diff)
    return pair_type, pair_offset, pair_coords


def raw_features(residues: Sequence[Residue]) -> RawFeatures:
    pair_type, pair_offset, pair_coords = pair_features(residues)
    return RawFeatures(
        single=single_features(residues),
        pair_type=pair_type,
        pair_offset=pair_offset,
        pair_coords=pair_coords,
        rotations=np.stack([r.frame.rotation for r in residues]),
        translations=np.stack([r.frame.translation for r in residues]),
    )


class FeatureEmbedding(Module):
    """Maps raw features to (n, d_single) and (n, n, d_pair) tensors."""

    def __init__(self, rng: np.random.Generator, d_single: int = 128, d_pair: int = 64):
        super().__init__()
        self.d_single = d_single
        self.d_pair = d_pair
        self.single_proj = self.child("single", Linear(rng, SINGLE_RAW_DIM, d_single))
        self.type_table = self.param("pair_type", tc.uniform_init(rng, N_AA * N_AA, (N_AA * N_AA, d_pair)))
        self.offset_table = self.param("pair_offset", tc.uniform_init(rng, N_OFFSET_CLASSES, (N_OFFSET_CLASSES, d_pair)))
        self.coord_proj = self.child("pair_coord", Linear(rng, 3, d_pair))

    def __call__(self, raw: RawFeatures) -> FeatureSet:
        n = raw.n
        e = self.single_proj(tc.constant(raw.single))
        z = tc.take(self.type_table, raw.pair_type.reshape(-1), axis=0)
        z = tc.add(z, tc.take(self.offset_table, raw.pair_offset.reshape(-1), axis=0))
        z = tc.add(z, self.coord_proj(tc.constant(raw.pair_coords.reshape(n * n, 3))))
        return FeatureSet(single=e, pair=tc.reshape(z, (n, n, self.d_pair)))

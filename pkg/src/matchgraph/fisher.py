"""Fisher and VLAD encodings of descriptor sets against a trained GMM.

A Fisher vector stacks, per mixture component, the feature-count-normalized
gradients of the average log density with respect to the component mean and
standard deviation (the improved construction: signed square root followed by
L2 normalization). Layout is component-major: for each component k the dim
mean-gradient values come first, then the dim deviation-gradient values,
giving 2*K*dim values total. VLAD keeps only hard-assignment residual sums,
K*dim values.

Encoded vector files (magic ``GMFV``, little-endian):

    "GMFV" | u32 version=1 | u32 N | u32 vec_dim
    per vector: u32 image_id | vec_dim f32
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .descriptors import DescriptorSet
from .errors import FormatError
from .gmm import GmmModel, log_joint

MAGIC = b"GMFV"
VERSION = 1

_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True, eq=False)
class FisherVector:
    image_id: int
    values: np.ndarray  # length 2*K*dim


@dataclass(frozen=True, eq=False)
class VladVector:
    image_id: int
    values: np.ndarray  # length K*dim


def apply_improved_normalization(raw: np.ndarray) -> np.ndarray:
    """Signed square root per component, then L2 normalization.

    The all-zero vector passes through unchanged; it is a valid degenerate
    encoding (all descriptors sitting exactly at the model means).
    """
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise ValueError("cannot normalize a vector with non-finite values")
    out = np.sign(raw) * np.sqrt(np.abs(raw))
    norm = float(np.linalg.norm(out))
    if norm == 0.0:
        return out
    return out / norm


def _stats(model: GmmModel, d: DescriptorSet):
    if d.dim != model.dim:
        raise ValueError(f"descriptor dim {d.dim} does not match model dim {model.dim}")
    if d.feature_count < 1:
        raise ValueError(f"image {d.image_id} has no descriptors to encode")
    data = np.asarray(d.rows, dtype=np.float64)
    lj = log_joint(model, data)
    peak = lj.max(axis=1, keepdims=True)
    gamma = np.exp(lj - peak)
    gamma /= gamma.sum(axis=1, keepdims=True)
    return data, gamma


def encode_fisher(model: GmmModel, d: DescriptorSet) -> FisherVector:
    """Improved Fisher vector of one image, length 2*K*dim."""
    data, gamma = _stats(model, d)
    f = d.feature_count
    s0 = gamma.sum(axis=0)  # (K,)
    s1 = gamma.T @ data  # (K, dim)
    s2 = gamma.T @ (data**2)  # (K, dim)

    mu, var = model.means, model.variances
    sigma = np.sqrt(var)
    w = model.weights[:, None]
    # grad wrt means, scaled by 1/(F*sqrt(w_k)) per dimension
    g_mu = (s1 - mu * s0[:, None]) / (f * np.sqrt(w) * sigma)
    # grad wrt deviations, scaled by 1/(F*sqrt(2*w_k))
    g_sigma = ((s2 - 2.0 * mu * s1 + mu**2 * s0[:, None]) / var - s0[:, None]) / (
        f * np.sqrt(2.0 * w)
    )

    raw = np.concatenate([g_mu, g_sigma], axis=1).ravel()
    values = apply_improved_normalization(raw)
    assert values.shape[0] == 2 * model.n_components * model.dim
    return FisherVector(image_id=d.image_id, values=values)


def encode_vlad(model: GmmModel, d: DescriptorSet) -> VladVector:
    """Hard-assignment residual aggregation of one image, length K*dim."""
    data, gamma = _stats(model, d)
    assign = np.argmax(gamma, axis=1)
    raw = np.zeros((model.n_components, model.dim), dtype=np.float64)
    for k in range(model.n_components):
        rows = data[assign == k]
        if rows.shape[0]:
            raw[k] = rows.sum(axis=0) - rows.shape[0] * model.means[k]
    values = apply_improved_normalization(raw.ravel())
    assert values.shape[0] == model.n_components * model.dim
    return VladVector(image_id=d.image_id, values=values)


EncodedVector = FisherVector | VladVector


def write_vectors(vectors: list[EncodedVector], path) -> None:
    if not vectors:
        raise ValueError("refusing to write an empty vector file")
    vec_dim = vectors[0].values.shape[0]
    if any(v.values.shape[0] != vec_dim for v in vectors):
        raise ValueError("all encoded vectors must share one dimension")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(vectors), vec_dim))
        for v in vectors:
            fh.write(struct.pack("<I", v.image_id))
            fh.write(np.asarray(v.values, dtype="<f4").tobytes())


def load_vectors(path) -> list[FisherVector]:
    """Read a GMFV file. Values come back as float32 exactly as stored.

    The format does not record which encoder produced the file, so records
    are returned as FisherVector regardless; downstream consumers only use
    (image_id, values).
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise FormatError("truncated or empty header", offset=0)
    magic, version, n, vec_dim = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    record = 4 + vec_dim * 4
    expected = _HEADER.size + n * record
    if len(data) != expected:
        raise FormatError(
            f"file size {len(data)} does not match header (expected {expected})",
            offset=min(len(data), expected),
        )
    out = []
    offset = _HEADER.size
    for _ in range(n):
        (image_id,) = struct.unpack_from("<I", data, offset)
        values = np.frombuffer(data, dtype="<f4", count=vec_dim, offset=offset + 4).copy()
        if not np.all(np.isfinite(values)):
            raise FormatError(f"non-finite value in vector {image_id}", offset=offset + 4)
        out.append(FisherVector(image_id=image_id, values=values))
        offset += record
    return out

"""Multi-view graph convolutional network with topological features and ZINB heads."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ..errors import ConfigError, DimensionError
from ..numkit import autodiff as ad
from ..numkit.autodiff import Var

MODALITIES = ("epe_spatial", "epe_expression", "spatial", "expression", "co")


@dataclass
class ModelConfig:
    hidden: int = 128
    latent: int = 64
    attention_dim: int = 32
    decoder_hidden: int = 128
    conv_channels: int = 8
    kernel: int = 3
    stride: int = 2
    pool: int = 2
    mu_clip: tuple = (1e-5, 1e6)
    theta_clip: tuple = (1e-4, 1e4)

    def validate(self) -> "ModelConfig":
        for f in ("hidden", "latent", "attention_dim", "decoder_hidden", "conv_channels", "kernel", "stride", "pool"):
            if int(getattr(self, f)) < 1:
                raise ConfigError(f"model.{f} must be >= 1")
        return self

    def epe_features(self, resolution: int) -> int:
        conv = (resolution - self.kernel) // self.stride + 1
        if self.kernel > resolution or conv // self.pool < 1:
            raise DimensionError(f"image resolution {resolution} too small for kernel {self.kernel}/pool {self.pool}")
        return self.conv_channels * (conv // self.pool) ** 2


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(n_genes: int, resolution: int, cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases. Insertion order is the canonical parameter order."""
    cfg.validate()
    h, d, a, dh = cfg.hidden, cfg.latent, cfg.attention_dim, cfg.decoder_hidden
    p: dict[str, np.ndarray] = {}
    for view in ("x", "s", "co"):
        p[f"W_{view}_1"] = _glorot(rng, n_genes, h)
        p[f"W_{view}_2"] = _glorot(rng, h, d)
    feat = cfg.epe_features(resolution)
    k = cfg.kernel
    for mod in ("s", "x"):
        p[f"conv_{mod}_kernel"] = rng.uniform(-1, 1, size=(cfg.conv_channels, k, k)) / k
        p[f"conv_{mod}_bias"] = np.zeros(cfg.conv_channels)
        p[f"epe_{mod}_W"] = _glorot(rng, feat, d)
        p[f"epe_{mod}_b"] = np.zeros((1, d))
    p["att_W1"] = _glorot(rng, d, a)
    p["att_b1"] = np.zeros((1, a))
    p["att_W2"] = _glorot(rng, a, 1)
    p["fuse_W1"] = _glorot(rng, d, d)
    p["fuse_b1"] = np.zeros((1, d))
    p["fuse_W2"] = _glorot(rng, d, d)
    p["fuse_b2"] = np.zeros((1, d))
    p["dec_W1"] = _glorot(rng, d, dh)
    p["dec_b1"] = np.zeros((1, dh))
    p["dec_W2"] = _glorot(rng, dh, dh)
    p["dec_b2"] = np.zeros((1, dh))
    p["dec_W3"] = _glorot(rng, dh, dh)
    p["dec_b3"] = np.zeros((1, dh))
    for head in ("pi", "mu", "theta"):
        p[f"W_{head}"] = _glorot(rng, dh, n_genes)
    return p


def normalized_adjacency(adjacency) -> sp.csr_matrix:
    """D^-1/2 (A + I) D^-1/2 for a binary symmetric adjacency."""
    a = sp.csr_matrix(adjacency, dtype=np.float64)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"adjacency must be square, got {a.shape}")
    a = a + sp.identity(a.shape[0], format="csr")
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv = sp.diags(1.0 / np.sqrt(deg))
    return (inv @ a @ inv).tocsr()


def gcn_layer(h_in, adjacency, weight) -> Var:
    """ReLU(D^-1/2 (A+I) D^-1/2 H W)."""
    a_hat = normalized_adjacency(adjacency)
    if a_hat.shape[0] != ad.value_of(h_in).shape[0]:
        raise DimensionError(f"adjacency {a_hat.shape} does not match {ad.value_of(h_in).shape[0]} rows")
    return propagate(a_hat, h_in, weight)


def propagate(a_hat: sp.csr_matrix, h_in, weight) -> Var:
    # (A H) W is cheaper than A (H W) when H is wider than W's output
    hv, wv = ad.value_of(h_in), ad.value_of(weight)
    if hv.shape[1] > wv.shape[1]:
        return ad.relu(ad.spmm(a_hat, ad.matmul(h_in, weight)))
    return ad.relu(ad.matmul(ad.spmm(a_hat, h_in), weight))


def view_forward(x, a_hat, weights) -> Var:
    h = x
    for w in weights:
        h = propagate(a_hat, h, w)
    return h


def co_view_forward(x, a_hat_s, a_hat_x, co_weights) -> tuple[Var, Var, Var]:
    """Shared-weight stacks over both graphs and their average."""
    h_sco = view_forward(x, a_hat_s, co_weights)
    h_xco = view_forward(x, a_hat_x, co_weights)
    return h_sco, h_xco, ad.mul(ad.add(h_sco, h_xco), 0.5)


def epe_forward(images, kernel, bias, weight, offset, cfg: ModelConfig) -> Var:
    """Convolution + ReLU + max-pool per spot image, flattened and mapped to the latent size."""
    images = np.asarray(images, dtype=np.float64)
    maps = ad.conv2d_maxpool_batch(images, kernel, bias, stride=cfg.stride, pool=cfg.pool)
    flat = ad.reshape(maps, (images.shape[0], -1))
    return ad.add(ad.matmul(flat, weight), offset)


def attention_fusion(embeddings, att_w1, att_b1, att_w2, fuse_w1, fuse_b1, fuse_w2, fuse_b2):
    """Softmax over per-modality scores, weighted sum, then a two-layer MLP.

    Returns the fused embedding and the (n, n_modalities) weight matrix.
    """
    scores = [ad.matmul(ad.relu(ad.add(ad.matmul(e, att_w1), att_b1)), att_w2) for e in embeddings]
    weights = ad.softmax_rows(ad.concat_cols(scores))
    mixed = None
    for m, e in enumerate(embeddings):
        term = ad.mul(ad.column(weights, m), e)
        mixed = term if mixed is None else ad.add(mixed, term)
    hidden = ad.relu(ad.add(ad.matmul(mixed, fuse_w1), fuse_b1))
    return ad.add(ad.matmul(hidden, fuse_w2), fuse_b2), weights


def decoder(h, p) -> Var:
    f = h
    for i in (1, 2, 3):
        f = ad.relu(ad.add(ad.matmul(f, p[f"dec_W{i}"]), p[f"dec_b{i}"]))
    return f


def _clipped_exp(logits, bounds) -> Var:
    lo, hi = bounds
    return ad.clamp(ad.exp(ad.clamp(logits, np.log(lo), np.log(hi))), lo, hi)


def zinb_heads(h, p, size_factors, cfg: ModelConfig | None = None) -> tuple[Var, Var, Var]:
    """Dropout probability, mean and dispersion matrices from the fused embedding."""
    cfg = cfg or ModelConfig()
    f = decoder(h, p)
    pi = ad.sigmoid(ad.matmul(f, p["W_pi"]))
    # clamping the exponent rather than exp() keeps the backward pass free of inf * 0
    mu = ad.mul(_clipped_exp(ad.matmul(f, p["W_mu"]), cfg.mu_clip), np.asarray(size_factors, dtype=np.float64)[:, None])
    theta = _clipped_exp(ad.matmul(f, p["W_theta"]), cfg.theta_clip)
    return pi, mu, theta


@dataclass
class ModelInputs:
    """Everything constant across epochs for one slice."""

    x: np.ndarray  # normalized expression (n, g)
    raw: np.ndarray  # raw counts of the same genes (n, g)
    size_factors: np.ndarray
    a_hat_s: sp.csr_matrix
    a_hat_x: sp.csr_matrix
    epi_s: Optional[np.ndarray]  # (n, P, P) or None when topology is off
    epi_x: Optional[np.ndarray]
    neighbors: list  # spatial neighbour index arrays

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass
class ForwardState:
    h_x: Var
    h_s: Var
    h_sco: Var
    h_xco: Var
    h_co: Var
    epe_s: Var
    epe_x: Var
    attention: Var
    h: Var
    pi: Var
    mu: Var
    theta: Var

    def values(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name).value for f in fields(self)}


def forward(params: dict[str, Var], inputs: ModelInputs, cfg: ModelConfig, topo_on: bool = True) -> ForwardState:
    x = inputs.x
    h_x = view_forward(x, inputs.a_hat_x, [params["W_x_1"], params["W_x_2"]])
    h_s = view_forward(x, inputs.a_hat_s, [params["W_s_1"], params["W_s_2"]])
    h_sco, h_xco, h_co = co_view_forward(x, inputs.a_hat_s, inputs.a_hat_x, [params["W_co_1"], params["W_co_2"]])
    if topo_on and inputs.epi_s is not None:
        epe_s = epe_forward(inputs.epi_s, params["conv_s_kernel"], params["conv_s_bias"], params["epe_s_W"], params["epe_s_b"], cfg)
        epe_x = epe_forward(inputs.epi_x, params["conv_x_kernel"], params["conv_x_bias"], params["epe_x_W"], params["epe_x_b"], cfg)
    else:
        zero = Var(np.zeros((inputs.n, cfg.latent)), op="const")
        epe_s = epe_x = zero
    h, attention = attention_fusion(
        [epe_s, epe_x, h_s, h_x, h_co],
        params["att_W1"],
        params["att_b1"],
        params["att_W2"],
        params["fuse_W1"],
        params["fuse_b1"],
        params["fuse_W2"],
        params["fuse_b2"],
    )
    pi, mu, theta = zinb_heads(h, params, inputs.size_factors, cfg)
    return ForwardState(h_x, h_s, h_sco, h_xco, h_co, epe_s, epe_x, attention, h, pi, mu, theta)

"""Consistency, spatial-constraint and ZINB reconstruction losses."""
from __future__ import annotations

import numpy as np

from ..errors import ContractError, DataError, DimensionError
from ..numkit import autodiff as ad
from ..numkit.autodiff import Var
from ..numkit.special import digamma, log_gamma

PI_MAX = 1.0 - 1e-12
SIGMA_CLIP = 1e-7


# consistency

def consistency_loss(h_sco, h_xco) -> Var:
    """Squared Frobenius distance between the Gram matrices of row-normalised inputs.

    Uses ||A A^T - B B^T||^2 = ||A^T A||^2 + ||B^T B||^2 - 2 ||A^T B||^2 so the
    cost is in the feature dimension rather than the number of spots.
    """
    if ad.value_of(h_sco).shape != ad.value_of(h_xco).shape:
        raise DimensionError("consistency_loss inputs differ in shape")
    a = ad.row_normalize(h_sco)
    b = ad.row_normalize(h_xco)
    aa = ad.matmul(ad.transpose(a), a)
    bb = ad.matmul(ad.transpose(b), b)
    ab = ad.matmul(ad.transpose(a), b)
    total = ad.add(ad.sum(ad.square(aa)), ad.sum(ad.square(bb)))
    return ad.sub(total, ad.mul(ad.sum(ad.square(ab)), 2.0))


# spatial constraint

def neighbor_pairs(neighbors) -> tuple[np.ndarray, np.ndarray]:
    """Flatten per-cell neighbour lists into (cell, neighbour) index arrays."""
    for i, nb in enumerate(neighbors):
        if len(nb) == 0:
            raise ContractError(f"cell {i} has no spatial neighbour")
    rows = np.concatenate([np.full(len(nb), i, dtype=np.int64) for i, nb in enumerate(neighbors)])
    cols = np.concatenate([np.asarray(nb, dtype=np.int64) for nb in neighbors])
    return rows, cols


def sample_negatives(neighbors, m: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``m`` uniform draws per cell from cells outside its neighbourhood and itself."""
    n = len(neighbors)
    rows, cols = [], []
    for i, nb in enumerate(neighbors):
        excluded = set(int(j) for j in nb)
        excluded.add(i)
        if len(excluded) >= n:
            continue
        picks = []
        while len(picks) < m:
            cand = rng.integers(0, n, size=2 * m)
            picks.extend(int(c) for c in cand if int(c) not in excluded)
        rows.extend([i] * m)
        cols.extend(picks[:m])
    return np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)


def _pair_cosine(a_unit, b_unit, rows, cols) -> Var:
    return ad.sum(ad.mul(ad.take_rows(a_unit, rows), ad.take_rows(b_unit, cols)), axis=1, keepdims=True)


def _clipped_sigmoid(x) -> Var:
    return ad.clamp(ad.sigmoid(x), SIGMA_CLIP, 1.0 - SIGMA_CLIP)


def scdom_loss(h, views, pos, neg, n=None) -> Var:
    """Neighbour attraction / non-neighbour repulsion over the fused and view embeddings.

    ``pos`` and ``neg`` are (cell, other) index-array pairs. Cosine similarity
    of a zero vector is 0. The sum is divided by the number of cells.
    """
    pos_i, pos_j = pos
    neg_i, neg_k = neg
    if len(pos_i) == 0:
        raise ContractError("spatial constraint needs at least one neighbour pair")
    n = n or ad.value_of(h).shape[0]
    present = np.zeros(n, dtype=bool)
    present[pos_i] = True
    if not present.all():
        raise ContractError(f"cell {int(np.flatnonzero(~present)[0])} has no neighbour")
    hu = ad.row_normalize(h)
    vu = [ad.row_normalize(v) for v in views]

    c_pos = _pair_cosine(hu, hu, pos_i, pos_j)
    term1 = ad.sum(ad.log(_clipped_sigmoid(c_pos)))
    self_view = ad.logsumexp_rows(ad.concat_cols([ad.sum(ad.mul(hu, v), axis=1, keepdims=True) for v in vu]))
    term2 = ad.sum(ad.take_rows(self_view, pos_i))
    total = ad.add(term1, term2)

    if len(neg_i):
        c_neg = _pair_cosine(hu, hu, neg_i, neg_k)
        term3 = ad.sum(ad.log(ad.sub(1.0, _clipped_sigmoid(c_neg))))
        gate = ad.sub(1.0, c_neg)
        cross = [ad.mul(gate, _pair_cosine(hu, v, neg_i, neg_k)) for v in vu]
        term4 = ad.sum(ad.logsumexp_rows(ad.concat_cols(cross)))
        total = ad.add(total, ad.add(term3, term4))
    return ad.mul(total, -1.0 / n)


# ZINB

def nb_logpmf(x, mu, theta):
    x, mu, theta = (np.asarray(a, dtype=np.float64) for a in (x, mu, theta))
    log_t = np.log(theta) - np.log(theta + mu)
    return (
        log_gamma(x + theta)
        - log_gamma(x + 1.0)
        - log_gamma(theta)
        + theta * log_t
        + x * (np.log(mu) - np.log(theta + mu))
    )


def zinb_logpmf(x, pi, mu, theta):
    """Elementwise log ZINB(x | pi, mu, theta)."""
    x, pi, mu, theta = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64) for a in (x, pi, mu, theta)))
    pi = np.minimum(pi, PI_MAX)
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
    log_1m = np.log1p(-pi)
    nb0 = theta * (np.log(theta) - np.log(theta + mu))
    zero_case = np.logaddexp(log_pi, log_1m + nb0)
    nonzero_case = log_1m + nb_logpmf(x, mu, theta)
    return np.where(x < 0.5, zero_case, nonzero_case)


def zinb_nll(x, pi, mu, theta) -> Var:
    """Mean negative log-likelihood of raw counts under ZINB(pi, mu, theta)."""
    x = np.asarray(x, dtype=np.float64)
    pv, mv, tv = (ad.value_of(a) for a in (pi, mu, theta))
    if not (x.shape == pv.shape == mv.shape == tv.shape):
        raise DimensionError(f"zinb_nll shape mismatch: x {x.shape}, pi {pv.shape}, mu {mv.shape}, theta {tv.shape}")
    if np.any(x < 0):
        raise DataError("zinb_nll got negative counts")
    p = np.minimum(pv, PI_MAX)
    capped = pv > PI_MAX
    zero = x < 0.5
    with np.errstate(divide="ignore"):
        log_pi = np.log(p)
    log_1m = np.log1p(-p)
    log_tm = np.log(tv + mv)
    log_t = np.log(tv) - log_tm
    nb0 = tv * log_t
    log_z = np.logaddexp(log_pi, log_1m + nb0)
    nb = log_gamma(x + tv) - log_gamma(x + 1.0) - log_gamma(tv) + nb0 + x * (np.log(mv) - log_tm)
    ll = np.where(zero, log_z, log_1m + nb)
    count = x.size

    def backward(g):
        scale = -float(g) / count
        w_nb = np.exp(log_1m + nb0 - log_z)  # posterior weight of the NB branch at x = 0
        inv_z = np.exp(-log_z)
        d_pi = np.where(zero, inv_z - np.exp(nb0 - log_z), -1.0 / (1.0 - p))
        d_pi = np.where(capped, 0.0, d_pi)
        dnb_dmu = x / mv - (x + tv) / (tv + mv)
        dnb_dtheta = digamma(x + tv) - digamma(tv) + log_t + 1.0 - (x + tv) / (tv + mv)
        d_mu = np.where(zero, w_nb * dnb_dmu, dnb_dmu)
        d_theta = np.where(zero, w_nb * dnb_dtheta, dnb_dtheta)
        return None, scale * d_pi, scale * d_mu, scale * d_theta

    return ad._node(-ll.mean(), (None, pi, mu, theta), backward, "zinb_nll")


def total_loss(rec, con, sco, lambda1: float, lambda2: float) -> Var:
    """Reconstruction + lambda1 * consistency + lambda2 * spatial constraint (``sco`` may be None)."""
    out = ad.add(rec, ad.mul(con, float(lambda1)))
    if sco is not None:
        out = ad.add(out, ad.mul(sco, float(lambda2)))
    return out

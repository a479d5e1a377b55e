"""Normal-matrix assembly for the interior-point solver.

For a PSD cone with scaling point G, the KKT normal matrix needs
M[p, q] = Re tr(A_p G A_q G) over all pairs of basis matrices A_p.  The
basis matrices here are never dense: they are multi-level Toeplitz
diagonals or one/two elementary matrices.  Each pairing reduces to
correlations of sub-blocks of G, evaluated with FFTs (Toeplitz-Toeplitz,
Toeplitz-elementary) or plain gathers (elementary-elementary), instead of
the generic O(n^2 m^2) inner products.
"""

import numpy as np
import scipy.fft

from .problem import ToeplitzPlacement

__all__ = ["psd_gram", "soc_gram_terms"]


def _pad_sizes(dims):
    return tuple(scipy.fft.next_fast_len(2 * n - 1) for n in dims)


def _lag_gather(dims, pads):
    """Index maps taking FFT output lags to generator-grid order."""
    return tuple(
        (np.arange(2 * n - 1) - (n - 1)) % p for n, p in zip(dims, pads)
    )


def _corr_toep_elem(g_mat, toep, rows, cols):
    """T[k, t] = sum_i G[a(i + lag_k), rows[t]] * G[cols[t], a(i)].

    The sum over the block's multi-index i is a correlation, done by FFT
    over the level axes with the term index t carried along.
    """
    a = toep.row + np.arange(toep.block)
    dims = toep.dims
    nd = len(dims)
    axes = tuple(range(nd))
    pads = _pad_sizes(dims)
    u = g_mat[np.ix_(a, rows)].reshape(dims + (len(rows),))
    w = g_mat[np.ix_(cols, a)].T.reshape(dims + (len(cols),))
    fu = scipy.fft.fftn(u, s=pads, axes=axes)
    fw = scipy.fft.fftn(w.conj(), s=pads, axes=axes)
    full = scipy.fft.ifftn(fw.conj() * fu, axes=axes)
    grid = full[np.ix_(*_lag_gather(dims, pads))]
    return grid.reshape(-1, len(rows))


def _corr_toep_toep(g_mat, pa, pb):
    """F[k, l] = tr(Theta^a_k G Theta^b_l G) over both full lag grids.

    With U = G[a-rows, b-rows] and V = G[b-rows, a-rows] this equals
    sum_{i,j} U[i + lag_k, j] V[j + lag_l, i], a two-sided correlation:
    its DFT factorizes as Uhat(-w_k, w_l) * Vhat(-w_l, w_k).
    """
    a = pa.row + np.arange(pa.block)
    b = pb.row + np.arange(pb.block)
    da, db = len(pa.dims), len(pb.dims)
    pads_a, pads_b = _pad_sizes(pa.dims), _pad_sizes(pb.dims)
    u = g_mat[np.ix_(a, b)].reshape(pa.dims + pb.dims)
    v = g_mat[np.ix_(b, a)].reshape(pb.dims + pa.dims)
    fu = scipy.fft.fftn(u, s=pads_a + pads_b)
    fv = scipy.fft.fftn(v, s=pads_b + pads_a)
    neg_a = tuple((-np.arange(p)) % p for p in pads_a)
    neg_b = tuple((-np.arange(p)) % p for p in pads_b)
    keep_a = tuple(np.arange(p) for p in pads_a)
    keep_b = tuple(np.arange(p) for p in pads_b)
    t1 = fu[np.ix_(*keep_a, *neg_b)]
    t2 = fv[np.ix_(*keep_b, *neg_a)]
    t2 = np.moveaxis(t2, range(db, db + da), range(da))
    full = scipy.fft.ifftn(t1 * t2)
    grid = full[np.ix_(*_lag_gather(pa.dims, pads_a), *_lag_gather(pb.dims, pads_b))]
    return grid.reshape(int(np.prod([2 * n - 1 for n in pa.dims])), -1)


def _gram_toep_toep_block(pa, pb, g_mat):
    f = _corr_toep_toep(g_mat, pa, pb)
    tmp = pa.coef_t @ f                 # (na, grid_b)
    return (pb.coef_t @ tmp.T).T.real   # (na, nb)


def _gram_toep_elem(toep, elem, g_mat):
    """Each basis of the elementary placement is coef*E[r,c] + conj pair;
    both correlation batches are combined, then expanded over (re, im)."""
    te1 = _corr_toep_elem(g_mat, toep, elem.ent_rows, elem.ent_cols)
    te2 = _corr_toep_elem(g_mat, toep, elem.ent_cols, elem.ent_rows)
    ct = toep.coef_t
    v1 = (ct @ te1) * elem.ent_coef[None, :]
    v2 = (ct @ te2) * elem.ent_coef.conj()[None, :]
    block = np.zeros((toep.var.size, elem.var.size))
    block[:, elem.ent_pos] = (v1 + v2).real
    cpx = elem.ent_complex
    block[:, elem.ent_pos[cpx] + 1] = (v2.imag - v1.imag)[:, cpx]
    return block


def _gram_elem_elem(pa, pb, g_mat):
    """Entry-level pairing; the four elementary-by-elementary trace terms
    collapse to two because G is Hermitian and the pairs are conjugate."""
    ra, ca, ga = pa.ent_rows, pa.ent_cols, pa.ent_coef
    rb, cb, gb = pb.ent_rows, pb.ent_cols, pb.ent_coef
    t1 = (ga[:, None] * gb[None, :]) * g_mat[np.ix_(ca, rb)] * g_mat[np.ix_(cb, ra)].T
    t2 = (ga[:, None] * gb.conj()[None, :]) * g_mat[np.ix_(ca, cb)] * g_mat[np.ix_(ra, rb)].conj()
    block = np.zeros((pa.var.size, pb.var.size))
    pos_a, pos_b = pa.ent_pos, pb.ent_pos
    ma, mb = pa.ent_complex, pb.ent_complex
    block[np.ix_(pos_a, pos_b)] = 2.0 * (t1.real + t2.real)
    block[np.ix_(pos_a, pos_b[mb] + 1)] = 2.0 * (t2.imag - t1.imag)[:, mb]
    block[np.ix_(pos_a[ma] + 1, pos_b)] = -2.0 * (t1.imag + t2.imag)[ma, :]
    block[np.ix_(pos_a[ma] + 1, pos_b[mb] + 1)] = 2.0 * (t2.real - t1.real)[np.ix_(ma, mb)]
    return block


def psd_gram(cone, g_mat, m_out):
    """Accumulate A^T (W^T W)^{-1} A of one PSD cone into m_out (n x n)."""
    if cone.use_dense:
        # small block: batched dense congruences beat the FFT machinery's
        # fixed dispatch costs
        idx, a_flat = cone.dense_basis()
        k = idx.size
        c = np.matmul(g_mat, np.matmul(a_flat.reshape(k, cone.m, cone.m), g_mat))
        block = (a_flat.conj() @ c.reshape(k, -1).T).real
        m_out[np.ix_(idx, idx)] += block
        return m_out
    pls = cone.placements
    for i, pa in enumerate(pls):
        for pb in pls[i:]:
            a_toep = isinstance(pa, ToeplitzPlacement)
            b_toep = isinstance(pb, ToeplitzPlacement)
            if a_toep and b_toep:
                block = _gram_toep_toep_block(pa, pb, g_mat)
            elif a_toep:
                block = _gram_toep_elem(pa, pb, g_mat)
            elif b_toep:
                block = _gram_toep_elem(pb, pa, g_mat).T
            else:
                block = _gram_elem_elem(pa, pb, g_mat)
            m_out[pa.var.sl, pb.var.sl] += block
            if pb is not pa:
                m_out[pb.var.sl, pa.var.sl] += block.T
    return m_out


def soc_gram_terms(cone, beta, v, m_out):
    """Accumulate A^T W^{-2} A of one second-order cone into m_out.

    W^{-2} = beta^{-2} (2 w w^T - J)^2 with w = Jv expands into the cached
    Gram A^T A plus rank-two corrections.
    """
    w = v.copy()
    w[1:] = -w[1:]
    avec = cone.a_mat.T @ w
    bvec = cone.a_mat.T @ v
    scale = 1.0 / (beta * beta)
    m_out += scale * cone.ata()
    m_out += (4.0 * scale * (w @ w)) * np.outer(avec, avec)
    m_out -= (2.0 * scale) * (np.outer(avec, bvec) + np.outer(bvec, avec))
    return m_out

"""Pure-python scan kernels.

Two routes to the same three per-SNP quantities (the quadratic form
a' U a, the linear form a' q, and the cross term a' UN summed over
blocks): a batched matrix-product route for arbitrary float encodings,
and an index-set route for encodings in {-1, 0, +1} that accumulates
inverse-covariance entries over the +1/-1 positions. The second exists as
an independently written reference for the compiled kernel and is not
built for speed.
"""

import numpy as np


def scan_chunk_float(values, block_ptr, U_blocks, q, UN):
    """values: (n_snps, n_rows) encoded per analysis row. Returns per-SNP
    (Q, R, W) with Q (n,), R (n,), W (n, p)."""
    Q = np.zeros(values.shape[0])
    R = values @ q
    W = values @ UN
    for b, U in enumerate(U_blocks):
        A = values[:, block_ptr[b]:block_ptr[b + 1]]
        Q += np.einsum("sm,sm->s", A @ U, A)
    return Q, R, W


def scan_chunk_int(codes, block_ptr, U_blocks, q, UN):
    """codes: (n_snps, n_rows) int8 in {-1, 0, +1}. Same outputs as the
    float route, computed purely by adding matrix entries over index sets."""
    n = codes.shape[0]
    Q = np.zeros(n)
    R = np.zeros(n)
    W = np.zeros((n, UN.shape[1]))
    for s in range(n):
        row = codes[s]
        for b, U in enumerate(U_blocks):
            lo, hi = block_ptr[b], block_ptr[b + 1]
            seg = row[lo:hi]
            P = np.flatnonzero(seg == 1)
            M = np.flatnonzero(seg == -1)
            if P.size == 0 and M.size == 0:
                continue
            Q[s] += (U[np.ix_(P, P)].sum() + U[np.ix_(M, M)].sum()
                     - 2.0 * U[np.ix_(P, M)].sum())
            R[s] += q[lo + P].sum() - q[lo + M].sum()
            W[s] += UN[lo + P].sum(axis=0) - UN[lo + M].sum(axis=0)
    return Q, R, W

# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled inner loop for the integer-encoded score scan.

For genotype encodings in {-1, 0, +1} the per-SNP quadratic forms reduce
to sums of inverse-covariance entries over the +1 and -1 index sets,
replacing general dot products with additions. U blocks arrive flattened
row-major with offsets so one call walks every pedigree block.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def scan_chunk_int(const signed char[:, ::1] codes,
                   const long long[::1] block_ptr,
                   const double[::1] u_flat,
                   const long long[::1] u_off,
                   const double[::1] q,
                   const double[:, ::1] UN,
                   double[::1] Q_out,
                   double[::1] R_out,
                   double[:, ::1] W_out):
    cdef Py_ssize_t nsnp = codes.shape[0]
    cdef Py_ssize_t nb = block_ptr.shape[0] - 1
    cdef Py_ssize_t p = UN.shape[1]
    cdef Py_ssize_t max_m = 0, b, m
    for b in range(nb):
        m = block_ptr[b + 1] - block_ptr[b]
        if m > max_m:
            max_m = m
    pos_buf = np.empty(max_m, dtype=np.intp)
    neg_buf = np.empty(max_m, dtype=np.intp)
    cdef Py_ssize_t[::1] pos = pos_buf
    cdef Py_ssize_t[::1] neg = neg_buf
    cdef Py_ssize_t s, i, j, k, lo, npos, nneg, a, base
    cdef double quad, lin
    cdef signed char code

    with nogil:
        for s in range(nsnp):
            quad = 0.0
            lin = 0.0
            for b in range(nb):
                lo = block_ptr[b]
                m = block_ptr[b + 1] - lo
                npos = 0
                nneg = 0
                for i in range(m):
                    code = codes[s, lo + i]
                    if code == 1:
                        pos[npos] = i
                        npos += 1
                    elif code == -1:
                        neg[nneg] = i
                        nneg += 1
                if npos == 0 and nneg == 0:
                    continue
                for i in range(npos):
                    base = u_off[b] + pos[i] * m
                    for j in range(npos):
                        quad += u_flat[base + pos[j]]
                    for j in range(nneg):
                        quad -= 2.0 * u_flat[base + neg[j]]
                for i in range(nneg):
                    base = u_off[b] + neg[i] * m
                    for j in range(nneg):
                        quad += u_flat[base + neg[j]]
                for i in range(npos):
                    a = lo + pos[i]
                    lin += q[a]
                    for k in range(p):
                        W_out[s, k] += UN[a, k]
                for i in range(nneg):
                    a = lo + neg[i]
                    lin -= q[a]
                    for k in range(p):
                        W_out[s, k] -= UN[a, k]
            Q_out[s] = quad
            R_out[s] = lin

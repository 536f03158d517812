"""Kernel backend selection for the per-SNP quadratic forms.

The compiled extension is optional; when it failed to build (or was never
built) everything routes through the numpy implementations. ``BACKEND``
records which one import found.
"""

import numpy as np

from . import _scan_py as _py

try:
    from . import _scan_cy as _cy
    BACKEND = "cython"
except ImportError:  # pure-python install
    _cy = None
    BACKEND = "python"


class ChunkKernel:
    """Block-diagonal score context repacked for the chunk kernels.

    Holds the concatenated row space of every pedigree block: U blocks both
    as a list (float route) and flattened row-major (compiled route), the
    stacked solved design UN, and the solved residual q.
    """

    def __init__(self, U_blocks, UN_blocks, q_blocks):
        self.U_blocks = [np.ascontiguousarray(u, dtype=np.float64) for u in U_blocks]
        sizes = np.array([u.shape[0] for u in self.U_blocks], dtype=np.int64)
        self.block_ptr = np.zeros(sizes.size + 1, dtype=np.int64)
        np.cumsum(sizes, out=self.block_ptr[1:])
        self.q = np.ascontiguousarray(np.concatenate(q_blocks), dtype=np.float64)
        self.UN = np.ascontiguousarray(np.vstack(UN_blocks), dtype=np.float64)
        self.u_flat = np.concatenate([u.ravel() for u in self.U_blocks])
        self.u_off = np.zeros(sizes.size + 1, dtype=np.int64)
        np.cumsum(sizes * sizes, out=self.u_off[1:])
        self.n_rows = int(self.block_ptr[-1])

    def float_chunk(self, values):
        return _py.scan_chunk_float(values, self.block_ptr, self.U_blocks,
                                    self.q, self.UN)

    def int_chunk(self, codes, backend=None):
        be = BACKEND if backend is None else backend
        if be == "cython" and _cy is not None:
            codes = np.ascontiguousarray(codes, dtype=np.int8)
            n = codes.shape[0]
            Q = np.zeros(n)
            R = np.zeros(n)
            W = np.zeros((n, self.UN.shape[1]))
            _cy.scan_chunk_int(codes, self.block_ptr, self.u_flat, self.u_off,
                               self.q, self.UN, Q, R, W)
            return Q, R, W
        return _py.scan_chunk_int(codes, self.block_ptr, self.U_blocks,
                                  self.q, self.UN)

"""Rate-5/7 regular LDPC code with an incremental-redundancy extension.

Construction is progressive-edge-growth flavoured: variables take dv edges
one at a time, each to the farthest (ideally unreachable) check node, with
min-degree then lowest-index tie-breaks after a seeded shuffle.  Avoiding
checks within distance 2 keeps the girth at 6 or better whenever feasible.

HARQ extension: extra parity bits p2 = A @ c1 over GF(2) with sparse seeded
A, giving a mother structure of rate k/(n+extra); the first transmission is
the base codeword, the retransmission carries p2, and the combined decode
runs belief propagation on the stacked graph.

Decoding itself lives in semlink.kernels (numba/numpy selectable).
"""

from __future__ import annotations

import numpy as np

from .. import kernels


class LdpcError(ValueError):
    pass


def _csr_from_matrix(rows_of_vars, n):
    """rows_of_vars: list of sorted var-index lists, one per check."""
    chk_ptr = np.zeros(len(rows_of_vars) + 1, dtype=np.int64)
    chk_vars = []
    for i, row in enumerate(rows_of_vars):
        chk_vars.extend(row)
        chk_ptr[i + 1] = len(chk_vars)
    chk_vars = np.array(chk_vars, dtype=np.int64)
    # var -> edge ids (check-major edge enumeration)
    order = np.argsort(chk_vars, kind="stable")
    var_ptr = np.zeros(n + 1, dtype=np.int64)
    counts = np.bincount(chk_vars, minlength=n)
    var_ptr[1:] = np.cumsum(counts)
    return chk_ptr, chk_vars, var_ptr, order.astype(np.int64)


class LdpcCode:
    def __init__(self, n=700, dv=3, rate_num=5, rate_den=7, seed=2024,
                 max_iters=50):
        if (n * (rate_den - rate_num)) % rate_den:
            raise LdpcError("n incompatible with the target rate")
        self.n = n
        self.m = n * (rate_den - rate_num) // rate_den
        self.k = n - self.m
        self.dv = dv
        self.max_iters = max_iters
        # a random graph can come out rank-deficient; retry deterministically
        for attempt in range(16):
            self.seed = seed + attempt
            self._build_graph()
            try:
                self._build_encoder()
                break
            except LdpcError:
                if attempt == 15:
                    raise
        self.extension = None

    @property
    def rate(self):
        return self.k / self.n

    # -- construction -------------------------------------------------------

    def _build_graph(self):
        rng = np.random.default_rng(np.random.PCG64(self.seed))
        n, m, dv = self.n, self.m, self.dv
        var_checks = [[] for _ in range(n)]
        chk_list = [[] for _ in range(m)]
        degrees = np.zeros(m, dtype=np.int64)
        for v in rng.permutation(n):
            for _ in range(dv):
                # checks within distance 2 of v would close a 4-cycle
                near = set(var_checks[v])
                for c in var_checks[v]:
                    for u in chk_list[c]:
                        near.update(var_checks[u])
                candidates = [c for c in range(m) if c not in near]
                if not candidates:
                    candidates = [c for c in range(m) if c not in var_checks[v]]
                dmin = degrees[np.array(candidates)].min()
                best = [c for c in candidates if degrees[c] == dmin]
                c = int(best[int(rng.integers(len(best)))])
                var_checks[v].append(c)
                chk_list[c].append(v)
                degrees[c] += 1
        self.check_rows = [sorted(row) for row in chk_list]
        (self.chk_ptr, self.chk_vars,
         self.var_ptr, self.var_edges) = _csr_from_matrix(self.check_rows, n)

    def h_matrix(self):
        h = np.zeros((self.m, self.n), dtype=np.uint8)
        for i, row in enumerate(self.check_rows):
            h[i, row] = 1
        return h

    def girth_at_least_6(self):
        """True when no two variables share two checks (no 4-cycles)."""
        seen = set()
        for row in self.check_rows:
            arr = sorted(row)
            for a in range(len(arr)):
                for b in range(a + 1, len(arr)):
                    pair = (arr[a], arr[b])
                    if pair in seen:
                        return False
                    seen.add(pair)
        return True

    def _build_encoder(self):
        """Gauss-Jordan on H to find parity columns and the P map."""
        h = self.h_matrix().astype(np.uint8)
        m, n = h.shape
        perm = np.arange(n)
        for r in range(m):
            pivot = None
            for c in range(r, n):
                rows = np.nonzero(h[r:, perm[c]])[0]
                if rows.size:
                    pivot = (c, r + rows[0])
                    break
            if pivot is None:
                raise LdpcError("rank-deficient parity-check matrix")
            c, src = pivot
            perm[[r, c]] = perm[[c, r]]
            if src != r:
                h[[r, src]] = h[[src, r]]
            col = h[:, perm[r]].copy()
            col[r] = 0
            h[col == 1] ^= h[r]
        # columns perm[:m] are parity, perm[m:] carry data
        self.parity_cols = perm[:m].copy()
        self.data_cols = perm[m:].copy()
        self.p_map = h[:, self.data_cols].copy()  # parity = P @ data mod 2

    # -- coding -------------------------------------------------------------

    def encode(self, data_bits):
        data = np.asarray(data_bits, dtype=np.uint8).reshape(-1)
        if data.size != self.k:
            raise LdpcError(f"expected {self.k} data bits, got {data.size}")
        cw = np.zeros(self.n, dtype=np.uint8)
        cw[self.data_cols] = data
        cw[self.parity_cols] = (self.p_map @ data) & 1
        return cw

    def extract_data(self, codeword):
        return np.asarray(codeword, dtype=np.uint8)[self.data_cols]

    def syndrome_ok(self, codeword):
        cw = np.asarray(codeword, dtype=np.uint8)
        acc = np.add.reduceat(cw[self.chk_vars], self.chk_ptr[:-1]) & 1
        return not acc.any()

    def decode(self, llr, max_iters=None):
        """Belief-propagation decode of bit LLRs (positive favours 0).

        Returns (data bits, ok flag, iterations used)."""
        llr = np.asarray(llr, dtype=np.float64).reshape(-1)
        if llr.size != self.n:
            raise LdpcError(f"expected {self.n} LLRs, got {llr.size}")
        hard, ok, iters = kernels.ldpc_bp(
            llr, self.chk_ptr, self.chk_vars, self.var_ptr, self.var_edges,
            max_iters or self.max_iters)
        return hard[self.data_cols], bool(ok), int(iters)

    # -- incremental-redundancy extension ------------------------------------

    def build_extension(self, extra=None, row_weight=8, seed=None):
        """Extra parity rows turning the code into a rate-k/(n+extra) mother
        structure (default lands on rate 5/12 for the 5/7 base)."""
        if extra is None:
            extra = int(self.k * 12 / 5) - self.n
        rng = np.random.default_rng(np.random.PCG64(seed if seed is not None
                                                    else self.seed + 1))
        a_rows = [np.sort(rng.choice(self.n, size=row_weight - 1,
                                     replace=False))
                  for _ in range(extra)]
        rows = [list(r) for r in self.check_rows]
        for j, sel in enumerate(a_rows):
            rows.append(sorted(list(sel) + [self.n + j]))
        (chk_ptr, chk_vars, var_ptr, var_edges) = _csr_from_matrix(
            rows, self.n + extra)
        self.extension = {
            "extra": extra,
            "a_rows": a_rows,
            "chk_ptr": chk_ptr, "chk_vars": chk_vars,
            "var_ptr": var_ptr, "var_edges": var_edges,
        }
        return extra

    def encode_extension(self, codeword):
        if self.extension is None:
            raise LdpcError("call build_extension first")
        cw = np.asarray(codeword, dtype=np.uint8)
        return np.array([cw[sel].sum() & 1 for sel in self.extension["a_rows"]],
                        dtype=np.uint8)

    def decode_combined(self, llr_base, llr_extra, max_iters=None):
        ext = self.extension
        if ext is None:
            raise LdpcError("call build_extension first")
        llr = np.concatenate([np.asarray(llr_base, dtype=np.float64).reshape(-1),
                              np.asarray(llr_extra, dtype=np.float64).reshape(-1)])
        if llr.size != self.n + ext["extra"]:
            raise LdpcError("combined LLR length mismatch")
        hard, ok, iters = kernels.ldpc_bp(
            llr, ext["chk_ptr"], ext["chk_vars"], ext["var_ptr"],
            ext["var_edges"], max_iters or self.max_iters)
        return hard[self.data_cols], bool(ok), int(iters)


def llr_from_awgn(received, snr_db):
    """Bit LLR log(P0/P1) for BPSK (0 -> -1) through AWGN at Es/N0 snr_db."""
    sigma_sq = 1.0 / (2.0 * 10.0 ** (snr_db / 10.0))
    return -2.0 * np.asarray(received, dtype=np.float64) / sigma_sq

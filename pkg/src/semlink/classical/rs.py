"""Systematic Reed-Solomon codes over GF(2^m) with errors-and-erasures
decoding (Berlekamp-Massey + Chien search + Forney).

Covers both baseline shapes used here:
  * RS(7,5) over GF(8) - the rate-5/7 single-shot chain, corrects 1 symbol.
  * A shortened RS(12,5) over GF(16) - the rate-5/12 HARQ mother code whose
    first 7 symbols are transmitted alone (the punctured tail is decoded as
    erasures) and whose remaining 5 symbols ride the retransmission.

Decode failures are flagged, never silently passed through: the corrected
word is re-checked against the syndromes.
"""

from __future__ import annotations

import numpy as np

from .galois import GF, GF8


class RsDecodeFailure(Exception):
    pass


class RsCode:
    def __init__(self, gf: GF, n, k):
        if not (0 < k < n <= gf.q - 1 + 0):
            # shortened codes are allowed: n may be below q-1, never above
            pass
        if n > gf.q - 1:
            raise ValueError(f"RS length {n} exceeds field bound {gf.q - 1}")
        self.gf = gf
        self.n = n
        self.k = k
        self.n_parity = n - k
        self.t = self.n_parity // 2
        gen = [1]
        for i in range(1, self.n_parity + 1):
            gen = gf.poly_mul(gen, [gf.pow_alpha(i), 1])
        self.generator = gen

    @property
    def rate(self):
        return self.k / self.n

    def encode(self, data):
        """k data symbols -> n codeword symbols (systematic, data first)."""
        data = [int(x) for x in data]
        if len(data) != self.k:
            raise ValueError(f"expected {self.k} data symbols, got {len(data)}")
        if any(x < 0 or x >= self.gf.q for x in data):
            raise ValueError("data symbol out of field range")
        # message * x^(n-k) mod g  (ascending-power layout: parity first)
        shifted = [0] * self.n_parity + data[::-1]
        parity = self.gf.poly_mod(shifted, self.generator)
        parity = (parity + [0] * self.n_parity)[: self.n_parity]
        return np.array(data + parity[::-1], dtype=np.int64)

    def _syndromes(self, received):
        # received is codeword order (data..parity); poly coefficient i is
        # position n-1-i so evaluate the reversed word
        poly = received[::-1]
        return [self.gf.poly_eval(poly, self.gf.pow_alpha(j))
                for j in range(1, self.n_parity + 1)]

    def decode(self, received, erasures=()):
        """Correct up to floor((n-k-rho)/2) errors given rho erasures.

        Returns the k data symbols; raises RsDecodeFailure when the word is
        uncorrectable (too many errata, or the correction fails re-check).
        """
        gf = self.gf
        word = np.array(received, dtype=np.int64).copy()
        if word.size != self.n:
            raise ValueError(f"expected {self.n} symbols, got {word.size}")
        erasures = sorted(set(int(e) for e in erasures))
        if any(e < 0 or e >= self.n for e in erasures):
            raise ValueError("erasure position out of range")
        word[erasures] = 0
        synd = self._syndromes(word)
        if not any(synd):
            return word[: self.k].copy()

        rho = len(erasures)
        if rho > self.n_parity:
            raise RsDecodeFailure("more erasures than parity symbols")

        # erasure locator Gamma(x) = prod (1 - X_j x), X_j = alpha^(n-1-pos)
        gamma = [1]
        for pos in erasures:
            x_j = gf.pow_alpha(self.n - 1 - pos)
            gamma = gf.poly_mul(gamma, [1, x_j])

        # modified syndromes Xi = S * Gamma mod x^(n_parity)
        xi = gf.poly_mul(synd, gamma)[: self.n_parity]

        # Berlekamp-Massey on the modified syndromes for the error locator
        lam = self._berlekamp_massey(xi, rho)
        errata = gf.poly_mul(lam, gamma)
        positions = self._chien(errata)
        if len(positions) != len(errata) - 1:
            raise RsDecodeFailure("errata locator degree/root mismatch")

        omega = gf.poly_mul(synd, errata)[: self.n_parity]
        self._forney(word, errata, omega, positions)

        if any(self._syndromes(word)):
            raise RsDecodeFailure("correction failed syndrome re-check")
        return word[: self.k].copy()

    def _berlekamp_massey(self, synd, rho):
        # discrepancies start rho positions in: the first rho modified
        # syndromes are consumed by the erasure locator
        gf = self.gf
        lam = [1]
        prev = [1]
        l = 0
        b = 1
        shift = 1
        for r in range(self.n_parity - rho):
            idx = r + rho
            delta = 0
            for i, c in enumerate(lam):
                if i <= idx and c:
                    delta ^= gf.mul(c, synd[idx - i])
            if delta == 0:
                shift += 1
            elif 2 * l <= r:
                tmp = lam[:]
                coef = gf.div(delta, b)
                scaled = [0] * shift + [gf.mul(coef, c) for c in prev]
                lam = self._poly_add(lam, scaled)
                prev = tmp
                b = delta
                l = r + 1 - l
                shift = 1
            else:
                coef = gf.div(delta, b)
                scaled = [0] * shift + [gf.mul(coef, c) for c in prev]
                lam = self._poly_add(lam, scaled)
                shift += 1
        if 2 * l > self.n_parity - rho:
            raise RsDecodeFailure("too many errors for the remaining parity")
        return lam

    @staticmethod
    def _poly_add(p, r):
        out = [0] * max(len(p), len(r))
        for i, c in enumerate(p):
            out[i] ^= c
        for i, c in enumerate(r):
            out[i] ^= c
        while len(out) > 1 and out[-1] == 0:
            out.pop()
        return out

    def _chien(self, locator):
        """Positions whose locator root X_j^{-1} lies in the field."""
        gf = self.gf
        positions = []
        for pos in range(self.n):
            x_inv = gf.pow_alpha(-(self.n - 1 - pos))
            if gf.poly_eval(locator, x_inv) == 0:
                positions.append(pos)
        return positions

    def _forney(self, word, errata, omega, positions):
        gf = self.gf
        deriv = [errata[i] if i % 2 == 1 else 0 for i in range(1, len(errata))]
        for pos in positions:
            x_j = gf.pow_alpha(self.n - 1 - pos)
            x_inv = gf.inv(x_j)
            num = gf.poly_eval(omega, x_inv)
            den = gf.poly_eval(deriv, x_inv)
            if den == 0:
                raise RsDecodeFailure("Forney derivative vanished")
            word[pos] ^= gf.div(num, den)


RS_7_5 = RsCode(GF8, 7, 5)


def bits_to_symbols(bits, m):
    """Pack a bit array into m-bit symbols (zero-padded tail), MSB first."""
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    pad = (-bits.size) % m
    if pad:
        bits = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)])
    grouped = bits.reshape(-1, m)
    weights = 1 << np.arange(m - 1, -1, -1)
    return grouped @ weights


def symbols_to_bits(symbols, m):
    symbols = np.asarray(symbols, dtype=np.int64).reshape(-1)
    out = np.zeros((symbols.size, m), dtype=np.uint8)
    for j in range(m):
        out[:, j] = (symbols >> (m - 1 - j)) & 1
    return out.reshape(-1)

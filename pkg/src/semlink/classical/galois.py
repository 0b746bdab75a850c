"""GF(2^m) arithmetic via exp/log tables."""

import numpy as np


class GF:
    """The field GF(2^m) generated by a primitive polynomial."""

    def __init__(self, m, prim_poly):
        self.m = m
        self.q = 1 << m
        self.prim_poly = prim_poly
        self.exp = np.zeros(2 * self.q, dtype=np.int64)
        self.log = np.zeros(self.q, dtype=np.int64)
        x = 1
        for i in range(self.q - 1):
            self.exp[i] = x
            self.log[x] = i
            x <<= 1
            if x & self.q:
                x ^= prim_poly
        if x != 1:
            raise ValueError(f"0x{prim_poly:x} is not primitive for GF(2^{m})")
        # doubled table lets mul skip the mod (q-1) on the exponent sum
        self.exp[self.q - 1: 2 * (self.q - 1)] = self.exp[: self.q - 1]

    def mul(self, a, b):
        if a == 0 or b == 0:
            return 0
        return int(self.exp[self.log[a] + self.log[b]])

    def inv(self, a):
        if a == 0:
            raise ZeroDivisionError("GF inverse of 0")
        return int(self.exp[self.q - 1 - self.log[a]])

    def div(self, a, b):
        return self.mul(a, self.inv(b))

    def pow_alpha(self, i):
        """alpha**i for any integer i."""
        return int(self.exp[i % (self.q - 1)])

    # -- polynomial helpers (coefficient lists, ascending powers) ----------

    def poly_mul(self, p, r):
        out = [0] * (len(p) + len(r) - 1)
        for i, a in enumerate(p):
            if a == 0:
                continue
            for j, b in enumerate(r):
                if b:
                    out[i + j] ^= self.mul(a, b)
        return out

    def poly_eval(self, p, x):
        """Horner evaluation of p at x."""
        acc = 0
        for coef in reversed(p):
            acc = self.mul(acc, x) ^ coef
        return acc

    def poly_mod(self, num, den):
        num = list(num)
        dlead = den[-1]
        for shift in range(len(num) - len(den), -1, -1):
            coef = num[shift + len(den) - 1]
            if coef == 0:
                continue
            factor = self.div(coef, dlead)
            for i, d in enumerate(den):
                num[shift + i] ^= self.mul(factor, d)
        rem = num[: len(den) - 1]
        return rem if rem else [0]


GF8 = GF(3, 0b1011)      # x^3 + x + 1
GF16 = GF(4, 0b10011)    # x^4 + x + 1

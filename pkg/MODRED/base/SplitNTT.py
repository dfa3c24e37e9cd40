"""
Totally split primes, the negacyclic NTT, CRT recombination and the two rounding maps.

A prime p with p = 1 (mod 2n) splits x^n + 1 into n linear factors over F_p. The NTT
evaluates a residue polynomial at zeta_p^1, zeta_p^3, ..., zeta_p^(2n-1), the same odd-residue
order used by the complex embedding in ``Cyclotomic``.

Classes:
    - SplitPrimeContext: one split prime with its twiddle tables.
    - CrtBasis: a set of split primes and their product P.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Sequence

import numpy as np
from sympy import isprime

from MODRED.base.Cyclotomic import RingElement
from MODRED.base.utils import RangeOverflowException, RingParameterException

logger = logging.getLogger(__name__)

COMPAT_PRIME = 12289


def primitive_root_2n(p: int, n: int) -> int:
    """Smallest-generator primitive 2n-th root of unity in F_p (requires p = 1 mod 2n)."""
    exponent = (p - 1) // (2 * n)
    for g in range(2, p):
        candidate = pow(g, exponent, p)
        # order divides 2n, a power of two, so zeta^n = -1 pins it to exactly 2n
        if pow(candidate, n, p) == p - 1:
            return candidate
    raise RingParameterException(f"No primitive {2 * n}-th root of unity mod {p}")


def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    return np.array([int(format(i, f"0{bits}b")[::-1], 2) if bits else 0 for i in range(n)])


@dataclass(frozen=True, eq=False)
class SplitPrimeContext:
    """
    A totally split prime with precomputed NTT tables.

    Attributes:
        p (int): Prime with p = 1 (mod 2n).
        n (int): Ring degree.
        zeta_p (int): Primitive 2n-th root of unity in F_p.
    """
    p: int
    n: int
    zeta_p: int
    psi_powers: np.ndarray = field(repr=False)
    psi_inv_powers: np.ndarray = field(repr=False)
    omega_powers: np.ndarray = field(repr=False)
    omega_inv_powers: np.ndarray = field(repr=False)
    n_inv: int = field(repr=False)
    bit_reversal: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, p: int, n: int) -> "SplitPrimeContext":
        """
        Validate p and precompute twiddles.

        Raises:
            RingParameterException: If n is not a power of two, p is not prime, or p != 1 mod 2n.
        """
        if n < 1 or n & (n - 1):
            raise RingParameterException(f"Invalid degree n={n}. Must be a power of two.")
        if not isprime(p) or p % (2 * n) != 1:
            raise RingParameterException(f"{p} is not a prime congruent to 1 mod {2 * n}")
        dtype = np.int64 if p < (1 << 31) else object
        zeta = primitive_root_2n(p, n)
        zeta_inv = pow(zeta, p - 2, p)
        omega, omega_inv = zeta * zeta % p, zeta_inv * zeta_inv % p

        def powers(base: int) -> np.ndarray:
            table = [1] * n
            for m in range(1, n):
                table[m] = table[m - 1] * base % p
            return np.array(table, dtype=dtype)

        return cls(
            p=p,
            n=n,
            zeta_p=zeta,
            psi_powers=powers(zeta),
            psi_inv_powers=powers(zeta_inv),
            omega_powers=powers(omega),
            omega_inv_powers=powers(omega_inv),
            n_inv=pow(n, p - 2, p),
            bit_reversal=_bit_reversal(n),
        )

    @property
    def dtype(self):
        return self.psi_powers.dtype

    def reduce(self, values: Sequence[int]) -> np.ndarray:
        """Residues in [0, p) of an integer coefficient sequence."""
        return np.array([int(v) % self.p for v in values], dtype=self.dtype)

    def _cyclic(self, a: np.ndarray, table: np.ndarray) -> np.ndarray:
        # iterative radix-2 Cooley-Tukey, natural-order output
        p, n = self.p, self.n
        a = a[self.bit_reversal].copy()
        length = 2
        while length <= n:
            half = length // 2
            tw = table[(n // length) * np.arange(half)]
            blocks = a.reshape(n // length, length)
            u = blocks[:, :half].copy()
            v = blocks[:, half:] * tw % p
            blocks[:, :half] = (u + v) % p
            blocks[:, half:] = (u - v) % p
            a = blocks.reshape(n)
            length *= 2
        return a


def ntt(a: Sequence[int], ctx: SplitPrimeContext) -> np.ndarray:
    """
    Forward negacyclic NTT: a(x) -> (a(zeta_p^1), a(zeta_p^3), ..., a(zeta_p^(2n-1))).

    Args:
        a (Sequence[int]): n integer coefficients, reduced mod p on entry.
        ctx (SplitPrimeContext): Prime and twiddles.

    Returns:
        np.ndarray: n values in [0, p).
    """
    values = ctx.reduce(a)
    if len(values) != ctx.n:
        raise RingParameterException(f"Expected {ctx.n} coefficients, got {len(values)}")
    return ctx._cyclic(values * ctx.psi_powers % ctx.p, ctx.omega_powers)


def intt(values: Sequence[int], ctx: SplitPrimeContext) -> np.ndarray:
    """Inverse of ``ntt``; returns coefficients in [0, p)."""
    values = ctx.reduce(values)
    if len(values) != ctx.n:
        raise RingParameterException(f"Expected {ctx.n} values, got {len(values)}")
    coeffs = ctx._cyclic(values, ctx.omega_inv_powers) * ctx.n_inv % ctx.p
    return coeffs * ctx.psi_inv_powers % ctx.p


def symmetric_lift(x: int, modulus: int) -> int:
    """Representative of x mod modulus in {-floor(m/2), ..., floor(m/2)} (ties to the lower end for even m)."""
    r = int(x) % modulus
    return r - modulus if r > modulus // 2 else r


@dataclass(frozen=True, eq=False)
class CrtBasis:
    """
    A set of split primes for one degree n.

    Attributes:
        contexts (tuple[SplitPrimeContext, ...]): Pairwise distinct primes, ascending.
    """
    contexts: tuple

    def __post_init__(self):
        primes = [c.p for c in self.contexts]
        if not primes:
            raise RingParameterException("CRT basis needs at least one prime")
        if len(set(primes)) != len(primes):
            raise RingParameterException(f"CRT primes must be distinct, got {primes}")
        if len({c.n for c in self.contexts}) != 1:
            raise RingParameterException("CRT primes built for different degrees")

    @classmethod
    def from_primes(cls, primes: Sequence[int], n: int) -> "CrtBasis":
        return cls(tuple(SplitPrimeContext.build(int(p), n) for p in sorted(primes)))

    @property
    def primes(self) -> List[int]:
        return [c.p for c in self.contexts]

    @property
    def P(self) -> int:
        return math.prod(self.primes)

    @property
    def n(self) -> int:
        return self.contexts[0].n

    def to_dict(self) -> dict:
        return {"p_list": self.primes, "P": self.P}


def find_split_primes(n: int, target: int, override: Sequence[int] | None = None) -> CrtBasis:
    """
    Smallest primes p = 1 (mod 2n), ascending, until their product reaches target.

    Args:
        n (int): Ring degree, a power of two.
        target (int): Required lower bound on P.
        override (Sequence[int], optional): Explicit primes to use instead of the search
            (for example the 12289 setting for n = 256). They are validated, not searched.

    Returns:
        CrtBasis: The chosen primes.
    """
    if n < 1 or n & (n - 1):
        raise RingParameterException(f"Invalid degree n={n}. Must be a power of two.")
    if target < 1:
        raise ValueError(f"Invalid target {target}. Must be >= 1.")
    if override:
        basis = CrtBasis.from_primes(override, n)
        if basis.P < target:
            logger.warning(f"Override primes {basis.primes} give P={basis.P} < target {target}")
        return basis

    primes: List[int] = []
    product = 1
    candidate = 2 * n + 1
    while product < target:
        if isprime(candidate):
            primes.append(candidate)
            product *= candidate
        candidate += 2 * n
    logger.info(f"Split primes for n={n}, target={target}: {primes} (P={product})")
    return CrtBasis.from_primes(primes, n)


def crt_combine(residues: Sequence[np.ndarray], basis: CrtBasis) -> List[int]:
    """Recombine per-prime residue vectors into symmetric representatives mod P."""
    P = basis.P
    weights = []
    for ctx in basis.contexts:
        M = P // ctx.p
        weights.append(M * pow(M % ctx.p, ctx.p - 2, ctx.p))
    combined = []
    for position in range(basis.n):
        total = sum(int(r[position]) * w for r, w in zip(residues, weights))
        combined.append(symmetric_lift(total, P))
    return combined


def _round_half_away(x: Fraction) -> int:
    magnitude = math.floor(abs(x) + Fraction(1, 2))
    return magnitude if x >= 0 else -magnitude


def coordinate_round(t: RingElement) -> RingElement:
    """
    Nearest element of R, coefficient by coefficient.

    Ties at half-integers round away from zero.
    """
    return RingElement(tuple(_round_half_away(c) for c in t.coeffs), t.params)


def crt_scaled_round(
    t: RingElement, basis: CrtBasis, max_coefficient_bits: int = 64
) -> RingElement:
    """
    Round t to the finer lattice P^-1 R, coordinate by coordinate.

    The rounding happens in coefficient space: each coefficient is split exactly as
    x = q + f with q its nearest integer and |f| <= 1/2, and N = round(P f) is taken in
    the symmetric range mod P. The result is q + N/P, with every coefficient residual at
    most 1/(2P).

    The numerators are then sent through the split-prime path (reduce mod each p_s, NTT,
    symmetric-lift the NTT values, INTT, CRT-combine) as an exactness check: the
    recombined numerators must equal N, so the output is the coefficient-space rounding.

    Args:
        t (RingElement): Target with rational coefficients (floats are taken exactly).
        basis (CrtBasis): Split primes; must be built for t's degree.
        max_coefficient_bits (int): Bound on |q|; larger inputs are rejected.

    Returns:
        RingElement: c with coefficients in (1/P) Z.

    Raises:
        RangeOverflowException: If a coefficient exceeds 2^max_coefficient_bits, or the
            recombined numerators disagree with the inputs.
    """
    if basis.n != t.n:
        raise RingParameterException(f"CRT basis built for n={basis.n}, element has n={t.n}")
    P = basis.P
    limit = 1 << max_coefficient_bits
    half = P // 2

    integer_parts, numerators = [], []
    for x in t.coeffs:
        q = _round_half_away(x)
        if abs(q) >= limit:
            raise RangeOverflowException(
                f"Coefficient {float(x):.3e} exceeds the CRT range 2^{max_coefficient_bits}"
            )
        N = _round_half_away(P * (x - q))
        # |f| = 1/2 with odd P is the only case landing outside the symmetric range
        if abs(N) > half:
            N = half if N > 0 else -half
        integer_parts.append(q)
        numerators.append(N)

    residues = []
    for ctx in basis.contexts:
        spectrum = ntt(numerators, ctx)
        lifted = [symmetric_lift(v, ctx.p) for v in spectrum]
        residues.append(intt(lifted, ctx))
    recovered = crt_combine(residues, basis)
    if recovered != numerators:
        logger.error(f"CRT recombination mismatch for P={P}")
        raise RangeOverflowException(f"CRT recombination left the symmetric range mod {P}")

    coeffs = tuple(q + Fraction(N, P) for q, N in zip(integer_parts, recovered))
    return RingElement(coeffs, t.params)

"""
Exact arithmetic in the 2-power cyclotomic ring R = Z[x]/(x^n + 1) and its field K = Q(zeta).

Coefficients are stored as ``fractions.Fraction`` in the power basis {1, zeta, ..., zeta^(n-1)};
nothing in this module rounds. Floating point only appears in the Galois embedding, whose
values are indexed by the odd residues 1, 3, ..., 2n - 1 in ascending order.

Classes:
    - RingParams: conductor 2^k and degree n = 2^(k-1).
    - RingElement: an element of K in the power basis.
    - EmbeddingVector: the n complex embeddings of an element.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, List, Sequence, Union

import mpmath
import numpy as np

from MODRED.base.utils import RingParameterException, ZeroElementException

logger = logging.getLogger(__name__)

Scalar = Union[int, Fraction]

# int64 convolution is exact while each operand and n * max|a| * max|b| stay below this
_INT64_SAFE = 1 << 62


@dataclass(frozen=True)
class RingParams:
    """
    Parameters of the ring Z[zeta_{2^k}].

    Attributes:
        k (int): Conductor exponent, k >= 3.
        n (int): Field degree 2^(k-1).
    """
    k: int
    n: int = field(init=False)

    def __post_init__(self):
        if not isinstance(self.k, int) or self.k < 3:
            raise RingParameterException(f"Invalid k={self.k!r}. Must be an integer >= 3.")
        object.__setattr__(self, "n", 1 << (self.k - 1))

    @property
    def conductor(self) -> int:
        return 1 << self.k

    @property
    def orbit_size(self) -> int:
        """Order of the orbit group (Z/2^k)^x / {+-1}."""
        return 1 << (self.k - 2)

    @property
    def residues(self) -> np.ndarray:
        """Odd residues 1, 3, ..., 2n - 1 indexing the embeddings."""
        return np.arange(1, 2 * self.n, 2)


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ValueError(f"Non-finite coefficient {value!r}")
        return Fraction(float(value))
    return Fraction(value)


def _integral_form(coeffs: Sequence[Fraction]) -> tuple[List[int], int]:
    """Common denominator form: coeffs = nums / den."""
    den = 1
    for c in coeffs:
        den = math.lcm(den, c.denominator)
    return [c.numerator * (den // c.denominator) for c in coeffs], den


def _negacyclic_int(a: Sequence[int], b: Sequence[int]) -> List[int]:
    n = len(a)
    max_a = max((abs(x) for x in a), default=0)
    max_b = max((abs(x) for x in b), default=0)
    if max_a == 0 or max_b == 0:
        return [0] * n
    if max_a < _INT64_SAFE and max_b < _INT64_SAFE and max_a * max_b * n < _INT64_SAFE:
        full = np.convolve(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
        out = full[:n].copy()
        out[: n - 1] -= full[n:]
        return [int(v) for v in out]
    out = [0] * n
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            m = i + j
            if m < n:
                out[m] += ai * bj
            else:
                out[m - n] -= ai * bj
    return out


def _negacyclic(a: Sequence[Fraction], b: Sequence[Fraction]) -> List[Fraction]:
    na, da = _integral_form(a)
    nb, db = _integral_form(b)
    den = da * db
    return [Fraction(v, den) for v in _negacyclic_int(na, nb)]


def _alternate(c: Sequence[Fraction]) -> List[Fraction]:
    # alpha(x) -> alpha(-x)
    return [-v if m % 2 else v for m, v in enumerate(c)]


def _relative_norm(c: Sequence[Fraction]) -> List[Fraction]:
    """alpha(x) * alpha(-x), written as a polynomial in x^2 of half the degree."""
    return _negacyclic(c, _alternate(c))[0::2]


def _exact_norm(c: Sequence[Fraction]) -> Fraction:
    while len(c) > 1:
        c = _relative_norm(c)
    return c[0]


def _exact_inverse(c: Sequence[Fraction]) -> List[Fraction]:
    n = len(c)
    if n == 1:
        return [1 / c[0]]
    conj = _alternate(c)
    half_inverse = _exact_inverse(_negacyclic(c, conj)[0::2])
    lifted = [Fraction(0)] * n
    lifted[0::2] = half_inverse
    return _negacyclic(conj, lifted)


@dataclass(frozen=True)
class RingElement:
    """
    An element of K = Q(zeta_{2^k}) in the power basis.

    Attributes:
        coeffs (tuple[Fraction, ...]): Coordinates x_0 .. x_{n-1}.
        params (RingParams): Ring the element lives in.
    """
    coeffs: tuple
    params: RingParams

    def __post_init__(self):
        coeffs = tuple(_as_fraction(c) for c in self.coeffs)
        if len(coeffs) != self.params.n:
            raise RingParameterException(
                f"Expected {self.params.n} coefficients for k={self.params.k}, got {len(coeffs)}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    # -- constructors --------------------------------------------------------

    @classmethod
    def zero(cls, params: RingParams) -> "RingElement":
        return cls((0,) * params.n, params)

    @classmethod
    def one(cls, params: RingParams) -> "RingElement":
        return cls.scalar(params, 1)

    @classmethod
    def scalar(cls, params: RingParams, value: Scalar) -> "RingElement":
        return cls((value,) + (0,) * (params.n - 1), params)

    @classmethod
    def monomial(cls, params: RingParams, exponent: int, value: Scalar = 1) -> "RingElement":
        """value * zeta^exponent, reduced with zeta^n = -1."""
        e = exponent % (2 * params.n)
        sign = 1
        if e >= params.n:
            e -= params.n
            sign = -1
        coeffs = [0] * params.n
        coeffs[e] = sign * _as_fraction(value)
        return cls(tuple(coeffs), params)

    @classmethod
    def from_floats(cls, params: RingParams, values: Iterable[float]) -> "RingElement":
        """Exact rational image of a float coefficient vector."""
        return cls(tuple(Fraction(float(v)) for v in values), params)

    @classmethod
    def from_json(cls, payload: dict) -> "RingElement":
        """Inverse of ``to_json``: {"k": int, "coeffs": ["p/q", ...]}."""
        params = RingParams(int(payload["k"]))
        return cls(tuple(Fraction(str(c)) for c in payload["coeffs"]), params)

    def to_json(self) -> dict:
        return {
            "k": self.params.k,
            "coeffs": [f"{c.numerator}/{c.denominator}" for c in self.coeffs],
        }

    # -- predicates ----------------------------------------------------------

    @property
    def n(self) -> int:
        return self.params.n

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def is_integral(self) -> bool:
        return all(c.denominator == 1 for c in self.coeffs)

    def denominator(self) -> int:
        """Least common denominator of the coefficients."""
        return _integral_form(self.coeffs)[1]

    def to_numpy(self) -> np.ndarray:
        return np.array([float(c) for c in self.coeffs])

    # -- operators -----------------------------------------------------------

    def _check(self, other: "RingElement") -> None:
        if other.params != self.params:
            raise RingParameterException(
                f"Ring mismatch: k={self.params.k} vs k={other.params.k}"
            )

    def __add__(self, other):
        if isinstance(other, RingElement):
            return ring_add(self, other)
        return ring_add(self, RingElement.scalar(self.params, _as_fraction(other)))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, RingElement):
            return ring_sub(self, other)
        return ring_sub(self, RingElement.scalar(self.params, _as_fraction(other)))

    def __neg__(self):
        return RingElement(tuple(-c for c in self.coeffs), self.params)

    def __mul__(self, other):
        if isinstance(other, RingElement):
            return ring_mul(self, other)
        return ring_scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, RingElement):
            return ring_mul(self, ring_inverse(other))
        return ring_scale(self, 1 / _as_fraction(other))

    def __pow__(self, exponent: int):
        return ring_pow(self, exponent)

    def __repr__(self) -> str:
        terms = [f"{c}*z^{m}" for m, c in enumerate(self.coeffs) if c != 0]
        return f"RingElement(k={self.params.k}, {' + '.join(terms) or '0'})"


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """
    The complex embeddings sigma_a(alpha) for odd a = 1, 3, ..., 2n - 1.

    Attributes:
        values (np.ndarray): complex128 values in ascending residue order.
        precision (int): Working precision, in bits, used to evaluate them.
    """
    values: np.ndarray
    precision: int = 53

    @property
    def residues(self) -> np.ndarray:
        return np.arange(1, 2 * len(self.values), 2)

    def value_at(self, residue: int) -> complex:
        return complex(self.values[embedding_index(residue, len(self.values))])

    def abs(self) -> np.ndarray:
        return np.abs(self.values)

    def norm2(self) -> float:
        return float(np.linalg.norm(self.values))

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __mul__(self, other: "EmbeddingVector") -> "EmbeddingVector":
        return EmbeddingVector(self.values * other.values, min(self.precision, other.precision))


def embedding_index(residue: int, n: int) -> int:
    """Position of sigma_residue in the ascending odd-residue order."""
    r = residue % (2 * n)
    if r % 2 == 0:
        raise RingParameterException(f"Embedding residue {residue} is not odd")
    return (r - 1) // 2


def ring_add(a: RingElement, b: RingElement) -> RingElement:
    a._check(b)
    return RingElement(tuple(x + y for x, y in zip(a.coeffs, b.coeffs)), a.params)


def ring_sub(a: RingElement, b: RingElement) -> RingElement:
    a._check(b)
    return RingElement(tuple(x - y for x, y in zip(a.coeffs, b.coeffs)), a.params)


def ring_scale(a: RingElement, scalar: Scalar) -> RingElement:
    s = _as_fraction(scalar)
    return RingElement(tuple(c * s for c in a.coeffs), a.params)


def ring_mul(a: RingElement, b: RingElement) -> RingElement:
    """
    Exact product in K, by negacyclic convolution (zeta^n = -1).

    Raises:
        RingParameterException: If a and b come from different rings.
    """
    a._check(b)
    return RingElement(tuple(_negacyclic(a.coeffs, b.coeffs)), a.params)


def ring_pow(a: RingElement, exponent: int) -> RingElement:
    if exponent < 0:
        return ring_pow(ring_inverse(a), -exponent)
    result = RingElement.one(a.params)
    base = a
    while exponent:
        if exponent & 1:
            result = ring_mul(result, base)
        exponent >>= 1
        if exponent:
            base = ring_mul(base, base)
    return result


def conjugate(a: RingElement) -> RingElement:
    """The ring involution zeta -> zeta^-1 (complex conjugation under every embedding)."""
    n = a.n
    coeffs = [a.coeffs[0]] + [-a.coeffs[n - m] for m in range(1, n)]
    return RingElement(tuple(coeffs), a.params)


def galois_automorphism(a: RingElement, r: int) -> RingElement:
    """sigma_r acting on coefficients: zeta -> zeta^r for odd r."""
    n = a.n
    if r % 2 == 0:
        raise RingParameterException(f"Galois exponent {r} is not odd")
    coeffs = [Fraction(0)] * n
    for m, c in enumerate(a.coeffs):
        if c == 0:
            continue
        e = (r * m) % (2 * n)
        if e >= n:
            coeffs[e - n] -= c
        else:
            coeffs[e] += c
    return RingElement(tuple(coeffs), a.params)


def galois_embed(a: RingElement, precision: int = 53) -> EmbeddingVector:
    """
    Evaluate a at zeta^1, zeta^3, ..., zeta^(2n-1) with zeta = exp(i*pi/n).

    Args:
        a (RingElement): Element to embed.
        precision (int): Bits of working precision. 53 uses numpy's FFT; larger values
            evaluate the sums with mpmath. The returned vector is complex128 either way;
            use ``log_embedding`` or ``field_norm`` to keep the extra bits through the log.

    Returns:
        EmbeddingVector: values[r] = sigma_{2r+1}(a).
    """
    if precision < 53:
        raise ValueError(f"Invalid precision {precision}. Must be at least 53 bits.")
    n = a.n
    if precision == 53:
        x = a.to_numpy()
        twist = np.exp(1j * np.pi * np.arange(n) / n)
        return EmbeddingVector(n * np.fft.ifft(x * twist), 53)

    values = [complex(v) for v in _mp_embedding(a, precision)]
    return EmbeddingVector(np.array(values, dtype=np.complex128), precision)


def _mp_embedding(a: RingElement, precision: int) -> list:
    """Embedding values as mpmath complex numbers, summed at ``precision`` bits."""
    n = a.n
    with mpmath.workprec(precision):
        coeffs = [mpmath.mpf(c.numerator) / c.denominator for c in a.coeffs]
        values = []
        for r in range(n):
            residue = 2 * r + 1
            total = mpmath.mpc(0)
            for m, c in enumerate(coeffs):
                if c != 0:
                    total += c * mpmath.expjpi(mpmath.mpf(residue * m) / n)
            values.append(total)
    return values


def _mp_log_moduli(a: RingElement, precision: int) -> list:
    with mpmath.workprec(precision):
        return [mpmath.log(abs(v)) for v in _mp_embedding(a, precision)]


def trace(a: RingElement) -> Fraction:
    """Tr_{K/Q}(a) = n * x_0, since Tr(zeta^m) = 0 for 0 < m < n."""
    return a.n * a.coeffs[0]


def exact_norm(a: RingElement) -> Fraction:
    """Exact Nm_{K/Q}(a), by repeated relative norms down the 2-power tower."""
    return _exact_norm(list(a.coeffs))


def field_norm(a: RingElement, precision: int = 53) -> float:
    """|Nm(a)| as the product of the embedding moduli. Above 53 bits the sum of logs stays in mpmath."""
    if a.is_zero():
        return 0.0
    if precision > 53:
        with mpmath.workprec(precision):
            return float(mpmath.exp(mpmath.fsum(_mp_log_moduli(a, precision))))
    return float(np.exp(np.sum(np.log(galois_embed(a, precision).abs()))))


def log_norm(a: RingElement, precision: int = 53) -> float:
    """log |Nm(a)|."""
    if precision > 53 and not a.is_zero():
        with mpmath.workprec(precision):
            return float(mpmath.fsum(_mp_log_moduli(a, precision)))
    return float(np.sum(log_embedding(a, precision)))


def ring_inverse(a: RingElement) -> RingElement:
    """
    Exact inverse in K.

    Uses 1/alpha = alpha(-x) / (alpha(x) alpha(-x)) recursively, so the result is the
    product of the non-trivial Galois conjugates of alpha divided by its norm.

    Raises:
        ZeroElementException: If a is zero.
    """
    if a.is_zero():
        raise ZeroElementException("Cannot invert the zero element")
    return RingElement(tuple(_exact_inverse(list(a.coeffs))), a.params)


def log_embedding(a: RingElement, precision: int = 53) -> np.ndarray:
    """
    log |sigma_l(a)| for every embedding, in residue order.

    Above 53 bits the moduli and their logs are computed in mpmath and only the logs are
    rounded to float64, so embeddings far below the coefficient size keep their accuracy.

    Raises:
        ZeroElementException: If a is zero.
    """
    if a.is_zero():
        raise ZeroElementException("log embedding of the zero element")
    if precision > 53:
        return np.array([float(v) for v in _mp_log_moduli(a, precision)])
    return np.log(galois_embed(a, precision).abs())

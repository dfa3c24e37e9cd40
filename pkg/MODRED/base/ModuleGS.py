"""
Module lattices over K: the K-valued Hermitian product, exact K-linear Gram-Schmidt,
size reduction, covolumes and the balance constant.

Everything on ``GramSchmidtData`` is exact over Q(zeta). The ``embedded_gram_diag`` path
is a float shortcut for Monte-Carlo statistics where exactness is not needed.

Classes:
    - ModuleVector: an element of K^d.
    - GramSchmidtData: basis, GS vectors, coefficients mu_ji and Gram values B_i.
"""

import itertools
import logging
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, List, Sequence

import numpy as np
from scipy.special import digamma, gammaln

from MODRED.base.Cyclotomic import (
    RingElement,
    RingParams,
    conjugate,
    exact_norm,
    galois_embed,
    ring_inverse,
)
from MODRED.base.SplitNTT import CrtBasis, coordinate_round, crt_scaled_round, find_split_primes
from MODRED.base.utils import ModRedException, RankDeficiencyException, RingParameterException

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModuleVector:
    """
    A vector in K^d.

    Attributes:
        entries (tuple[RingElement, ...]): The d coordinates, all over the same ring.
    """
    entries: tuple

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise RingParameterException("A module vector needs at least one entry")
        params = entries[0].params
        if any(e.params != params for e in entries):
            raise RingParameterException("Module vector entries come from different rings")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_ints(cls, params: RingParams, rows: Sequence[Sequence[int]]) -> "ModuleVector":
        return cls(tuple(RingElement(tuple(row), params) for row in rows))

    @classmethod
    def unit(cls, params: RingParams, d: int, i: int) -> "ModuleVector":
        return cls(tuple(
            RingElement.one(params) if k == i else RingElement.zero(params) for k in range(d)
        ))

    @property
    def d(self) -> int:
        return len(self.entries)

    @property
    def params(self) -> RingParams:
        return self.entries[0].params

    def is_zero(self) -> bool:
        return all(e.is_zero() for e in self.entries)

    def _check(self, other: "ModuleVector") -> None:
        if other.d != self.d or other.params != self.params:
            raise RingParameterException(
                f"Module vector mismatch: d={self.d},k={self.params.k} vs d={other.d},k={other.params.k}"
            )

    def __add__(self, other: "ModuleVector") -> "ModuleVector":
        self._check(other)
        return ModuleVector(tuple(a + b for a, b in zip(self.entries, other.entries)))

    def __sub__(self, other: "ModuleVector") -> "ModuleVector":
        self._check(other)
        return ModuleVector(tuple(a - b for a, b in zip(self.entries, other.entries)))

    def scale(self, alpha) -> "ModuleVector":
        """alpha * v for alpha in K (or a rational scalar)."""
        return ModuleVector(tuple(alpha * e for e in self.entries))

    def embed(self, precision: int = 53) -> np.ndarray:
        """Concatenated embeddings sigma(v) in C^(dn)."""
        return np.concatenate([galois_embed(e, precision).values for e in self.entries])

    def norm2(self, precision: int = 53) -> float:
        return float(np.linalg.norm(self.embed(precision)))

    def to_json(self) -> list:
        return [e.to_json()["coeffs"] for e in self.entries]


def basis_to_json(basis: Sequence[ModuleVector]) -> dict:
    return {
        "k": basis[0].params.k,
        "d": len(basis),
        "vectors": [v.to_json() for v in basis],
    }


def basis_from_json(payload: dict) -> List[ModuleVector]:
    """
    Parse {k, d, vectors}, vectors[i][j] being the coefficient list of entry j of b_i.

    Raises:
        ValueError: If the document's shape disagrees with k and d.
    """
    params = RingParams(int(payload["k"]))
    d = int(payload["d"])
    vectors = payload["vectors"]
    if len(vectors) != d or any(len(v) != d for v in vectors):
        raise ValueError(f"Basis document must hold {d} vectors of {d} entries")
    return [
        ModuleVector(tuple(RingElement(tuple(Fraction(str(c)) for c in entry), params) for entry in v))
        for v in vectors
    ]


def k_inner(a: ModuleVector, b: ModuleVector) -> RingElement:
    """<a, b>_K = sum_k a_k * conj(b_k); linear in a, conjugate-linear in b."""
    a._check(b)
    total = RingElement.zero(a.params)
    for x, y in zip(a.entries, b.entries):
        total = total + x * conjugate(y)
    return total


@dataclass(frozen=True)
class GramSchmidtData:
    """
    Result of K-linear Gram-Schmidt.

    Attributes:
        basis (tuple[ModuleVector, ...]): b_1 .. b_d.
        gs (tuple[ModuleVector, ...]): Orthogonal vectors b~_1 .. b~_d.
        mu (tuple[tuple[RingElement, ...], ...]): mu[j][i] for i < j, zero elsewhere.
        gram_diag (tuple[RingElement, ...]): B_i = <b~_i, b~_i>_K.
        rounding_mode (str): Size reduction applied to produce ``basis`` ("none", "coordinate", "crt").
        conditioning_only (bool): True when ``basis`` generates P^-1 M rather than M.
    """
    basis: tuple
    gs: tuple
    mu: tuple
    gram_diag: tuple
    rounding_mode: str = "none"
    conditioning_only: bool = False

    @property
    def d(self) -> int:
        return len(self.basis)

    @property
    def params(self) -> RingParams:
        return self.basis[0].params

    @property
    def n(self) -> int:
        return self.params.n


def k_gram_schmidt(basis: Sequence[ModuleVector]) -> GramSchmidtData:
    """
    Exact K-linear Gram-Schmidt: b~_j = b_j - sum_{i<j} mu_ji b~_i with mu_ji = <b_j, b~_i>_K / B_i.

    Raises:
        RankDeficiencyException: If some B_i vanishes (dependent basis).
    """
    basis = tuple(basis)
    if not basis:
        raise RankDeficiencyException("Empty basis")
    d = basis[0].d
    if len(basis) != d:
        raise RankDeficiencyException(f"Expected {d} basis vectors in K^{d}, got {len(basis)}")
    params = basis[0].params
    zero = RingElement.zero(params)

    gs, gram, inverses, mu = [], [], [], []
    for j, b in enumerate(basis):
        b._check(basis[0])
        v = b
        row = [zero] * d
        for i in range(j):
            coefficient = k_inner(b, gs[i]) * inverses[i]
            row[i] = coefficient
            v = v - gs[i].scale(coefficient)
        B = k_inner(v, v)
        if B.is_zero():
            logger.error(f"Gram-Schmidt value B_{j + 1} vanished")
            raise RankDeficiencyException(f"Basis is K-linearly dependent at vector {j + 1}")
        gs.append(v)
        gram.append(B)
        inverses.append(ring_inverse(B))
        mu.append(tuple(row))
    return GramSchmidtData(tuple(basis), tuple(gs), tuple(mu), tuple(gram))


def k_gram_matrix(basis: Sequence[ModuleVector]) -> List[List[RingElement]]:
    return [[k_inner(a, b) for b in basis] for a in basis]


def _permutation_sign(perm: Sequence[int]) -> int:
    inversions = sum(1 for i in range(len(perm)) for j in range(i + 1, len(perm)) if perm[i] > perm[j])
    return -1 if inversions % 2 else 1


def k_determinant(matrix: Sequence[Sequence[RingElement]]) -> RingElement:
    """Exact determinant of a square matrix over K (Leibniz expansion, fine for small d)."""
    d = len(matrix)
    params = matrix[0][0].params
    total = RingElement.zero(params)
    for perm in itertools.permutations(range(d)):
        term = RingElement.scalar(params, _permutation_sign(perm))
        for row, col in enumerate(perm):
            term = term * matrix[row][col]
        total = total + term
    return total


def gs_coordinates(data: GramSchmidtData) -> List[List[RingElement]]:
    """
    Coordinates of each b~_i in the basis: b~_i = sum_k nu[i][k] b_k.

    nu_i = e_i - sum_{j<i} mu_ij nu_j, upper entries zero.
    """
    d, params = data.d, data.params
    zero, one = RingElement.zero(params), RingElement.one(params)
    nu: List[List[RingElement]] = []
    for i in range(d):
        row = [one if k == i else zero for k in range(d)]
        for j in range(i):
            coefficient = data.mu[i][j]
            if coefficient.is_zero():
                continue
            row = [row[k] - coefficient * nu[j][k] for k in range(d)]
        nu.append(row)
    return nu


def size_reduce(
    data: GramSchmidtData,
    mode: str = "coordinate",
    crt_basis: CrtBasis | None = None,
    restrict_to_ring: bool = False,
    max_coefficient_bits: int = 64,
) -> GramSchmidtData:
    """
    Size-reduce the basis against its own GS vectors: b_j <- b_j - Round(mu_ji) b_i, i = j-1 .. 1.

    Args:
        data (GramSchmidtData): Input GS data.
        mode (str): "coordinate" rounds into R; "crt" rounds into P^-1 R through the NTT path.
        crt_basis (CrtBasis, optional): Primes for "crt"; defaults to the smallest set with P >= n/2.
        restrict_to_ring (bool): In "crt" mode, post-round each c_ji into R so the module is preserved.
        max_coefficient_bits (int): Numerator bound for the CRT path.

    Returns:
        GramSchmidtData: Recomputed GS data of the reduced basis. Its ``mu`` entries are the
        residuals mu'_ji. ``conditioning_only`` is set for unrestricted CRT reduction.
    """
    if mode == "coordinate":
        rounder: Callable[[RingElement], RingElement] = coordinate_round
    elif mode == "crt":
        if crt_basis is None:
            crt_basis = find_split_primes(data.n, max(1, math.ceil(data.n / 2)))
        basis_for_round = crt_basis

        def rounder(mu: RingElement) -> RingElement:
            c = crt_scaled_round(mu, basis_for_round, max_coefficient_bits)
            return coordinate_round(c) if restrict_to_ring else c
    else:
        raise ValueError(f"Invalid rounding mode {mode!r}. Must be 'coordinate' or 'crt'.")

    inverses = [ring_inverse(B) for B in data.gram_diag]
    basis = list(data.basis)
    for j in range(1, data.d):
        for i in range(j - 1, -1, -1):
            c = rounder(k_inner(basis[j], data.gs[i]) * inverses[i])
            if not c.is_zero():
                basis[j] = basis[j] - basis[i].scale(c)

    reduced = k_gram_schmidt(basis)
    if reduced.gram_diag != data.gram_diag:
        logger.error("Size reduction changed the Gram-Schmidt values")
        raise ModRedException("Size reduction changed the Gram-Schmidt values")
    conditioning_only = mode == "crt" and not restrict_to_ring
    logger.info(f"Size reduction ({mode}{', restricted' if restrict_to_ring else ''}) done for d={data.d}")
    return replace(reduced, rounding_mode=mode, conditioning_only=conditioning_only)


def mu_residual_inf(data: GramSchmidtData, precision: int = 53) -> float:
    """max_{i<j} ||sigma(mu_ji)||_inf."""
    worst = 0.0
    for j in range(data.d):
        for i in range(j):
            if not data.mu[j][i].is_zero():
                worst = max(worst, galois_embed(data.mu[j][i], precision).norm_inf())
    return worst


def _log_abs_fraction(value: Fraction) -> float:
    if value == 0:
        raise RankDeficiencyException("Zero Gram value")
    return math.log(abs(value.numerator)) - math.log(value.denominator)


def log_covolume(data: GramSchmidtData) -> float:
    """log det(sigma(M)) = (dn/2) log n + (1/2) sum_i log |Nm(B_i)|."""
    d, n = data.d, data.n
    return 0.5 * d * n * math.log(n) + 0.5 * sum(_log_abs_fraction(exact_norm(B)) for B in data.gram_diag)


def covolume(data: GramSchmidtData) -> float:
    """det(sigma(M)) = n^(dn/2) prod_i |Nm(B_i)|^(1/2); inf if it overflows a float."""
    try:
        return math.exp(log_covolume(data))
    except OverflowError:
        return math.inf


def log_line_covolume(J_norm: float, B: RingElement) -> float:
    """log of |Nm(J)| n^(n/2) |Nm(B)|^(1/2) for the rank-1 line J b~ with Gram value B."""
    n = B.n
    return math.log(J_norm) + 0.5 * n * math.log(n) + 0.5 * _log_abs_fraction(exact_norm(B))


def line_covolume(J_norm: float, B: RingElement) -> float:
    try:
        return math.exp(log_line_covolume(J_norm, B))
    except OverflowError:
        return math.inf


def line_balance_ratios(data: GramSchmidtData) -> List[float]:
    """Per line ||sigma(b~_i)||^2 / (n |Nm(B_i)|^(1/n)), using Tr(B_i) = n * (B_i)_0."""
    n = data.n
    ratios = []
    for B in data.gram_diag:
        log_geo = _log_abs_fraction(exact_norm(B)) / n
        ratios.append(float(B.coeffs[0]) / math.exp(log_geo))
    return ratios


def balance_constant(data: GramSchmidtData) -> float:
    """Smallest C for which the basis is C-balanced; always >= 1."""
    return max(line_balance_ratios(data))


def embedding_matrix(basis: Sequence[ModuleVector], precision: int = 53) -> np.ndarray:
    """
    Real basis of sigma(M): rows are (Re, Im) of sigma(zeta^m b_i), shape (dn, 2dn).
    """
    params = basis[0].params
    rows = []
    for b in basis:
        for m in range(params.n):
            z = b.scale(RingElement.monomial(params, m)).embed(precision)
            rows.append(np.concatenate([z.real, z.imag]))
    return np.array(rows)


def embedded_gram_diag(coeffs: np.ndarray) -> np.ndarray:
    """
    Float Gram-Schmidt values sigma_l(B_i) from integer coefficient arrays.

    Args:
        coeffs (np.ndarray): Shape (d, d, n); coeffs[i, k] is entry k of b_i.

    Returns:
        np.ndarray: Shape (d, n), the embedded Gram values of each GS line.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.shape[-1]
    twist = np.exp(1j * np.pi * np.arange(n) / n)
    embedded = n * np.fft.ifft(coeffs * twist, axis=-1)
    gram = np.einsum("ikl,jkl->lij", embedded, embedded.conj())
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as e:
        raise RankDeficiencyException(f"Embedded Gram matrix is singular: {e}") from e
    return (np.abs(np.diagonal(chol, axis1=1, axis2=2)) ** 2).T


def balance_from_gram_diag(gram_diag: np.ndarray, modulus: bool = False) -> np.ndarray:
    """
    Per-line arithmetic-over-geometric mean of the embedded Gram values.

    With ``modulus`` the ratio is taken over sqrt(sigma_l(B_i)) = |sigma_l(b~_i)| instead;
    per line it is at most the square root of the default ratio.
    """
    values = np.sqrt(gram_diag) if modulus else gram_diag
    mean = values.mean(axis=1)
    geo = np.exp(np.log(values).mean(axis=1))
    return mean / geo


def gamma_balance_limit(shape: float, modulus: bool = False) -> float:
    """
    Large-n limit of a line's balance ratio when its embedded Gram values are i.i.d.
    Gamma(shape): shape * exp(-digamma(shape)), or Gamma(shape + 1/2) / Gamma(shape) *
    exp(-digamma(shape) / 2) with ``modulus``.

    For a basis with i.i.d. centered entries, line i of d (1-based) has shape d - i + 1, so
    the last line tends to exp(euler_gamma) ~ 1.781 whatever d is.
    """
    if shape <= 0:
        raise ValueError(f"Invalid shape {shape}. Must be positive.")
    if modulus:
        return float(np.exp(gammaln(shape + 0.5) - gammaln(shape) - digamma(shape) / 2))
    return float(shape * np.exp(-digamma(shape)))


def balance_constant_numeric(coeffs: np.ndarray) -> float:
    return float(balance_from_gram_diag(embedded_gram_diag(coeffs)).max())

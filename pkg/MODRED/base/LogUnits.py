"""
Log-unit geometry of Q(zeta_{2^k}) and short-generator recovery.

The orbit group G = (Z/2^k)^x / {+-1} is cyclic of order 2^(k-2), generated by 5. Orbit
position j stands for the conjugate pair {sigma_a, sigma_-a} with a = 5^j mod 2^k. Log
vectors of length n are folded to |G| coordinates by summing each pair.

Classes:
    - OrbitTable, LogSineVector, ErrorMatrix, UnitLogBasis: the geometric tables.
    - DecodeResult: Babai round-off exponents and residual.
    - ShortGeneratorResult: a shortened generator with its status flags.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np
import pandas as pd

from MODRED.base.Cyclotomic import (
    RingElement,
    RingParams,
    embedding_index,
    exact_norm,
    log_embedding,
    ring_mul,
    ring_pow,
)
from MODRED.base.utils import ObjectOperation, RankDeficiencyException, RingParameterException

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class OrbitTable:
    """
    Attributes:
        k (int): Conductor exponent.
        size (int): |G| = 2^(k-2).
        reps (np.ndarray): reps[j] = min(5^j mod 2^k, 2^k - (5^j mod 2^k)).
    """
    k: int
    size: int
    reps: np.ndarray


def orbit_table(k: int) -> OrbitTable:
    params = RingParams(k)
    modulus = params.conductor
    reps, x = [], 1
    for _ in range(params.orbit_size):
        reps.append(min(x, modulus - x))
        x = x * 5 % modulus
    return OrbitTable(k, params.orbit_size, np.array(reps, dtype=np.int64))


def tower_level(position: int, k: int) -> int:
    """
    Tower level of an orbit position: the smallest L with position in the subgroup of
    index 2^(L-2). Position 2^(k-3) is level 3; odd positions are level k.
    """
    if position == 0:
        return 2
    v2 = (position & -position).bit_length() - 1
    return k - v2


@dataclass(frozen=True, eq=False)
class LogSineVector:
    """z_j = log(2 |sin(pi orb(j) / 2^k)|); sums to (1/2) log 2."""
    k: int
    z: np.ndarray


def log_sine(k: int) -> LogSineVector:
    table = orbit_table(k)
    z = np.log(2.0 * np.abs(np.sin(np.pi * table.reps / float(1 << k))))
    return LogSineVector(k, z)


@dataclass(frozen=True, eq=False)
class ErrorMatrix:
    """
    The |G| x N_s error matrix.

    Attributes:
        k (int): Conductor exponent.
        M (np.ndarray): Shape (|G|, |G| - 1).
        column_offset (int): Column c sits at orbit position c + column_offset.
        dft_convention (dict): Normalization record.
    """
    k: int
    M: np.ndarray
    column_offset: int = 1
    dft_convention: dict = field(default_factory=dict)

    @property
    def G(self) -> int:
        return self.M.shape[0]

    @property
    def N_s(self) -> int:
        return self.M.shape[1]

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.N_s) + self.column_offset

    def to_csv(self, filename: str) -> None:
        header = f"k,|G|,N_s\n{self.k},{self.G},{self.N_s}"
        columns = [f"pos{p}" for p in self.positions]
        ObjectOperation.save_csv(pd.DataFrame(self.M, columns=columns), filename, header_line=header)


def error_matrix(k: int, column_offset: int = 1) -> ErrorMatrix:
    """
    M_ij = Re(IFFT(FFT(z) * FFT(e_j)))_i - z_i / 2, with e_j holding 1/2 at orbit position
    j + column_offset. numpy's FFT convention: forward unnormalized, inverse scaled by 1/|G|.

    Raises:
        RingParameterException: If k < 4.
    """
    if k < 4:
        raise RingParameterException(f"Error matrix needs k >= 4, got k={k}")
    if column_offset not in (0, 1):
        raise ValueError(f"Invalid column_offset {column_offset}. Must be 0 or 1.")
    z = log_sine(k).z
    G = z.size
    N_s = G - 1
    E = np.zeros((G, N_s))
    E[np.arange(N_s) + column_offset, np.arange(N_s)] = 0.5
    conv = np.fft.ifft(np.fft.fft(z)[:, None] * np.fft.fft(E, axis=0), axis=0)
    M = np.real(conv) - 0.5 * z[:, None]
    convention = {
        "forward": "unnormalized",
        "inverse": "1/|G|",
        "group_order": "powers of 5",
        "column_offset": column_offset,
    }
    return ErrorMatrix(k, M, column_offset, convention)


def cyclotomic_unit(params: RingParams, a: int) -> RingElement:
    """(1 - zeta^a) / (1 - zeta) = 1 + zeta + ... + zeta^(a-1), for odd 0 < a < n."""
    if a % 2 == 0 or not 0 < a < params.n:
        raise RingParameterException(f"Unit index {a} must be odd and in (0, {params.n})")
    return RingElement(tuple(1 if m < a else 0 for m in range(params.n)), params)


def cyclotomic_unit_inverse(params: RingParams, a: int) -> RingElement:
    """(1 - zeta) / (1 - zeta^a) = sum_{m<b} zeta^(a m) with b = a^-1 mod 2^k."""
    b = pow(a, -1, params.conductor)
    total = [Fraction(0)] * params.n
    for m in range(b):
        e = (a * m) % (2 * params.n)
        if e >= params.n:
            total[e - params.n] -= 1
        else:
            total[e] += 1
    return RingElement(tuple(total), params)


def fold(log_vector: np.ndarray, k: int) -> np.ndarray:
    """Fold an n-dimensional log vector to orbit coordinates by summing conjugate pairs."""
    table = orbit_table(k)
    n = 1 << (k - 1)
    modulus = 1 << k
    first = [embedding_index(int(a), n) for a in table.reps]
    second = [embedding_index(modulus - int(a), n) for a in table.reps]
    log_vector = np.asarray(log_vector, dtype=float)
    return log_vector[first] + log_vector[second]


@dataclass(frozen=True, eq=False)
class UnitLogBasis:
    """
    Folded log vectors of the cyclotomic units xi_a, a = orb(1), ..., orb(|G|-1).

    Attributes:
        k (int): Conductor exponent.
        rows (np.ndarray): Shape (|G|-1, |G|); every row sums to zero.
        unit_indices (np.ndarray): The a of each row.
    """
    k: int
    rows: np.ndarray
    unit_indices: np.ndarray
    pinv: np.ndarray = field(repr=False)

    @property
    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.rows))

    @property
    def gram_det(self) -> float:
        return float(np.linalg.det(self.rows @ self.rows.T))

    @property
    def regulator(self) -> float:
        return math.sqrt(max(self.gram_det, 0.0))

    def to_csv(self, filename: str) -> None:
        frame = pd.DataFrame(self.rows)
        frame.insert(0, "unit", self.unit_indices)
        ObjectOperation.save_csv(frame, filename)


@lru_cache(maxsize=None)
def unit_log_basis(k: int, precision: int = 53) -> UnitLogBasis:
    """
    Raises:
        RankDeficiencyException: If the rows are dependent (cannot happen for valid k).
    """
    params = RingParams(k)
    table = orbit_table(k)
    indices = table.reps[1:]
    rows = np.array([fold(log_embedding(cyclotomic_unit(params, int(a)), precision), k) for a in indices])
    rows = rows.reshape(len(indices), table.size)
    if np.linalg.matrix_rank(rows) != len(indices):
        logger.error(f"Unit log basis at k={k} is rank deficient")
        raise RankDeficiencyException(f"Unit log basis at k={k} is rank deficient")
    # round-off solves y B = t for t in H_0
    pinv = np.linalg.pinv(rows)
    return UnitLogBasis(k, rows, indices, pinv)


@dataclass
class DecodeResult:
    """
    Attributes:
        exponents (np.ndarray): Integer e with target ~ sum_j e_j rows_j.
        coordinates (np.ndarray): Real solution y before rounding.
        residual (np.ndarray): Projected target minus e B.
        residual_inf (float): ||residual||_inf.
    """
    exponents: np.ndarray
    coordinates: np.ndarray
    residual: np.ndarray
    residual_inf: float


def _sign_vector(signs) -> Optional[np.ndarray]:
    if signs is None:
        return None
    return np.asarray(getattr(signs, "s", signs), dtype=int)


def row_sign_map(basis: UnitLogBasis, signs, column_offset: int = 1) -> np.ndarray:
    """
    Sign attached to each unit row: row j (orbit position j) takes the sign of the column at
    orbit position -j mod |G|. Rows without a column get 0.
    """
    s = _sign_vector(signs)
    G = basis.rows.shape[1]
    mapped = np.zeros(basis.rows.shape[0], dtype=int)
    if s is None:
        return mapped
    for r in range(basis.rows.shape[0]):
        column = (G - (r + 1)) % G - column_offset
        if 0 <= column < s.size:
            mapped[r] = s[column]
    return mapped


def cdpr_decode(
    target: np.ndarray,
    basis: UnitLogBasis,
    signs=None,
    tie_window: float = 0.25,
    column_offset: int = 1,
) -> DecodeResult:
    """
    Babai round-off in the folded log-unit lattice, with an optional sign correction.

    The target is projected to the trace-zero hyperplane and solved against the unit rows
    through the pseudo-inverse. Coordinates round to the nearest integer, ties toward zero.
    With signs, a coordinate whose fractional part is within ``tie_window`` of 1/2 rounds
    down when its sign is +1 (leaving +1/2) and up when it is -1.

    Args:
        target (np.ndarray): Folded log vector of length |G|.
        basis (UnitLogBasis): Unit rows for the same k.
        signs (SignSolution | np.ndarray, optional): Balanced sign vector over the error-matrix columns.
        tie_window (float): Half-width of the window around 1/2 where signs apply.
        column_offset (int): Column-to-orbit-position offset of the sign vector.

    Returns:
        DecodeResult: Exponents and residual.
    """
    target = np.asarray(target, dtype=float)
    if target.shape != (basis.rows.shape[1],):
        raise RingParameterException(
            f"Target has shape {target.shape}, expected ({basis.rows.shape[1]},)"
        )
    if not np.all(np.isfinite(basis.pinv)):
        raise RankDeficiencyException("Singular unit basis")

    projected = target - target.mean()
    y = projected @ basis.pinv
    e = np.sign(y) * np.ceil(np.abs(y) - 0.5)

    row_signs = row_sign_map(basis, signs, column_offset)
    if np.any(row_signs):
        floor = np.floor(y)
        frac = y - floor
        window = (np.abs(frac - 0.5) <= tie_window) & (row_signs != 0)
        e = np.where(window & (row_signs > 0), floor, e)
        e = np.where(window & (row_signs < 0), floor + 1, e)

    e = e.astype(np.int64)
    residual = projected - e @ basis.rows
    return DecodeResult(e, y, residual, float(np.max(np.abs(residual))))


@dataclass
class ShortGeneratorResult:
    """
    Attributes:
        element (RingElement): The shortened generator alpha'.
        unit_exponents (np.ndarray): alpha' = alpha0 * prod_j xi_j^(-e_j), up to torsion.
        status (str): "ok", "kept-input" (no improvement) or "decode-failure".
        inf_norm_before (float): Twisted sup-norm of alpha0.
        inf_norm_after (float): Twisted sup-norm of the returned element.
        decode (DecodeResult): The round-off step before polishing.
    """
    element: RingElement
    unit_exponents: np.ndarray
    status: str
    inf_norm_before: float
    inf_norm_after: float
    decode: Optional[DecodeResult] = None


def _move_set(count: int, pair_limit: int) -> np.ndarray:
    moves = [np.eye(count, dtype=np.int64), -np.eye(count, dtype=np.int64)]
    if count <= pair_limit:
        pairs = []
        for i in range(count):
            for j in range(i + 1, count):
                for si in (1, -1):
                    for sj in (1, -1):
                        v = np.zeros(count, dtype=np.int64)
                        v[i], v[j] = si, sj
                        pairs.append(v)
        if pairs:
            moves.append(np.array(pairs))
    return np.vstack(moves)


def polish_exponents(
    exponents: np.ndarray,
    half_target: np.ndarray,
    half_rows: np.ndarray,
    max_iter: int = 200,
    pair_limit: int = 32,
) -> np.ndarray:
    """
    Local descent over unit exponents on sum_i exp(2 (t_i - (e U)_i)), the folded squared
    l2 norm of alpha' twisted by the line's Gram values.
    """
    e = exponents.copy()
    moves = _move_set(e.size, pair_limit)
    move_logs = moves @ half_rows
    current = half_target - e @ half_rows
    value = np.exp(2 * current).sum()
    for _ in range(max_iter):
        candidates = np.exp(2 * (current[None, :] - move_logs)).sum(axis=1)
        best = int(np.argmin(candidates))
        if candidates[best] >= value * (1 - 1e-12):
            break
        e = e + moves[best]
        current = current - move_logs[best]
        value = candidates[best]
    return e


def apply_units(alpha: RingElement, exponents: np.ndarray, unit_indices: np.ndarray) -> RingElement:
    """alpha * prod_j xi_{a_j}^(-e_j), exactly."""
    params = alpha.params
    result = alpha
    for e, a in zip(exponents, unit_indices):
        e, a = int(e), int(a)
        if e > 0:
            result = ring_mul(result, ring_pow(cyclotomic_unit_inverse(params, a), e))
        elif e < 0:
            result = ring_mul(result, ring_pow(cyclotomic_unit(params, a), -e))
    return result


def canonical_torsion(alpha: RingElement) -> RingElement:
    """Representative of {+-zeta^m alpha} with the lexicographically largest coefficient tuple."""
    n = alpha.n
    c = alpha.coeffs
    best = None
    for m in range(n):
        rotated = tuple(c[i - m] if i >= m else -c[i - m + n] for i in range(n))
        for candidate in (rotated, tuple(-v for v in rotated)):
            if best is None or candidate > best:
                best = candidate
    return RingElement(best, alpha.params)


def short_generator(
    alpha0: RingElement,
    k: int | None = None,
    signs=None,
    twist: np.ndarray | None = None,
    basis: UnitLogBasis | None = None,
    tie_window: float = 0.25,
    column_offset: int = 1,
    polish_max_iter: int = 200,
    polish_pair_limit: int = 32,
    precision: int = 53,
) -> ShortGeneratorResult:
    """
    Shorten a generator of a principal ideal by a cyclotomic-unit product.

    Args:
        alpha0 (RingElement): Non-zero generator.
        k (int, optional): Conductor exponent; defaults to alpha0's ring.
        signs (SignSolution | np.ndarray, optional): Sign correction for the round-off step.
        twist (np.ndarray, optional): Per-embedding log weights added to log|sigma(alpha0)|;
            the pipeline passes (1/2) log sigma(B_i) so that alpha' b~_i is what gets shortened.
        basis (UnitLogBasis, optional): Precomputed unit basis.
        tie_window, column_offset: See ``cdpr_decode``.
        polish_max_iter (int): Local-descent iterations after round-off.
        polish_pair_limit (int): Unit count up to which pair moves are tried.
        precision (int): Embedding precision in bits.

    Returns:
        ShortGeneratorResult: alpha' with ||sigma(alpha')||_inf (twisted) no larger than alpha0's,
        |Nm(alpha')| = |Nm(alpha0)|, canonical up to torsion.
    """
    params = alpha0.params
    k = k or params.k
    if k != params.k:
        raise RingParameterException(f"alpha0 lives in k={params.k}, asked for k={k}")
    if alpha0.is_zero():
        raise ValueError("short_generator needs a non-zero generator")
    twist = np.zeros(params.n) if twist is None else np.asarray(twist, dtype=float)
    basis = basis or unit_log_basis(k, precision)

    logs_before = log_embedding(alpha0, precision) + twist
    before = float(np.exp(logs_before.max()))
    target = fold(logs_before, k)
    decode = cdpr_decode(target, basis, signs, tie_window, column_offset)
    exponents = polish_exponents(
        decode.exponents, target / 2, basis.rows / 2, polish_max_iter, polish_pair_limit
    )

    candidate = canonical_torsion(apply_units(alpha0, exponents, basis.unit_indices))
    if abs(exact_norm(candidate)) != abs(exact_norm(alpha0)):
        logger.warning(f"Short generator decode failed at k={k}: quotient is not a unit")
        return ShortGeneratorResult(alpha0, np.zeros_like(exponents), "decode-failure", before, before, decode)

    after = float(np.exp((log_embedding(candidate, precision) + twist).max()))
    if after > before * (1 + 1e-9):
        logger.info(f"Short generator kept its input at k={k} ({after:.4g} > {before:.4g})")
        return ShortGeneratorResult(alpha0, np.zeros_like(exponents), "kept-input", before, before, decode)
    return ShortGeneratorResult(candidate, exponents, "ok", before, after, decode)

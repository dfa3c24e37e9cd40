"""
End-to-end module reduction: Gram-Schmidt, optional size reduction, one short generator per
Gram-Schmidt line, and the shortest candidate as output.

Each line i runs through b~_i. Its b-coordinates nu_i have a common denominator L_i, so
L_i R b~_i is contained in M and the line generator starts at alpha0 = L_i. The short
generator search is twisted by (1/2) log sigma(B_i), which makes it shorten alpha' b~_i
instead of alpha' alone.

Classes:
    - ReductionOptions: pipeline switches.
    - LineReport: per-line accounting.
    - ReductionReport: the full report with its soundness checks.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from MODRED.ALGO.SignOptimization import solve_signs
from MODRED.base.Cyclotomic import RingElement, galois_embed, ring_inverse
from MODRED.base.LogUnits import short_generator, unit_log_basis
from MODRED.base.ModuleGS import (
    GramSchmidtData,
    ModuleVector,
    balance_constant,
    gs_coordinates,
    k_gram_schmidt,
    log_covolume,
    log_line_covolume,
    mu_residual_inf,
    size_reduce,
)
from MODRED.base.SplitNTT import find_split_primes

logger = logging.getLogger(__name__)

SIZE_REDUCE_MODES = ("off", "coord", "crt")
CRT_MODES = ("conditioning", "restricted")
SIGN_METHODS = ("milp", "greedy", "none")


@dataclass
class ReductionOptions:
    """
    Attributes:
        size_reduce_mode (str): "off", "coord" or "crt".
        crt_mode (str): For "crt": "conditioning" measures the P^-1 M reduction and keeps the
            original lines, "restricted" post-rounds into R and continues with the reduced basis.
        signs (str): Sign vector used by the decoder: "milp", "greedy" or "none".
        precision (int): Embedding precision in bits.
    """
    size_reduce_mode: str = "off"
    crt_mode: str = "conditioning"
    signs: str = "milp"
    precision: int = 53
    tie_window: float = 0.25
    column_offset: int = 1
    polish_max_iter: int = 200
    polish_pair_limit: int = 32
    exhaustive_limit: int = 20
    node_budget: int = 20000
    max_coefficient_bits: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.size_reduce_mode not in SIZE_REDUCE_MODES:
            raise ValueError(f"Invalid size_reduce_mode {self.size_reduce_mode!r}. Must be one of {SIZE_REDUCE_MODES}.")
        if self.crt_mode not in CRT_MODES:
            raise ValueError(f"Invalid crt_mode {self.crt_mode!r}. Must be one of {CRT_MODES}.")
        if self.signs not in SIGN_METHODS:
            raise ValueError(f"Invalid signs {self.signs!r}. Must be one of {SIGN_METHODS}.")
        if self.precision < 53:
            raise ValueError(f"Invalid precision {self.precision}. Must be >= 53.")

    @classmethod
    def from_config(cls, config: dict, **overrides) -> "ReductionOptions":
        options = {
            "size_reduce_mode": config["pipeline.size_reduce"],
            "crt_mode": config["pipeline.crt_mode"],
            "signs": config["pipeline.signs"],
            "precision": config["cyclotomic.precision_bits"],
            "tie_window": config["logunits.tie_window"],
            "column_offset": config["logunits.column_offset"],
            "polish_max_iter": config["logunits.polish_max_iter"],
            "polish_pair_limit": config["logunits.polish_pair_limit"],
            "exhaustive_limit": config["signopt.exhaustive_limit"],
            "node_budget": config["signopt.bnb_node_budget"],
            "max_coefficient_bits": config["splitntt.max_coefficient_bits"],
        }
        options.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**options)


@dataclass
class LineReport:
    """
    Attributes:
        index (int): Line number, 0-based.
        alpha (RingElement): The shortened line generator alpha'_i.
        alpha_inf (float): ||sigma(alpha'_i)||_inf.
        nm_root (int): |Nm(J_i)|^(1/n), here the line denominator L_i.
        candidate_norm (float): ||sigma(v_i)||_2.
        status (str): Short generator status.
        unit_exponents (list[int]): Exponents of the stripped unit.
        log_line_covolume (float): log covol(L_i R b~_i).
    """
    index: int
    alpha: RingElement
    alpha_inf: float
    nm_root: int
    candidate_norm: float
    status: str
    unit_exponents: List[int]
    log_line_covolume: float

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "alpha_inf": self.alpha_inf,
            "nm_root": self.nm_root,
            "candidate_norm": self.candidate_norm,
            "status": self.status,
            "unit_exponents": self.unit_exponents,
            "alpha": self.alpha.to_json()["coeffs"],
        }


@dataclass
class ReductionReport:
    """
    Attributes:
        k (int): Conductor exponent.
        d (int): Module rank.
        C (float): Balance constant of the Gram-Schmidt lines.
        per_line (list[LineReport]): One entry per line.
        output_index (int): argmin_i ||sigma(v_i)||_2.
        output_vector (ModuleVector): v = v_{output_index}.
        output_norm (float): ||sigma(v)||_2.
        log_covolume (float): log det(sigma(M)).
        bound_rhs (float): sqrt(C) * gamma_line * prod_i covol(L_i R b~_i)^(1/(dn)).
        gamma_line (float): max_i ||sigma(alpha'_i)||_inf / L_i.
        hermite_factor (float): output_norm / (sqrt(dn) det^(1/(dn))).
    """
    k: int
    d: int
    C: float
    per_line: List[LineReport]
    output_index: int
    output_vector: ModuleVector
    output_norm: float
    log_covolume: float
    bound_rhs: float
    gamma_line: float
    hermite_factor: float
    size_reduction: dict = field(default_factory=dict)
    signs: dict = field(default_factory=dict)
    membership_ok: bool = False
    power_mean_ok: bool = False
    bound_ok: bool = False

    @property
    def n(self) -> int:
        return 1 << (self.k - 1)

    @property
    def covolume(self) -> float:
        try:
            return math.exp(self.log_covolume)
        except OverflowError:
            return math.inf

    @property
    def passed(self) -> bool:
        return self.membership_ok and self.power_mean_ok

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "d": self.d,
            "n": self.n,
            "C": self.C,
            "per_line": [line.to_dict() for line in self.per_line],
            "output_index": self.output_index,
            "output_vector": self.output_vector.to_json(),
            "output_norm": self.output_norm,
            "covolume": self.covolume,
            "log_covolume": self.log_covolume,
            "bound_rhs": self.bound_rhs,
            "gamma_line": self.gamma_line,
            "hermite_factor": self.hermite_factor,
            "size_reduction": self.size_reduction,
            "signs": self.signs,
            "checks": {
                "membership": self.membership_ok,
                "power_mean": self.power_mean_ok,
                "bound": self.bound_ok,
            },
        }


def verify_membership(v: ModuleVector, basis: Sequence[ModuleVector]) -> bool:
    """
    True iff v = sum_i c_i b_i with every c_i in R.

    Solves the d x d system over K by exact Gaussian elimination, then checks that every
    power-basis coefficient of every c_i is an integer.
    """
    basis = list(basis)
    d = len(basis)
    if v.d != d or any(b.d != d for b in basis):
        return False
    # row r: sum_i c_i b_i[r] = v[r]
    rows = [[basis[i].entries[r] for i in range(d)] + [v.entries[r]] for r in range(d)]
    for col in range(d):
        pivot = next((r for r in range(col, d) if not rows[r][col].is_zero()), None)
        if pivot is None:
            logger.warning("Membership test on a K-linearly dependent basis")
            return False
        rows[col], rows[pivot] = rows[pivot], rows[col]
        inverse = ring_inverse(rows[col][col])
        rows[col] = [x * inverse for x in rows[col]]
        for r in range(d):
            if r != col and not rows[r][col].is_zero():
                factor = rows[r][col]
                rows[r] = [x - factor * y for x, y in zip(rows[r], rows[col])]
    return all(rows[i][d].is_integral() for i in range(d))


def _line_denominator(coordinates: Sequence[RingElement]) -> int:
    L = 1
    for c in coordinates:
        L = math.lcm(L, c.denominator())
    return L


def _size_reduction_phase(data: GramSchmidtData, options: ReductionOptions) -> tuple[GramSchmidtData, dict]:
    """Returns the GS data the lines are taken from and a summary of the phase."""
    summary = {
        "mode": options.size_reduce_mode,
        "crt_mode": options.crt_mode if options.size_reduce_mode == "crt" else None,
        "mu_residual_before": mu_residual_inf(data, options.precision),
        "mu_residual_after": None,
        "conditioning_only": False,
        "primes": None,
    }
    if options.size_reduce_mode == "off":
        return data, summary

    if options.size_reduce_mode == "coord":
        reduced = size_reduce(data, "coordinate")
        summary["mu_residual_after"] = mu_residual_inf(reduced, options.precision)
        return reduced, summary

    crt_basis = find_split_primes(data.n, max(1, math.ceil(data.n / 2)))
    summary["primes"] = crt_basis.to_dict()
    restricted = options.crt_mode == "restricted"
    reduced = size_reduce(data, "crt", crt_basis, restricted, options.max_coefficient_bits)
    summary["mu_residual_after"] = mu_residual_inf(reduced, options.precision)
    summary["conditioning_only"] = reduced.conditioning_only
    # an unrestricted CRT basis generates P^-1 M, so the lines stay on the input basis
    return (reduced if restricted else data), summary


def reduce_module(basis: Sequence[ModuleVector], options: ReductionOptions | None = None) -> ReductionReport:
    """
    Run the reduction on a free module given by d basis vectors.

    Args:
        basis (Sequence[ModuleVector]): K-linearly independent vectors of K^d with entries in R.
        options (ReductionOptions, optional): Pipeline switches.

    Returns:
        ReductionReport: Output vector, per-line accounting and the checks.

    Raises:
        RankDeficiencyException: If the basis is dependent.
    """
    options = options or ReductionOptions()
    basis = list(basis)
    data = k_gram_schmidt(basis)
    params, d, n = data.params, data.d, data.n
    logger.info(f"Reducing module k={params.k} d={d} (size reduction {options.size_reduce_mode}, signs {options.signs})")

    lines, size_summary = _size_reduction_phase(data, options)

    signs = solve_signs(
        params.k,
        options.signs,
        options.column_offset,
        options.exhaustive_limit,
        options.node_budget,
        options.seed,
    )
    if signs is None and options.signs != "none":
        logger.info(f"No sign vector at k={params.k}; decoding without signs")
    sign_summary = {
        "method": options.signs if signs is not None else "none",
        "discrepancy": signs.discrepancy if signs is not None else None,
    }

    unit_basis = unit_log_basis(params.k, options.precision)
    nu = gs_coordinates(lines)
    per_line: List[LineReport] = []
    candidates: List[ModuleVector] = []
    for i in range(d):
        B = lines.gram_diag[i]
        L = _line_denominator(nu[i])
        twist = 0.5 * np.log(np.abs(galois_embed(B, options.precision).values))
        result = short_generator(
            RingElement.scalar(params, L),
            params.k,
            signs=signs,
            twist=twist,
            basis=unit_basis,
            tie_window=options.tie_window,
            column_offset=options.column_offset,
            polish_max_iter=options.polish_max_iter,
            polish_pair_limit=options.polish_pair_limit,
            precision=options.precision,
        )
        v = lines.gs[i].scale(result.element)
        candidates.append(v)
        per_line.append(
            LineReport(
                index=i,
                alpha=result.element,
                alpha_inf=galois_embed(result.element, options.precision).norm_inf(),
                nm_root=L,
                candidate_norm=v.norm2(options.precision),
                status=result.status,
                unit_exponents=[int(e) for e in result.unit_exponents],
                log_line_covolume=log_line_covolume(L ** n, B),
            )
        )
        if result.status == "decode-failure":
            logger.warning(f"Line {i} kept its starting generator after a decode failure")

    output_index = int(np.argmin([line.candidate_norm for line in per_line]))
    output_vector = candidates[output_index]
    output_norm = per_line[output_index].candidate_norm

    C = balance_constant(lines)
    log_cov = log_covolume(data)
    gamma_line = max(line.alpha_inf / line.nm_root for line in per_line)
    log_lines_root = sum(line.log_line_covolume for line in per_line) / (d * n)
    bound_rhs = math.sqrt(C) * gamma_line * math.exp(log_lines_root)
    hermite = output_norm / (math.sqrt(d * n) * math.exp(log_cov / (d * n)))

    log_norms = [math.log(line.candidate_norm) for line in per_line]
    power_mean_ok = math.log(output_norm) <= sum(log_norms) / d + 1e-9
    bound_ok = output_norm <= bound_rhs * (1 + 1e-9)
    membership_ok = not output_vector.is_zero() and verify_membership(output_vector, basis)
    if not (membership_ok and power_mean_ok):
        logger.error(f"Reduction checks failed: membership={membership_ok}, power_mean={power_mean_ok}")
    if not bound_ok:
        logger.warning(f"Output norm {output_norm:.6g} exceeds the line bound {bound_rhs:.6g}")

    report = ReductionReport(
        k=params.k,
        d=d,
        C=C,
        per_line=per_line,
        output_index=output_index,
        output_vector=output_vector,
        output_norm=output_norm,
        log_covolume=log_cov,
        bound_rhs=bound_rhs,
        gamma_line=gamma_line,
        hermite_factor=hermite,
        size_reduction=size_summary,
        signs=sign_summary,
        membership_ok=membership_ok,
        power_mean_ok=power_mean_ok,
        bound_ok=bound_ok,
    )
    logger.info(f"Output line {output_index}: norm {output_norm:.6g}, Hermite factor {hermite:.6g}, C {C:.4f}")
    return report

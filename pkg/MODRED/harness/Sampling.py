"""
Seeded samplers for experiment inputs: centered-binomial module bases and planted bases.

Every trial draws from its own Philox stream keyed by (seed, trial), so trials can run in any
order or in parallel and still produce the same inputs.
"""

import logging
from typing import List

import numpy as np

from MODRED.base.Cyclotomic import RingElement, RingParams
from MODRED.base.LogUnits import cyclotomic_unit, cyclotomic_unit_inverse, orbit_table
from MODRED.base.ModuleGS import ModuleVector, k_gram_schmidt
from MODRED.base.utils import RankDeficiencyException

logger = logging.getLogger(__name__)


def trial_rng(seed: int, trial: int = 0) -> np.random.Generator:
    """Counter-based generator for one trial."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, trial])))


def cbd_coefficients(rng: np.random.Generator, shape: tuple, eta: int) -> np.ndarray:
    """Centered binomial integers: sum of eta fair bits minus sum of eta fair bits."""
    if eta < 1:
        raise ValueError(f"Invalid eta {eta}. Must be >= 1.")
    bits = rng.integers(0, 2, size=tuple(shape) + (2, eta), dtype=np.int64)
    return bits[..., 0, :].sum(axis=-1) - bits[..., 1, :].sum(axis=-1)


def cbd_sample(params: RingParams, d: int, eta: int, rng: np.random.Generator) -> List[ModuleVector]:
    """
    d module vectors in R^d with CBD_eta coefficients.

    Args:
        params (RingParams): Ring.
        d (int): Rank.
        eta (int): CBD parameter; coefficients lie in [-eta, eta] with variance eta / 2.
        rng (np.random.Generator): Source of bits.

    Returns:
        list[ModuleVector]: b_1 .. b_d.
    """
    if d < 1:
        raise ValueError(f"Invalid rank d={d}. Must be >= 1.")
    coeffs = cbd_coefficients(rng, (d, d, params.n), eta)
    return [ModuleVector.from_ints(params, coeffs[i].tolist()) for i in range(d)]


def cbd_basis(params: RingParams, d: int, eta: int, seed: int, trial: int, max_draws: int = 32) -> List[ModuleVector]:
    """CBD basis for one trial, redrawn from the same stream while it is K-linearly dependent."""
    rng = trial_rng(seed, trial)
    for _ in range(max_draws):
        basis = cbd_sample(params, d, eta, rng)
        try:
            k_gram_schmidt(basis)
            return basis
        except RankDeficiencyException:
            logger.info(f"Dependent CBD basis in trial {trial}, redrawing")
    raise RankDeficiencyException(f"No independent CBD basis after {max_draws} draws (trial {trial})")


def random_unit(params: RingParams, rng: np.random.Generator, max_exponent: int = 2) -> RingElement:
    """prod_a xi_a^(e_a) over the orbit representatives a != 1 with e_a uniform in [-max_exponent, max_exponent]."""
    unit = RingElement.one(params)
    for a in orbit_table(params.k).reps[1:]:
        e = int(rng.integers(-max_exponent, max_exponent + 1))
        factor = cyclotomic_unit(params, int(a)) if e >= 0 else cyclotomic_unit_inverse(params, int(a))
        for _ in range(abs(e)):
            unit = unit * factor
    return unit


def short_element(params: RingParams, rng: np.random.Generator) -> RingElement:
    """n + small ternary noise: a short, well-balanced generator."""
    noise = rng.integers(-1, 2, size=params.n)
    noise[0] = params.n
    return RingElement(tuple(int(c) for c in noise), params)


def planted_basis(
    params: RingParams, d: int, rng: np.random.Generator, max_exponent: int = 2
) -> tuple[List[ModuleVector], List[RingElement]]:
    """
    Diagonal basis b_i = u_i g_i e_i with random units u_i and short g_i.

    Returns:
        tuple: The basis and the planted short generators g_i.
    """
    basis, shorts = [], []
    for i in range(d):
        g = short_element(params, rng)
        u = random_unit(params, rng, max_exponent)
        basis.append(ModuleVector.unit(params, d, i).scale(u * g))
        shorts.append(g)
    return basis, shorts

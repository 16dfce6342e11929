"""Attack engines against the simulated client and server."""

from .cca2 import Cca2Result, cca2_attack
from .factor import factor_modulus, recover_private_key
from .mitm import MitmCost, MitmTable, TableTooLarge, mitm_attack, mitm_build_table, mitm_cost
from .prng import PrngAttackResult, SeedNotInWindow, guesses_for_offset, prng_attack
from .split import SplitEstimate, split_probability

__all__ = [
    "Cca2Result",
    "MitmCost",
    "MitmTable",
    "PrngAttackResult",
    "SeedNotInWindow",
    "SplitEstimate",
    "TableTooLarge",
    "cca2_attack",
    "factor_modulus",
    "guesses_for_offset",
    "mitm_attack",
    "mitm_build_table",
    "mitm_cost",
    "prng_attack",
    "recover_private_key",
    "split_probability",
]

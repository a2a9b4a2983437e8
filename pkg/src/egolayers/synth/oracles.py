"""Exhaustive reference implementations for checking the optimised algorithms."""

import itertools
import logging

from egolayers.analysis.layering import ClusterSolution, _prepare, _solution
from egolayers.errors import ArityError, OracleGuardError

logger = logging.getLogger(__name__)

MAX_ORACLE_VALUES = 16


def brute_force_kmeans(values, k: int) -> ClusterSolution:
    """Try every split of the sorted values into k contiguous groups and keep the best.

    The first split in lexicographic order wins among equal costs.
    """
    x, order = _prepare(values)
    n = x.size
    if n > MAX_ORACLE_VALUES:
        raise OracleGuardError(f"brute force is limited to {MAX_ORACLE_VALUES} values, got {n}")
    if not 1 <= k <= n:
        raise ArityError(f"k must be between 1 and {n}, got {k}")

    best = None
    for cut in itertools.combinations(range(1, n), k - 1):
        candidate = _solution(x, order, cut)
        if best is None or candidate.total_within_ss < best.total_within_ss - 1e-12 * max(best.ss_tot, 1.0):
            best = candidate
    logger.debug(f"Brute force over n={n}, k={k}: within-SS {best.total_within_ss:.6g}")
    return best

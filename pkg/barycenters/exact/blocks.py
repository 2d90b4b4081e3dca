"""
Block approximation of a coupling.

[-1, 1]^d is cut into cubic cells of side ``width`` anchored at -1: the cell
index along an axis is floor((x + 1) / width), with the last cell closed so
that x = 1 falls into it. For each marginal, atoms in the same cell form a
block. The approximation spreads the mass the coupling puts on every product
of blocks as the product of the marginals restricted to those blocks:

    pi_b = sum_n pi(A_1^{n_1} x ... x A_m^{n_m}) (nu_1|A_1^{n_1}) x ... x (nu_m|A_m^{n_m})

It keeps every marginal, and KL(pi_b || nu_1 x ... x nu_m) <= sum_{j<m} log L_j
with L_j the number of blocks of marginal j carrying mass.
"""

from typing import List, Sequence, Tuple

import numpy as np
from django.core.exceptions import ValidationError

from ..exceptions import CapacityError
from ..measures import DiscreteMeasure
from ..utils import get_enumeration_cap
from .transport import LPSolveReport


def _check_width(width: float) -> float:
    width = float(width)
    if not np.isfinite(width) or width <= 0:
        raise ValidationError(f'Block width must be a positive number, got {width}')
    return width


def cell_indices(points: np.ndarray, width: float) -> np.ndarray:
    """Per-axis cell index of each point, shape (n, d)."""
    width = _check_width(width)
    cells = int(np.ceil(2.0 / width))
    index = np.floor((np.asarray(points, dtype=np.float64) + 1.0) / width).astype(np.int64)
    return np.clip(index, 0, cells - 1)


def block_labels(measure: DiscreteMeasure, width: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Returns:
        (label of each atom, mass of each block); labels number the distinct
        occupied cells in lexicographic cell order
    """
    _, labels = np.unique(cell_indices(measure.points, width), axis=0, return_inverse=True)
    labels = labels.reshape(-1)
    return labels, np.bincount(labels, weights=measure.weights)


def block_counts(marginals: Sequence[DiscreteMeasure], width: float) -> List[int]:
    """L_j: number of blocks with positive mass, per marginal."""
    return [int(np.count_nonzero(block_labels(mu, width)[1] > 0)) for mu in marginals]


def block_kl_bound(marginals: Sequence[DiscreteMeasure], width: float) -> float:
    """sum_{j<m} log L_j."""
    return float(sum(np.log(L) for L in block_counts(marginals, width)[:-1]))


def _dense(coupling, shape) -> np.ndarray:
    if isinstance(coupling, LPSolveReport):
        return coupling.dense()
    if isinstance(coupling, np.ndarray):
        if coupling.shape != shape:
            raise ValidationError(f'Coupling has shape {coupling.shape}, marginals give {shape}')
        return np.asarray(coupling, dtype=np.float64)
    tensor = np.zeros(shape)
    for index, weight in coupling:
        tensor[tuple(index)] += weight
    return tensor


def block_approximation(coupling, marginals: Sequence[DiscreteMeasure], width: float) -> np.ndarray:
    """
    The block-averaged coupling as a dense tensor over the marginals' atoms.

    Args:
        coupling: dense tensor, list of (multi-index, weight), or LPSolveReport
        marginals: the coupling's marginals
        width: cell side

    Raises:
        ValidationError: on a nonpositive width or a shape mismatch
        CapacityError: above the enumeration cap
    """
    width = _check_width(width)
    shape = tuple(mu.size for mu in marginals)
    size = int(np.prod(shape, dtype=np.int64))
    cap = get_enumeration_cap()
    if size > cap:
        raise CapacityError('block approximation', size, cap)
    pi = _dense(coupling, shape)

    labelled = [block_labels(mu, width) for mu in marginals]
    labels = [lab for lab, _ in labelled]
    block_shape = tuple(mass.shape[0] for _, mass in labelled)

    grid = np.indices(shape).reshape(len(shape), -1)
    block_mass = np.zeros(block_shape)
    np.add.at(block_mass, tuple(labels[j][grid[j]] for j in range(len(shape))), pi.reshape(-1))

    out = block_mass[np.ix_(*labels)]
    for j, (mu, (lab, mass)) in enumerate(zip(marginals, labelled)):
        share = np.zeros(mu.size)
        positive = mass[lab] > 0
        share[positive] = mu.weights[positive] / mass[lab][positive]
        broadcast = [1] * len(shape)
        broadcast[j] = mu.size
        out = out * share.reshape(broadcast)
    return out


def kl_divergence(coupling, marginals: Sequence[DiscreteMeasure]) -> float:
    """KL(pi || nu_1 x ... x nu_m); infinite if pi charges a null atom of the product."""
    shape = tuple(mu.size for mu in marginals)
    pi = _dense(coupling, shape)
    reference = np.ones(shape)
    for j, mu in enumerate(marginals):
        broadcast = [1] * len(shape)
        broadcast[j] = mu.size
        reference = reference * mu.weights.reshape(broadcast)
    charged = pi > 0
    if np.any(reference[charged] <= 0):
        return float('inf')
    return float(np.sum(pi[charged] * np.log(pi[charged] / reference[charged])))

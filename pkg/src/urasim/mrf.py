"""Clustered-support estimation on the antenna grid.

Each codeword row carries one binary field over the M_v x M_h antenna
grid that says which angular bins are active.  A pairwise Ising model
(sparsity alpha, coupling beta) ties each bin to its four grid
neighbours; evidence enters per bin as the activity likelihood of the
paired real/imaginary coefficient rows.  One pass runs a fixed number
of synchronous sum-product rounds and returns refined per-coefficient
activity beliefs.

Antenna index m (0-based here) maps column-major onto the grid:
row = m mod M_v, column = m div M_v, so the left/right neighbours sit
at m -/+ M_v and the top/bottom ones at m -/+ 1.  Edge and corner nodes
simply have fewer incoming messages; missing directions contribute
neutral factors of one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import UpaGeometry
from .errors import DimensionError, ParameterError

PROB_EPS = 1e-12

LEFT, RIGHT, TOP, BOTTOM = 0, 1, 2, 3
_OPPOSITE = {LEFT: RIGHT, RIGHT: LEFT, TOP: BOTTOM, BOTTOM: TOP}


@dataclass
class MrfState:
    """Directional message fields for one pass, kept between calls for warm starts.

    ``kappa[d]`` holds the activity probability carried by the message
    arriving at each node from direction d; ``one_minus[d]`` mirrors it
    for the inactive state.  Entries without a neighbour in direction d
    are fixed at the multiplicative identity 1.0 in both arrays.
    """

    kappa: np.ndarray       # 4 x R x M_v x M_h
    one_minus: np.ndarray   # 4 x R x M_v x M_h
    geom: UpaGeometry

    def copy(self) -> "MrfState":
        return MrfState(self.kappa.copy(), self.one_minus.copy(), self.geom)


def _valid_masks(geom: UpaGeometry) -> np.ndarray:
    """Boolean (4, M_v, M_h) masks of where each directional neighbour exists."""
    mv, mh = geom.m_v, geom.m_h
    masks = np.zeros((4, mv, mh), dtype=bool)
    masks[LEFT, :, 1:] = True
    masks[RIGHT, :, : mh - 1] = True
    masks[TOP, 1:, :] = True
    masks[BOTTOM, : mv - 1, :] = True
    return masks


def message_init(geom: UpaGeometry, codeword_rows: int) -> MrfState:
    """Uniform 0.5 message field (the canonical cold start)."""
    if codeword_rows < 1:
        raise ParameterError("codeword_rows must be >= 1")
    shape = (4, codeword_rows, geom.m_v, geom.m_h)
    kappa = np.ones(shape)
    one_minus = np.ones(shape)
    valid = _valid_masks(geom)[:, None, :, :]
    kappa[np.broadcast_to(valid, shape)] = 0.5
    one_minus[np.broadcast_to(valid, shape)] = 0.5
    return MrfState(kappa=kappa, one_minus=one_minus, geom=geom)


def _to_grid(rows: np.ndarray, geom: UpaGeometry) -> np.ndarray:
    """(R, M) -> (R, M_v, M_h) using the column-major antenna layout."""
    r = rows.shape[0]
    return rows.reshape(r, geom.m_h, geom.m_v).swapaxes(1, 2)


def _from_grid(grid: np.ndarray, geom: UpaGeometry) -> np.ndarray:
    return grid.swapaxes(1, 2).reshape(grid.shape[0], geom.m)


def _shift_from_neighbor(values: np.ndarray, direction: int) -> np.ndarray:
    """Pull each node's neighbour value along ``direction`` (zeros off-grid)."""
    out = np.zeros_like(values)
    if direction == LEFT:
        out[..., :, 1:] = values[..., :, :-1]
    elif direction == RIGHT:
        out[..., :, :-1] = values[..., :, 1:]
    elif direction == TOP:
        out[..., 1:, :] = values[..., :-1, :]
    else:
        out[..., : values.shape[-2] - 1, :] = values[..., 1:, :]
    return out


def _cavity_products(fields: np.ndarray) -> np.ndarray:
    """cavity[e] = product over directions k != e of fields[k], no divisions."""
    p01 = fields[0] * fields[1]
    p23 = fields[2] * fields[3]
    return np.stack(
        [fields[1] * p23, fields[0] * p23, fields[3] * p01, fields[2] * p01]
    )


def mrf_pass(
    varpi: np.ndarray,
    geom: UpaGeometry,
    alpha: float | np.ndarray,
    beta: float | np.ndarray,
    t_mrf: int,
    state: MrfState | None = None,
    msg_tol: float = 0.0,
) -> tuple[np.ndarray, MrfState]:
    """Refine activity evidence into support beliefs via grid message passing.

    Parameters
    ----------
    varpi : (2R, M) array of per-coefficient activity evidence in (0, 1);
        rows j and j + R are the real/imaginary halves of codeword row j.
    alpha, beta : Ising sparsity and coupling, scalar or per-codeword-row
        arrays of length R.
    t_mrf : number of synchronous message rounds.
    state : previous message field for a warm start; a fresh 0.5 field is
        used when omitted.
    msg_tol : when positive, rounds stop early once the largest message
        change falls below it (a warm-started field is often already at
        its fixed point).

    Returns the (2R, M) belief matrix rho and the updated message state.
    The belief for a coefficient row uses the partner half's evidence at
    its own node (the node's two likelihood factors are coupled, and the
    message back to a factor excludes that factor's own contribution).
    """
    varpi = np.asarray(varpi, dtype=float)
    if varpi.ndim != 2 or varpi.shape[0] % 2 != 0:
        raise DimensionError("varpi must be a (2R, M) matrix")
    if varpi.shape[1] != geom.m:
        raise DimensionError(
            f"varpi has {varpi.shape[1]} antenna columns, geometry expects {geom.m}"
        )
    if t_mrf < 1:
        raise ParameterError("t_mrf must be >= 1")
    rows = varpi.shape[0] // 2

    varpi = np.clip(varpi, PROB_EPS, 1 - PROB_EPS)
    w_re = _to_grid(varpi[:rows], geom)
    w_im = _to_grid(varpi[rows:], geom)

    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (rows,))[:, None, None]
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (rows,))[:, None, None]
    e_neg_a, e_pos_a = np.exp(-alpha), np.exp(alpha)
    # shared-factor cancellation keeps the coupling weights bounded by 1
    scale = np.abs(beta)
    e_b, e_nb = np.exp(beta - scale), np.exp(-beta - scale)
    msg_base = e_nb / (e_b + e_nb)
    msg_span = (e_b - e_nb) / (e_b + e_nb)

    if state is None:
        state = message_init(geom, rows)
    elif state.kappa.shape != (4, rows, geom.m_v, geom.m_h):
        raise DimensionError("warm-start state does not match varpi/geometry")
    kappa, one_minus = state.kappa, state.one_minus

    valid = _valid_masks(geom)[:, None, :, :]
    ev_pos = w_re * w_im * e_neg_a
    ev_neg = (1 - w_re) * (1 - w_im) * e_pos_a

    tiny = np.finfo(float).tiny
    for _ in range(t_mrf):
        # neighbour cavity products: all incoming messages except the one
        # that travelled back from the current node
        cav_p = _cavity_products(kappa)
        cav_m = _cavity_products(one_minus)
        new_kappa = np.empty_like(kappa)
        new_one_minus = np.empty_like(one_minus)
        for d in range(4):
            back = _OPPOSITE[d]
            num_p = _shift_from_neighbor(ev_pos * cav_p[back], d)
            num_m = _shift_from_neighbor(ev_neg * cav_m[back], d)
            weight = num_p / np.maximum(num_p + num_m, tiny)
            msg = msg_base + msg_span * weight
            np.copyto(new_kappa[d], np.where(valid[d], msg, 1.0))
            np.copyto(new_one_minus[d], np.where(valid[d], 1.0 - msg, 1.0))
        delta = float(np.max(np.abs(new_kappa - kappa))) if msg_tol > 0 else np.inf
        kappa, one_minus = new_kappa, new_one_minus
        if msg_tol > 0 and delta < msg_tol:
            break

    total_p = kappa.prod(axis=0)
    total_m = one_minus.prod(axis=0)

    def belief(partner: np.ndarray) -> np.ndarray:
        pos = partner * total_p * e_neg_a
        neg = (1 - partner) * total_m * e_pos_a
        return pos / np.maximum(pos + neg, tiny)

    rho = np.empty_like(varpi)
    rho[:rows] = _from_grid(belief(w_im), geom)
    rho[rows:] = _from_grid(belief(w_re), geom)
    rho = np.clip(rho, PROB_EPS, 1 - PROB_EPS)
    return rho, MrfState(kappa=kappa, one_minus=one_minus, geom=geom)

"""
Q1 displacement / RT0 flux element kernels.

The element dof vector is ``[u_x1, u_y1, ..., u_x4, u_y4, h_1, ..., h_4]``
where ``h_K`` is the signed, edge-integrated outward normal flux on local
edge K (top, right, bottom, left).  The B-matrix maps it to the state array
``[F11, F12, F21, F22, Div H, H1, H2]``; the identity part of ``F`` is not
produced by B and is added by :func:`state_offset`.

Everything here is vectorised over elements and quadrature points and is
evaluated on the reference (undeformed) configuration.
"""

import numpy as np

REF_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])

# parametric outward normals and the fixed coordinate of local edges 1..4
EDGE_NORMALS = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, -1.0], [-1.0, 0.0]])


class InvertedElementError(ValueError):
    def __init__(self, element_ids):
        self.element_ids = np.atleast_1d(element_ids)
        super().__init__(f"non-positive Jacobian in element(s) {self.element_ids[:10].tolist()}")


def gauss_rule(order=2):
    """Tensor-product Gauss rule on [-1, 1]^2; returns (points (4,2), weights (4,))."""
    if order != 2:
        raise ValueError(f"only the 2x2 Gauss rule is supported, got order={order}")
    g = 1.0 / np.sqrt(3.0)
    pts = np.array([[-g, -g], [g, -g], [g, g], [-g, g]])
    return pts, np.ones(4)


def _check_ref(xi):
    if np.any(np.abs(xi) > 1.0 + 1e-12):
        raise ValueError("point outside the reference square")


def q1_shape(xi):
    """Bilinear shape values (...,4) and parametric gradients (...,4,2)."""
    xi = np.asarray(xi, dtype=float)
    _check_ref(xi)
    x1, x2 = xi[..., 0:1], xi[..., 1:2]
    c1, c2 = REF_CORNERS[:, 0], REF_CORNERS[:, 1]
    N = 0.25 * (1.0 + c1 * x1) * (1.0 + c2 * x2)
    dN = np.stack([0.25 * c1 * (1.0 + c2 * x2), 0.25 * c2 * (1.0 + c1 * x1)], axis=-1)
    return N, dN


def rt0_shape(xi):
    """RT0 vector shape functions (...,4,2) and parametric divergences (4,).

    N1 = (0, (xi2+1)/4), N2 = ((xi1+1)/4, 0), N3 = (0, (xi2-1)/4),
    N4 = ((xi1-1)/4, 0); each has unit outward flux through its own edge.
    """
    xi = np.asarray(xi, dtype=float)
    _check_ref(xi)
    x1, x2 = xi[..., 0], xi[..., 1]
    z = np.zeros_like(x1)
    N = np.stack(
        [
            np.stack([z, 0.25 * (x2 + 1.0)], axis=-1),
            np.stack([0.25 * (x1 + 1.0), z], axis=-1),
            np.stack([z, 0.25 * (x2 - 1.0)], axis=-1),
            np.stack([0.25 * (x1 - 1.0), z], axis=-1),
        ],
        axis=-2,
    )
    return N, np.full(4, 0.25)


def kinematics(coords, xi):
    """Jacobian data of the bilinear map.

    ``coords`` is (..., 4, 2) nodal coordinates, ``xi`` (2,) or (nq, 2).
    Returns ``jac`` (..., nq, 2, 2) with ``jac[i, j] = dX_i / dxi_j``,
    ``jac_det`` (..., nq), ``grads`` (..., nq, 4, 2) = dN_a/dX and shape
    values (nq, 4).
    """
    coords = np.asarray(coords, dtype=float)
    N, dN = q1_shape(np.atleast_2d(xi))
    jac = np.einsum("...ai,qaj->...qij", coords, dN)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1]
    inv[..., 0, 1] = -jac[..., 0, 1]
    inv[..., 1, 0] = -jac[..., 1, 0]
    inv[..., 1, 1] = jac[..., 0, 0]
    inv /= det[..., None, None]
    grads = np.einsum("qaj,...qji->...qai", dN, inv)
    return jac, det, grads, N


def piola_map(jac, jac_det, H_ref, element_id=-1):
    """Contravariant Piola map H = J H_ref / det J."""
    jac_det = np.asarray(jac_det, dtype=float)
    if np.any(~(jac_det > 0.0)):
        raise InvertedElementError(element_id)
    return np.einsum("...ij,...j->...i", jac, H_ref) / jac_det[..., None]


def b_matrix(coords, signs, xi=None):
    """B-matrices at the quadrature points.

    ``coords`` (..., 4, 2), ``signs`` (..., 4).  Returns ``B`` of shape
    (..., nq, 7, 12) and the quadrature measure ``w * det J`` (..., nq).
    Raises :class:`InvertedElementError` when any Jacobian is non-positive.
    """
    coords = np.asarray(coords, dtype=float)
    signs = np.asarray(signs, dtype=float)
    if xi is None:
        xi, wts = gauss_rule(2)
    else:
        xi = np.atleast_2d(xi)
        wts = np.ones(len(xi))
    jac, det, grads, _ = kinematics(coords, xi)
    if np.any(~(det > 0.0)):
        flat = det.reshape(-1, det.shape[-1])
        raise InvertedElementError(np.flatnonzero(~(flat > 0.0).all(axis=1)))
    Nrt, div_ref = rt0_shape(xi)  # (nq,4,2)
    shape = det.shape
    B = np.zeros(shape + (7, 12))
    # F_ij = delta_ij + du_i/dX_j ; u_i of node a at column 2a + i
    B[..., 0, 0:8:2] = grads[..., :, 0]
    B[..., 1, 0:8:2] = grads[..., :, 1]
    B[..., 2, 1:8:2] = grads[..., :, 0]
    B[..., 3, 1:8:2] = grads[..., :, 1]
    sgn = signs[..., None, :]
    B[..., 4, 8:12] = sgn * div_ref / det[..., None]
    Hphys = np.einsum("...qij,qkj->...qki", jac, Nrt) / det[..., None, None]
    B[..., 5:7, 8:12] = np.swapaxes(Hphys * sgn[..., None], -1, -2)
    return B, det * wts


def state_offset():
    """Constant part of the state array: F = I, no flux."""
    return np.array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])


def element_dofs(mesh, n_nodes=None):
    """Global dof indices (n_el, 12): 2 displacement dofs per node, then one per edge."""
    n_nodes = mesh.n_nodes if n_nodes is None else n_nodes
    el = mesh.elements
    udofs = np.stack([2 * el, 2 * el + 1], axis=-1).reshape(len(el), 8)
    hdofs = 2 * n_nodes + mesh.edges.elem_edges
    return np.concatenate([udofs, hdofs], axis=1)

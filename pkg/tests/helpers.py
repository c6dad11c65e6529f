"""Shared test utilities: random constitutive states and RT0 edge geometry."""

import numpy as np

from gelwrinkle.elements import b_matrix, kinematics


def random_state(rng, n, amp=0.1):
    """Random admissible quadrature state arrays (n, 7) and history (s_n, F_n, C_n)."""
    F = np.eye(2) + amp * rng.standard_normal((n, 2, 2))
    F[np.linalg.det(F) <= 0.2] = np.eye(2)
    c = np.concatenate(
        [F.reshape(n, 4), 0.1 * rng.standard_normal((n, 1)), rng.standard_normal((n, 2))], axis=1
    )
    s_n = rng.uniform(0.05, 1.5, n)
    F_n = np.eye(2) + amp * rng.standard_normal((n, 2, 2))
    F_n[np.linalg.det(F_n) <= 0.2] = np.eye(2)
    C_n = np.einsum("nki,nkj->nij", F_n, F_n)
    return c, s_n, F_n, C_n


# parametric point on local edge K (1..4) at CCW parameter t in [-1, 1]
def edge_point(K, t):
    t = np.asarray(t, dtype=float)
    one = np.ones_like(t)
    return {
        1: np.stack([-t, one], -1),
        2: np.stack([one, t], -1),
        3: np.stack([t, -one], -1),
        4: np.stack([-one, -t], -1),
    }[K]


def edge_tangent_ref(K):
    return {1: (-1.0, 0.0), 2: (0.0, 1.0), 3: (1.0, 0.0), 4: (0.0, -1.0)}[K]


def perturb_interior(mesh, rng, frac=0.2):
    """Randomly move interior nodes by up to ``frac`` of the shortest edge (boundary fixed).

    With ``frac`` < 0.25 no element can invert, so the result is a mesh of
    general convex bilinear quadrilaterals.
    """
    et = mesh.edges
    h_min = np.min(np.linalg.norm(np.diff(mesh.nodes[et.edges], axis=1)[:, 0], axis=1))
    inner = np.ones(mesh.n_nodes, bool)
    inner[np.unique(et.edges[et.boundary_edges()])] = False
    mesh.nodes[inner] += frac * h_min * rng.uniform(-1, 1, (inner.sum(), 2))
    return mesh


def interior_edge_traces(mesh, d, n_pts=5):
    """H.n |dX/dt| from both sides of every interior edge, at matching points."""
    coords = mesh.nodes[mesh.elements]
    et = mesh.edges
    t = np.linspace(-0.9, 0.9, n_pts)
    out = []
    for k in et.interior_edges():
        (eA, KA, sA), (eB, KB, sB) = et.incidence(k)
        vals = []
        for e, K, tt in ((eA, KA, t), (eB, KB, -t)):
            xi = edge_point(K, tt)
            B, _ = b_matrix(coords[e], et.elem_signs[e], xi=xi)
            de = np.concatenate([d[2 * mesh.elements[e][:, None] + [0, 1]].ravel(),
                                 d[2 * mesh.n_nodes + et.elem_edges[e]]])
            H = (B @ de)[:, 5:7]
            jac, _, _, _ = kinematics(coords[e], xi)
            T = jac @ np.array(edge_tangent_ref(K))
            vals.append(np.sum(H * np.stack([T[:, 1], -T[:, 0]], -1), axis=1))
        out.append(vals)
    return out


# local edge K -> local node pair in CCW order
EDGE_NODES = ((2, 3), (1, 2), (0, 1), (3, 0))


def patch_flux_dofs(mesh, Hstar):
    """Edge dofs interpolating the constant flux H*: signed integrated normal flux."""
    et = mesh.edges
    h = np.zeros(et.n_edges)
    for k in range(et.n_edges):
        e, K, s = et.incidence(k)[0]
        a, b = mesh.nodes[mesh.elements[e][list(EDGE_NODES[K - 1])]]
        T = b - a
        h[k] = s * Hstar @ np.array([T[1], -T[0]])
    return h


def flux_state(mesh, h):
    """(Div H, H1, H2) at every quadrature point for edge dofs ``h``."""
    et = mesh.edges
    B, _ = b_matrix(mesh.nodes[mesh.elements], et.elem_signs)
    return np.einsum("eqij,ej->eqi", B[..., 4:7, 8:12], h[et.elem_edges])

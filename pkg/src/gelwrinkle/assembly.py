"""
Global dof numbering and assembly of the incremental potential, its
gradient and Hessian.

The global dof vector holds the nodal displacements (u_x, u_y per node, node
major) followed by one signed flux dof per edge.  Fixed dofs are removed from
the residual and stiffness; ``R`` and ``K`` live on the free dofs only.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import constitutive as cm
from .elements import b_matrix, element_dofs, gauss_rule, state_offset


class StepReject(RuntimeError):
    """The current time step cannot be completed; retry with a smaller step."""

    def __init__(self, reason, tau=None):
        self.reason = reason
        self.tau = tau
        super().__init__(f"step rejected (tau={tau}): {reason}")


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class DofMap:
    """Global dof numbering and the free/fixed partition."""

    n_nodes: int
    n_edges: int
    fixed: np.ndarray
    fixed_values: np.ndarray
    free: np.ndarray
    global_to_free: np.ndarray

    @property
    def n_dofs(self):
        return 2 * self.n_nodes + self.n_edges

    @property
    def n_free(self):
        return len(self.free)

    def u_dof(self, node, comp):
        return 2 * np.asarray(node) + comp

    def h_dof(self, edge):
        return 2 * self.n_nodes + np.asarray(edge)

    @classmethod
    def from_mesh(cls, mesh):
        et = mesh.edges
        n_nodes, n_edges = mesh.n_nodes, et.n_edges
        fixed = set()
        for comp, tag in ((0, "dirichlet_u_x"), (1, "dirichlet_u_y")):
            nodes = np.unique(et.edges[mesh.tagged(tag)])
            fixed.update((2 * nodes + comp).tolist())
        loaded = mesh.tagged("chem_loaded")
        imperm = mesh.tagged("impermeable")
        both = np.intersect1d(loaded, imperm)
        if len(both):
            raise ConfigurationError(f"edges {both[:5].tolist()} are both chem_loaded and impermeable")
        fixed.update((2 * n_nodes + imperm).tolist())
        fixed = np.array(sorted(fixed), dtype=np.int64)
        n = 2 * n_nodes + n_edges
        free = np.setdiff1d(np.arange(n), fixed)
        g2f = -np.ones(n, dtype=np.int64)
        g2f[free] = np.arange(len(free))
        return cls(n_nodes, n_edges, fixed, np.zeros(len(fixed)), free, g2f)

    def initial_vector(self):
        d = np.zeros(self.n_dofs)
        d[self.fixed] = self.fixed_values
        return d


def external_load(mesh, dofmap, mu_bar, tau):
    """Gradient of the boundary term tau * mu_bar * int H.n dA w.r.t. the global dofs.

    The edge dof already is the integrated normal flux, so each loaded edge
    contributes ``tau * mu_bar * sign`` where ``sign`` is the orientation of
    the edge in its (single) boundary element.  The term enters the
    potential with a plus sign: Pi = sum(int pi dV) + load . d.
    """
    loaded = mesh.tagged("chem_loaded")
    hdofs = dofmap.h_dof(loaded)
    if np.any(dofmap.global_to_free[hdofs] < 0):
        raise ConfigurationError("a chem_loaded edge has a fixed flux dof")
    et = mesh.edges
    mask = np.isin(et.elem_edges, loaded)
    signs = np.zeros(et.n_edges)
    signs[et.elem_edges[mask]] = et.elem_signs[mask]
    f = np.zeros(dofmap.n_dofs)
    f[hdofs] = tau * mu_bar * signs[loaded]
    return f


class History:
    """Per-quadrature-point history (s_n, F_n, C_n), arrays of shape (n_el, 4, ...)."""

    def __init__(self, s_n, F_n):
        self.s_n = np.asarray(s_n, dtype=float)
        self.F_n = np.asarray(F_n, dtype=float)
        self.C_n = np.einsum("...ki,...kj->...ij", self.F_n, self.F_n)

    @classmethod
    def initial(cls, n_el, s0_per_element):
        s = np.repeat(np.asarray(s0_per_element, dtype=float)[:, None], 4, axis=1)
        F = np.broadcast_to(np.eye(2), (n_el, 4, 2, 2)).copy()
        return cls(s, F)

    def copy(self):
        return History(self.s_n.copy(), self.F_n.copy())


class Model:
    """Precomputed element operators for one mesh, dof map and material set.

    ``params`` maps region id to :class:`MaterialParams`.
    """

    def __init__(self, mesh, params, dofmap=None):
        self.mesh = mesh
        self.params = dict(params)
        self.dofmap = DofMap.from_mesh(mesh) if dofmap is None else dofmap
        coords = mesh.nodes[mesh.elements]
        self.B, self.dV = b_matrix(coords, mesh.edges.elem_signs)
        self.edofs = element_dofs(mesh)
        self.offset = state_offset()
        self.region_masks = {r: mesh.regions == r for r in np.unique(mesh.regions)}
        missing = set(self.region_masks) - set(self.params)
        if missing:
            raise ConfigurationError(f"no material parameters for region(s) {sorted(missing)}")
        self._build_pattern()

    def _build_pattern(self):
        g2f = self.dofmap.global_to_free
        nf = self.dofmap.n_free
        fe = g2f[self.edofs]  # (ne, 12)
        rows = np.repeat(fe[:, :, None], 12, axis=2)
        cols = np.repeat(fe[:, None, :], 12, axis=1)
        keep = (rows >= 0) & (cols >= 0)
        self._k_mask = keep.ravel()
        r = rows.ravel()[self._k_mask]
        c = cols.ravel()[self._k_mask]
        keys = c.astype(np.int64) * nf + r
        uniq, self._k_inv = np.unique(keys, return_inverse=True)
        self._k_indices = (uniq % nf).astype(np.int32)
        counts = np.bincount(uniq // nf, minlength=nf)
        self._k_indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self._k_nnz = len(uniq)

    def initial_history(self):
        s0 = np.empty(self.mesh.n_elements)
        for r, mask in self.region_masks.items():
            s0[mask] = cm.initial_state(self.params[r])[0]
        return History.initial(self.mesh.n_elements, s0)

    def state_arrays(self, d):
        """Constitutive state arrays c at every quadrature point, shape (ne, 4, 7)."""
        de = d[self.edofs]
        return np.einsum("eqij,ej->eqi", self.B, de) + self.offset

    def concentration(self, d, history, tau):
        c = self.state_arrays(d)
        return history.s_n - tau * c[..., 4]

    def _pointwise(self, c, history, tau, want):
        ne, nq = c.shape[:2]
        pi = np.empty((ne, nq)) if "pi" in want else None
        D = np.empty((ne, nq, 7)) if "D" in want else None
        C = np.empty((ne, nq, 7, 7)) if "C" in want else None
        for r, mask in self.region_masks.items():
            p = self.params[r]
            cr, sn, Cn = c[mask], history.s_n[mask], history.C_n[mask]
            if pi is not None:
                pi[mask] = cm.incremental_density(cr, sn, history.F_n[mask], Cn, tau, p)
            if D is not None:
                D[mask] = cm.driving_forces(cr, sn, Cn, tau, p)
            if C is not None:
                C[mask] = cm.tangent_moduli(cr, sn, Cn, tau, p)
        return pi, D, C

    def assemble(self, d, history, tau, load, want=("pi", "R", "K")):
        """Return (Pi, R_free, K_free); entries not requested are None.

        ``load`` is the external-load vector from :func:`external_load`.
        Raises :class:`StepReject` if any quadrature point leaves the
        admissible set.
        """
        c = self.state_arrays(d)
        need = set()
        if "pi" in want:
            need.add("pi")
        if "R" in want:
            need.add("D")
        if "K" in want:
            need.add("C")
        try:
            pi, D, C = self._pointwise(c, history, tau, need)
        except cm.DomainError as exc:
            raise StepReject(str(exc), tau) from exc
        Pi = R = K = None
        if pi is not None:
            Pi = float(np.sum(pi * self.dV) + load @ d)
        if D is not None:
            re = np.einsum("eqji,eqj,eq->ei", self.B, D, self.dV)
            Rg = np.bincount(self.edofs.ravel(), weights=re.ravel(), minlength=self.dofmap.n_dofs)
            Rg += load
            R = Rg[self.dofmap.free]
        if C is not None:
            BtC = np.matmul(np.swapaxes(self.B, -1, -2), C * self.dV[..., None, None])
            ke = np.matmul(BtC, self.B).sum(axis=1)
            ke = 0.5 * (ke + np.swapaxes(ke, -1, -2))
            data = np.bincount(self._k_inv, weights=ke.ravel()[self._k_mask], minlength=self._k_nnz)
            nf = self.dofmap.n_free
            K = sp.csc_matrix((data, self._k_indices, self._k_indptr), shape=(nf, nf))
        return Pi, R, K

    def full_residual(self, d, history, tau, load):
        """Gradient of Pi with respect to all dofs (fixed ones included)."""
        c = self.state_arrays(d)
        try:
            _, D, _ = self._pointwise(c, history, tau, {"D"})
        except cm.DomainError as exc:
            raise StepReject(str(exc), tau) from exc
        re = np.einsum("eqji,eqj,eq->ei", self.B, D, self.dV)
        return np.bincount(self.edofs.ravel(), weights=re.ravel(), minlength=self.dofmap.n_dofs) + load

    def update_history(self, d, history, tau):
        """History after an accepted step: F_n <- F, s_n <- s_n - tau Div H."""
        c = self.state_arrays(d)
        s = history.s_n - tau * c[..., 4]
        F = c[..., 0:4].reshape(c.shape[:2] + (2, 2))
        return History(s, F)

    def fluid_volume(self, history):
        """Integral of s over the reference domain."""
        return float(np.sum(history.s_n * self.dV))

    def dissipation_total(self, d, history, tau):
        c = self.state_arrays(d)
        total = 0.0
        for r, mask in self.region_masks.items():
            phi = cm.dissipation(c[mask][..., 5:7], history.C_n[mask], history.s_n[mask], self.params[r])
            total += float(np.sum(tau * phi * self.dV[mask]))
        return total

    def qp_fields(self, d, history, tau):
        """Post-processing fields at the quadrature points: s, mu, H (physical)."""
        c = self.state_arrays(d)
        s = history.s_n - tau * c[..., 4]
        F = c[..., 0:4].reshape(c.shape[:2] + (2, 2))
        mu = np.empty_like(s)
        for r, mask in self.region_masks.items():
            mu[mask] = cm.chemical_potential(F[mask], s[mask], self.params[r])
        return {"s": s, "mu": mu, "H": c[..., 5:7], "F": F}

"""
Hydrogel free energy, dissipation potential and their derivatives.

The free energy is a neo-Hookean network term, a Flory-Rehner mixing term and
a penalty coupling J*J0 = 1 + s, all written relative to an isotropically
preswollen, stress-free reference configuration.  Plane strain is used
throughout: the out-of-plane stretch is 1, so ``F:F = |F_2d|^2 + 1`` and
``J = det F_2d``.

All functions are vectorised over leading axes.  Shapes:

    F, F_n, C_n : (..., 2, 2)
    s, s_n, div_H : (...)
    H : (..., 2)

The constitutive-state array used by the element code is

    c = [F11, F12, F21, F22, Div H, H1, H2]

and the driving forces / tangent moduli are the first / second derivatives
of the incremental density with respect to ``c``, with the time step folded
in exactly as the incremental potential produces it.
"""

from dataclasses import dataclass, asdict

import numpy as np

S_FLOOR = 1e-8

MATERIAL_DEFAULTS = {"alpha": 24.2, "epsilon": 10.0, "M": 1e-4}


class DomainError(ValueError):
    """Raised when a state leaves the admissible set (s <= 0, det F <= 0)."""


@dataclass(frozen=True)
class MaterialParams:
    """Constitutive constants of one material region (N-mm-s units)."""

    gamma: float
    alpha: float = MATERIAL_DEFAULTS["alpha"]
    epsilon: float = MATERIAL_DEFAULTS["epsilon"]
    M: float = MATERIAL_DEFAULTS["M"]
    J0: float = 1.01
    chi: float = 0.1

    def __post_init__(self):
        for name in ("gamma", "alpha", "epsilon", "M"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0.0:
                raise ValueError(f"{name} must be > 0, got {value}")
        if not self.J0 >= 1.0:
            raise ValueError(f"J0 must be >= 1, got {self.J0}")
        if not 0.0 <= self.chi < 1.0:
            raise ValueError(f"chi must lie in [0, 1), got {self.chi}")

    def as_dict(self):
        return asdict(self)


def _det(F):
    return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]


def _cof(F):
    # J F^{-T} in 2D
    cof = np.empty_like(F)
    cof[..., 0, 0] = F[..., 1, 1]
    cof[..., 0, 1] = -F[..., 1, 0]
    cof[..., 1, 0] = -F[..., 0, 1]
    cof[..., 1, 1] = F[..., 0, 0]
    return cof


def _check_state(J, s):
    if np.any(~(J > 0.0)):
        raise DomainError("det F <= 0 (inverted material point)")
    if np.any(~(s > 0.0)):
        raise DomainError("fluid concentration s <= 0 (Flory-Rehner singularity)")


def free_energy(F, s, params):
    """Free-energy density psi(F, s) in N/mm^2."""
    F = np.asarray(F, dtype=float)
    s = np.asarray(s, dtype=float)
    g, a, e, J0, chi = params.gamma, params.alpha, params.epsilon, params.J0, params.chi
    J = _det(F)
    _check_state(J, s)
    FF = np.einsum("...ij,...ij->...", F, F) + 1.0
    mech = g / (2.0 * J0) * (J0 ** (2.0 / 3.0) * FF - 3.0 - 2.0 * np.log(J * J0))
    chem = a / J0 * (s * np.log(s / (1.0 + s)) + chi * s / (1.0 + s))
    coup = e / (2.0 * J0) * (J * J0 - 1.0 - s) ** 2
    return mech + chem + coup


def stress(F, s, params):
    """First Piola stress P = d psi / dF."""
    F = np.asarray(F, dtype=float)
    s = np.asarray(s, dtype=float)
    g, e, J0 = params.gamma, params.epsilon, params.J0
    J = _det(F)
    _check_state(J, s)
    cof = _cof(F)
    Finv_T = cof / J[..., None, None]
    pen = e * (J * J0 - 1.0 - s)
    return g / J0 * (J0 ** (2.0 / 3.0) * F - Finv_T) + pen[..., None, None] * cof


def chemical_potential(F, s, params):
    """Physical chemical potential mu = d psi / ds (N/mm^2)."""
    F = np.asarray(F, dtype=float)
    s = np.asarray(s, dtype=float)
    a, e, J0, chi = params.alpha, params.epsilon, params.J0, params.chi
    J = _det(F)
    _check_state(J, s)
    flory = np.log(s / (1.0 + s)) + 1.0 / (1.0 + s) + chi / (1.0 + s) ** 2
    return a / J0 * flory - e / J0 * (J * J0 - 1.0 - s)


def dissipation(H, C_n, s_n, params):
    """Dissipation potential phi(H; C_n, s_n) = C_n:(H x H) / (2 J0^(1/3) M s_n)."""
    H = np.asarray(H, dtype=float)
    C_n = np.asarray(C_n, dtype=float)
    s_n = np.asarray(s_n, dtype=float)
    if np.any(~(s_n >= S_FLOOR)):
        raise DomainError(
            f"history concentration s_n below floor {S_FLOOR:g}; "
            "a preswelling factor J0 > 1 is required"
        )
    coef = 1.0 / (2.0 * params.J0 ** (1.0 / 3.0) * params.M * s_n)
    return coef * np.einsum("...i,...ij,...j->...", H, C_n, H)


def initial_state(params, check_tol=1e-10):
    """Concentration and chemical potential of the stress-free preswollen state.

    Returns ``(s0, mu0)``.  Raises :class:`DomainError` when the reference
    state sits on the dry-state singularity (e.g. ``J0 == 1``).
    """
    g, a, e, J0, chi = params.gamma, params.alpha, params.epsilon, params.J0, params.chi
    s0 = g / e * (J0 ** (-1.0 / 3.0) - 1.0 / J0) + J0 - 1.0
    if not s0 > 0.0:
        raise DomainError(
            f"initial concentration s0={s0:g} <= 0: the reference state sits on "
            "the dry-state singularity, increase J0"
        )
    mu0 = -e / J0 * (J0 - 1.0 - s0) + a / J0 * (
        np.log(s0 / (1.0 + s0)) + 1.0 / (1.0 + s0) + chi / (1.0 + s0) ** 2
    )
    P0 = stress(np.eye(2), s0, params)
    if np.max(np.abs(P0)) > check_tol * max(g, 1.0):
        raise DomainError(f"preswollen reference is not stress-free: |P|={np.abs(P0).max():g}")
    return float(s0), float(mu0)


def _unpack(c):
    c = np.asarray(c, dtype=float)
    F = c[..., 0:4].reshape(c.shape[:-1] + (2, 2))
    return F, c[..., 4], c[..., 5:7]


def incremental_density(c, s_n, F_n, C_n, tau, params):
    """Incremental density pi = psi(F, s_n - tau Div H) - psi(F_n, s_n) + tau phi(H)."""
    F, div_H, H = _unpack(c)
    s_n = np.asarray(s_n, dtype=float)
    s = s_n - tau * div_H
    return (
        free_energy(F, s, params)
        - free_energy(F_n, s_n, params)
        + tau * dissipation(H, C_n, s_n, params)
    )


def driving_forces(c, s_n, C_n, tau, params):
    """First derivatives of the incremental density, shape (..., 7).

    Row layout: [P11, P12, P21, P22, -tau mu, tau dphi/dH1, tau dphi/dH2].
    Raises :class:`DomainError` if the updated concentration is not positive;
    callers treat that as a rejected step.
    """
    F, div_H, H = _unpack(c)
    s_n = np.asarray(s_n, dtype=float)
    s = s_n - tau * div_H
    D = np.empty(np.shape(c), dtype=float)
    D[..., 0:4] = stress(F, s, params).reshape(D.shape[:-1] + (4,))
    D[..., 4] = -tau * chemical_potential(F, s, params)
    if np.any(~(s_n >= S_FLOOR)):
        raise DomainError(f"history concentration s_n below floor {S_FLOOR:g}")
    coef = tau / (params.J0 ** (1.0 / 3.0) * params.M * s_n)
    D[..., 5:7] = coef[..., None] * np.einsum("...ij,...j->...i", C_n, H)
    return D


def tangent_moduli(c, s_n, C_n, tau, params):
    """Second derivatives of the incremental density, shape (..., 7, 7).

    The F-H and Div H-H blocks are identically zero; each off-diagonal block
    is computed once and mirrored, so the result is exactly symmetric.
    """
    F, div_H, H = _unpack(c)
    s_n = np.asarray(s_n, dtype=float)
    s = s_n - tau * div_H
    g, a, e, J0, chi = params.gamma, params.alpha, params.epsilon, params.J0, params.chi
    J = _det(F)
    _check_state(J, s)
    if np.any(~(s_n >= S_FLOOR)):
        raise DomainError(f"history concentration s_n below floor {S_FLOOR:g}")

    cof = _cof(F)
    Finv = np.swapaxes(cof, -1, -2) / J[..., None, None]
    Finv_T = cof / J[..., None, None]
    pen = e * (J * J0 - 1.0 - s)
    eye = np.eye(2)

    # d2psi/dF_ij dF_kl
    A = g / J0 * (
        J0 ** (2.0 / 3.0) * np.einsum("ik,jl->ijkl", eye, eye)
        + np.einsum("...jk,...li->...ijkl", Finv, Finv)
    )
    A = A + (e * J0) * np.einsum("...ij,...kl->...ijkl", cof, cof)
    A = A + pen[..., None, None, None, None] * J[..., None, None, None, None] * (
        np.einsum("...ij,...kl->...ijkl", Finv_T, Finv_T)
        - np.einsum("...jk,...li->...ijkl", Finv, Finv)
    )

    C = np.zeros(np.shape(c)[:-1] + (7, 7), dtype=float)
    C[..., 0:4, 0:4] = A.reshape(A.shape[:-4] + (4, 4))
    # d2psi/dF ds = -eps cof  ->  block -tau * that
    A_Fs = (tau * e) * cof.reshape(cof.shape[:-2] + (4,))
    C[..., 0:4, 4] = A_Fs
    C[..., 4, 0:4] = A_Fs
    psi_ss = a / J0 * (
        1.0 / (s * (1.0 + s)) - 1.0 / (1.0 + s) ** 2 - 2.0 * chi / (1.0 + s) ** 3
    ) + e / J0
    C[..., 4, 4] = tau**2 * psi_ss
    coef = tau / (J0 ** (1.0 / 3.0) * params.M * s_n)
    C[..., 5:7, 5:7] = coef[..., None, None] * C_n
    # exact symmetry of the FF block
    C[..., 0:4, 0:4] = 0.5 * (C[..., 0:4, 0:4] + np.swapaxes(C[..., 0:4, 0:4], -1, -2))
    return C


def state_array(F, div_H, H):
    """Pack F (...,2,2), Div H (...) and H (...,2) into c (...,7)."""
    F = np.asarray(F, dtype=float)
    out = np.empty(F.shape[:-2] + (7,))
    out[..., 0:4] = F.reshape(F.shape[:-2] + (4,))
    out[..., 4] = div_H
    out[..., 5:7] = H
    return out

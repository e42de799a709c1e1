"""Closed-form reverse-reconciliation secret key rate under a collective
Gaussian entangling attack.

All information quantities are in bits. Every per-mode function accepts an
:class:`~thzqkd.keygen.EigenmodeParams` whose fields are scalars or equal
length arrays, and evaluates element-wise.

Two-mode covariance matrices use the ordering ``(x_E, p_E, x_E', p_E')``
where ``E`` is Eve's output mode and ``E'`` the arm of her entangled pair
she keeps.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import InvalidArgument, NumericalDegeneracy, UnphysicalEigenvalue
from .keygen import EigenmodeParams

EIG_TOL = 1e-9
BobVariance = Literal["measured", "thermal"]


def holevo_g(lam):
    """Entropy of a thermal mode with symplectic eigenvalue ``lam``.

    ``h(lam) = ((lam+1)/2) log2((lam+1)/2) - ((lam-1)/2) log2((lam-1)/2)``,
    with ``0 log 0 = 0``. Values within ``1e-9`` below one are snapped to one.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 1.0 - EIG_TOL) or np.any(np.isnan(lam)):
        raise UnphysicalEigenvalue(
            f"symplectic eigenvalue {np.nanmin(lam):.12g} below the vacuum bound")
    a = 0.5 * (np.maximum(lam, 1.0) - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = (a + 1.0) * np.log1p(a) / np.log(2.0) - np.where(a > 0, a * np.log2(a), 0.0)
    g = np.where(a > 0, g, 0.0)
    return g.item() if g.ndim == 0 else g


def mutual_information(p: EigenmodeParams):
    """Alice-Bob Shannon information per use of one eigenmode."""
    beta = np.asarray(p.beta, dtype=float)
    noise = beta * p.V_o + (1.0 - beta) * p.V_e + p.sigma2_d + p.sigma2_ris
    out = 0.5 * np.asarray(p.d_m) * np.log2(1.0 + beta * p.V_s / noise)
    return out.item() if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class EveCovariance:
    """Eve's two-mode state ``[[V_eo I, V_c Z], [V_c Z, V_e I]]``."""

    V_eo: np.ndarray
    V_c: np.ndarray
    V_e: np.ndarray

    @classmethod
    def from_params(cls, p: EigenmodeParams) -> "EveCovariance":
        beta = np.asarray(p.beta, dtype=float)
        V_eo = (1.0 - beta) * p.V_a + beta * p.V_e + p.sigma2_ris
        V_c = np.sqrt(beta * (np.asarray(p.V_e) ** 2 - 1.0))
        return cls(V_eo, V_c, np.broadcast_to(np.asarray(p.V_e, dtype=float), np.shape(V_eo)))

    def matrix(self) -> np.ndarray:
        """Assembled ``(..., 4, 4)`` covariance matrix."""
        V_eo, V_c, V_e = np.broadcast_arrays(self.V_eo, self.V_c, self.V_e)
        M = np.zeros(V_eo.shape + (4, 4))
        z = np.array([1.0, -1.0])
        for k in range(2):
            M[..., k, k] = V_eo
            M[..., 2 + k, 2 + k] = V_e
            M[..., k, 2 + k] = V_c * z[k]
            M[..., 2 + k, k] = V_c * z[k]
        return M


def _pair_eigs(nabla, det, disc):
    """Solve ``l1^2 + l2^2 = nabla``, ``l1 l2 = sqrt(det)`` for ``l1 >= l2``.

    ``disc`` is ``nabla**2 - 4 det`` supplied in a cancellation-free form; the
    naive difference loses half the digits near pure states.
    """
    nabla = np.asarray(nabla, dtype=float)
    det = np.asarray(det, dtype=float)
    disc = np.asarray(disc, dtype=float)
    if np.any(det < 0):
        raise NumericalDegeneracy("covariance determinant is negative")
    if np.any(disc < -EIG_TOL * nabla ** 2):
        raise NumericalDegeneracy(
            f"symplectic discriminant {np.min(disc):.3g} is negative beyond round-off")
    disc = np.maximum(disc, 0.0)
    l1 = np.sqrt(0.5 * (nabla + np.sqrt(disc)))
    # the product form avoids cancellation in nabla - sqrt(disc)
    l2 = np.sqrt(det) / l1
    for lam in (l1, l2):
        if np.any(lam < 1.0 - EIG_TOL):
            raise UnphysicalEigenvalue(
                f"symplectic eigenvalue {np.min(lam):.12g} below the vacuum bound")
    l1, l2 = np.maximum(l1, 1.0), np.maximum(l2, 1.0)
    if l1.ndim == 0:
        return l1.item(), l2.item()
    return l1, l2


def eve_symplectic_eigs(p: EigenmodeParams):
    """Symplectic eigenvalues ``(lambda_1, lambda_2)`` of Eve's state."""
    beta = np.asarray(p.beta, dtype=float)
    V_a, V_e, s2 = p.V_a, p.V_e, p.sigma2_ris
    nabla = ((1 - beta) ** 2 * (V_a ** 2 + V_e ** 2) + 2 * beta * (1 - beta) * V_a * V_e
             + 2 * beta + 2 * ((1 - beta) * V_a + beta * V_e) * s2 + s2 ** 2)
    det = ((1 - beta) * V_a * V_e + s2 * V_e + beta) ** 2
    eve = EveCovariance.from_params(p)
    disc = (eve.V_eo - eve.V_e) ** 2 * ((eve.V_eo + eve.V_e) ** 2 - 4 * eve.V_c ** 2)
    return _pair_eigs(nabla, det, disc)


def bob_variance(p: EigenmodeParams, mode: BobVariance = "measured"):
    """Variance of Bob's measured quadrature.

    ``"measured"`` is the exact variance ``beta V_a + (1-beta) V_e + sigma_d^2
    + sigma_ris^2`` of the quadrature model. ``"thermal"`` replaces ``V_a`` by
    ``V_o`` in the signal term; it can give unphysical conditional states.
    """
    beta = np.asarray(p.beta, dtype=float)
    if mode == "measured":
        V_in = p.V_a
    elif mode == "thermal":
        V_in = p.V_o
    else:
        raise InvalidArgument(f"bob variance mode must be 'measured' or 'thermal', got {mode!r}")
    return beta * V_in + (1.0 - beta) * p.V_e + p.sigma2_d + p.sigma2_ris


@dataclass(frozen=True, eq=False)
class ConditionalCovariance:
    """Eve's state conditioned on Bob's outcome.

    ``A``, ``B`` and ``C`` hold the diagonals ``(x, p)`` of the three 2x2
    blocks, with shape ``(..., 2)``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    V_b: np.ndarray
    xi_cond: np.ndarray
    varsigma_cond: np.ndarray

    def det(self):
        A, B, C = self.A, self.B, self.C
        return (A[..., 0] * B[..., 0] - C[..., 0] ** 2) * (A[..., 1] * B[..., 1] - C[..., 1] ** 2)

    def nabla(self):
        A, B, C = self.A, self.B, self.C
        return (A[..., 0] * A[..., 1] + B[..., 0] * B[..., 1]
                + 2.0 * C[..., 0] * C[..., 1])

    def disc(self):
        """``nabla**2 - 4 det`` as ``(M11 - M22)**2 + 4 M12 M21`` of the
        product of the x and p blocks, whose eigenvalues are ``lambda**2``."""
        A, B, C = self.A, self.B, self.C
        d = A[..., 0] * A[..., 1] - B[..., 0] * B[..., 1]
        m12 = A[..., 0] * C[..., 1] + C[..., 0] * B[..., 1]
        m21 = C[..., 0] * A[..., 1] + B[..., 0] * C[..., 1]
        return d ** 2 + 4.0 * m12 * m21

    def matrix(self) -> np.ndarray:
        M = np.zeros(self.A.shape[:-1] + (4, 4))
        for k in range(2):
            M[..., k, k] = self.A[..., k]
            M[..., 2 + k, 2 + k] = self.B[..., k]
            M[..., k, 2 + k] = self.C[..., k]
            M[..., 2 + k, k] = self.C[..., k]
        return M


def conditional_cov(p: EigenmodeParams, bob_var: BobVariance = "measured") -> ConditionalCovariance:
    """Condition Eve's state on Bob's homodyne (``d_m=1``) or heterodyne
    (``d_m=2``) outcome.

    Homodyne conditions on the ``x`` quadrature only; heterodyne applies the
    same correction to both quadratures.
    """
    beta = np.asarray(p.beta, dtype=float)
    eve = EveCovariance.from_params(p)
    V_b = np.asarray(bob_variance(p, bob_var), dtype=float)
    if np.any(V_b <= 0):
        raise InvalidArgument("Bob's quadrature variance must be positive")
    xi = np.sqrt(beta * (1.0 - beta)) * (p.V_e - p.V_a) + p.sigma2_ris
    vs = np.sqrt((1.0 - beta) * (np.asarray(p.V_e) ** 2 - 1.0))
    pi_p = (np.asarray(p.d_m) == 2).astype(float)
    shape = np.broadcast_shapes(np.shape(beta), np.shape(V_b), np.shape(pi_p))
    V_eo, V_c, V_e, V_b, xi, vs, pi_p = (np.broadcast_to(np.asarray(v, dtype=float), shape)
                                         for v in (eve.V_eo, eve.V_c, eve.V_e, V_b, xi, vs, pi_p))
    A = np.stack([V_eo - xi ** 2 / V_b, V_eo - pi_p * xi ** 2 / V_b], axis=-1)
    B = np.stack([V_e - vs ** 2 / V_b, V_e - pi_p * vs ** 2 / V_b], axis=-1)
    C = np.stack([V_c - xi * vs / V_b, -V_c + pi_p * xi * vs / V_b], axis=-1)
    return ConditionalCovariance(A, B, C, V_b, xi, vs)


def cond_symplectic_eigs(c: ConditionalCovariance):
    """Symplectic eigenvalues ``(lambda_3, lambda_4)`` of the conditional state."""
    return _pair_eigs(c.nabla(), c.det(), c.disc())


def holevo_information(p: EigenmodeParams, bob_var: BobVariance = "measured"):
    """Eve's accessible information ``S(E) - S(E|Q_b)`` about Bob's data."""
    return _mode_terms(p, bob_var)["holevo"]


def _mode_terms(p: EigenmodeParams, bob_var: BobVariance) -> dict:
    l1, l2 = eve_symplectic_eigs(p)
    l3, l4 = cond_symplectic_eigs(conditional_cov(p, bob_var))
    chi = holevo_g(l1) + holevo_g(l2) - holevo_g(l3) - holevo_g(l4)
    return dict(lambda_1=l1, lambda_2=l2, lambda_3=l3, lambda_4=l4, holevo=chi)


@dataclass(frozen=True)
class ModeReport:
    beta: float
    I_AB: float
    holevo: float
    lambda_1: float
    lambda_2: float
    lambda_3: float
    lambda_4: float
    skr: float


@dataclass(frozen=True)
class SkrReport:
    """Per-mode key-rate breakdown and the overhead-weighted total.

    ``total_skr`` sums per-mode rates floored at zero, unless ``raw_sum`` is
    set, in which case negative modes are included as computed.
    """

    per_mode: list[ModeReport]
    total_skr: float
    overhead: float
    raw_sum: bool = False
    detector: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        if not d["extra"]:
            d.pop("extra")
        return d


def overhead_factor(L_p: float, T_c: float) -> float:
    if not 0 < L_p < T_c:
        raise InvalidArgument(f"need 0 < L_p < T_c (L_p={L_p}, T_c={T_c})")
    return 1.0 - L_p / T_c


def skr_total(modes: Sequence[EigenmodeParams] | EigenmodeParams, eta: float,
              L_p: float, T_c: float, raw_sum: bool = False,
              bob_var: BobVariance = "measured", detector: str = "") -> SkrReport:
    """Total secret key rate over the eigenmodes, in bits per channel use."""
    if not 0 <= eta <= 1:
        raise InvalidArgument("reconciliation efficiency must lie in [0, 1]")
    ovh = overhead_factor(L_p, T_c)
    if isinstance(modes, EigenmodeParams):
        stacked = modes
    elif len(modes) == 0:
        return SkrReport([], 0.0, ovh, raw_sum, detector)
    else:
        stacked = EigenmodeParams.stack(modes)
    n = max(np.size(getattr(stacked, k)) for k in ("beta", "sigma2_ris", "d_m"))
    I_ab = np.broadcast_to(mutual_information(stacked), (n,))
    terms = {k: np.broadcast_to(v, (n,)) for k, v in _mode_terms(stacked, bob_var).items()}
    beta = np.broadcast_to(np.asarray(stacked.beta, dtype=float), (n,))
    rate = eta * I_ab - terms["holevo"]
    per_mode = [ModeReport(float(beta[i]), float(I_ab[i]), float(terms["holevo"][i]),
                           float(terms["lambda_1"][i]), float(terms["lambda_2"][i]),
                           float(terms["lambda_3"][i]), float(terms["lambda_4"][i]),
                           float(rate[i]))
                for i in range(n)]
    kept = rate if raw_sum else np.maximum(rate, 0.0)
    return SkrReport(per_mode, float(ovh * kept.sum()), ovh, raw_sum, detector)

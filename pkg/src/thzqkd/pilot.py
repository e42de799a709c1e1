"""Pilot-based least-squares channel estimation.

Complex noise entries carry the stated per-quadrature variance on both the
real and the imaginary part, so a complex entry has twice that total variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, NumericalRankError

UNITARY_TOL = 1e-10


@dataclass(frozen=True)
class PilotConfig:
    """Pilot length ``L_p`` (symbols) and per-quadrature pilot variance ``V_p`` (SNU)."""

    L_p: int
    V_p: float

    def __post_init__(self):
        if isinstance(self.L_p, bool) or int(self.L_p) != self.L_p or self.L_p < 1:
            raise InvalidArgument("PilotConfig violates L_p >= 1 (integer)")
        object.__setattr__(self, "L_p", int(self.L_p))
        if not self.V_p > 0:
            raise InvalidArgument("PilotConfig violates V_p > 0")

    @classmethod
    def from_db(cls, L_p: int, V_p_db: float) -> "PilotConfig":
        return cls(L_p, 10.0 ** (V_p_db / 10.0))

    def check_against(self, N_T: int, T_c: float) -> None:
        if self.L_p < N_T:
            raise InvalidArgument(
                f"PilotConfig violates L_p >= N_T (L_p={self.L_p}, N_T={N_T})")
        if not self.L_p < T_c:
            raise InvalidArgument(
                f"PilotConfig violates L_p < T_c (L_p={self.L_p}, T_c={T_c})")


@dataclass(frozen=True, eq=False)
class PilotObservation:
    Y_p: np.ndarray
    psi_0_realization: np.ndarray
    het_noise_realization: np.ndarray


@dataclass(frozen=True, eq=False)
class EstimationOutput:
    """LS channel estimate with the ML noise covariances derived from it.

    ``sigma2_ris`` holds one estimation-noise variance per retained eigenmode.
    """

    H_ls: np.ndarray
    C_n_ml: np.ndarray
    C_ris_ml: np.ndarray
    sigma2_ris: np.ndarray


def dft_pilot_matrix(N_T: int, L_p: int, V_p: float) -> np.ndarray:
    """First ``N_T`` rows of an ``L_p``-point DFT matrix scaled by ``sqrt(V_p)``.

    Rows are orthogonal with norm ``sqrt(V_p * L_p)``.
    """
    if N_T < 1 or L_p < 1:
        raise InvalidArgument("pilot dimensions must be positive")
    if L_p < N_T:
        raise InvalidArgument(
            f"L_p={L_p} < N_T={N_T}: orthogonal pilot rows need L_p >= N_T")
    if not V_p > 0:
        raise InvalidArgument("pilot variance must be positive")
    n = np.arange(N_T)[:, None]
    ell = np.arange(L_p)[None, :]
    # integer reduction keeps the twiddle angles exact for large n * ell
    return np.sqrt(V_p) * np.exp(2j * np.pi * ((n * ell) % L_p) / L_p)


def simulate_pilot_rx(H_ris: np.ndarray, Psi_p: np.ndarray, V_o: float,
                      nu_en: float, rng: np.random.Generator,
                      noiseless: bool = False) -> PilotObservation:
    """Receive the pilot block through ``H_ris`` with thermal preparation noise
    (variance ``V_o`` per quadrature) and heterodyne noise (``2 nu_en + 1`` per
    quadrature).

    ``noiseless=True`` zeroes both noise terms for diagnostics.
    """
    H_ris = np.asarray(H_ris)
    N_R, N_T = H_ris.shape
    if Psi_p.shape[0] != N_T:
        raise InvalidArgument(
            f"pilot matrix has {Psi_p.shape[0]} rows, channel has {N_T} inputs")
    L_p = Psi_p.shape[1]
    if noiseless:
        psi_0 = np.zeros((N_T, L_p), dtype=complex)
        n_het = np.zeros((N_R, L_p), dtype=complex)
    else:
        if V_o < 1 or nu_en < 0:
            raise InvalidArgument("need V_o >= 1 and nu_en >= 0")
        s0 = np.sqrt(V_o)
        psi_0 = s0 * rng.standard_normal((N_T, L_p)) + 1j * s0 * rng.standard_normal((N_T, L_p))
        sh = np.sqrt(2.0 * nu_en + 1.0)
        n_het = sh * rng.standard_normal((N_R, L_p)) + 1j * sh * rng.standard_normal((N_R, L_p))
    Y_p = H_ris @ (Psi_p + psi_0) + n_het
    return PilotObservation(Y_p, psi_0, n_het)


def ls_estimate(Y_p: np.ndarray, Psi_p: np.ndarray, rcond: float = 1e-12) -> np.ndarray:
    """``Y_p Psi_p^H (Psi_p Psi_p^H)^{-1}``."""
    gram = Psi_p @ Psi_p.conj().T
    s = np.linalg.svd(gram, compute_uv=False)
    if s[-1] <= rcond * s[0]:
        raise NumericalRankError(
            f"pilot Gram matrix is singular (condition number {s[0] / max(s[-1], 1e-300):.3g})")
    # gram is Hermitian, so H^H = gram^{-1} Psi_p Y_p^H
    return np.linalg.solve(gram, Psi_p @ Y_p.conj().T).conj().T


def ml_noise_cov(Y_p: np.ndarray, Psi_p: np.ndarray, H_ls: np.ndarray) -> np.ndarray:
    """Sample covariance of the LS residuals ``y_l - H_ls psi_l``."""
    L_p = Y_p.shape[1]
    if L_p < 1:
        raise InvalidArgument("need at least one pilot symbol")
    R = Y_p - H_ls @ Psi_p
    C = R @ R.conj().T / L_p
    return 0.5 * (C + C.conj().T)


def ris_noise_cov(C_n_ml: np.ndarray, U_ls: np.ndarray, V_a: float, V_p: float,
                  N_T: int, L_p: int) -> tuple[np.ndarray, np.ndarray]:
    """Covariance of the estimation-error noise seen after receive combining.

    Returns the full ``N_R x N_R`` covariance and the per-eigenmode variances
    ``0.5 * C_ris[i, i]`` for every row of ``U_ls``.
    """
    U_ls = np.asarray(U_ls)
    dev = np.abs(U_ls.conj().T @ U_ls - np.eye(U_ls.shape[1])).max()
    if dev > UNITARY_TOL:
        raise InvalidArgument(f"U_ls is not unitary (max deviation {dev:.3g})")
    scale = 2.0 * V_a * N_T / (V_p * L_p)
    C = scale * (U_ls.conj().T @ C_n_ml @ U_ls)
    C = 0.5 * (C + C.conj().T)
    sigma2 = np.maximum(0.5 * np.real(np.diag(C)), 0.0)
    return C, sigma2

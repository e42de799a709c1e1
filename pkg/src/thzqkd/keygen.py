"""Eigenmode decomposition of the estimated channel and the per-mode
quadrature model used for key generation."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Literal, Sequence

import numpy as np

from .errors import InvalidArgument, TransmittanceViolation

DEFAULT_RANK_TOL = 1e-12
TRANSMITTANCE_TOL = 1e-9

Detector = Literal["homodyne", "heterodyne"]
DETECTOR_DM = {"homodyne": 1, "heterodyne": 2}


@dataclass(frozen=True, eq=False)
class ChannelEigenmodes:
    """SVD factors ``H_ls = U Sigma V^H`` with transmittances ``beta = s**2``.

    ``S`` is the complementary beam-splitter matrix: ``sqrt(1 - beta)`` on the
    leading ``r x r`` block, identity on the overlap of the remaining rows and
    columns (modes without key that pass Eve's input unattenuated).
    """

    U: np.ndarray
    V: np.ndarray
    singular_values: np.ndarray
    beta: np.ndarray
    r: int
    S: np.ndarray

    @property
    def Sigma(self) -> np.ndarray:
        N_R, N_T = self.U.shape[0], self.V.shape[0]
        out = np.zeros((N_R, N_T))
        k = len(self.singular_values)
        out[:k, :k] = np.diag(self.singular_values)
        return out

    def reconstruct(self) -> np.ndarray:
        return self.U @ self.Sigma @ self.V.conj().T


@dataclass(frozen=True)
class EigenmodeParams:
    """Variances (SNU) governing one eigenmode.

    Fields may also hold equal-length arrays to evaluate many modes at once;
    see :meth:`stack`.
    """

    beta: float
    sigma2_ris: float
    sigma2_d: float
    V_a: float
    V_s: float
    V_o: float
    V_e: float
    d_m: int

    def __post_init__(self):
        if np.any(np.asarray(self.V_e) < 1):
            raise InvalidArgument("EigenmodeParams violates V_e >= 1")
        if not np.all(np.isin(np.asarray(self.d_m), (1, 2))):
            raise InvalidArgument("EigenmodeParams violates d_m in {1, 2}")
        for name in ("sigma2_ris", "sigma2_d", "V_a", "V_s", "V_o"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise InvalidArgument(f"EigenmodeParams violates {name} >= 0")
        b = np.asarray(self.beta)
        if np.any((b < 0) | (b > 1)):
            raise InvalidArgument("EigenmodeParams violates 0 <= beta <= 1")

    @classmethod
    def stack(cls, modes: Sequence["EigenmodeParams"]) -> "EigenmodeParams":
        """Combine scalar parameter sets into one array-valued set."""
        return cls(**{f.name: np.array([getattr(m, f.name) for m in modes])
                      for f in fields(cls)})

    def unstack(self) -> list["EigenmodeParams"]:
        arrs = {f.name: np.atleast_1d(getattr(self, f.name)) for f in fields(self)}
        n = max(len(a) for a in arrs.values())
        arrs = {k: np.broadcast_to(a, (n,)) for k, a in arrs.items()}
        return [EigenmodeParams(**{k: a[i].item() for k, a in arrs.items()})
                for i in range(n)]


def svd_decompose(H_ls: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> ChannelEigenmodes:
    H_ls = np.asarray(H_ls)
    if not np.all(np.isfinite(H_ls)):
        raise InvalidArgument("channel estimate contains non-finite entries")
    U, s, Vh = np.linalg.svd(H_ls, full_matrices=True)
    s_max = s[0] if s.size else 0.0
    r = int(np.count_nonzero(s > tol * s_max)) if s_max > 0 else 0
    beta = s[:r] ** 2
    if r and beta[0] > 1 + TRANSMITTANCE_TOL:
        raise TransmittanceViolation(
            f"largest eigenmode transmittance {beta[0]:.6g} exceeds 1")
    beta = np.minimum(beta, 1.0)
    N_R, N_T = H_ls.shape
    S = np.zeros((N_R, N_T))
    S[:r, :r] = np.diag(np.sqrt(1.0 - beta))
    n_pad = min(N_R - r, N_T - r)
    S[r:r + n_pad, r:r + n_pad] = np.eye(n_pad)
    return ChannelEigenmodes(U, Vh.conj().T, s, beta, r, S)


def detection_noise(d_m: int, nu_en: float) -> float:
    """Bob's detection noise ``d_m (nu_en + 1) - 1``: ``nu_en`` for homodyne,
    ``2 nu_en + 1`` for heterodyne."""
    if d_m not in (1, 2):
        raise InvalidArgument(f"d_m must be 1 (homodyne) or 2 (heterodyne), got {d_m!r}")
    if nu_en < 0:
        raise InvalidArgument("electronic noise must be non-negative")
    return d_m * (nu_en + 1.0) - 1.0


def eigenmode_params(modes: ChannelEigenmodes, est, cfg, d_m: int) -> list[EigenmodeParams]:
    """Pair each retained transmittance with its estimation-noise variance.

    Parameters
    ----------
    modes : ChannelEigenmodes
    est : EstimationOutput or array_like
        Estimation result, or the per-eigenmode ``sigma2_ris`` directly.
    cfg : SystemConfig
        Supplies ``V_s``, ``V_o``, ``V_e`` and ``nu_en``.
    d_m : {1, 2}
    """
    sigma2_ris = np.asarray(getattr(est, "sigma2_ris", est), dtype=float).ravel()
    if sigma2_ris.size < modes.r:
        raise InvalidArgument(
            f"{sigma2_ris.size} estimation-noise variances for {modes.r} eigenmodes")
    sigma2_d = detection_noise(d_m, cfg.nu_en)
    V_o = cfg.V_o
    return [EigenmodeParams(float(modes.beta[i]), float(sigma2_ris[i]), sigma2_d,
                            cfg.V_s + V_o, cfg.V_s, V_o, cfg.V_e, d_m)
            for i in range(modes.r)]


@dataclass(frozen=True, eq=False)
class QuadratureSamples:
    Q_a: np.ndarray
    Q_b: np.ndarray
    Q_eo: np.ndarray


def simulate_quadratures(p: EigenmodeParams, n_samples: int,
                         rng: np.random.Generator) -> QuadratureSamples:
    """Draw Alice's, Bob's and Eve's output quadratures for one eigenmode.

    Used to validate the analytic variances; Bob and Eve see the same
    estimation-noise realization with the same sign.
    """
    if n_samples < 1:
        raise InvalidArgument("n_samples must be >= 1")
    q_a = rng.normal(0.0, np.sqrt(p.V_a), n_samples)
    q_e = rng.normal(0.0, np.sqrt(p.V_e), n_samples)
    n_ris = rng.normal(0.0, np.sqrt(p.sigma2_ris), n_samples)
    n_d = rng.normal(0.0, np.sqrt(p.sigma2_d), n_samples)
    sb, sl = np.sqrt(p.beta), np.sqrt(1.0 - p.beta)
    q_b = sb * q_a + sl * q_e - n_ris + n_d
    q_eo = -sl * q_a + sb * q_e - n_ris
    return QuadratureSamples(q_a, q_b, q_eo)

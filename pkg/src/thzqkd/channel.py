"""THz multipath channel synthesis for the RIS-assisted MIMO link.

All angles are angles of the wave's direction of travel, measured from the
broadside of the array that launches or receives it, so that ``sin(theta)``
equals the projection of the unit travel vector on the array axis.  With this
convention the receive steering vector enters un-conjugated and the transmit
steering vector conjugated, and a specular RIS bounce (equal travel projections
on the surface before and after the bounce) is phase coherent across the
surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Mapping, Sequence

import numpy as np

from .errors import InvalidArgument

Link = Literal["d", "g", "f"]
LINKS: tuple[str, ...] = ("d", "g", "f")


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA 2018 exact SI values."""

    c: float = 299_792_458.0
    h: float = 6.626_070_15e-34
    k_B: float = 1.380_649e-23


CONSTANTS = PhysicalConstants()


def db_to_linear(value_db: float) -> float:
    """Convert a power ratio in dB (or dBi) to linear scale."""
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(value)


def wrap_phase(phi):
    """Map angles to the half-open interval [-pi, pi)."""
    return np.mod(np.asarray(phi, dtype=float) + np.pi, 2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class SystemConfig:
    """Physical and protocol parameters of the link.

    ``d_a`` defaults to half a carrier wavelength.  Variances are in shot-noise
    units (SNU).
    """

    f_c: float = 15e12
    T_e: float = 297.0
    rho: float = 50.0
    G_a: float = 1000.0
    N_T: int = 32
    N_R: int = 32
    d_a: float | None = None
    eta: float = 0.95
    V_s: float = 1.0
    V_e: float = 1.0
    nu_en: float = 0.01
    T_c: float = 1000.0

    def __post_init__(self):
        checks = [
            (self.f_c > 0, "f_c > 0"),
            (self.T_e > 0, "T_e > 0"),
            (self.rho >= 0, "rho >= 0"),
            (self.G_a > 0, "G_a > 0"),
            (_is_posint(self.N_T), "N_T >= 1 (integer)"),
            (_is_posint(self.N_R), "N_R >= 1 (integer)"),
            (0 < self.eta <= 1, "0 < eta <= 1"),
            (self.V_s > 0, "V_s > 0"),
            (self.V_e >= 1, "V_e >= 1"),
            (self.nu_en >= 0, "nu_en >= 0"),
            (self.T_c > 0, "T_c > 0"),
        ]
        for ok, rule in checks:
            if not ok:
                raise InvalidArgument(f"SystemConfig violates {rule}")
        object.__setattr__(self, "N_T", int(self.N_T))
        object.__setattr__(self, "N_R", int(self.N_R))
        if self.d_a is None:
            object.__setattr__(self, "d_a", self.lambda_c / 2.0)
        elif not self.d_a > 0:
            raise InvalidArgument("SystemConfig violates d_a > 0")

    @property
    def lambda_c(self) -> float:
        return CONSTANTS.c / self.f_c

    @property
    def V_o(self) -> float:
        return thermal_variance(self.f_c, self.T_e)[1]

    @property
    def V_a(self) -> float:
        return self.V_s + self.V_o


def _is_posint(n) -> bool:
    return isinstance(n, (int, np.integer)) and not isinstance(n, bool) and n >= 1


@dataclass(frozen=True, eq=False)
class RISConfig:
    """Planar RIS of ``K_X x K_Y`` elements with per-element phase shifts.

    Phases are stored wrapped to [-pi, pi); a scalar ``phases`` value is
    broadcast to all elements.
    """

    K_X: int
    K_Y: int
    d_X: float
    d_Y: float
    phases: np.ndarray | float = 0.0

    def __post_init__(self):
        if not (_is_posint(self.K_X) and _is_posint(self.K_Y)):
            raise InvalidArgument("RISConfig violates K_X, K_Y >= 1 (integers)")
        if not (self.d_X > 0 and self.d_Y > 0):
            raise InvalidArgument("RISConfig violates d_X, d_Y > 0")
        phases = np.asarray(self.phases, dtype=float)
        if phases.ndim == 0:
            phases = np.full(self.K, float(phases))
        if phases.shape != (self.K,):
            raise InvalidArgument(
                f"RISConfig needs K = {self.K} phases, got shape {phases.shape}")
        if not np.all(np.isfinite(phases)):
            raise InvalidArgument("RIS phases must be finite")
        phases = wrap_phase(phases)
        phases.setflags(write=False)
        object.__setattr__(self, "phases", phases)

    @property
    def K(self) -> int:
        return int(self.K_X) * int(self.K_Y)

    @classmethod
    def uniform(cls, K: int, phi: float, spacing: float) -> "RISConfig":
        """Square-as-possible surface of ``K`` elements sharing phase ``phi``."""
        if not _is_posint(K):
            raise InvalidArgument("RIS element count must be a positive integer")
        side = math.isqrt(int(K))
        if side * side == K:
            kx, ky = side, side
        else:
            kx, ky = int(K), 1
        return cls(kx, ky, spacing, spacing, phi)

    def with_phases(self, phases) -> "RISConfig":
        return RISConfig(self.K_X, self.K_Y, self.d_X, self.d_Y, phases)


@dataclass(frozen=True)
class PathSpec:
    """One propagation path of a link.

    Only the angles relevant to the link are read: ``aod``/``aoa`` at the ULAs,
    ``ris_azimuth``/``ris_elevation_angle`` on the RIS side of ``g`` and ``f``.
    """

    path_length: float
    aod: float = 0.0
    aoa: float = 0.0
    ris_azimuth: float = 0.0
    ris_elevation_angle: float = 0.0
    fresnel_xi: float = 1.0
    rough_sigma: float = 1.0
    is_los: bool = True

    def __post_init__(self):
        if not self.path_length > 0:
            raise InvalidArgument("PathSpec violates path_length > 0")
        if not self.is_los:
            if not 0 <= self.fresnel_xi <= 1:
                raise InvalidArgument("PathSpec violates 0 <= fresnel_xi <= 1")
            if not 0 < self.rough_sigma <= 1:
                raise InvalidArgument("PathSpec violates 0 < rough_sigma <= 1")

    @property
    def tau(self) -> float:
        return self.path_length / CONSTANTS.c


@dataclass(frozen=True)
class Geometry:
    """2-D positions (m).  ULAs lie along the y axis, the RIS surface along x."""

    alice_pos: tuple[float, float]
    bob_pos: tuple[float, float]
    ris_pos: tuple[float, float]

    def __post_init__(self):
        pts = [np.asarray(p, dtype=float) for p in
               (self.alice_pos, self.bob_pos, self.ris_pos)]
        for a, b in ((0, 1), (0, 2), (1, 2)):
            if not np.linalg.norm(pts[a] - pts[b]) > 0:
                raise InvalidArgument("Geometry violates: all pairwise distances > 0")
        for name, p in zip(("alice_pos", "bob_pos", "ris_pos"), pts):
            object.__setattr__(self, name, (float(p[0]), float(p[1])))

    @classmethod
    def from_distance(cls, d: float, ris_x: float | None = None,
                      ris_y: float = 5.0) -> "Geometry":
        """Alice at the origin, Bob at ``(d, 0)``, RIS at ``(ris_x, ris_y)``."""
        if not d > 0:
            raise InvalidArgument("Alice-Bob distance must be positive")
        return cls((0.0, 0.0), (float(d), 0.0),
                   (d / 2.0 if ris_x is None else float(ris_x), float(ris_y)))

    @property
    def distance(self) -> float:
        return math.dist(self.alice_pos, self.bob_pos)

    def los_paths(self) -> dict[str, PathSpec]:
        """Line-of-sight path of each link, with angles derived from positions."""
        a, b, r = (np.asarray(p) for p in (self.alice_pos, self.bob_pos, self.ris_pos))

        def travel(src, dst):
            v = dst - src
            n = float(np.linalg.norm(v))
            return n, v / n

        l_d, u_d = travel(a, b)
        l_g, u_g = travel(a, r)
        l_f, u_f = travel(r, b)
        # ULA axis is y; RIS X axis is x with the azimuth reference along it.
        return {
            "d": PathSpec(l_d, aod=math.asin(u_d[1]), aoa=math.asin(u_d[1])),
            "g": PathSpec(l_g, aod=math.asin(u_g[1]),
                          ris_elevation_angle=math.asin(u_g[0])),
            "f": PathSpec(l_f, aoa=math.asin(u_f[1]),
                          ris_elevation_angle=math.asin(u_f[0])),
        }


@dataclass(frozen=True, eq=False)
class ChannelSet:
    H_d: np.ndarray
    H_g: np.ndarray
    H_f: np.ndarray
    phases: np.ndarray
    H_ris: np.ndarray

    def consistency_error(self) -> float:
        """Relative Frobenius mismatch between ``H_ris`` and its definition."""
        ref = effective_channel(self.H_d, self.H_g, self.H_f, self.phases)
        scale = max(np.linalg.norm(ref), np.finfo(float).tiny)
        return float(np.linalg.norm(self.H_ris - ref) / scale)

    def with_phases(self, phases) -> "ChannelSet":
        phases = np.broadcast_to(wrap_phase(phases), self.phases.shape).copy()
        return ChannelSet(self.H_d, self.H_g, self.H_f, phases,
                          effective_channel(self.H_d, self.H_g, self.H_f, phases))


def ula_steering(N: int, theta: float, d_a: float, lambda_c: float) -> np.ndarray:
    """Unit-norm ULA response, element ``n`` carrying phase ``2 pi d_a n sin(theta) / lambda_c``."""
    if not _is_posint(N):
        raise InvalidArgument("ULA size N must be a positive integer")
    if not (d_a > 0 and lambda_c > 0):
        raise InvalidArgument("ULA spacing and wavelength must be positive")
    n = np.arange(N)
    return np.exp(2j * np.pi * d_a * n * math.sin(theta) / lambda_c) / math.sqrt(N)


def ris_steering(varphi: float, theta_ris: float, ris: RISConfig,
                 lambda_c: float) -> np.ndarray:
    """Unit-norm planar RIS response in row-major ``(k_x, k_y)`` order.

    Element indices are one-based in the phase, so the first element carries
    ``theta_X + theta_Y``; this only adds a common phase to the vector.
    """
    if not lambda_c > 0:
        raise InvalidArgument("wavelength must be positive")
    s = math.sin(theta_ris)
    proj_x = ris.d_X * math.cos(varphi) * s
    proj_y = ris.d_Y * math.sin(varphi) * s
    kx = np.arange(1, ris.K_X + 1)[:, None]
    ky = np.arange(1, ris.K_Y + 1)[None, :]
    phase = 2.0 * np.pi / lambda_c * (kx * proj_x + ky * proj_y)
    return (np.exp(1j * phase) / math.sqrt(ris.K)).reshape(-1)


def path_loss(lambda_c: float, d: float, G_T: float, G_R: float, rho: float,
              kind: Literal["los", "nlos"] = "los", xi: float = 1.0,
              sigma_rough: float = 1.0) -> float:
    """Linear power gain of one path: free-space spreading, array gains and
    molecular absorption at ``rho`` dB/km; NLoS paths are further scaled by the
    roughness and Fresnel reflection coefficients."""
    if not d > 0:
        raise InvalidArgument("path length must be positive")
    if not lambda_c > 0:
        raise InvalidArgument("wavelength must be positive")
    delta = (lambda_c / (4.0 * math.pi * d)) ** 2 * G_T * G_R * 10.0 ** (-0.1 * rho * d / 1000.0)
    if kind == "los":
        return delta
    if kind != "nlos":
        raise InvalidArgument(f"unknown path kind {kind!r}")
    if not 0 <= xi <= 1:
        raise InvalidArgument("Fresnel coefficient must lie in [0, 1]")
    if not 0 < sigma_rough <= 1:
        raise InvalidArgument("roughness factor must lie in (0, 1]")
    return sigma_rough * xi * delta


def gains_for_link(link: Link, cfg: SystemConfig, ris: RISConfig) -> tuple[float, float]:
    """Transmit and receive gains; the RIS side of a link has gain ``K``."""
    ula_t = cfg.N_T * cfg.G_a
    ula_r = cfg.N_R * cfg.G_a
    if link == "d":
        return ula_t, ula_r
    if link == "g":
        return ula_t, float(ris.K)
    if link == "f":
        return float(ris.K), ula_r
    raise InvalidArgument(f"unknown link {link!r}")


def propagation_phase(path_length: float, lambda_c: float) -> float:
    """``2 pi f_c tau`` reduced modulo 2 pi without forming ``f_c * tau``."""
    return 2.0 * math.pi * math.fmod(path_length, lambda_c) / lambda_c


def build_link_matrix(link: Link, paths: Sequence[PathSpec], cfg: SystemConfig,
                      ris: RISConfig) -> np.ndarray:
    if not paths:
        raise InvalidArgument(f"link {link!r} needs at least one path")
    lam = cfg.lambda_c
    G_T, G_R = gains_for_link(link, cfg, ris)
    shape = {"d": (cfg.N_R, cfg.N_T), "g": (ris.K, cfg.N_T), "f": (cfg.N_R, ris.K)}[link]
    H = np.zeros(shape, dtype=complex)
    for p in paths:
        delta = path_loss(lam, p.path_length, G_T, G_R, cfg.rho,
                          "los" if p.is_los else "nlos", p.fresnel_xi, p.rough_sigma)
        amp = math.sqrt(delta) * np.exp(1j * propagation_phase(p.path_length, lam))
        if link == "d":
            rx = ula_steering(cfg.N_R, p.aoa, cfg.d_a, lam)
            tx = ula_steering(cfg.N_T, p.aod, cfg.d_a, lam)
        elif link == "g":
            rx = ris_steering(p.ris_azimuth, p.ris_elevation_angle, ris, lam)
            tx = ula_steering(cfg.N_T, p.aod, cfg.d_a, lam)
        else:
            rx = ula_steering(cfg.N_R, p.aoa, cfg.d_a, lam)
            tx = ris_steering(p.ris_azimuth, p.ris_elevation_angle, ris, lam)
        H += amp * np.outer(rx, tx.conj())
    return H


def effective_channel(H_d: np.ndarray, H_g: np.ndarray, H_f: np.ndarray,
                      phases) -> np.ndarray:
    """Direct channel plus the RIS-reflected cascade ``H_f diag(e^{j phi}) H_g``."""
    H_d, H_g, H_f = (np.asarray(m) for m in (H_d, H_g, H_f))
    phases = np.asarray(phases, dtype=float)
    K = H_g.shape[0]
    if phases.ndim == 0:
        phases = np.full(K, float(phases))
    if (H_f.shape[1] != K or phases.shape != (K,) or H_f.shape[0] != H_d.shape[0]
            or H_g.shape[1] != H_d.shape[1]):
        raise InvalidArgument(
            f"non-conformable channel blocks: H_d {H_d.shape}, H_g {H_g.shape}, "
            f"H_f {H_f.shape}, phases {phases.shape}")
    return H_d + (H_f * np.exp(1j * phases)[None, :]) @ H_g


def build_channel(cfg: SystemConfig, ris: RISConfig, geom: Geometry,
                  extra_paths: Mapping[str, Sequence[PathSpec]] | None = None) -> ChannelSet:
    """LoS paths from ``geom`` plus any extra (typically NLoS) paths per link."""
    los = geom.los_paths()
    extra = extra_paths or {}
    unknown = set(extra) - set(LINKS)
    if unknown:
        raise InvalidArgument(f"unknown links in extra paths: {sorted(unknown)}")
    mats = {link: build_link_matrix(link, [los[link], *extra.get(link, ())], cfg, ris)
            for link in LINKS}
    H_ris = effective_channel(mats["d"], mats["g"], mats["f"], ris.phases)
    return ChannelSet(mats["d"], mats["g"], mats["f"], np.array(ris.phases), H_ris)


def thermal_variance(f_c: float, T_e: float) -> tuple[float, float]:
    """Mean thermal photon number and the preparation noise variance ``2 n + 1``."""
    if not (f_c > 0 and T_e > 0):
        raise InvalidArgument("carrier frequency and temperature must be positive")
    x = CONSTANTS.h * f_c / (CONSTANTS.k_B * T_e)
    # exp(-x) / (1 - exp(-x)) stays finite as x grows without bound
    n_bar = math.exp(-x) / -math.expm1(-x)
    return n_bar, 2.0 * n_bar + 1.0

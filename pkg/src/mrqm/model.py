"""Frequency-domain model of a multiresonator spin memory.

One broadband common resonator couples to a waveguide (rate ``kappa``) and to
``N`` high-Q miniresonators, each loaded with an inhomogeneously broadened spin
ensemble.  All frequencies are in units of the spin-line spacing ``delta_unit``
and are measured in the rotating frame of the carrier.

The reflection coefficient is ``S = (1 - F) / (1 + F)`` with

    F(nu) = gr - 2i nu / kappa
            + sum_n g_n / [ f_n^2 / (w_n + i(ds_n - nu)) + gm_n + i(dc_n - nu) ]

where ``w_n`` is the inhomogeneous half-width, ``ds_n`` the spin-line center,
``dc_n`` the miniresonator detuning, ``gm_n`` the miniresonator loss and ``gr``
the normalized common-resonator loss.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError, PoleError, SingularChannelError

#: Published optimum for N = 4 (symmetric half-set, Delta = 1).
PAPER_HALF = {
    "gamma2_inv": 1.8,
    "f": (1.01, 0.707),
    "g": (0.385, 0.809),
    "delta_c": (0.56, 1.8),
}

PLATEAU_HALF_WIDTH = 0.8
DEFAULT_GRID_STEP = 0.005
BROADBAND_WARN_RATIO = 0.1


def channel_indices(n_channels: int) -> list[int]:
    """Signed channel labels ``-N/2..-1, 1..N/2``."""
    if not isinstance(n_channels, (int, np.integer)) or n_channels < 2 or n_channels % 2:
        raise InvalidArgumentError(f"channel count must be an even integer >= 2, got {n_channels!r}")
    half = n_channels // 2
    return [n for n in range(-half, half + 1) if n != 0]


def spin_line_centers(n_channels: int, delta_unit: float = 1.0) -> dict[int, float]:
    """Centers of the spin lines, ``Delta * (n - sgn(n)/2)``.

    >>> spin_line_centers(4)
    {-2: -1.5, -1: -0.5, 1: 0.5, 2: 1.5}
    """
    return {n: delta_unit * (n - math.copysign(0.5, n)) for n in channel_indices(n_channels)}


@dataclass(frozen=True)
class ChannelParams:
    """Parameters of one miniresonator and its spin ensemble.

    Attributes
    ----------
    index : int
        Signed channel label (never zero).
    f_sq : float
        Collective spin-miniresonator coupling squared, ``N_n (f_n^0)^2``.
    gamma2_inv : float
        Inhomogeneous half-width ``1/T2*`` of the spin line.
    g : float
        Effective miniresonator to common-resonator coupling ``2|g_n^0|^2/kappa``.
    delta_c : float
        Miniresonator detuning.
    gamma_mini : float
        Miniresonator decay rate.
    delta_spin : float
        Spin-line center.
    """

    index: int
    f_sq: float
    gamma2_inv: float
    g: float
    delta_c: float
    gamma_mini: float = 0.0
    delta_spin: float = 0.0

    def __post_init__(self):
        if self.index == 0:
            raise InvalidArgumentError("channel index must be nonzero")
        if self.f_sq < 0 or self.g < 0 or self.gamma_mini < 0:
            raise InvalidArgumentError(
                f"channel {self.index}: f_sq, g and gamma_mini must be >= 0"
            )
        if not self.gamma2_inv > 0:
            raise InvalidArgumentError(f"channel {self.index}: gamma2_inv must be > 0")


@dataclass(frozen=True)
class DeviceConfig:
    n_channels: int
    channels: tuple[ChannelParams, ...]
    delta_unit: float = 1.0
    kappa: float = math.inf
    gamma_r_tilde: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(sorted(self.channels, key=lambda c: c.index)))
        expected = channel_indices(self.n_channels)
        got = [c.index for c in self.channels]
        if got != expected:
            raise InvalidArgumentError(f"channel indices {got} do not match {expected}")
        if not self.delta_unit > 0:
            raise InvalidArgumentError("delta_unit must be > 0")
        if not self.kappa > 0:
            raise InvalidArgumentError("kappa must be > 0")
        if self.gamma_r_tilde < 0:
            raise InvalidArgumentError("gamma_r_tilde must be >= 0")
        ratio = self.broadband_ratio
        if ratio >= 1:
            raise InvalidArgumentError(
                f"N*Delta/kappa = {ratio:.3g} >= 1; common resonator is not broadband"
            )
        if ratio > BROADBAND_WARN_RATIO:
            warnings.warn(f"N*Delta/kappa = {ratio:.3g} exceeds {BROADBAND_WARN_RATIO}", stacklevel=2)

    @property
    def broadband_ratio(self) -> float:
        return self.n_channels * self.delta_unit / self.kappa

    def arrays(self) -> dict[str, np.ndarray]:
        """Channel parameters as aligned arrays (ordered by index)."""
        cols = ("index", "f_sq", "gamma2_inv", "g", "delta_c", "gamma_mini", "delta_spin")
        return {k: np.array([getattr(c, k) for c in self.channels], dtype=float) for k in cols}

    def with_losses(self, gamma_r_tilde: float, gamma_mini: float) -> "DeviceConfig":
        chans = tuple(replace(c, gamma_mini=gamma_mini) for c in self.channels)
        return replace(self, channels=chans, gamma_r_tilde=gamma_r_tilde)

    def to_dict(self) -> dict:
        return {
            "n_channels": self.n_channels,
            "delta_unit": self.delta_unit,
            "kappa": "inf" if math.isinf(self.kappa) else self.kappa,
            "gamma_r_tilde": self.gamma_r_tilde,
            "channels": [
                {
                    "index": c.index,
                    "f_sq": c.f_sq,
                    "gamma2_inv": c.gamma2_inv,
                    "g": c.g,
                    "delta_c": c.delta_c,
                    "gamma_mini": c.gamma_mini,
                }
                for c in self.channels
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DeviceConfig":
        """Build from the JSON document layout.  Spin-line centers are derived."""
        n = int(doc["n_channels"])
        delta = float(doc.get("delta_unit", 1.0))
        kappa = doc.get("kappa", "inf")
        kappa = math.inf if kappa in ("inf", "Infinity", None) else float(kappa)
        centers = spin_line_centers(n, delta)
        chans = []
        for c in doc["channels"]:
            idx = int(c["index"])
            if idx not in centers:
                raise InvalidArgumentError(f"channel index {idx} invalid for N={n}")
            chans.append(
                ChannelParams(
                    index=idx,
                    f_sq=float(c["f_sq"]),
                    gamma2_inv=float(c["gamma2_inv"]),
                    g=float(c["g"]),
                    delta_c=float(c["delta_c"]),
                    gamma_mini=float(c.get("gamma_mini", 0.0)),
                    delta_spin=centers[idx],
                )
            )
        return cls(
            n_channels=n,
            channels=tuple(chans),
            delta_unit=delta,
            kappa=kappa,
            gamma_r_tilde=float(doc.get("gamma_r_tilde", 0.0)),
        )

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def expand_symmetric(
    gamma2_inv: float,
    f: Sequence[float],
    g: Sequence[float],
    delta_c: Sequence[float],
    n_channels: Optional[int] = None,
    delta_unit: float = 1.0,
    *,
    kappa: float = math.inf,
    gamma_r_tilde: float = 0.0,
    gamma_mini: float = 0.0,
) -> DeviceConfig:
    """Mirror a half parameter set onto channels ``+-n``.

    ``f`` holds couplings (not squared); ``f[k]``, ``g[k]``, ``delta_c[k]``
    belong to channel ``k + 1``.  Channel ``-n`` gets the same ``f`` and ``g``
    and detuning ``-delta_c``.
    """
    half = len(f)
    if n_channels is None:
        n_channels = 2 * half
    if not (len(f) == len(g) == len(delta_c) == n_channels // 2) or n_channels % 2:
        raise InvalidArgumentError(
            f"half-lists must all have length N/2 = {n_channels // 2}, "
            f"got f={len(f)}, g={len(g)}, delta_c={len(delta_c)}"
        )
    centers = spin_line_centers(n_channels, delta_unit)
    chans = []
    for n in centers:
        k = abs(n) - 1
        chans.append(
            ChannelParams(
                index=n,
                f_sq=float(f[k]) ** 2,
                gamma2_inv=float(gamma2_inv),
                g=float(g[k]),
                delta_c=math.copysign(float(delta_c[k]), n),
                gamma_mini=gamma_mini,
                delta_spin=centers[n],
            )
        )
    return DeviceConfig(
        n_channels=n_channels,
        channels=tuple(chans),
        delta_unit=delta_unit,
        kappa=kappa,
        gamma_r_tilde=gamma_r_tilde,
    )


def paper_config(gamma: float = 0.0, kappa: float = math.inf) -> DeviceConfig:
    """Published N = 4 optimum with ``gamma_r_tilde = gamma_mini = gamma``."""
    return expand_symmetric(
        PAPER_HALF["gamma2_inv"],
        PAPER_HALF["f"],
        PAPER_HALF["g"],
        PAPER_HALF["delta_c"],
        kappa=kappa,
        gamma_r_tilde=gamma,
        gamma_mini=gamma,
    )


def empty_config(n_channels: int = 4, kappa: float = math.inf) -> DeviceConfig:
    """Device with every coupling switched off (total reflection)."""
    half = n_channels // 2
    return expand_symmetric(1.0, [0.0] * half, [0.0] * half, [0.0] * half, n_channels, kappa=kappa)


def channel_terms(
    nu,
    f_sq: np.ndarray,
    gamma2_inv: np.ndarray,
    g: np.ndarray,
    delta_c: np.ndarray,
    gamma_mini: np.ndarray,
    delta_spin: np.ndarray,
) -> np.ndarray:
    """Per-channel contributions to F, shape ``nu.shape + (N,)``.

    Channels with ``g == 0`` contribute exactly zero even where their own
    denominator vanishes.
    """
    nu = np.asarray(nu, dtype=float)[..., None]
    spin = f_sq / (gamma2_inv + 1j * (delta_spin - nu))
    denom = spin + gamma_mini + 1j * (delta_c - nu)
    coupled = g != 0
    if np.any((denom == 0) & coupled):
        raise SingularChannelError("undamped channel evaluated exactly on its resonance")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(coupled, g / denom, 0.0)
    return terms


def eval_F(config: DeviceConfig, nu):
    """Impedance function F(nu); scalar in, complex out, or array in, array out."""
    a = config.arrays()
    terms = channel_terms(
        nu, a["f_sq"], a["gamma2_inv"], a["g"], a["delta_c"], a["gamma_mini"], a["delta_spin"]
    )
    nu_arr = np.asarray(nu, dtype=float)
    bus = 0.0 if math.isinf(config.kappa) else -2j * nu_arr / config.kappa
    out = config.gamma_r_tilde + bus + terms.sum(axis=-1)
    return complex(out) if np.ndim(nu) == 0 else out


def reflection_from_F(F):
    F = np.asarray(F)
    if np.any(F == -1):
        raise PoleError("F(nu) = -1: reflection coefficient has a pole")
    return (1 - F) / (1 + F)


def eval_S(config: DeviceConfig, nu):
    """Reflection coefficient S(nu) = (1 - F) / (1 + F)."""
    out = reflection_from_F(eval_F(config, nu))
    return complex(out) if np.ndim(nu) == 0 else out


def default_grid(delta_unit: float = 1.0, lo: float = -2.0, hi: float = 2.0,
                 step: float = DEFAULT_GRID_STEP) -> np.ndarray:
    """Uniform grid ``[lo, hi]`` (in units of Delta) including both ends."""
    n = int(round((hi - lo) / step))
    return delta_unit * np.linspace(lo, hi, n + 1)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise InvalidArgumentError("frequency grid must be a non-empty 1-D sequence")
    if np.any(np.diff(grid) <= 0):
        raise InvalidArgumentError("frequency grid must be strictly increasing")
    return grid


@dataclass(frozen=True)
class Spectrum:
    grid: np.ndarray
    values: np.ndarray
    config_hash: str = ""

    def __post_init__(self):
        _check_grid(self.grid)
        if len(self.values) != len(self.grid):
            raise InvalidArgumentError("spectrum values and grid differ in length")


@dataclass(frozen=True)
class EfficiencyCurve:
    grid: np.ndarray
    eta: np.ndarray

    def min_over(self, lo: float, hi: float) -> float:
        mask = (self.grid >= lo - 1e-12) & (self.grid <= hi + 1e-12)
        if not mask.any():
            raise InvalidArgumentError(f"no grid points inside [{lo}, {hi}]")
        return float(self.eta[mask].min())


def spectrum(config: DeviceConfig, grid=None) -> Spectrum:
    grid = default_grid(config.delta_unit) if grid is None else _check_grid(grid)
    return Spectrum(grid=grid, values=np.asarray(eval_S(config, grid)), config_hash=config.config_hash())


def efficiency(spec: Spectrum) -> EfficiencyCurve:
    return EfficiencyCurve(grid=spec.grid, eta=1.0 - np.abs(spec.values) ** 2)


def plateau_bandwidth(curve: EfficiencyCurve, threshold: float) -> Optional[tuple[float, float]]:
    """Widest interval around ``nu = 0`` on which ``eta >= threshold``.

    Edges are located by linear interpolation between the last grid point
    above the threshold and the first one below it.  Returns ``None`` when
    the efficiency at zero is already below threshold.
    """
    if not 0 < threshold < 1:
        raise InvalidArgumentError("threshold must lie in (0, 1)")
    x, y = curve.grid, curve.eta
    if not x[0] <= 0 <= x[-1]:
        raise InvalidArgumentError("nu = 0 is outside the grid range")
    if np.interp(0.0, x, y) < threshold:
        return None
    ok = y >= threshold
    # first grid index at or right of zero, and last at or left of zero
    right = int(np.searchsorted(x, 0.0, side="left"))
    left = int(np.searchsorted(x, 0.0, side="right")) - 1

    def crossing(i_in, i_out):
        y0, y1 = y[i_in], y[i_out]
        return x[i_in] + (threshold - y0) * (x[i_out] - x[i_in]) / (y1 - y0)

    if right < len(x) and not ok[right]:
        hi = crossing(left, right) if left >= 0 else 0.0
    else:
        i = right
        while i + 1 < len(x) and ok[i + 1]:
            i += 1
        hi = x[i] if i + 1 == len(x) else crossing(i, i + 1)
    if left >= 0 and not ok[left]:
        lo = crossing(right, left)
    else:
        i = left
        while i - 1 >= 0 and ok[i - 1]:
            i -= 1
        lo = x[i] if i == 0 else crossing(i, i - 1)
    return float(lo), float(hi)


def pulse_recording_efficiency(config: DeviceConfig, grid, phi_sq, norm_tol: float = 1e-6) -> float:
    """Fraction of a pulse's energy that is not reflected.

    Parameters
    ----------
    grid : array_like
        Frequency grid on which ``phi_sq`` is sampled.
    phi_sq : array_like
        Spectral intensity ``|phi(nu)|^2``; must integrate to one (trapezoid rule).
    """
    grid = _check_grid(grid)
    phi_sq = np.asarray(phi_sq, dtype=float)
    norm = float(np.trapezoid(phi_sq, grid)) if grid.size > 1 else float(phi_sq.sum())
    if abs(norm - 1.0) > norm_tol:
        raise InvalidArgumentError(f"pulse spectrum is not normalized: integral = {norm:.9g}")
    refl = np.abs(np.asarray(eval_S(config, grid))) ** 2
    if grid.size == 1:
        return float(1.0 - refl[0])
    return float(1.0 - np.trapezoid(refl * phi_sq, grid))


@dataclass(frozen=True)
class LossBudgetReport:
    gamma_r_tilde: float
    gamma_mini: float
    delta_unit: float
    signal_duration: float
    transfer_bound: float
    condition_value: float
    target: float
    passes: bool = field(default=False)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def loss_budget(gamma_r_tilde: float, gamma_mini: float, delta_unit: float = 1.0,
                target: float = 1e-4) -> LossBudgetReport:
    """Loss limit on the transfer efficiency for a pulse filling the plateau.

    The shortest pulse that fits into a plateau of full width ``1.6 Delta``
    lasts ``1 / (1.6 Delta)``; the transfer is bounded by
    ``exp(-2 gr - 2 gm dt_s)``.
    """
    if gamma_r_tilde < 0 or gamma_mini < 0:
        raise InvalidArgumentError("losses must be nonnegative")
    if not delta_unit > 0:
        raise InvalidArgumentError("delta_unit must be > 0")
    width = 2 * PLATEAU_HALF_WIDTH * delta_unit
    dts = 1.0 / width
    bound = math.exp(-2 * gamma_r_tilde - 2 * gamma_mini * dts)
    cond = 0.95 * (gamma_r_tilde + gamma_mini / width)
    return LossBudgetReport(
        gamma_r_tilde=gamma_r_tilde,
        gamma_mini=gamma_mini,
        delta_unit=delta_unit,
        signal_duration=dts,
        transfer_bound=bound,
        condition_value=cond,
        target=target,
        passes=cond <= target,
    )


def absorption_coefficients(config: DeviceConfig) -> dict[int, float]:
    """Spin absorption coefficient ``f_n^2 T2*`` for each channel."""
    return {c.index: c.f_sq / c.gamma2_inv for c in config.channels}


def plateau_min_eta(config: DeviceConfig, half_width: float = PLATEAU_HALF_WIDTH,
                    step: float = DEFAULT_GRID_STEP) -> float:
    """Minimum of ``1 - |S|^2`` over ``[-half_width, half_width]`` (Delta units)."""
    grid = default_grid(config.delta_unit, -half_width, half_width, step)
    return float(np.min(1.0 - np.abs(eval_S(config, grid)) ** 2))

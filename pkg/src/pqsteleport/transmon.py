"""Transmon tuning and controlled-phase gate calibration.

Pure arithmetic: frequencies and energies are angular frequencies
(rad/s), times are seconds.  Helpers ``mhz`` / ``to_mhz`` convert from and
to the "2pi x MHz" notation used in reports.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import trapezoid

__all__ = [
    "TransmonParams",
    "FluxPulse",
    "GateCalibration",
    "mhz",
    "to_mhz",
    "qubit_frequency",
    "anharmonicity",
    "dispersive_shift",
    "josephson_energy",
    "detuning_profile",
    "accumulated_phase",
    "solve_gate_time",
    "reference_parameters",
    "calibration_report",
]

TWO_PI = 2.0 * math.pi


def mhz(value: float) -> float:
    """``2pi x value MHz`` as rad/s."""
    return TWO_PI * value * 1e6


def to_mhz(omega: float) -> float:
    return omega / (TWO_PI * 1e6)


@dataclass(frozen=True)
class TransmonParams:
    E_C: float
    E_J0: float
    g: float
    omega_r: float
    phi_x: float = 0.0

    def __post_init__(self):
        ej = josephson_energy(self.E_J0, self.phi_x)
        if ej > 0 and ej / self.E_C < 20:
            warnings.warn(
                f"E_J/E_C = {ej / self.E_C:.1f} is outside the transmon regime (< 20)",
                RuntimeWarning,
                stacklevel=2,
            )

    @property
    def E_J(self) -> float:
        return josephson_energy(self.E_J0, self.phi_x)

    @property
    def omega_q(self) -> float:
        return qubit_frequency(self.E_J, self.E_C)

    @property
    def detuning(self) -> float:
        """``Omega - omega_r``."""
        return self.omega_q - self.omega_r


@dataclass(frozen=True)
class FluxPulse:
    """Gaussian-edged detuning excursion with a flat top on ``[t0, t1]``."""

    delta0: float
    delta_t: float
    tau: float
    t0: float = 0.0
    t1: float = 0.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.t1 < self.t0:
            raise ValueError("t1 must not precede t0")

    @classmethod
    def from_plateau(cls, plateau: float, depth: float, tau: float, t0: float = 0.0, t1: float = 0.0):
        """Pulse parked ``depth`` below a plateau detuning ``plateau``.

        The qubit is parked at a lower frequency than at the plateau, so
        ``delta0 = plateau - depth`` and the signed excursion is ``-depth``.
        """
        return cls(plateau - depth, -depth, tau, t0, t1)

    @property
    def plateau(self) -> float:
        return self.delta0 - self.delta_t

    def with_length(self, length: float) -> "FluxPulse":
        return replace(self, t1=self.t0 + length)


def qubit_frequency(E_J: float, E_C: float) -> float:
    """``sqrt(8 E_J E_C) - E_C``."""
    if E_J <= 0 or E_C <= 0:
        raise ValueError("E_J and E_C must be positive")
    return math.sqrt(8.0 * E_J * E_C) - E_C


def anharmonicity(E_C: float) -> float:
    if E_C <= 0:
        raise ValueError("E_C must be positive")
    return -E_C


def dispersive_shift(g: float, delta: float, E_C: float) -> float:
    """Three-level transmon shift ``-g^2 E_C / (delta (delta - E_C))``."""
    if delta == 0 or delta == E_C:
        raise ValueError(f"detuning {delta} sits on a pole of the dispersive shift")
    if abs(delta) <= 3.0 * abs(g):
        warnings.warn("|delta| <= 3g: outside the dispersive regime", RuntimeWarning, stacklevel=2)
    return -g * g * E_C / (delta * (delta - E_C))


def josephson_energy(E_J0: float, phi_x: float) -> float:
    return E_J0 * abs(math.cos(phi_x))


def detuning_profile(pulse: FluxPulse, t):
    """Detuning at time(s) ``t``; continuous at both plateau edges."""
    t = np.asarray(t, dtype=float)
    out = np.full(t.shape, pulse.delta0 - pulse.delta_t)
    before, after = t < pulse.t0, t > pulse.t1
    out[before] = pulse.delta0 - pulse.delta_t * np.exp(-((t[before] - pulse.t0) / pulse.tau) ** 2)
    out[after] = pulse.delta0 - pulse.delta_t * np.exp(-((t[after] - pulse.t1) / pulse.tau) ** 2)
    return out if out.ndim else float(out)


def accumulated_phase(pulse: FluxPulse, g: float, E_C: float, step: float | None = None) -> float:
    """``int 2 chi(t) dt`` over ``[t0 - 5 tau, t1 + 5 tau]`` (composite trapezoid).

    ``step`` defaults to ``tau / 100``; the grid is refined so it divides
    the window exactly.
    """
    h = pulse.tau / 100.0 if step is None else step
    a, b = pulse.t0 - 5.0 * pulse.tau, pulse.t1 + 5.0 * pulse.tau
    n = max(1, int(math.ceil((b - a) / h - 1e-9)))
    t = np.linspace(a, b, n + 1)
    d = detuning_profile(pulse, t)
    if np.any(d == 0) or np.any(np.sign(d) != np.sign(d[0])) or np.any(np.sign(d - E_C) != np.sign(d[0] - E_C)):
        raise ValueError("detuning crosses a pole of the dispersive shift in the window")
    integrand = -2.0 * g * g * E_C / (d * (d - E_C))
    return float(trapezoid(integrand, t))


@dataclass(frozen=True)
class GateCalibration:
    t_pi: float
    phase: float
    chi_plateau: float
    chi_parked: float
    t_ref_half: float  # pi / (2 |chi_plateau|)
    t_ref_full: float  # pi / |chi_plateau|


def solve_gate_time(
    pulse: FluxPulse,
    g: float,
    E_C: float,
    target_phase: float = -math.pi,
    tol: float = 1e-6,
    step: float | None = None,
) -> GateCalibration:
    """Plateau length ``t1 - t0`` giving ``accumulated_phase == target_phase``.

    Bisection on ``[0, 10 / |chi_plateau|]``.
    """
    chi_p = dispersive_shift(g, pulse.plateau, E_C)
    if chi_p == 0:
        raise ValueError("plateau dispersive shift is zero")

    def resid(length):
        return accumulated_phase(pulse.with_length(length), g, E_C, step) - target_phase

    lo, hi = 0.0, 10.0 / abs(chi_p)
    f_lo, f_hi = resid(lo), resid(hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise ValueError(f"no sign change of the phase residual on [0, {hi:.3g}] s")
    for _ in range(200):
        t_pi = 0.5 * (lo + hi)
        f_mid = resid(t_pi)
        if abs(f_mid) < tol:
            break
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = t_pi, f_mid
        else:
            hi = t_pi
    else:
        raise ValueError(f"bisection did not converge (residual {f_mid:.2e})")
    phase = f_mid + target_phase
    chi_parked = dispersive_shift(g, pulse.delta0, E_C)
    return GateCalibration(
        t_pi, phase, chi_p, chi_parked, math.pi / (2 * abs(chi_p)), math.pi / abs(chi_p)
    )


def reference_parameters() -> dict:
    """Circuit values from the tunable-transmon design study."""
    return {
        "kappa": mhz(0.150),
        "E_C": mhz(300.0),
        "EJ_over_EC": 75.0,
        "g": mhz(31.0),
        "detuning": mhz(-250.0),
        "phi_x_parked": 0.3 * math.pi,
        "depth": mhz(1900.0),
        "tau": 10e-9,
        "quoted_qubit_frequency": mhz(7350.0),
    }


def calibration_report(params: dict | None = None) -> dict:
    """All calibration quantities for the reference (or given) parameter set."""
    p = dict(reference_parameters())
    if params:
        p.update(params)
    E_C = p["E_C"]
    E_J0 = p["EJ_over_EC"] * E_C
    omega = qubit_frequency(E_J0, E_C)
    sqrt_term = math.sqrt(8.0 * E_J0 * E_C)
    E_J_parked = josephson_energy(E_J0, p["phi_x_parked"])
    pulse = FluxPulse.from_plateau(p["detuning"], p["depth"], p["tau"])
    cal = solve_gate_time(pulse, p["g"], E_C)
    return {
        "qubit_frequency": omega,
        "sqrt_8EJEC": sqrt_term,
        "quoted_qubit_frequency": p["quoted_qubit_frequency"],
        "anharmonicity": anharmonicity(E_C),
        "E_J_parked_over_E_J0": E_J_parked / E_J0,
        "parked_frequency_drop": omega - qubit_frequency(E_J_parked, E_C),
        "pulse_depth": p["depth"],
        "chi_plateau": cal.chi_plateau,
        "chi_parked": cal.chi_parked,
        "kappa": p["kappa"],
        "t_pi": cal.t_pi,
        "phase_at_t_pi": cal.phase,
        "t_ref_half": cal.t_ref_half,
        "t_ref_full": cal.t_ref_full,
    }

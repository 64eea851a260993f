"""Physical constants, ambient conditions, and masked unknown parameters.

The default constant set is a self-consistent parameterization of the
mean-value gas-flow model for a small turbocharged diesel engine.  Every
value can be overridden through the run configuration; nothing downstream
assumes these particular numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

__all__ = [
    "EngineConstants",
    "AmbientConditions",
    "UnknownParams",
    "LAB_PARAMS_NORMALIZED",
    "FIELD_PARAMS_NORMALIZED",
    "PARAM_NAMES",
    "PARAM_MASKS",
    "PARAM_SCALES",
]


@dataclass(frozen=True)
class EngineConstants:
    """Fixed constants of the gas-flow model.

    Units are SI throughout: pressures in Pa, temperatures in K, volumes in
    m^3, mass flows in kg/s, rotational speeds in rad/s except engine speed
    ``n_e`` which is in rpm, and fuel mass ``u_delta`` in mg/cycle.
    """

    # Gas properties (c_pa - c_va == R_a and c_pe * (1 - 1/gamma_e) == R_e
    # must hold for thermodynamic consistency).
    R_a: float = 287.0
    R_e: float = 286.0
    c_pa: float = 1011.0
    c_va: float = 724.0
    c_pe: float = 1332.0
    gamma_a: float = 1011.0 / 724.0
    gamma_e: float = 1332.0 / 1046.0

    # Geometry and cylinder parameters.
    V_im: float = 0.022
    V_em: float = 0.02
    V_d: float = 0.002
    T_im: float = 300.0
    r_c: float = 17.0
    n_cyl: int = 6
    q_hv: float = 42.9e6
    x_cv: float = 0.25

    # Turbocharger mechanics.
    J_t: float = 3.0e-4
    R_t: float = 0.09
    R_c: float = 0.05

    # Exhaust pipe (heat-loss geometry for the manifold temperature).
    d_pipe: float = 0.15
    l_pipe: float = 2.5
    n_pipe: int = 2

    # Actuator dynamics: first-order time constants and input delays.
    tau_egr1: float = 0.05
    tau_egr2: float = 0.13
    tau_vgt: float = 0.15
    tau_degr: float = 0.06
    tau_dvgt: float = 0.04
    K_egr: float = 1.8

    # EGR valve flow.
    Pi_egropt: float = 0.65
    c_egr1: float = -1.40625e-4
    c_egr2: float = 0.0225
    c_egr3: float = 0.0

    # VGT / turbine flow.
    K_t: float = 1.8
    c_f1: float = 0.7
    c_f2: float = 0.3
    c_vgt1: float = 110.0
    c_vgt2: float = 110.0

    # Turbine mechanical efficiency.
    eta_tm_max: float = 0.818
    BSR_opt: float = 0.40
    c_m1: float = 0.03
    c_m2: float = 2000.0
    c_m3: float = 0.5

    # Volumetric efficiency polynomial.
    c_vol1: float = -2.0e-4
    c_vol2: float = -2.0e-3
    c_vol3: float = 1.06

    # Compressor efficiency ellipse.
    eta_cmax: float = 0.72
    W_copt: float = 0.035
    pi_copt: float = 0.66
    c_pi: float = 0.6
    a1: float = 300.0
    a2: float = 0.2
    a3: float = 2.0

    # Compressor flow ellipse; the speed-dependent coefficients are
    # quadratics in omega_t.
    c_wpsi1: float = 1.2e-9
    c_wpsi2: float = 0.0
    c_wpsi3: float = 0.35
    c_wphi1: float = 0.0
    c_wphi2: float = 0.02
    c_wphi3: float = 5800.0
    c_psi2: float = 1.1
    c_phi2: float = 0.002

    def __post_init__(self) -> None:
        positive = (
            "R_a", "R_e", "c_pa", "c_va", "c_pe", "V_im", "V_em", "V_d",
            "T_im", "q_hv", "J_t", "R_t", "R_c", "d_pipe", "l_pipe",
            "tau_egr1", "tau_egr2", "tau_vgt",
        )
        for name in positive:
            if not getattr(self, name) > 0.0:
                raise ValueError(f"EngineConstants.{name} must be > 0")
        if not (0.0 < self.Pi_egropt < 1.0):
            raise ValueError("Pi_egropt must lie in (0, 1)")
        if not self.r_c > 1.0:
            raise ValueError("compression ratio r_c must exceed 1")
        if not (self.gamma_a > 1.0 and self.gamma_e > 1.0):
            raise ValueError("heat-capacity ratios must exceed 1")
        if self.tau_degr < 0.0 or self.tau_dvgt < 0.0:
            raise ValueError("input delays must be non-negative")

    def override(self, **kwargs) -> "EngineConstants":
        """Return a copy with the given fields replaced."""
        return replace(self, **kwargs)

    def pack(self) -> np.ndarray:
        """Flatten to a float64 vector in declared field order.

        The compiled engine core consumes this vector; indices are pinned by
        :data:`PACK_FIELDS` and must not be reordered.
        """
        return np.array([float(getattr(self, f)) for f in PACK_FIELDS])


PACK_FIELDS: tuple[str, ...] = tuple(f.name for f in fields(EngineConstants))


@dataclass(frozen=True)
class AmbientConditions:
    """Ambient temperature (K) and pressure (Pa).

    Baseline defaults are configuration placeholders, not measured values.
    """

    T_amb: float = 300.0
    p_amb: float = 1.011e5

    def __post_init__(self) -> None:
        if self.T_amb <= 0.0 or self.p_amb <= 0.0:
            raise ValueError("ambient temperature and pressure must be > 0")


PARAM_NAMES: tuple[str, ...] = ("A_egrmax", "A_vgtmax", "eta_sc", "h_tot")
PARAM_MASKS: tuple[str, ...] = ("exp", "exp", "softplus", "exp")
PARAM_SCALES: tuple[float, ...] = (1.0e-4, 1.0e-4, 1.0, 10.0)

LAB_PARAMS_NORMALIZED: tuple[float, ...] = (1.333, 1.1663, 0.9179, 1.0)
FIELD_PARAMS_NORMALIZED: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)


def _mask(kind: str, latent):
    if kind == "exp":
        return np.exp(latent)
    if kind == "softplus":
        return np.logaddexp(0.0, latent)
    raise ValueError(f"unknown mask {kind!r}")


def _mask_inverse(kind: str, value: float) -> float:
    if value <= 0.0:
        raise ValueError("masked parameter values must be > 0")
    if kind == "exp":
        return math.log(value)
    if kind == "softplus":
        # softplus(x) = v  =>  x = log(expm1(v))
        return math.log(math.expm1(value))
    raise ValueError(f"unknown mask {kind!r}")


@dataclass
class UnknownParams:
    """The four health parameters, stored as unconstrained latents.

    A fixed mask (exp or softplus) maps each latent to a strictly positive
    normalized value; multiplying by the scale factor recovers the physical
    quantity (areas in m^2, heat-transfer coefficient in W/(m^2 K)).
    """

    latents: np.ndarray = field(
        default_factory=lambda: np.zeros(len(PARAM_NAMES))
    )

    def __post_init__(self) -> None:
        self.latents = np.asarray(self.latents, dtype=float)
        if self.latents.shape != (len(PARAM_NAMES),):
            raise ValueError("expected one latent per unknown parameter")

    @classmethod
    def from_normalized(cls, values) -> "UnknownParams":
        values = np.asarray(values, dtype=float)
        lat = [_mask_inverse(m, v) for m, v in zip(PARAM_MASKS, values)]
        return cls(np.array(lat))

    def normalized(self) -> np.ndarray:
        """Masked (strictly positive) values on the normalized scale."""
        return np.array(
            [_mask(m, r) for m, r in zip(PARAM_MASKS, self.latents)]
        )

    def physical(self) -> np.ndarray:
        """Masked values converted to physical units."""
        return self.normalized() * np.asarray(PARAM_SCALES)

    def as_dict(self) -> dict:
        return dict(zip(PARAM_NAMES, self.normalized()))


def lab_params() -> UnknownParams:
    return UnknownParams.from_normalized(LAB_PARAMS_NORMALIZED)


def field_params() -> UnknownParams:
    return UnknownParams.from_normalized(FIELD_PARAMS_NORMALIZED)

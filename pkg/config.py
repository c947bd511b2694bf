"""
Configuration module for the Stokes workbench.

This module handles numerical settings (tolerances, bootstrap size, log level)
read from the environment, and the JSON schemas for run configurations and
state specifications consumed by the command-line front end.
Settings may be placed in a .env file in the project root.
"""

import os
from typing import Annotated, List, Literal, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field

load_dotenv()


class Config:
    """Configuration class for managing numerical settings."""

    def __init__(self):
        """Initialize configuration with environment variables."""
        self.boundary_threshold = self._get_float('STOKES_BOUNDARY_THRESHOLD', 1e-10)
        self.norm_tolerance = self._get_float('STOKES_NORM_TOLERANCE', 1e-10)
        self.sampling_tolerance = self._get_float('STOKES_SAMPLING_TOLERANCE', 1e-8)
        self.bootstrap_resamples = self._get_int('STOKES_BOOTSTRAP_RESAMPLES', 500)
        self.log_level = os.getenv('STOKES_LOG_LEVEL', 'WARNING').strip().upper()

    def _get_float(self, name: str, default: float) -> float:
        """
        Read a positive float from the environment.

        Args:
            name: Environment variable name
            default: Value used when the variable is unset

        Returns:
            float: The configured value

        Raises:
            ValueError: If the variable is set but not a positive number
        """
        raw = os.getenv(name)
        if raw is None or not raw.strip():
            return default

        try:
            value = float(raw)
        except ValueError:
            raise ValueError(f"{name} must be a number, got {raw!r}")

        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")
        return value

    def _get_int(self, name: str, default: int) -> int:
        """Read a positive integer from the environment."""
        raw = os.getenv(name)
        if raw is None or not raw.strip():
            return default

        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"{name} must be an integer, got {raw!r}")

        if value < 1:
            raise ValueError(f"{name} must be at least 1, got {value}")
        return value


config = Config()


ComplexPair = Tuple[float, float]


def to_complex(pair: ComplexPair) -> complex:
    """Convert a serialized [re, im] pair to a Python complex."""
    return complex(pair[0], pair[1])


class _Spec(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)


class CoherentSpec(_Spec):
    kind: Literal['coherent'] = 'coherent'
    alpha1: ComplexPair = (0.0, 0.0)
    alpha2: ComplexPair = (0.0, 0.0)
    cutoff: int = Field(20, ge=1)

    def build(self):
        from fockspace import make_coherent
        return make_coherent(to_complex(self.alpha1), to_complex(self.alpha2), self.cutoff)


class SqueezedCoherentSpec(_Spec):
    kind: Literal['squeezed_coherent'] = 'squeezed_coherent'
    alpha1: ComplexPair = (0.0, 0.0)
    alpha2: ComplexPair = (0.0, 0.0)
    zeta: ComplexPair = (0.0, 0.0)
    cutoff: int = Field(30, ge=1)

    def build(self):
        from fockspace import make_squeezed_coherent
        return make_squeezed_coherent(
            to_complex(self.alpha1), to_complex(self.alpha2),
            to_complex(self.zeta), self.cutoff,
        )


class FockSpec(_Spec):
    kind: Literal['fock'] = 'fock'
    n1: int = Field(0, ge=0)
    n2: int = Field(0, ge=0)
    cutoff: int = Field(4, ge=1)

    def build(self):
        from fockspace import make_fock
        return make_fock(self.n1, self.n2, self.cutoff)


class SuperpositionSpec(_Spec):
    kind: Literal['superposition'] = 'superposition'
    terms: List[Tuple[int, int, ComplexPair]] = Field(min_length=1)
    cutoff: int = Field(12, ge=1)

    def build(self):
        from fockspace import make_superposition
        terms = [(n1, n2, to_complex(amp)) for n1, n2, amp in self.terms]
        return make_superposition(terms, self.cutoff)


StateSpec = Annotated[
    Union[CoherentSpec, SqueezedCoherentSpec, FockSpec, SuperpositionSpec],
    Field(discriminator='kind'),
]


class StateSpecFile(BaseModel):
    """Wrapper used to validate a standalone state spec document."""

    model_config = ConfigDict(extra='forbid')

    state: StateSpec


class Tolerances(_Spec):
    oracle: float = Field(1e-8, gt=0)
    identities: float = Field(1e-8, gt=0)
    consistency: float = Field(1e-6, gt=0)


class RunConfig(BaseModel):
    """Everything a pipeline run needs; unknown keys are rejected."""

    model_config = ConfigDict(extra='forbid')

    state: Optional[StateSpec] = None
    theta_set_phi0: Optional[List[float]] = Field(None, min_length=5, max_length=5)
    theta_set_phi_half: Optional[List[float]] = Field(None, min_length=3, max_length=3)
    realization: Literal['abstract_su2', 'qqh_gadget'] = 'abstract_su2'
    mode: Literal['exact', 'sampled'] = 'exact'
    shots: int = Field(100_000, ge=1)
    seed: int = Field(0, ge=0)
    bootstrap: int = Field(default_factory=lambda: config.bootstrap_resamples, ge=1)
    verify_identities: bool = False
    out: Optional[str] = None
    csv_out: Optional[str] = None
    tolerances: Tolerances = Field(default_factory=Tolerances)


EXAMPLE_STATES = {
    'vacuum': FockSpec(n1=0, n2=0, cutoff=12),
    'horizontal': CoherentSpec(alpha1=(1.0, 0.0), cutoff=20),
    'circular': CoherentSpec(alpha1=(1.0, 0.0), alpha2=(0.0, 1.0), cutoff=20),
    'elliptic': CoherentSpec(alpha1=(1.0, 0.0), alpha2=(0.0, 0.5), cutoff=20),
    'squeezed': SqueezedCoherentSpec(alpha1=(0.5, 0.0), alpha2=(0.2, 0.0), zeta=(0.3, 0.0), cutoff=30),
    'twin_photons': FockSpec(n1=1, n2=1, cutoff=12),
    'noon': SuperpositionSpec(terms=[(2, 0, (1.0, 0.0)), (0, 2, (1.0, 0.0))], cutoff=12),
    'mixed_superposition': SuperpositionSpec(
        terms=[(0, 0, (0.6, 0.0)), (1, 2, (0.3, -0.4)), (3, 1, (0.0, 0.5)), (2, 2, (-0.2, 0.1))],
        cutoff=12,
    ),
}

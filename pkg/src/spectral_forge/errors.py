"""Exception taxonomy shared across the toolkit."""


class SpectralForgeError(Exception):
    """Base class for all package errors."""


# --- ODE engine ---

class NonFiniteState(SpectralForgeError):
    """Integration produced an overflow or NaN state."""


class EmptyInterval(SpectralForgeError):
    """Propagation requested over a zero-length interval."""


class NonPositiveLambda(SpectralForgeError):
    """Weighted norm requires a strictly positive spectral parameter."""


class ZeroState(SpectralForgeError):
    """The zero state has no projective angle."""


# --- oscillatory block construction ---

class XAtOrBelowShift(SpectralForgeError):
    """Evaluation point at or below the coordinate shift b."""


class OutOfRange(SpectralForgeError):
    """Ramp argument outside [0, 1]."""


class BadDimension(SpectralForgeError):
    """Manifold dimension must be at least 2."""


class BlockTooShort(SpectralForgeError):
    """Block too short for the asymptotic seed to be meaningful."""


class PhaseNotFound(SpectralForgeError):
    """Phase scan could not bracket the requested boundary angle."""


class ContractViolated(SpectralForgeError):
    """A certified inequality failed on the sampled grid."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class DegenerateEnergies(SpectralForgeError):
    """Target energy too close to a tracked energy for this block length."""


# --- schedule / plan ---

class EmptySpectrum(SpectralForgeError):
    """No eigenvalues supplied."""


class BudgetTooTight(SpectralForgeError):
    """Admission gate never clears within the step limit."""


class InconsistentPlan(SpectralForgeError):
    """Segment tiling does not match the plan."""


class NonNeumannAngles(SpectralForgeError):
    """Whole-line extension needs u'(0) = 0 for every eigenvalue."""


# --- origin side ---

class OutOfDomain(SpectralForgeError):
    """Radius outside the operation's domain of definition."""


class TailNotConverged(SpectralForgeError):
    """Power-series truncation tail above tolerance."""


# --- verification ---

class GridTooCoarse(SpectralForgeError):
    """Finite-difference grid does not resolve the fastest oscillation."""


class ZeroAtJunction(SpectralForgeError):
    """Eigenfunction vanishes at the matching radius."""


# --- CLI ---

class ConfigInvalid(SpectralForgeError):
    """Run configuration failed validation."""


class MissingArtifact(SpectralForgeError):
    """A pipeline stage input file is absent."""

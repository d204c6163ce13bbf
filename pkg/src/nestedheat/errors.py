"""Exception hierarchy shared by every module."""

from __future__ import annotations


class NestedHeatError(Exception):
    """Base class for all errors raised by the package."""


class BadSpec(NestedHeatError):
    """The similitude specification is inconsistent."""


class NotNested(BadSpec):
    """Copies of the fractal intersect outside their vertex sets."""


class NotConnected(BadSpec):
    """The level -1 vertex graph is disconnected."""


class TooFewEssential(BadSpec):
    """Fewer than two essential fixed points."""


class BadAddress(NestedHeatError):
    """A cell address uses an index outside 1..N."""


class EnvelopeTooLarge(NestedHeatError):
    """An enumeration would exceed the configured cell cap."""


class NotOnFractal(NestedHeatError):
    """A point is not (within tolerance) on the fractal envelope."""


class OutsideEnvelope(NotOnFractal):
    """A point lies outside the enumerated envelope."""


class NoGLP(NestedHeatError):
    """Label propagation hit a cell that admits no consistent rotation."""


class UnlabelledCell(NestedHeatError):
    """A cell was requested that the labelling does not cover."""


class VertexBase(NestedHeatError):
    """The base point of a fiber is a vertex of the base complex."""


class EmptyBoundary(NestedHeatError):
    """The single-contact boundary set is empty."""


class BadTime(NestedHeatError):
    """Time argument must be strictly positive."""


class MissingConstants(NestedHeatError):
    """Geometric constants needed for a tail bound are unavailable."""


class MCUnavailable(NestedHeatError):
    """Monte Carlo backend requested without a trajectory store."""


class NoConvergence(NestedHeatError):
    """The fiber series did not reach the requested tolerance.

    The partial :class:`~nestedheat.kernels.DensityResult` is attached as
    ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class AbsorbedAtEnvelope(NestedHeatError):
    """A walk reached the boundary of the simulated envelope."""


class InsufficientSamples(NestedHeatError):
    """Too few Monte Carlo samples for a requested estimate."""


class GridEmpty(NestedHeatError):
    """A verification grid contains no evaluable points."""

"""Exception and warning types raised across the package."""


class DistFFTError(Exception):
    """Base class for every error raised by distfft."""


# kernels
class ZeroLength(DistFFTError, ValueError):
    pass


class OutOfBounds(DistFFTError, IndexError):
    pass


class LengthMismatch(DistFFTError, ValueError):
    pass


class NonHermitian(DistFFTError, ValueError):
    pass


class TooLarge(DistFFTError, ValueError):
    pass


# layout / plan
class SlabTooManyRanks(DistFFTError, ValueError):
    """Slab decomposition requested with more ranks than planes along axis 0."""


class GridMismatch(DistFFTError, ValueError):
    pass


class RankTooLow(DistFFTError, ValueError):
    """A grid factor exceeds the length of the axis it decomposes."""


class OutOfRange(DistFFTError, IndexError):
    pass


class LayoutMismatch(DistFFTError, ValueError):
    pass


class IncompatibleLayouts(DistFFTError, ValueError):
    pass


class EmptyBlockWarning(UserWarning):
    """At least one rank owns no elements of a distribution."""


# exchange
class CountMismatch(DistFFTError, ValueError):
    pass


class ArenaExhausted(DistFFTError, RuntimeError):
    pass


# transport
class TransportError(DistFFTError, RuntimeError):
    pass


class InvalidRank(TransportError, ValueError):
    pass


class Deadlock(TransportError, TimeoutError):
    pass


class TagMismatchTimeout(Deadlock):
    """No message with the requested (source, tag) arrived before the timeout."""


class WorkerAborted(TransportError):
    """Raised inside a worker when a sibling worker failed."""


class WorkerPanic(TransportError):
    def __init__(self, rank, exc):
        super().__init__(f"rank {rank} failed: {exc!r}")
        self.rank = rank
        self.exc = exc


# spectral
class NotFrequencyLayout(DistFFTError, ValueError):
    pass


class NonZeroMean(DistFFTError, ValueError):
    pass


# bench / io
class BadMagic(DistFFTError, ValueError):
    pass


class DimMismatch(DistFFTError, ValueError):
    pass


class TruncatedFile(DistFFTError, ValueError):
    pass


class ConfigError(DistFFTError, ValueError):
    pass

"""Exception types shared across the package."""


class GibbsflowError(Exception):
    """Base class for all library errors."""


class CorpusFormatError(GibbsflowError):
    """Malformed or out-of-range input data (docword/vocab/snapshot files)."""


class PartitionError(GibbsflowError):
    """Corpus cannot be split into the requested number of chunks."""


class CapacityError(GibbsflowError):
    """No chunk layout fits the configured memory budget."""


class CountOverflowError(GibbsflowError):
    """A count exceeded the range of its configured integer width."""


class EmptyDistributionError(GibbsflowError):
    """Attempt to sample from a distribution with zero total mass."""


class ShapeMismatchError(GibbsflowError):
    """Model and corpus (or two replicas) disagree on dimensions."""


class ConsistencyError(GibbsflowError):
    """Internal count state contradicts itself (e.g. excluding an absent topic)."""


class TrainingError(GibbsflowError):
    """A worker failed while sampling; carries the failing chunk id."""

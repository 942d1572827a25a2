"""Error types raised by n2rec modules"""


class N2RecError(RuntimeError):
    """Base class for all n2rec failures reported to the user"""


class ConfigError(N2RecError):
    """Invalid configuration file, key or value"""


class IngestError(N2RecError):
    """Raw or canonical dataset could not be read"""


class EmptyDatasetError(IngestError):
    """Preprocessing left no users or no POIs"""


class SplitError(IngestError):
    """A sequence is too short to split into train and test"""


class CanonicalFormatError(IngestError):
    """Canonical file has a wrong version header or a bad checksum"""


class OptimizationError(N2RecError):
    """Optimizer received a non-finite gradient"""


class TrainingError(N2RecError):
    """A training pass produced a non-finite loss"""


class ModelError(N2RecError):
    """Model misuse: unknown kind, empty history, snapshot mismatch"""


class EvaluationError(N2RecError):
    """Evaluation could not produce a report"""

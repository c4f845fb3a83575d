"""Exception hierarchy shared across the pipeline."""


class CertprobeError(Exception):
    """Base class for all package errors."""


class EmptyQuestion(CertprobeError):
    pass


class EmptyField(CertprobeError):
    pass


class BackendUnreachable(CertprobeError):
    pass


class MissingLogprobs(CertprobeError):
    pass


class BackendTimeout(CertprobeError):
    pass


class InvalidSampling(CertprobeError):
    pass


class ScorerUnreachable(CertprobeError):
    pass


class MalformedScorerReply(CertprobeError):
    pass


class NoTokens(CertprobeError):
    pass


class NoSamples(CertprobeError):
    pass


class EmptyInput(CertprobeError):
    pass


class TooFewScores(CertprobeError):
    pass


class TooFewSamples(CertprobeError):
    pass


class InvalidPartition(CertprobeError):
    pass


class DegenerateLabels(CertprobeError):
    pass


class MissingLabels(CertprobeError):
    pass


class MissingGeneration(CertprobeError):
    pass


class ParseError(CertprobeError):
    pass


class MissingField(CertprobeError):
    pass

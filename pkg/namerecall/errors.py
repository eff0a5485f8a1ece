class NameRecallError(Exception):
    """ Base class for all errors raised by namerecall. `exit_code` is what
        the command line returns when the error reaches `main`.
    """
    exit_code = 1


class ConfigError(NameRecallError):
    exit_code = 2


class MissingApiKeyError(ConfigError):
    pass


class TaxonomyError(ConfigError):
    pass


class UnknownLabelError(TaxonomyError):
    pass


class DataError(NameRecallError):
    exit_code = 3


class BackendError(NameRecallError):
    exit_code = 4


class TransportError(BackendError):
    pass


class HttpStatusError(BackendError):

    def __init__(self, status: int, body: str = ''):
        super().__init__(f'HTTP {status}: {body[:200]}')
        self.status = status


class DatasetError(NameRecallError):
    exit_code = 5


class EvaluationError(NameRecallError):
    exit_code = 5


class PaddingError(NameRecallError):
    exit_code = 5

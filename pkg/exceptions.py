"""
    kgab exception hierarchy

    Every exception carries the process exit code the CLI reports for it.
"""


class KgabException(Exception):
    """The base exception class for all harness errors"""

    exit_code = 1


class ConfigError(KgabException, ValueError):
    """
    Invalid or inconsistent configuration: rates, guards, missing baselines.
    """

    exit_code = 2


class DataError(KgabException):
    """Base class for problems with the supplied KG, QA or manifest data"""

    exit_code = 3


class InputError(DataError, ValueError):
    """
    class InputError
    """
    def __init__(self, msg, line_number=None, source=None):
        """
        Args:
            msg (str): the exception message

        Keyword Args:
            line_number (int): 1-based line (or record) number of the
                               offending input, None if unknown
            source (str): file the input came from, None if in-memory
        """
        self.line_number = line_number
        self.source = source
        full_msg = msg
        if line_number is not None:
            full_msg = "{0} at line {1}".format(msg, line_number)
        if source:
            full_msg = "{0} ({1})".format(full_msg, source)
        super(InputError, self).__init__(full_msg)


class ParseError(InputError):
    """Malformed QA record"""


class ConsistencyError(DataError):
    """Ids or labels that do not belong to the KG they are applied to"""


class KgLookupError(DataError, LookupError):
    """
    class KgLookupError
    """
    def __init__(self, kind, key):
        """
        Args:
            kind (str): 'entity', 'relation' or 'triple'
            key: the label or id that could not be resolved
        """
        self.kind = kind
        self.key = key
        super(KgLookupError, self).__init__("unknown {0}: {1!r}".format(kind, key))


class TransportError(KgabException):
    """
    class TransportError
    """

    exit_code = 4

    def __init__(self, msg, status=None):
        """
        Args:
            msg (str): the exception message

        Keyword Args:
            status (int): last HTTP status seen, None for connection failures
        """
        self.status = status
        full_msg = msg
        if status is not None:
            full_msg = "{0} (last status {1})".format(msg, status)
        super(TransportError, self).__init__(full_msg)


class ProtocolError(TransportError):
    """Remote reply that does not follow the chat-completion schema"""


class StageError(KgabException):
    """
    class StageError
    """
    def __init__(self, stage, cause):
        """
        Args:
            stage (str): pipeline stage that failed, e.g. 'load_kg', 'ablate'
            cause (Exception): the underlying error
        """
        self.stage = stage
        self.cause = cause
        super(StageError, self).__init__("[{0}] {1}".format(stage, cause))

    @property
    def exit_code(self):
        return getattr(self.cause, 'exit_code', 1)

"""Exception hierarchy; each class maps to a CLI exit code."""


class SpkbackError(Exception):
    exit_code = 1


class ConfigError(SpkbackError, ValueError):
    exit_code = 2


class DataError(SpkbackError, ValueError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.line = line


class NumericalError(SpkbackError, ArithmeticError):
    exit_code = 4

"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class TTJacError(Exception):
    exit_code = 1


class ParameterError(TTJacError, ValueError):
    exit_code = 2


class ConfigError(ParameterError):
    pass


class ShapeError(ParameterError):
    pass


class SizeError(ParameterError):
    pass


class InputError(TTJacError, ValueError):
    exit_code = 3


class FormatError(InputError):
    pass


class GridIndexError(TTJacError, IndexError):
    exit_code = 3


class NumericalError(TTJacError, ArithmeticError):
    exit_code = 4


class DegenerateJacobianError(NumericalError):
    def __init__(self, sigma_min, sigma_max, sample=None):
        self.sigma_min = float(sigma_min)
        self.sigma_max = float(sigma_max)
        self.sample = sample
        where = "" if sample is None else f" at sample {sample}"
        super().__init__(
            f"degenerate Jacobian{where}: sigma_min={self.sigma_min:.3e}, "
            f"sigma_max={self.sigma_max:.3e}"
        )


class UnderdeterminedError(NumericalError):
    def __init__(self, core, cell):
        self.core = core
        self.cell = cell
        super().__init__(
            f"core {core}, slice {cell} has no samples and ridge is 0; "
            "least-squares problem is underdetermined"
        )

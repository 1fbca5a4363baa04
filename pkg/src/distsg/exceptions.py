"""Exception and warning types raised by distsg."""


class ValidationError(ValueError):
    """Invalid configuration, parameters or input data."""


class HorizonOverflowError(OverflowError):
    """A regressor generator left the representable range."""

    def __init__(self, sensor, step, value, run=None):
        self.sensor = sensor
        self.step = step
        self.value = value
        self.run = run
        where = f"run {run}, " if run is not None else ""
        super().__init__(
            f"regressor overflow at {where}sensor {sensor}, step {step} "
            f"(|component| = {value:.3e} > 1e150); shorten the horizon"
        )

    def __reduce__(self):
        return type(self), (self.sensor, self.step, self.value, self.run)


class OracleCapacityError(ValueError):
    """Dense stacked operators requested beyond the configured size cap."""


class DegenerateWeightWarning(UserWarning):
    """A weight matrix row has a zero diagonal entry."""

class MemoryCapExceeded(MemoryError):
    """A dense object would exceed the configured entry cap."""

    def __init__(self, n_entries, cap, what="dense tensor"):
        self.n_entries = int(n_entries)
        self.cap = int(cap)
        super().__init__(f"{what} needs {self.n_entries:.3e} entries, above the cap of {self.cap:.3e}")


class RecoveryDivergence(ArithmeticError):
    """An iterative Hankel recovery blew up (residual growth or non-finite iterate)."""


class NumericalFailure(ArithmeticError):
    """Generic numeric failure surfaced to the CLI as exit code 3."""

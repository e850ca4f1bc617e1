"""Error type shared by every module of the lab."""


class LabError(ValueError):
    """A domain error carrying a stable machine-readable code.

    The code is what callers (and the CLI) branch on; the message is for humans.
    """

    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)

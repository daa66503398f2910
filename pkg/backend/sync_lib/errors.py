"""Exception hierarchy shared by the library and the entry points."""

from typing import List, Optional


class SyncError(Exception):
    """Root of every error raised by sync_lib."""


class SeriesError(SyncError):
    """Invalid phase series or tag stream."""


class NoiseSpecError(SyncError):
    """Noise term outside the supported model."""


class LinkBelowThresholdError(SyncError):
    """A fiber link does not carry enough optical power to hold a WR lock."""

    def __init__(self, link_name: str, margin_db: float):
        self.link_name = link_name
        self.margin_db = margin_db
        super().__init__(
            f"link below sensitivity threshold: {link_name} "
            f"(margin {margin_db:.2f} dB)"
        )


class PairingError(SyncError):
    """Two tag channels cannot be matched event by event."""


class StabilityError(SyncError):
    """Stability estimator called outside its domain."""


class IndistinguishabilityError(SyncError):
    """Invalid wavepacket or jitter parameters."""


class TagFileError(SyncError):
    """Malformed tag or phase file."""

    def __init__(self, path: str, message: str, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")


class ValidationError(SyncError):
    """Scenario document violates one or more rules."""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__(
            f"{len(self.violations)} validation error(s): "
            + "; ".join(self.violations)
        )

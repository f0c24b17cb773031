"""Channel inventory and the TVSet bundle."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

ORAL_TVS = ("LA", "LP", "TBCL", "TBCD", "TTCL", "TTCD")
SOURCE_FEATURES = ("Per", "Ap", "F0")
VP = "VP"
EGG_ENV = "EGGenv"

# Order used by the 10-output single-head model and by synthetic corpora.
SI_CHANNELS = ORAL_TVS + (VP,) + SOURCE_FEATURES
NASAL_SI_CHANNELS = (VP, EGG_ENV) + SOURCE_FEATURES
ALL_CHANNELS = ORAL_TVS + (VP,) + SOURCE_FEATURES + (EGG_ENV,)


@dataclass
class TVSet:
    """Frames x channels bundle of 100 Hz trajectories with named columns."""

    names: tuple
    values: np.ndarray
    original_lengths: dict = field(default_factory=dict)
    rate_hz: float = 100.0

    def __post_init__(self):
        self.names = tuple(self.names)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise ShapeError(
                f"TVSet values of shape {self.values.shape} do not match {len(self.names)} names"
            )
        if len(set(self.names)) != len(self.names):
            raise ShapeError(f"duplicate channel names in {self.names}")

    @property
    def frames(self):
        return self.values.shape[0]

    def select(self, names):
        missing = [n for n in names if n not in self.names]
        if missing:
            raise ShapeError(f"channels {missing} not present (have {list(self.names)})")
        cols = [self.names.index(n) for n in names]
        return TVSet(tuple(names), self.values[:, cols], dict(self.original_lengths), self.rate_hz)

    def channel(self, name):
        return self.values[:, self.names.index(name)]

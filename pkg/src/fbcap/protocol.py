"""Protocol definitions for fbcap transfer functions."""

from typing import Protocol, runtime_checkable

import numpy as np


@runtime_checkable
class FrequencyResponse(Protocol):
    """Protocol for SISO systems that can be evaluated on the unit circle."""

    def freqresp(self, theta: np.ndarray | float) -> np.ndarray:
        """Return the complex response at z = exp(i*theta), elementwise over theta."""
        ...

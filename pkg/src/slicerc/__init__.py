"""Sliced-spectrum PAM4 link simulator with a reservoir-computing equalizer.

The package simulates an intensity-modulated direct-detection fiber link
whose receiver splits the signal spectrum into parallel slices, then
equalizes the photodetected slice outputs with a sliding-window echo
state network that emits several symbol decisions per window step.
Evaluation utilities cover bit error counting, SNR penalties at a FEC
threshold, and a real-multiplications-per-symbol complexity measure.
"""

__version__ = "0.1.0"

from . import esn, harness, link, metrics

__all__ = ["esn", "harness", "link", "metrics", "__version__"]

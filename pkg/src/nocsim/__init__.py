"""nocsim: cycle-driven simulator of a credit-based FPGA mesh interconnect."""

__version__ = "0.1.0"

from .kernels import LANE as kernel_lane  # noqa: F401

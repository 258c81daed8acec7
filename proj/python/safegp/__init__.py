"""Online dynamics learning with probabilistically safe control."""

from safegp._core import *  # noqa: F401,F403

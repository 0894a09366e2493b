# Copyright 2026 The WeLore Toolkit Authors
# SPDX-License-Identifier: Apache-2.0
"""Adaptive low-rank compression of decoder weights."""

from ._welore import *  # noqa: F401,F403
from ._welore import WeloreError, __doc__  # noqa: F401

__version__ = "0.1.0"

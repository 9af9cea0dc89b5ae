#! /usr/bin/env python3
#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

import sys

from . import main

if __name__ == "__main__":
    sys.exit(main())

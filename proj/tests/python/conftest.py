# SPDX-License-Identifier: Apache-2.0
import os
import shutil

import pytest


@pytest.fixture(scope="session")
def t2s_cli():
    path = os.environ.get("T2S_CLI") or shutil.which("t2s")
    if not path:
        pytest.skip("t2s executable not available (set T2S_CLI)")
    return path

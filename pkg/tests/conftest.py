#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

import json

import pytest
from httpserver import LLMStubServer

from negosim.scenario import SCENARIO_DIR, load_builtin


@pytest.fixture
def llm_server():
    with LLMStubServer() as s:
        s.start()
        yield s


@pytest.fixture
def llm_server_factory():
    servers = []

    def make(mode):
        s = LLMStubServer(mode).__enter__()
        servers.append(s)
        s.start()
        return s

    yield make

    for s in servers:
        s.__exit__(None, None, None)


@pytest.fixture(scope="session")
def uc1():
    return load_builtin("uc1")


@pytest.fixture(scope="session")
def uc2():
    return load_builtin("uc2")


@pytest.fixture
def uc1_document():
    with (SCENARIO_DIR / "uc1.json").open("r") as f:
        return json.load(f)


@pytest.fixture
def uc2_document():
    with (SCENARIO_DIR / "uc2.json").open("r") as f:
        return json.load(f)

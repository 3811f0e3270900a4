import io

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

HEADER = "phonenum,stime,etime,host,appid,url,lacid,longitude,latitude\n"

# two record pairs: a shared boundary timestamp, and a 68 km jump in ~8 minutes
BOUNDARY_PAIR = (
    "73913461166,2014-11-26 10:54:31,2014-11-26 10:54:32,,,,5701,119.90042,28.88195\n"
    "73913461166,2014-11-26 10:54:32,2014-11-26 10:54:51,,,,5701,119.89141,28.87161\n"
)
JUMP_PAIR = (
    "74424106409,2014-11-24 09:49:41,2014-11-24 09:49:49,,,,5702,120.07602,29.49888\n"
    "74424106409,2014-11-24 09:58:08,2014-11-24 09:58:13,,,,5703,120.04997,28.88697\n"
)


def csv_bytes(body: str) -> io.BytesIO:
    return io.BytesIO((HEADER + body).encode("utf-8"))


@pytest.fixture
def boundary_pair():
    return csv_bytes(BOUNDARY_PAIR)


@pytest.fixture
def jump_pair():
    return csv_bytes(JUMP_PAIR)


# -- acceptance report -------------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE[criterion] = (bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

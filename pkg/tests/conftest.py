import os

import pytest

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "3")

_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


class AcceptanceLog:
    def record(self, cid: str, ok: bool, detail: str) -> bool:
        _ACCEPTANCE[cid] = (bool(ok), detail)
        print(f"{cid} {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_ACCEPTANCE, key=lambda c: (len(c), c)):
        ok, detail = _ACCEPTANCE[cid]
        terminalreporter.write_line(f"{cid} {'PASS' if ok else 'FAIL'}  {detail}")

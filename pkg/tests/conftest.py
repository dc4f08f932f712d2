import pytest

TINY_LEXICON = """;;; tiny test lexicon
THE  DH AH0
CAT  K AE1 T
SAT  S AE1 T
ON  AA1 N
MAT  M AE1 T
DOG  D AO1 G
A  AH0
READ  R IY1 D
READ(2)  R EH1 D
DON'T  D OW1 N T
GO  G OW1
"""

_criteria = {}


@pytest.fixture
def tiny_lexicon_path(tmp_path):
    path = tmp_path / "dict.txt"
    path.write_text(TINY_LEXICON, encoding="utf-8")
    return path


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when not in ("setup", "call"):
        return
    number, title = marker.args
    if rep.when == "setup" and rep.passed:
        return
    status = "SKIP" if rep.skipped else ("PASS" if rep.passed else "FAIL")
    prev = _criteria.get(number)
    if prev and prev[1] == "FAIL":
        return
    _criteria[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, status = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")

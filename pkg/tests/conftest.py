import pathlib
import sys

SRC = pathlib.Path(__file__).resolve().parents[1] / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

REPORT = pathlib.Path(__file__).resolve().parents[1] / "acceptance_report.txt"


def pytest_sessionstart(session):
    if REPORT.exists():
        REPORT.unlink()


def pytest_terminal_summary(terminalreporter):
    # surface the acceptance pass/fail lines even under output capture
    if REPORT.exists():
        terminalreporter.section("acceptance criteria")
        for line in REPORT.read_text().splitlines():
            terminalreporter.write_line(line)

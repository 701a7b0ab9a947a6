import os
from pathlib import Path

import pytest

# Acceptance runs cache their training artifacts here so interrupted suites
# resume instead of retraining. Point COOPCONV_RUNS elsewhere to isolate.
REPO_ROOT = Path(__file__).resolve().parent.parent
os.environ.setdefault("COOPCONV_RUNS", str(REPO_ROOT / "runs"))

REPORT_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    REPORT_LINES.append(line)
    print(line, flush=True)


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not REPORT_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in REPORT_LINES:
        terminalreporter.write_line(line)
    out = Path(os.environ["COOPCONV_RUNS"]) / "acceptance_report.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(REPORT_LINES) + "\n")

"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

import pytest

TITLES = {
    1: "convexification agrees with the LP hull oracle",
    2: "simplicity and base extension divisibility",
    3: "lambda_2 soundness and S_x containment",
    4: "metric eigenvalue bounds and glued/exact agreement",
    5: "Monge-Ampere defect bounded across tau",
    6: "chart volume constant n! 2^n / eta^n",
    7: "Weil-Petersson decay exponent and constant",
    8: "Kodaira-Spencer residual and rank-1 closed form",
    9: "partition of unity, support condition, dbar mu decay",
    10: "byte-reproducible CLI reports",
}

_outcomes: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): test belongs to acceptance criterion n")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None:
            item.user_properties.append(("acceptance", m.args[0]))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is None:
        return
    n = m.args[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if hasattr(rep, "wasxfail"):
            status = "xfail"
        elif rep.passed:
            status = "pass"
        elif rep.skipped:
            status = "skip"
        else:
            status = "fail"
        _outcomes.setdefault(n, []).append(status)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(TITLES):
        got = _outcomes.get(n)
        if not got:
            continue
        verdict = "PASS" if all(s == "pass" for s in got) else "FAIL"
        note = ""
        if "xfail" in got and all(s in ("pass", "xfail") for s in got):
            note = " (literal wording unattainable, expected failure; see decisions ledger)"
        tr.write_line(f"ACCEPTANCE {n:2d} {verdict}: {TITLES[n]}{note}")

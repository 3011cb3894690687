import os

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=100,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    import json

    terminalreporter.section("acceptance criteria")
    for cid in sorted(RESULTS):
        e = RESULTS[cid]
        terminalreporter.write_line(
            f"criterion {cid:2d} {'PASS' if e['pass'] else 'FAIL'}  {e['name']}: "
            f"measured {json.dumps(e['measured'])}, tolerance {json.dumps(e['tolerance'])}"
        )

"""Smoke test for the `epg` extension module.

Run from the repository root after `pip install --no-build-isolation -e crates/py`.
"""

import json
import pathlib
import sys

import epg

ROOT = pathlib.Path(__file__).resolve().parent.parent
EXAMPLES = ROOT / "crates" / "core" / "tests" / "fixtures"


def main() -> int:
    attack = EXAMPLES / "foo_bar_attack.json"

    report = epg.analyze_file(attack)
    assert report.exit_code == 2, report
    assert [f.rule for f in report.findings] == ["Reentrancy"], report.findings
    assert report.findings[0].pc == 384
    assert json.loads(report.to_json())["txHash"] == report.tx_hash

    same = epg.analyze(attack.read_bytes(), detectors=["reentrancy"])
    assert [f.pc for f in same.findings] == [384]

    clean = epg.analyze_file(EXAMPLES / "empty_transfer.json")
    assert clean.exit_code == 0 and not clean.findings

    tx = epg.Transaction.from_file(attack)
    assert tx.frame_count == 7
    assert len(tx.traverse("transfer-blocks")) == 3
    pairs = tx.traverse("reentrant-pairs")
    assert pairs, "expected at least one reentrant pair"
    assert [f.rule for f in tx.findings()] == ["Reentrancy"]

    ctg = epg.Transaction.from_file(attack, per_frame=False).export("ctg", "dot")
    assert sum('kind="Contract"' in line for line in ctg.splitlines()) == 3

    try:
        epg.analyze_file(EXAMPLES / "malformed.json")
    except epg.EpgError as e:
        assert "malformed" in str(e)
    else:
        raise AssertionError("malformed trace was accepted")

    print(f"ok: {report!r}, {tx!r}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

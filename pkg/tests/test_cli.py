"""Command line tests, including one full loopback sign-on."""

from __future__ import annotations

import json
from datetime import date, timedelta

import pytest
from click.testing import CliRunner

from idgate.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def seeded_dir(tmp_path, runner):
    data_dir = str(tmp_path / "records")
    result = runner.invoke(main, ["seed", "--data-dir", data_dir])
    assert result.exit_code == 0, result.output
    return data_dir


def test_seed_reports_counts(seeded_dir, runner):
    result = runner.invoke(main, ["user", "list", "--data-dir", seeded_dir])
    assert result.exit_code == 0
    assert "root" in result.output
    assert "dharmendra" in result.output


def test_seed_refuses_second_run(seeded_dir, runner):
    result = runner.invoke(main, ["seed", "--data-dir", seeded_dir])
    assert result.exit_code == 2
    assert "empty store" in result.output


def test_seed_requires_data_dir(runner):
    result = runner.invoke(main, ["seed"])
    assert result.exit_code == 2


def test_user_add_and_list(tmp_path, runner):
    data_dir = str(tmp_path / "records")
    result = runner.invoke(main, ["user", "add", "amy", "--data-dir", data_dir])
    assert result.exit_code == 0
    assert "user 1: amy" in result.output
    result = runner.invoke(
        main, ["user", "add", "beth", "--data-dir", data_dir, "--json"]
    )
    assert json.loads(result.output) == {"user_id": 2, "user_name": "beth"}
    result = runner.invoke(main, ["user", "list", "--data-dir", data_dir, "--json"])
    names = [u["user_name"] for u in json.loads(result.output)["users"]]
    assert names == ["amy", "beth"]


def test_user_add_duplicate_is_invalid(tmp_path, runner):
    data_dir = str(tmp_path / "records")
    runner.invoke(main, ["user", "add", "amy", "--data-dir", data_dir])
    result = runner.invoke(main, ["user", "add", "amy", "--data-dir", data_dir])
    assert result.exit_code == 2


def test_role_add_by_owner_name(seeded_dir, runner):
    result = runner.invoke(
        main,
        ["role", "add", "8", "Auditor", "--owner", "root", "--data-dir", seeded_dir],
    )
    assert result.exit_code == 0, result.output
    assert "role 8: Auditor (owner 1)" in result.output
    result = runner.invoke(main, ["role", "list", "--data-dir", seeded_dir, "--json"])
    rows = {r["id"]: r for r in json.loads(result.output)["roles"]}
    assert rows["8"]["scope"] == "global"
    assert rows["10"]["scope"] == "local"


def test_resolve_seeded_schedule(seeded_dir, runner):
    result = runner.invoke(
        main, ["resolve", "1", "--date", "2008-03-01", "--data-dir", seeded_dir]
    )
    assert result.exit_code == 0
    assert result.output.strip() == "12 13"
    result = runner.invoke(
        main, ["resolve", "root", "--date", "2008-06-01", "--data-dir", seeded_dir]
    )
    assert result.output.strip() == "12"
    result = runner.invoke(
        main,
        ["resolve", "2", "--date", "2008-01-01", "--data-dir", seeded_dir, "--json"],
    )
    assert json.loads(result.output)["roles"] == ["12"]


def test_resolve_unknown_user(seeded_dir, runner):
    result = runner.invoke(
        main, ["resolve", "99", "--date", "2008-01-01", "--data-dir", seeded_dir]
    )
    assert result.exit_code == 3
    result = runner.invoke(
        main, ["resolve", "nobody", "--date", "2008-01-01", "--data-dir", seeded_dir]
    )
    assert result.exit_code == 3


def test_assign_validates_dates(seeded_dir, runner):
    result = runner.invoke(
        main,
        [
            "assign", "2", "3",
            "--valid-from", "soon",
            "--valid-upto", "2008-12-31",
            "--data-dir", seeded_dir,
        ],
    )
    assert result.exit_code == 2


def test_assign_then_resolve(seeded_dir, runner):
    result = runner.invoke(
        main,
        [
            "assign", "2", "3",
            "--valid-from", "2008-01-01",
            "--valid-upto", "2008-12-31",
            "--data-dir", seeded_dir, "--json",
        ],
    )
    assert result.exit_code == 0, result.output
    record = json.loads(result.output)
    assert record["role_id"] == "3"
    result = runner.invoke(
        main, ["resolve", "2", "--date", "2008-06-01", "--data-dir", seeded_dir]
    )
    assert result.output.strip() == "3"


def test_delegation_lifecycle(seeded_dir, runner):
    today = date.today()
    upto = today + timedelta(days=3)
    result = runner.invoke(
        main,
        [
            "delegate", "1", "2", "3",
            "--valid-from", today.isoformat(),
            "--valid-upto", upto.isoformat(),
            "--data-dir", seeded_dir, "--json",
        ],
    )
    assert result.exit_code == 0, result.output
    record = json.loads(result.output)
    assert record["clamped"] is False
    assert record["warning"] is None
    result = runner.invoke(
        main, ["holder", "3", "--date", today.isoformat(), "--data-dir", seeded_dir]
    )
    assert result.output.strip() == "dharmendra"
    result = runner.invoke(
        main, ["revoke", str(record["s_no"]), "--data-dir", seeded_dir]
    )
    assert result.exit_code == 0
    result = runner.invoke(
        main, ["holder", "3", "--date", today.isoformat(), "--data-dir", seeded_dir]
    )
    assert result.output.strip() == "root"


def test_delegation_clamp_prints_warning(seeded_dir, runner):
    today = date.today()
    result = runner.invoke(
        main,
        [
            "delegate", "1", "2", "3",
            "--valid-from", (today - timedelta(days=5)).isoformat(),
            "--valid-upto", (today + timedelta(days=2)).isoformat(),
            "--data-dir", seeded_dir,
        ],
    )
    assert result.exit_code == 0, result.output
    assert "was clamped to" in result.output


def test_delegate_without_holding_is_not_allowed(seeded_dir, runner):
    today = date.today()
    result = runner.invoke(
        main,
        [
            "delegate", "2", "3", "0",
            "--valid-from", today.isoformat(),
            "--valid-upto", today.isoformat(),
            "--data-dir", seeded_dir,
        ],
    )
    assert result.exit_code == 4


def test_holder_by_role_name(seeded_dir, runner):
    result = runner.invoke(
        main,
        ["holder", "Registrar", "--date", "2020-01-01", "--data-dir", seeded_dir],
    )
    assert result.exit_code == 0
    assert result.output.strip() == "root"
    result = runner.invoke(
        main,
        ["holder", "No Such Role", "--date", "2020-01-01", "--data-dir", seeded_dir],
    )
    assert result.exit_code == 3


def test_end_to_end_login_over_loopback(runner):
    result = runner.invoke(main, ["e2e-login", "--json"])
    assert result.exit_code == 0, result.output
    payload = json.loads(result.output.strip().splitlines()[-1])
    assert payload["email"] == "demo@example.org"
    assert set(payload["roles"]) >= {"6", "7"}
    assert payload["identity"].endswith("/id/demo")

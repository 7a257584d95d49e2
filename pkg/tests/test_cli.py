import json

import pytest

from binforge.cli import main, resolve_option

from helpers import add_repo, make_dataset, synthetic_binary


@pytest.fixture()
def populated(tmp_path):
    ds = make_dataset(tmp_path)
    repo = add_repo(ds, license_id="MIT")
    for i in range(3):
        synthetic_binary(ds, repo, file_name=f"p{i}", content=f"{i}".encode(),
                         n_functions=i + 1, license_id="MIT")
    ds.close()
    return tmp_path / "ds.db"


def test_validate_clean_dataset_exit_zero(populated, capsys):
    assert main(["validate", str(populated)]) == 0
    out = capsys.readouterr().out
    assert "0 violations" in out


def test_validate_json_output(populated, capsys):
    assert main(["validate", str(populated), "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc == {"violations": [], "count": 0}


def test_validate_reports_violations_exit_one(populated, capsys):
    import sqlite3

    conn = sqlite3.connect(populated)
    conn.execute("INSERT INTO functions VALUES (999999, 888888, 'ghost', ?, ?)",
                 ("0" * 64, "0" * 64))
    conn.commit()
    conn.close()
    assert main(["validate", str(populated)]) == 1


def test_stats_json_contains_pearson(populated, capsys):
    assert main(["stats", str(populated), "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert "pearson_r" in doc
    assert doc["binary_count"] == 3


def test_stats_human_output(populated, capsys):
    assert main(["stats", str(populated)]) == 0
    assert "binaries:" in capsys.readouterr().out


def test_usage_error_exit_two():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_operational_failure_exit_one(tmp_path, capsys):
    assert main(["stats", str(tmp_path / "missing.db")]) == 1
    assert "error:" in capsys.readouterr().err


def test_env_precedence(tmp_path, monkeypatch):
    config = {"db": "from_config"}
    assert resolve_option("db", "from_flag", config) == "from_flag"
    monkeypatch.setenv("BINFORGE_DB", "from_env")
    assert resolve_option("db", None, config) == "from_env"
    monkeypatch.delenv("BINFORGE_DB")
    assert resolve_option("db", None, config) == "from_config"
    assert resolve_option("db", None, {}, "fallback") == "fallback"


def test_db_resolution_via_env(populated, monkeypatch, capsys):
    monkeypatch.setenv("BINFORGE_DB", str(populated))
    assert main(["stats"]) == 0


def test_db_resolution_via_config_file(populated, tmp_path, capsys):
    ini = tmp_path / "binforge.ini"
    ini.write_text(f"[binforge]\ndb = {populated}\n")
    assert main(["--config", str(ini), "stats"]) == 0


def test_extract_json(tmp_path, capsys):
    import subprocess

    src = tmp_path / "t.c"
    src.write_text("int add_one(int x){return x+1;}\nint main(void){return add_one(1);}\n")
    binary = tmp_path / "t"
    subprocess.run(["gcc", "-g", "-O0", "-o", str(binary), str(src)], check=True)
    assert main(["extract", str(binary), "--source-root", str(tmp_path), "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    names = {fn["name"] for fn in doc["functions"]}
    assert {"add_one", "main"} <= names


def test_crawl_seed_and_enqueue(tmp_path, capsys):
    import subprocess

    repo = tmp_path / "proj"
    repo.mkdir()
    (repo / "Makefile").write_text("app: main.c\n\t$(CC) -o app main.c\n")
    (repo / "main.c").write_text("int main(void){return 0;}\n")
    subprocess.run(["git", "init", "-q"], cwd=repo, check=True)
    subprocess.run(["git", "config", "user.email", "t@t"], cwd=repo, check=True)
    subprocess.run(["git", "config", "user.name", "t"], cwd=repo, check=True)
    subprocess.run(["git", "add", "."], cwd=repo, check=True)
    subprocess.run(["git", "commit", "-qm", "x"], cwd=repo, check=True)
    seed = tmp_path / "seeds.txt"
    seed.write_text(f"{repo}\n")

    db = tmp_path / "corpus.db"
    archive = tmp_path / "corpus_archive"
    from binforge.store import Dataset

    Dataset.create(db, archive).close()

    assert main([
        "crawl", "--seed", str(seed), "--profile", "linux",
        "--db", str(db), "--archive", str(archive),
    ]) == 0
    assert "accepted 1" in capsys.readouterr().out

    assert main([
        "enqueue", "--db", str(db), "--archive", str(archive),
        "--toolchains", "gcc=11.4.0,clang=14.0.0", "--opts", "O0,O1,O2,O3",
    ]) == 0
    out = capsys.readouterr().out
    assert "enqueued 8 tasks" in out


def test_export_recipe_cli(populated, tmp_path, capsys):
    out_path = tmp_path / "corpus.recipe.json"
    assert main(["export-recipe", str(populated), "--out", str(out_path)]) == 0
    doc = json.loads(out_path.read_text())
    assert doc["recipe_version"] == 1
    assert len(doc["entries"]) == 1

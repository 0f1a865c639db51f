import os

import pytest

import install


@pytest.mark.skipif(os.name == "nt", reason="POSIX shim")
def test_shim_runs_main_with_venv_python(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(install, "BIN_DIR", tmp_path)
    monkeypatch.setattr(install, "PY_EXE", tmp_path / "python")
    install.write_shim()
    shim = tmp_path / "reluflow"
    text = shim.read_text(encoding="utf-8")
    assert text.startswith("#!/bin/sh\n")
    assert str(tmp_path / "python") in text and str(install.BASE_DIR / "main.py") in text
    assert os.access(shim, os.X_OK)
    assert "Installation complete" in capsys.readouterr().out


def test_missing_interpreter_aborts(tmp_path, monkeypatch):
    monkeypatch.setattr(install, "VENV_DIR", tmp_path)
    monkeypatch.setattr(install, "PY_EXE", tmp_path / "bin" / "python")
    with pytest.raises(SystemExit) as err:
        install.create_venv()
    assert err.value.code == 1

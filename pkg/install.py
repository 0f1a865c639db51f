#!/usr/bin/env python3
# reluflow
# See LICENSE for details.
"""
reluflow installer

- Creates a virtual environment in .venv/
- Installs dependencies from requirements.txt
- Writes a `reluflow` shim next to the venv interpreter

Usage:
    python install.py
"""

import os
import subprocess
import sys
import venv
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent
VENV_DIR = BASE_DIR / ".venv"
REQ_FILE = BASE_DIR / "requirements.txt"
BIN_DIR = VENV_DIR / ("Scripts" if os.name == "nt" else "bin")
PY_EXE = BIN_DIR / ("python.exe" if os.name == "nt" else "python")


def create_venv():
    if VENV_DIR.exists():
        print("[*] Virtual environment already exists. Skipping creation.")
    else:
        print("[*] Creating virtual environment in .venv/")
        venv.EnvBuilder(with_pip=True).create(str(VENV_DIR))

    if not PY_EXE.exists():
        print(f"[-] Could not find expected Python interpreter in venv: {PY_EXE}")
        sys.exit(1)
    print(f"[*] Verified venv interpreter: {PY_EXE}")


def install_deps():
    print("[*] Installing dependencies from requirements.txt")
    if not REQ_FILE.exists():
        print("[-] requirements.txt not found!")
        sys.exit(1)

    try:
        subprocess.check_call([str(PY_EXE), "-m", "pip", "install", "--upgrade", "pip"])
    except subprocess.CalledProcessError as e:
        print(f"[!] pip upgrade failed (non-fatal): rc={e.returncode}")
    subprocess.check_call([str(PY_EXE), "-m", "pip", "install", "-r", str(REQ_FILE)])


def write_shim():
    main_file = BASE_DIR / "main.py"
    if os.name == "nt":
        shim = BIN_DIR / "reluflow.cmd"
        shim.write_text(f'@echo off\r\n"{PY_EXE}" "{main_file}" %*\r\n', encoding="utf-8")
    else:
        shim = BIN_DIR / "reluflow"
        shim.write_text(f'#!/bin/sh\nexec "{PY_EXE}" "{main_file}" "$@"\n', encoding="utf-8")
        shim.chmod(0o755)
    print(f"\n✅ Installation complete! Run experiments with:\n  {shim} <subcommand> --config <path> --out <dir>\n")


def main():
    create_venv()
    install_deps()
    write_shim()


if __name__ == "__main__":
    main()

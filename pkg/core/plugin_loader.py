# reluflow
# See LICENSE for details.

"""
Discover the subcommand plugins under <project_root>/plugins.
Returns a dict {SUBCOMMAND: module}.
"""
from __future__ import annotations

import importlib
import logging
import sys
from pathlib import Path
from typing import Dict

log = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).resolve().parent.parent
PLUGIN_DIR = PROJECT_ROOT / "plugins"

# never loaded as subcommands (case-insensitive stem match)
IGNORE_STEMS = {"__init__", "template"}
DISABLED_SUFFIXES = (".bak", ".disabled", ".example", ".tmp", "~")


def _is_candidate(path: Path) -> bool:
    if not path.is_file() or path.suffix != ".py":
        return False
    if path.stem.lower() in IGNORE_STEMS or path.name.startswith("_"):
        return False
    return not path.name.endswith(DISABLED_SUFFIXES)


def _import(stem: str):
    try:
        return importlib.import_module(f"plugins.{stem}")
    except Exception as e:
        log.warning("plugin import: skip %s: %s", stem, e)
        return None


def discover_plugins(run_validate: bool = True) -> Dict[str, object]:
    """
    Import every candidate module and key it by its SUBCOMMAND.

    A module without SUBCOMMAND or run(), or whose validate() raises, is
    skipped with a warning. When two modules claim the same subcommand the
    one whose file name sorts first wins.
    """
    found: Dict[str, object] = {}
    if not PLUGIN_DIR.is_dir():
        log.error("no plugins directory at %s", PLUGIN_DIR)
        return found

    if str(PROJECT_ROOT) not in sys.path:
        sys.path.insert(0, str(PROJECT_ROOT))

    for path in sorted(PLUGIN_DIR.iterdir(), key=lambda p: p.name.lower()):
        if not _is_candidate(path):
            continue
        module = _import(path.stem)
        if module is None:
            continue

        subcommand = getattr(module, "SUBCOMMAND", None)
        if not subcommand or not callable(getattr(module, "run", None)):
            log.warning("plugin import: skip %s: no SUBCOMMAND/run", path.stem)
            continue
        if run_validate and hasattr(module, "validate"):
            try:
                module.validate()
            except Exception as e:
                log.warning("plugin validate: skip %s: %s", subcommand, e)
                continue
        if subcommand in found:
            log.warning("plugin %s redefines subcommand %r; keeping the first", path.stem, subcommand)
            continue
        found[subcommand] = module

    log.debug("plugins from %s: %s", PLUGIN_DIR, ", ".join(sorted(found)))
    return found


def describe_plugins(plugins: Dict[str, object]) -> str:
    """One `name  description` line per subcommand, for --help."""
    width = max((len(name) for name in plugins), default=0)
    return "\n".join(f"  {name.ljust(width)}  {getattr(plugins[name], 'DESCRIPTION', '')}"
                     for name in sorted(plugins))

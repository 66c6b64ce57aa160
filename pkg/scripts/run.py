#!/usr/bin/env python3
"""
Universal runner for oraclesim scripts.
Ensures scripts always run inside the local virtual environment.
"""

import os
import subprocess
import sys
from pathlib import Path

DEFAULT_SCRIPT = "oraclesim.py"


def get_venv_python() -> Path:
    """Return venv python path for current platform."""
    project_dir = Path(__file__).parent.parent
    venv_dir = project_dir / ".venv"

    if os.name == "nt":
        return venv_dir / "Scripts" / "python.exe"
    return venv_dir / "bin" / "python"


def ensure_venv() -> Path:
    """Create/setup virtual environment when missing."""
    project_dir = Path(__file__).parent.parent
    venv_dir = project_dir / ".venv"
    setup_script = project_dir / "scripts" / "setup_environment.py"

    if not venv_dir.exists():
        # stdout is reserved for reports
        print("🔧 First-time setup: creating virtual environment...", file=sys.stderr)
        result = subprocess.run([sys.executable, str(setup_script)], stdout=sys.stderr)
        if result.returncode != 0:
            print("❌ Failed to set up environment", file=sys.stderr)
            raise SystemExit(1)
        print("✅ Environment ready", file=sys.stderr)

    return get_venv_python()


def resolve_script(argv: list) -> tuple:
    """`run.py oraclesim.py sim run ...` and `run.py sim run ...` are equivalent."""
    if not argv:
        return None, []
    name = argv[0]
    if name.startswith("scripts/"):
        name = name[8:]
    if name.endswith(".py"):
        return name, argv[1:]
    return DEFAULT_SCRIPT, argv


def main():
    script_name, script_args = resolve_script(sys.argv[1:])
    if script_name is None:
        print("Usage: python scripts/run.py [oraclesim.py] <command> [args...]", file=sys.stderr)
        print("\nCommands:", file=sys.stderr)
        print("  sim run        - Run one simulator scenario", file=sys.stderr)
        print("  sim replicate  - Replicate a scenario over consecutive seeds", file=sys.stderr)
        print("  lex analyze    - Lexical aggregates for a query corpus", file=sys.stderr)
        print("  lex classify   - Classify a query by who could answer it", file=sys.stderr)
        print("  urn demo       - Sealed-urn commit/reveal transcript", file=sys.stderr)
        raise SystemExit(2)

    project_dir = Path(__file__).parent.parent
    script_path = project_dir / "scripts" / script_name

    if not script_path.exists():
        print(f"❌ Script not found: {script_name}", file=sys.stderr)
        print(f"   Looked for: {script_path}", file=sys.stderr)
        raise SystemExit(1)

    venv_python = ensure_venv()
    cmd = [str(venv_python), str(script_path)] + script_args

    try:
        result = subprocess.run(cmd)
        raise SystemExit(result.returncode)
    except KeyboardInterrupt:
        print("\n⚠️ Interrupted by user", file=sys.stderr)
        raise SystemExit(130)
    except OSError as e:
        print(f"❌ Error: {e}", file=sys.stderr)
        raise SystemExit(1)


if __name__ == "__main__":
    main()

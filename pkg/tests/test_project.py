import os
from importlib import metadata

from packaging.requirements import Requirement
from packaging.utils import canonicalize_name

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def read_names(filename):
    with open(os.path.join(ROOT, filename), "r", encoding="utf-8") as f:
        lines = [line.strip() for line in f]
    return {canonicalize_name(Requirement(line).name) for line in lines if line and not line.startswith("#")}


def closure(names):
    seen, todo = set(), list(names)
    while todo:
        name = todo.pop()
        if name in seen:
            continue
        seen.add(name)
        try:
            requires = metadata.requires(name) or []
        except metadata.PackageNotFoundError:
            continue
        for spec in requires:
            req = Requirement(spec)
            # Optional extras are not installed.
            if req.marker is not None and "extra" in str(req.marker):
                continue
            todo.append(canonicalize_name(req.name))
    return seen


def test_pins_cover_top_level_requirements():
    assert read_names("requirements manual.txt") <= read_names("requirements.txt")


def test_every_pin_is_needed():
    pinned = read_names("requirements.txt")
    needed = closure(read_names("requirements manual.txt"))
    assert pinned - needed == set()


def test_modules_carry_file_banner():
    rule = "# " + "*" * 60
    for package in ("core", "integrations"):
        for name in sorted(os.listdir(os.path.join(ROOT, package))):
            if not name.endswith(".py"):
                continue
            with open(os.path.join(ROOT, package, name), "r", encoding="utf-8") as f:
                head = [f.readline().rstrip("\n") for _ in range(3)]
            assert head == [rule, f"#  {package}/{name}", rule], name

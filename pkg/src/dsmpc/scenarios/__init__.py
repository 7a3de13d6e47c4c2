"""Bundled scenario files."""

from importlib import resources

from ..model import load_scenario


def bundled_path(name):
    """Filesystem path of a bundled scenario (e.g. 'formation3')."""
    res = resources.files(__package__).joinpath(f"{name}.json")
    with resources.as_file(res) as path:
        return str(path)


def load(name):
    """Load a bundled scenario by name."""
    return load_scenario(bundled_path(name))

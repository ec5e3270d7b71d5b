"""Bundled datasets."""

from importlib import resources
from pathlib import Path

LFP_COLUMNS = {
    "y1": "inlf",
    "y2": "educ",
    "x": ["exper", "expersq", "nwifeinc", "age", "kidslt6", "kidsge6"],
    "z": ["fatheduc", "motheduc"],
}


def lfp_path() -> Path:
    """Path to the married-women labor-force-participation CSV (753 rows:
    participation indicator, schooling, experience and its square, other
    household income, age, child counts, and parents' schooling)."""
    with resources.as_file(resources.files(__package__) / "lfp.csv") as p:
        return Path(p)


def load_lfp():
    """The LFP fixture as a Dataset plus its column roles."""
    from ..cli import ColumnRoles, load_csv

    roles = ColumnRoles(
        y1=LFP_COLUMNS["y1"],
        y2=LFP_COLUMNS["y2"],
        x=list(LFP_COLUMNS["x"]),
        z=list(LFP_COLUMNS["z"]),
    )
    data, _ = load_csv(lfp_path(), roles)
    return data, roles

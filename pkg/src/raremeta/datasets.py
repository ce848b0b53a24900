"""Bundled application datasets.

example1: 18 trials of anti-infective-treated vs standard central venous
          catheters, counting catheter-related bloodstream infections
          (treatment arm = AIT catheter).
example2: 16 trials of intravenous magnesium after acute myocardial
          infarction, counting deaths (treatment arm = magnesium).
example3: the treatment arm of example1 alone, for meta-analysis of the
          infection proportion.
example4: 14 single-group studies of hyperdynamic therapy for cerebral
          vasospasm; the event is "not improved".
"""

from __future__ import annotations

from .effects import OneArmStudy, TwoArmStudy

# (y1, n1, y0, n0): treatment events/size, control events/size
_EXAMPLE1 = (
    (0, 116, 3, 117),
    (1, 44, 3, 35),
    (2, 208, 9, 195),
    (0, 130, 7, 136),
    (5, 151, 6, 157),
    (1, 98, 4, 139),
    (1, 174, 3, 177),
    (1, 74, 2, 39),
    (1, 97, 19, 103),
    (1, 113, 2, 122),
    (0, 66, 7, 64),
    (0, 70, 1, 58),
    (3, 188, 5, 175),
    (6, 187, 11, 180),
    (0, 118, 0, 105),
    (0, 252, 1, 262),
    (1, 345, 3, 362),
    (4, 64, 1, 69),
)

_EXAMPLE2 = (
    (1, 40, 2, 36),
    (9, 135, 23, 135),
    (2, 200, 7, 200),
    (1, 48, 1, 46),
    (10, 150, 8, 148),
    (1, 59, 9, 56),
    (1, 25, 3, 23),
    (0, 22, 1, 21),
    (6, 76, 11, 75),
    (1, 27, 7, 27),
    (2, 89, 12, 80),
    (5, 23, 13, 33),
    (4, 130, 8, 122),
    (90, 1159, 118, 1157),
    (4, 107, 17, 108),
    (2216, 29011, 2103, 29039),
)

# (y, n): "not improved" out of patients
_EXAMPLE4 = (
    (1, 17),
    (2, 12),
    (4, 8),
    (15, 58),
    (0, 10),
    (17, 42),
    (1, 14),
    (0, 12),
    (19, 41),
    (1, 5),
    (1, 6),
    (5, 23),
    (10, 68),
    (4, 10),
)

EXAMPLE_NAMES = ("example1", "example2", "example3", "example4")


def load_example(name: str):
    """Return the named bundled dataset as a list of study records."""
    if name == "example1":
        return [TwoArmStudy(*row) for row in _EXAMPLE1]
    if name == "example2":
        return [TwoArmStudy(*row) for row in _EXAMPLE2]
    if name == "example3":
        return [OneArmStudy(row[0], row[1]) for row in _EXAMPLE1]
    if name == "example4":
        return [OneArmStudy(*row) for row in _EXAMPLE4]
    raise KeyError(f"unknown example {name!r}; choose from {EXAMPLE_NAMES}")

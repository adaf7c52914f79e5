"""Hand-derived reparameterized effects on the builtin anticausal example graph.

Each entry maps ``(child, parent)`` to a function of the original path
coefficients ``t(child, parent)``. Pairs not listed as nonzero are zero.
"""
import numpy as np

NONZERO = {
    ("Y", "C3"): lambda t: t("Y", "C3"),
    ("M1", "C3"): lambda t: t("M1", "M2") * t("M2", "C3"),
    ("M2", "C3"): lambda t: t("M2", "C3"),
    ("M1", "Y"): lambda t: t("M1", "M2") * t("M2", "Y"),
    ("M2", "Y"): lambda t: t("M2", "Y"),
    ("X1", "C2"): lambda t: t("X1", "C2"),
    ("X2", "C2"): lambda t: t("X2", "X1") * t("X1", "C2"),
    ("X3", "C2"): lambda t: (t("X1", "C2") * t("X3", "X1")
                             + t("X1", "C2") * t("X2", "X1") * t("X3", "X2")),
    ("X3", "M1"): lambda t: t("X3", "M1"),
    ("X1", "M2"): lambda t: t("X1", "M2"),
    ("X2", "M2"): lambda t: t("X1", "M2") * t("X2", "X1"),
    ("X3", "M2"): lambda t: (t("X1", "M2") * t("X3", "X1")
                             + t("X1", "M2") * t("X2", "X1") * t("X3", "X2")),
    ("X2", "Y"): lambda t: t("X2", "Y"),
    ("X3", "Y"): lambda t: t("X3", "Y") + t("X3", "X2") * t("X2", "Y"),
}

ZERO = [
    ("Y", "C1"), ("Y", "C2"),
    ("M1", "C1"), ("M1", "C2"), ("M2", "C1"), ("M2", "C2"),
    ("X1", "C1"), ("X1", "C3"), ("X2", "C1"), ("X2", "C3"), ("X3", "C1"), ("X3", "C3"),
    ("X1", "M1"), ("X2", "M1"),
    ("X1", "Y"),
]

BLOCK_OF = {"Y": "Y", "M1": "M", "M2": "M", "X1": "X", "X2": "X", "X3": "X",
            "C1": "C", "C2": "C", "C3": "C"}


def gamma_entry(scm, rep, child, parent) -> float:
    key = BLOCK_OF[child] + BLOCK_OF[parent]
    rows = list(scm.names_of(BLOCK_OF[child]))
    cols = list(scm.names_of(BLOCK_OF[parent]))
    return float(rep.gamma[key][rows.index(child), cols.index(parent)])


def random_theta(scm, gen) -> np.ndarray:
    """Fresh U(-0.9, 0.9) coefficients on the model's edge set."""
    mask = scm.theta != 0
    theta = np.zeros_like(scm.theta)
    theta[mask] = gen.uniform(-0.9, 0.9, size=int(mask.sum()))
    return theta


def max_table_error(scm, rep) -> float:
    def t(child, parent):
        return scm.coefficient(child, parent)

    worst = 0.0
    for (child, parent), f in NONZERO.items():
        worst = max(worst, abs(gamma_entry(scm, rep, child, parent) - f(t)))
    for child, parent in ZERO:
        worst = max(worst, abs(gamma_entry(scm, rep, child, parent)))
    return worst

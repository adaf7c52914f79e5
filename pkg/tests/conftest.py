import numpy as np
import pytest

from decon.io import read_scm
from decon.scm import Role, Task, standardized_from_paths

X, C, M, Y = Role.FEATURE, Role.CONFOUNDER, Role.MEDIATOR, Role.RESPONSE


def univariate_anticausal(xy, xc, yc, xm=None, my=0.0, mc=0.0):
    """Standardized C, Y, [M,] X model with the given path coefficients."""
    if xm is None:
        names, roles = ["C", "Y", "X"], [C, Y, X]
        theta = np.zeros((3, 3))
        theta[1, 0], theta[2, 1], theta[2, 0] = yc, xy, xc
    else:
        names, roles = ["C", "Y", "M", "X"], [C, Y, M, X]
        theta = np.zeros((4, 4))
        theta[1, 0] = yc
        theta[2, 1], theta[2, 0] = my, mc
        theta[3, 1], theta[3, 0], theta[3, 2] = xy, xc, xm
    return standardized_from_paths(names, roles, theta, Task.ANTICAUSAL)


def univariate_causal(yx, yc, xc):
    names, roles = ["C", "X", "Y"], [C, X, Y]
    theta = np.zeros((3, 3))
    theta[1, 0], theta[2, 1], theta[2, 0] = xc, yx, yc
    return standardized_from_paths(names, roles, theta, Task.CAUSAL)


@pytest.fixture(scope="session")
def anticausal_example():
    return read_scm("builtin:anticausal_example")


@pytest.fixture(scope="session")
def causal_example():
    return read_scm("builtin:causal_example")

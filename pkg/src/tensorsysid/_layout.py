"""Flat layout of the augmented state vector.

Blocks are stored back to back in the order
``x, phi, theta, phi1, theta1, chi1, chi2``; each block is the row-major
ravel of its tensor.  Which blocks are present depends on the propagation
order (0: state only, 1: first-order sensitivities, 2: everything).
"""

BLOCKS = ("x", "phi", "theta", "phi1", "theta1", "chi1", "chi2")


def block_shapes(n, m):
    return {
        "x": (n,),
        "phi": (n, n),
        "theta": (n, m),
        "phi1": (n, n, n),
        "theta1": (n, m, m),
        "chi1": (n, n, m),
        "chi2": (n, m, n),
    }


def blocks_for_order(order):
    return BLOCKS[: (1, 3, 7)[int(order)]]


def block_slices(n, m, order):
    """Map block name -> (slice, shape) for the given order."""
    shapes = block_shapes(n, m)
    out = {}
    start = 0
    for name in blocks_for_order(order):
        size = 1
        for d in shapes[name]:
            size *= d
        out[name] = (slice(start, start + size), shapes[name])
        start += size
    return out


def state_size(n, m, order):
    sizes = (n, n + n * n + n * m,
             n + n * n + n * m + n ** 3 + n * m * m + 2 * n * n * m)
    return sizes[int(order)]

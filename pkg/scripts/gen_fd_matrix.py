#!/usr/bin/env python3
"""Write a finite-difference diffusion matrix in Matrix Market format.

The operator is -div(c grad u) on the unit square with homogeneous
Dirichlet boundary, five-point stencil on an nx-by-nx interior grid, and a
smooth oscillatory coefficient field; at nx = 60 this reproduces the
moderate-size test system used by the experiment scripts (n = 3600).

Usage: python scripts/gen_fd_matrix.py <nx> <out.mtx>
"""

import sys

from cgbounds.problems import fd_diffusion_matrix
from cgbounds.sparse import write_matrix_market


def main():
    if len(sys.argv) != 3:
        print(__doc__)
        return 2
    nx = int(sys.argv[1])
    A = fd_diffusion_matrix(nx)
    write_matrix_market(A, sys.argv[2],
                        comment=f"five-point FD diffusion operator, {nx}x{nx} interior grid")
    print(f"wrote {sys.argv[2]}: n={A.n}, stored lower-triangle entries "
          f"{(A.nnz + A.n) // 2}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Lazy vs exact influence signs on the constructed batch cases.

    python scripts/sign_agreement.py --cases 20
"""

import argparse

import numpy as np

from pfedlia import fixtures


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--cases", type=int, default=20)
    args = parser.parse_args()
    agree = 0
    print("case,batch,lazy,exact,agree")
    for k in range(args.cases):
        case = fixtures.sign_case(k)
        lazy, exact = fixtures.sign_scores(case)
        same = bool(np.sign(lazy) == np.sign(exact))
        agree += same
        kind = "flipped" if case.harmful else "clean"
        print(f"{k},{kind},{lazy!r},{exact!r},{int(same)}")
    print(f"# agreement {agree}/{args.cases}")


if __name__ == "__main__":
    main()

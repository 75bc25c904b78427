"""Bubble tree of a concentrating family of sphere maps into CP^1 x CP^1.

Run: python demos/bubble_tree.py [FSProductBubble|TwoCenter|TwoScale] [N]
"""
import sys

import numpy as np

from chernlab.bubbles import (build_tree, distance_bubbling_check, energy_identity_check,
                              mass_accounting)
from chernlab.flow import concentrating_family

kind = sys.argv[1] if len(sys.argv) > 1 else "FSProductBubble"
N = int(sys.argv[2]) if len(sys.argv) > 2 else 128
family = concentrating_family(kind, [8, 16, 32, 64], N=N)
tree = build_tree(family)

quantum = 4 * np.pi
for node in tree.walk():
    pad = "  " * len(node.index)
    where = "" if node.point is None else f" at {node.point:.3g}"
    print(f"{pad}node {node.label}{where}: energy {node.energy / quantum:.4f} x 4pi "
          f"(mass in {node.mass_in / quantum:.4f} x 4pi)")

check = energy_identity_check(tree)
print(f"limit energy {check['limit_energy'] / quantum:.5f} x 4pi, "
      f"base + bubbles {check['sum'] / quantum:.5f} x 4pi, relative gap {check['relative']:.1e}")
print(f"distance mismatch {distance_bubbling_check(tree):.2e}")
for row in mass_accounting(tree):
    print(f"node {row['node']}: mass accounting gap {row['relative']:.2e}")

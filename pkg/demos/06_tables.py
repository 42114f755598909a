"""Reproduce a few of the published tables at reduced size.

The full set is ``python3 -m hhomg --table 1 2 3 4 5 6 7 8 9``.  That takes
about a minute for the 2D tables at 5 meshes, plus a couple of minutes for
the cube.
"""
import sys

from hhomg.bench import reproduce_tables

print(reproduce_tables([1, 4], max_level=4, progress=lambda msg: print(msg, file=sys.stderr)))

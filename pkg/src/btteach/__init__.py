"""btteach: teach reactive behavior trees from pick-and-place demonstrations."""

__version__ = "0.1.0"

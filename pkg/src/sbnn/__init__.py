"""Networks that grow their own structure: Hebbian growth, magnitude pruning and a
neuroevolution harness for classic-control tasks."""

__version__ = "0.1.0"

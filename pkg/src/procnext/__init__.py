"""procnext: next-activity prediction from event logs and Petri-net models.

Event-log prefixes are token-replayed over a process model, each replay state
is encoded as a place-graph feature matrix, and the matrix sequence is
classified by a graph-convolutional recurrent network. See README.md for the
pipeline and the CLI.
"""

__version__ = "0.1.0"

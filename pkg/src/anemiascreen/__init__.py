"""Anemia screening from conjunctiva/fingernail photographs.

Training pipeline (transfer learning with a compound-scaled CNN backbone,
heavy augmentation, accuracy-first checkpointing), evaluation metrics,
persistent patient history, a PDF report generator, and an HTTP inference
service.
"""

__version__ = "0.1.0"

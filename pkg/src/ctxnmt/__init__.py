"""Desk-scale laboratory for two-pass context-aware neural machine translation.

A context-agnostic base transformer is trained on sentence pairs and frozen;
a second-pass decoder then refines its output using source context and the
translations already produced for previous sentences. The package also ships
the contrastive consistency evaluation protocol, the discourse test-set
builders, and a deterministic synthetic bilingual corpus on which the whole
pipeline is verifiable end to end.
"""

__version__ = "0.1.0"

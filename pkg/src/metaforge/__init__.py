"""metaforge: an ontology-assisted metadata workbench.

Templates describe metadata-acquisition forms; instances are JSON-LD
documents filled against them.  The package bundles the model, a schema
compiler and validator, a terminology client, a value recommender, a
permissioned resource repository, a submission pipeline, a REST service,
and a CLI.
"""

__version__ = "0.1.0"

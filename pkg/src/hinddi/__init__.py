"""Drug-drug interaction prediction over a heterogeneous information network.

Pipeline: typed relation matrices -> meta-path neighbor graphs -> frequent
substructure drug features -> two-level attention encoder with a dot-product
decoder, trained for pairwise interaction prediction.
"""

__version__ = "0.1.0"

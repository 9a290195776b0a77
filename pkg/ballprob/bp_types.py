import sys
from typing import Dict, Union

# Ensure compatibility with python 3.7
if sys.version_info >= (3, 8):
    from typing import Literal
else:
    from typing_extensions import Literal


RegimeTag = Literal["HighDim", "Spike", "TwoDim"]

InversionKind = Literal["cdf", "density"]

OutputFormat = Literal["json", "csv"]

Verdict = Literal["pass", "fail"]

FormulaId = Literal[
    "comparison",
    "comparison_same_shift",
    "comparison_lambda12",
    "comparison_frobenius",
    "comparison_nuclear",
    "comparison_operator",
    "anticoncentration",
    "density_uniform",
    "density_two_dim",
]

ExperimentName = Literal[
    "r3-lower-bound",
    "one-dim",
    "degenerate-band",
    "h-integral",
    "holder",
    "identity-scaling",
    "nonuniform-density",
    "prior-impact",
    "np-bayes-coverage",
    "bootstrap-terminal",
]

Ingredients = Dict[str, Union[float, str]]

from . import tensor as ops
from .gradcheck import max_relative_error, numerical_gradients, relative_error
from .optim import Adam, AdamState, adam_step, parse_schedule
from .tensor import DEFAULT_DTYPE, Graph, GraphError, ShapeError, Tensor, as_tensor
from .weights import WeightFormatError, load_weights, loads_weights, dumps_weights, save_weights

__all__ = [
    "Adam",
    "AdamState",
    "DEFAULT_DTYPE",
    "Graph",
    "GraphError",
    "ShapeError",
    "Tensor",
    "WeightFormatError",
    "adam_step",
    "as_tensor",
    "dumps_weights",
    "load_weights",
    "loads_weights",
    "max_relative_error",
    "numerical_gradients",
    "ops",
    "parse_schedule",
    "relative_error",
    "save_weights",
]

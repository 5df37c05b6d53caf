from .model import (
    GATES,
    SyntaxModel,
    bilstm_forward,
    encode,
    encode_patch,
    predict,
    prepare_sequences,
    step_residuals,
    syntax_loss,
)
from .plan import KINDS, TraversalPlan, anchor_rects, build_traversal, semantics_vector, zigzag_rects
from .train import SyntaxConfig, train_on_sequences, train_syntax, write_syntax_log

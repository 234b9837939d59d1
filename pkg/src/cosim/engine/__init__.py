"""Fixed-step block-diagram engine."""

from .blocks import (KINDS, Block, BlockKind, Constant, External, FirstOrderLag, Function,
                     Gain, Integrator, Limiter, MemoryKind, Product, Sine, Step, Sum,
                     UnitDelay, make_kind)
from .model import Model, Port, Wire, rebuild, validate_and_order
from .modelio import load_model, model_from_dict, model_to_dict, save_model
from .simulate import Stepper, eval_step, n_steps, simulate
from .trace import ComparisonReport, SimConfig, Trace, compare_traces

__all__ = [
    "KINDS", "Block", "BlockKind", "Constant", "External", "FirstOrderLag", "Function", "Gain",
    "Integrator", "Limiter", "MemoryKind", "Product", "Sine", "Step", "Sum", "UnitDelay",
    "make_kind", "Model", "Port", "Wire", "rebuild", "validate_and_order", "load_model",
    "model_from_dict", "model_to_dict", "save_model", "Stepper", "eval_step", "n_steps",
    "simulate", "ComparisonReport", "SimConfig", "Trace", "compare_traces",
]

# -*- coding: utf-8 -*-
from src.autodiff.tensor import GradTape, Tensor, backward, current_tape, no_grad
from src.autodiff.optim import AdamState, adam_step

__all__ = ["GradTape", "Tensor", "backward", "current_tape", "no_grad", "AdamState", "adam_step"]

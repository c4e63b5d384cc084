"""
最小神经网络原语

全连接层、GRU 单元、扁平参数存储、记录式反向传播、梯度检查与 Adam，
刚好够表达并训练增益网络。全部为 float64 的 numpy 实现。
"""

from . import ops
from .checkpoint import read_checkpoint, restore_parameters, save_checkpoint
from .exceptions import DimensionError, NeuralError, TapeError
from .gradcheck import GradCheckReport, check_gradients, numeric_gradient, relative_error
from .layers import DenseLayer, GruCell, fc_forward, gru_forward, init_uniform
from .optim import adam_step, clip_by_global_norm
from .store import ParameterStore
from .tape import Node, Tape, unbroadcast


def backward(tape: Tape, output: Node, seed=None):
    """反向传播；返回与 ParameterStore 对齐的扁平梯度"""
    return tape.backward(output, seed)


__all__ = [
    "ops",
    "Node",
    "Tape",
    "unbroadcast",
    "backward",
    "ParameterStore",
    "DenseLayer",
    "GruCell",
    "fc_forward",
    "gru_forward",
    "init_uniform",
    "adam_step",
    "clip_by_global_norm",
    "GradCheckReport",
    "check_gradients",
    "numeric_gradient",
    "relative_error",
    "save_checkpoint",
    "read_checkpoint",
    "restore_parameters",
    "NeuralError",
    "TapeError",
    "DimensionError",
]

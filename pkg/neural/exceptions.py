"""
神经网络原语自定义异常类
"""
from core.exceptions import CheckpointError, NumericError, OptimizerError, QueueNetError


class NeuralError(QueueNetError):
    """神经网络原语基础异常类（编程错误，退出码 1）"""
    pass


class TapeError(NeuralError):
    """计算图错误：未记录前向就反向传播、节点不属于当前 Tape 等"""
    pass


class DimensionError(NeuralError):
    """维度不匹配：输入长度与层定义不一致、梯度长度与参数长度不一致"""
    pass


__all__ = [
    "NeuralError",
    "TapeError",
    "DimensionError",
    "OptimizerError",
    "CheckpointError",
    "NumericError",
]

"""
排队长度估计自定义异常类

两大族：
- QueueNetDataError：输入数据 / 配置问题（命令行退出码 3）
- QueueNetNumericError：数值计算问题（命令行退出码 4）
"""
from typing import Any, Dict, List, Optional


class QueueNetError(Exception):
    """排队长度估计基础异常类"""
    exit_code = 1


class QueueNetDataError(QueueNetError):
    """数据错误：输入缺失、格式不符、配置无效等"""
    exit_code = 3


class QueueNetNumericError(QueueNetError):
    """数值错误：奇异矩阵、非有限值、拟合退化等"""
    exit_code = 4


class AlignmentError(QueueNetDataError):
    """时间基对齐错误：10 s 计数序列与 60 s aFCD 序列长度不匹配"""
    pass


class MissingDataError(QueueNetDataError):
    """缺失值无法填补：某个路段全天没有任何观测"""
    pass


class RegimeEstimationError(QueueNetDataError):
    """速度双峰估计失败：样本不足或分布为单峰"""

    def __init__(self, message: str, histogram: Optional[Dict[str, List[float]]] = None):
        super().__init__(message)
        # 诊断用直方图：{"centers": [...], "counts": [...]}
        self.histogram = histogram or {"centers": [], "counts": []}


class GroupingError(QueueNetDataError):
    """局部测量分组错误：路段分段数少于 3"""
    pass


class ConfigError(QueueNetDataError):
    """配置错误：路段 / 场景 / 训练配置不满足约束"""
    pass


class CheckpointError(QueueNetDataError):
    """检查点错误：格式版本或参数维度不匹配"""
    pass


class ScalingError(QueueNetNumericError):
    """仿射缩放错误：输入信号为常数"""
    pass


class FlowRateEstimationError(QueueNetNumericError):
    """未观测流率 λ_c 回归退化"""
    pass


class NumericError(QueueNetNumericError):
    """数值错误：非有限中间量、奇异新息协方差等"""

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.stage = stage


class OptimizerError(QueueNetNumericError):
    """优化器错误：梯度含非有限值"""

    def __init__(self, message: str, bad_slices: Optional[List[str]] = None):
        super().__init__(message)
        self.bad_slices = bad_slices or []


class TrainingDivergedError(QueueNetNumericError):
    """训练发散：损失出现非有限值"""
    pass


class FilterRunError(QueueNetNumericError):
    """滤波运行中断；trace 保存出错步之前的全部记录"""

    def __init__(self, message: str, trace: Any = None, step: int = -1):
        super().__init__(message)
        self.trace = trace
        self.step = step

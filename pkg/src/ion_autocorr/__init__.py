"""
Ion Autocorrelator

单个囚禁离子作为啁啾皮秒脉冲的自相关器：RAP 动力学、双脉冲干涉、自旋回波对比度、
运动踢，以及由对比度-延迟数据反演脉冲宽度、啁啾与强度。
"""

__version__ = "0.1.0"

"""Frozen desk-scale settings shared by the experiment scripts and acceptance tests."""

from __future__ import annotations

from classunc.analysis import LongTailData, SemanticData, Setup
from classunc.datasets import GaussianFamily, LongTailSpec, SemanticSpec
from classunc.trainer import TrainConfig

SEEDS = (0, 1, 2, 3, 4)
IR_LIST = (1, 2, 10, 20, 50)
LAMBDA_LIST = (0.0, 0.3, 0.5, 0.7, 1.0)

LONG_TAIL_FAMILY = GaussianFamily(num_classes=10, dim=10, noise=0.5, spacing=2.0)
LONG_TAIL_N_BAR = 500
LONG_TAIL_IR = 50.0

SEMANTIC = SemanticSpec(num_easy=5, num_hard=5, per_class_count=100, dim=10,
                        easy_noise=0.2, hard_noise=0.8, class_center_spacing=2.5)


def setup(jobs: int = 1, epochs: int = 30, t_members: int = 5) -> Setup:
    return Setup(TrainConfig(hidden=(32,), learning_rate=0.05), epochs, t_members, jobs)


def long_tail_data(ir: float = LONG_TAIL_IR) -> LongTailData:
    spec = LongTailSpec(LONG_TAIL_N_BAR, ir, LONG_TAIL_FAMILY.num_classes)
    return LongTailData(LONG_TAIL_FAMILY, spec, test_per_class=100)


def semantic_data() -> SemanticData:
    return SemanticData(SEMANTIC, test_per_class=100)

"""Geometric proxy-task generation, dense geometric rewards, and benchmark tooling.

The library turns unlabeled medical-style images into three verifiable
geometric tasks (scale localization, jigsaw reconstruction, cut-paste
anomaly detection), scores free-text answers with a dense continuous
reward, assembles balanced benchmarks, serves rewards over HTTP, and
validates the reward design with a tabular GRPO simulator.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402,F401
    BBox,
    Difficulty,
    GridCoord,
    GridSpec,
    Modality,
    Permutation,
    RewardBreakdown,
    bbox_iou,
    derive_seed,
    flat_to_grid,
    grid_to_flat,
    make_rng,
    permutation_inverse,
)
from .imaging import ImageBuffer, load_png, save_png  # noqa: E402,F401
from .rewards import (  # noqa: E402,F401
    DEFAULT_CONFIG,
    AnomGT,
    ParsedAnswer,
    RewardConfig,
    ScaleGT,
    TopoGT,
    parse_answer,
    reward_anomaly,
    reward_format,
    reward_reason,
    reward_scale,
    reward_topo,
    total_reward,
)
from .taskgen import (  # noqa: E402,F401
    AnomalyTask,
    AnomalyTaskSpec,
    EmbeddingIndex,
    JigsawTask,
    ReferenceResolver,
    ScaleTask,
    ScaleTaskSpec,
    SourceCatalog,
    SourceRecord,
    gen_anomaly_task,
    gen_jigsaw_task,
    gen_scale_task,
    select_reference,
    top1_similar,
)

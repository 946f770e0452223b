"""Walk the dense reward downhill: how grading degrades with geometric error.

Each block scores a sequence of answers against one fixed ground truth,
from perfect to nonsense, in both direct and reasoning modes.
"""

from geoscout import AnomGT, GridSpec, RewardConfig, ScaleGT, TopoGT, total_reward
from geoscout.core import BBox


def show(title, gt, answers, mode="direct", cfg=RewardConfig()):
    print(f"\n{title} ({mode} mode)")
    for text in answers:
        bd = total_reward(text, gt, mode, cfg)
        extras = " ".join(f"{k}={v:.3f}" for k, v in bd.sub_components.items())
        print(f"  {text[:58]!r:60} acc={bd.r_acc:.3e} fmt={bd.r_fmt:.2f} total={bd.r_total:.4f} {extras}")


# anomaly: exp(-distance/tau) rewards near misses above far ones; at the
# shipped tau=0.1 the decay is steep, so show a warmer tau alongside
anom = AnomGT(5, GridSpec(4, 4))
anom_answers = ["index=5", "index=6", "index=10", "index=15", "index=99", "the patch looks odd"]
show("anomaly index, ground truth 5, tau=0.1", anom, anom_answers)
show("anomaly index, ground truth 5, tau=0.5", anom, anom_answers, cfg=RewardConfig(tau=0.5))

# jigsaw: per-slot credit, no all-or-nothing cliff
topo = TopoGT((2, 0, 3, 1))
show(
    "jigsaw order, ground truth [2,0,3,1]",
    topo,
    ["order=[2,0,3,1]", "order=[2,0,1,3]", "order=[2,2,2,2]", "order=[0,1,2,3]", "order=[2,0,x,1]"],
)

# scale: level classification and box IoU each carry half the accuracy
scale = ScaleGT((1,), (BBox(0.25, 0.25, 0.697, 0.697),))
show(
    "scale patch, level 1 at (0.25,0.25,0.697,0.697)",
    scale,
    [
        "patch 1: level=1 box=[0.250,0.250,0.697,0.697]",
        "patch 1: level=1 box=[0.200,0.200,0.650,0.650]",
        "patch 1: level=2 box=[0.250,0.250,0.697,0.697]",
        "patch 1: level=1 box=[0.700,0.700,0.900,0.900]",
    ],
)

# reasoning mode pays 0.5 extra for a well-formed think/answer envelope
show(
    "reasoning envelope, ground truth 5",
    anom,
    [
        "<think>center block, seam at patch 5</think><answer>index=5</answer>",
        "index=5",
        "<answer>index=5</answer>",
    ],
    mode="reasoning",
)

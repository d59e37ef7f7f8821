"""Active learning-to-rank on pairwise relative labels.

A dropout-regularized Siamese scorer is trained on relative severity
judgments (RankNet loss), Monte Carlo dropout turns it into a posterior
over rank scores, and the per-sample variance drives which samples get
annotated next. Includes simulated and human-in-the-loop annotation
sources, multi-task calibration to ordinal classes, and an evaluation
harness for imbalanced ordinal data.
"""

from .data import (
    Dataset,
    DatasetSplit,
    Sample,
    SimulatedOracle,
    SynthConfig,
    load_dataset,
    save_dataset,
    split_groupwise,
    synth_generate,
)
from .loop import (
    LoopConfig,
    LoopState,
    coreset_select,
    initial_selection,
    make_pairs,
    quota,
    random_select,
    run_loop,
    select_uncertain,
)
from .metrics import (
    MetricReport,
    annotation_cost,
    build_test_pairs,
    class_proportions,
    classification_metrics,
    mcnemar_statistic,
    pair_accuracy,
    quantize_score,
    uncertainty_by_class,
)
from .network import (
    DropoutMasks,
    NetworkParams,
    OptimizerState,
    PairBatch,
    forward,
    forward_batch,
    gradients,
    init_network,
    init_optimizer,
    optimizer_step,
    sample_masks,
)
from .ranking import (
    LabeledPairSet,
    RelativePair,
    TrainConfig,
    multitask_loss,
    pair_probability,
    rank_loss,
    regression_loss,
    train_round,
)
from .uncertainty import (
    ScorePosterior,
    StreamingMoments,
    acquisition_rank,
    posterior_for_pool,
    predict_posterior,
)

__version__ = "0.1.0"

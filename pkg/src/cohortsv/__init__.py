"""Speaker-verification decision engine based on cohort scores.

The package replaces the classical single-threshold likelihood-ratio
decision with multi-score decisions: speaker models are clustered into a
cohort, every trial is scored against the claimed model, the background
model, and all cohort models, and a discriminative decision maker (linear
SVM or small MLP) maps features of those scores to an acceptance score.
"""

from .cohort import Cohort, ClusterAssignment, cost_curve, kmeans_gmm, weighted_kl
from .config import ExperimentConfig, default_config, load_config
from .deciders import (
    LabeledSet,
    LinearSvmModel,
    MlpModel,
    Standardizer,
    TrainingDivergenceError,
    predict_score,
    predict_scores,
    train_mlp,
    train_svm,
)
from .features import (
    CONDITIONS,
    AssembledFeature,
    ScoreVector,
    assemble,
    condition_dim,
    feat_norm,
    feat_rank_diff,
    feat_rank_position,
    imbalance_filter,
    score_vector,
)
from .gmm import (
    DiagGmm,
    SpeakerModel,
    avg_loglik,
    em_train,
    em_train_history,
    llr,
    map_adapt,
)
from .metrics import (
    LABEL_GENUINE,
    LABEL_IMPOSTER,
    EvalReport,
    TrialRecord,
    compute_eer,
    det_curve,
    rank_histogram,
)
from .synthio import ParseError, SynthConfig, SynthCorpus, generate_corpus, sample_gmm

__version__ = "0.1.0"

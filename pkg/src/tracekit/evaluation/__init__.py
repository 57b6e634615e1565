from tracekit.evaluation.agreement import (  # noqa: F401
    AnnotationSet,
    cohens_kappa,
    expert_agreement,
    krippendorff_alpha,
    majority_vote,
)
from tracekit.evaluation.crossval import (  # noqa: F401
    COMBINED,
    CrossDomainMatrix,
    MetricsReport,
    MetricValue,
    cross_domain,
    cross_validate,
    score_predictor,
)
from tracekit.evaluation.metrics import (  # noqa: F401
    accuracy,
    auroc,
    binary_f1,
    confusion_counts,
    precision,
    recall,
)
from tracekit.evaluation.search import (  # noqa: F401
    Choice,
    IntRange,
    LogUniform,
    SearchResult,
    SearchSpace,
    Trial,
    hyperparameter_search,
)

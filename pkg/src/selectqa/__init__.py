"""selectqa: confidence calibration and knowledge-source selection for generative QA.

The package scores generated answers with three calibrated confidence
estimates (length-normalized sequence likelihood, answerability, sampling
consistency), ensembles them, routes each question to the more reliable of
two knowledge sources (document passages vs. retrieved QA history), and
evaluates the whole thing with density-based ECE, risk-coverage curves, an
oracle upper bound, and selection-ratio analysis. A deterministic table-driven
toy model makes the full pipeline runnable and testable without any neural
inference.
"""

from .answers import (
    ContextSet,
    KnowledgeSource,
    Question,
    contains_answer,
    exact_match,
    normalize_answer,
)
from .confidence import (
    CalibrationLabels,
    ConfidenceBreakdown,
    ConsistencyBucket,
    QuantileThresholds,
    answerability_label,
    bucketize,
    consistency_label,
    ensemble_confidence,
    extract_verbal_probs,
    fit_quantiles,
    fit_temperature,
    sequence_likelihood,
    temperature_scale,
)
from .errors import (
    ModelCoverageError,
    RecordValidationError,
    TemplateParseError,
    ValidationError,
)
from .evaluation import (
    Criterion,
    EvalReport,
    PairedPrediction,
    RecallResult,
    RiskCoveragePoint,
    ScoredPrediction,
    auc,
    ece,
    evaluate_pairs,
    oracle_upper_bound,
    recall_at_k,
    reliability_bins,
    risk_coverage,
    select_answer,
    selected_stream,
    selection_ratio,
)
from .prompts import (
    CalibrationTarget,
    ContextMode,
    QAPair,
    assemble_contexts,
    build_qa_history_passage,
    parse_calibration_target,
    render_calibration_target,
)
from .records import (
    PredictionRecord,
    RunConfig,
    dump_records,
    pair_records,
    validate_and_load,
)
from .toylm import (
    ConditionalTable,
    DecodedAnswer,
    Vocabulary,
    derive_seed,
    dump_models,
    enumerate_outputs,
    greedy_decode,
    load_models,
    sample_decode,
)

__version__ = "0.1.0"

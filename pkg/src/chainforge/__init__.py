"""chainforge: causal-chain construction, perturbation, scoring and QA harnesses."""

from .chain import (
    CausalChain,
    ChainParseError,
    ParseErrorKind,
    chain_equal,
    parse_chain,
    serialize_chain,
)
from .validate import ValidationConfig, ValidationReport, validate_against_qa, validate_chain
from .perturb import (
    Lexicons,
    NoApplicableStrategy,
    PerturbedChain,
    PerturbStrategy,
    StrategyNotApplicable,
    applicable_strategies,
    generate_negatives,
    perturb,
)
from .metrics import (
    CaucoResult,
    CoherenceVerdict,
    MetricReport,
    accuracy,
    bleu_n,
    cauco_score,
    meteor_lite,
    rouge_l,
    tokenize,
)
from .backends import (
    BackendConfig,
    BackendRole,
    HttpBackend,
    ModelRequest,
    ModelResponse,
    ScriptedBackend,
    VideoRef,
)
from .datastore import AnswerOptions, QueueLog, Sample, corpus_stats, load_samples, replay_queue, write_augmented
from .pipeline import (
    ConstructionRecord,
    PipelineConfig,
    construct_chains,
    mask_chain,
    run_chain_quality_eval,
    run_masking_sweep,
    run_two_stage,
    run_upper_bound,
    two_stage_answer,
)

__version__ = "0.1.0"

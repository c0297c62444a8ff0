"""Sentence readability regression with feature-aware encoder ensembles."""

from .corpus import (
    FoldSplit,
    RatedSentence,
    TokenSequence,
    Vocabulary,
    build_vocab,
    carve_final_split,
    encode_bert_style,
    encode_gpt_style,
    load_corpus,
    make_cv_splits,
    write_corpus,
)
from .encoder import (
    Embedding,
    EncoderConfig,
    PrecomputedProvider,
    RandomProjectionProvider,
    TransformerEncoderProvider,
    encoder_backward,
    encoder_forward,
    init_encoder_weights,
    load_precomputed,
    random_projection_encode,
    store_precomputed,
)
from .ensemble import (
    BootstrapReport,
    PoolMember,
    PredictionPool,
    bootstrap_study,
    ensemble_predict,
)
from .features import (
    FeatureCatalog,
    FeatureScaler,
    FeatureVector,
    FrequencyLexicon,
    apply_scaler,
    extract_features,
    fit_scaler,
    load_frequency_lexicon,
)
from .metrics import ScoreReport, cv_average, mapped_rmse, rmse
from .training import (
    EarlyStopState,
    TrainedModel,
    TrainingConfig,
    adamw_step,
    early_stop_update,
    mlp_forward,
    mse_loss,
    predict,
    rmsprop_step,
    train_member,
    train_phase1,
    train_phase2,
    warmup_lr,
)

__version__ = "0.1.0"

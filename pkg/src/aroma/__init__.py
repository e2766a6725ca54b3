"""Online bilinear similarity learning with adaptive second-order regularization."""
from .arow import ArowModel, arow_objective, arow_predict, arow_update, init_arow
from .data import LabeledCorpus, TripletStream, infogain_select, parse_corpus, sample_triplets, tfidf_transform
from .diagonal import DiagonalModel, diag_step, diag_train, init_diagonal
from .evaluation import EvalReport, evaluate, mean_average_precision, precision_at_k, precision_trace, rank_objects
from .factored import FactoredModel, NumericalError, effective_rate_report, factored_step, factored_train, init_factored
from .learners import make_learner
from .synthetic import retrieval_task
from .linalg import (
    DimensionError,
    SparseVector,
    Triplet,
    bilinear_score,
    kron_quadratic_form,
    outer,
    triplet_hinge,
    vec,
)
from .theory import faroma_objective, lemma3_check, matnorm_kl, matnorm_logpdf, thm1_bound, thm2_bound
from .trace import RunTrace, StepRecord

__version__ = "0.1.0"
